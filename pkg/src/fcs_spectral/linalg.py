"""Dense matrix kernels: SVD, pseudoinverse, Hermitian eigensolves and norms.

Everything here is a thin, defensive layer over LAPACK (through numpy).
The SVD backend is deterministic for a fixed input, so downstream
experiments are bit-reproducible per seed.

Norm conventions used throughout the package:

* ``frobenius_norm`` is the Schatten-2 norm (entrywise 2-norm),
* ``operator_norm_2to2`` is the spectral norm (largest singular value),
* ``trace_norm_hermitian`` is the Schatten-1 norm of a Hermitian matrix.

Call sites say explicitly which of the first two they use; both appear in
perturbation statements under the name "2-norm" in the literature.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

__all__ = [
    "SvdResult",
    "svd",
    "pseudoinverse",
    "operator_norm_2to2",
    "frobenius_norm",
    "trace_norm_hermitian",
    "hermitian_eigen",
]


class SvdResult(NamedTuple):
    """Thin SVD ``a = u @ diag(s) @ vt`` with ``s`` descending."""

    u: np.ndarray
    s: np.ndarray
    vt: np.ndarray


def _as_finite(a, name="matrix") -> np.ndarray:
    a = np.asarray(a)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


def svd(a) -> SvdResult:
    """Thin singular value decomposition of a real or complex matrix."""
    a = _as_finite(a)
    try:
        u, s, vt = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            f"SVD did not converge for {a.shape[0]}x{a.shape[1]} matrix"
        ) from exc
    return SvdResult(u, s, vt)


def pseudoinverse(a, tol: float | None = None) -> np.ndarray:
    """Moore-Penrose pseudoinverse with a relative singular value cutoff.

    Singular values below ``tol * sigma_1`` are treated as zero.  The
    default ``tol = max(rows, cols) * eps`` is the standard rank-revealing
    cutoff.
    """
    a = _as_finite(a)
    if tol is None:
        tol = max(a.shape) * np.finfo(np.float64).eps
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    u, s, vt = svd(a)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((a.shape[1], a.shape[0]), dtype=a.dtype)
    inv = np.where(s > tol * s[0], 1.0 / np.where(s > 0, s, 1.0), 0.0)
    return (vt.conj().T * inv) @ u.conj().T


def operator_norm_2to2(a) -> float:
    """Spectral norm (2->2 operator norm), i.e. the largest singular value."""
    a = _as_finite(a)
    if a.size == 0:
        return 0.0
    return float(np.linalg.svd(a, compute_uv=False)[0])


def frobenius_norm(a) -> float:
    """Schatten-2 (Frobenius) norm."""
    return float(np.linalg.norm(np.asarray(a)))


def _check_hermitian(a, rtol=1e-8) -> np.ndarray:
    a = _as_finite(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    dev = np.linalg.norm(a - a.conj().T)
    scale = max(np.linalg.norm(a), 1e-300)
    if dev > rtol * scale:
        raise ValueError(
            f"matrix is not Hermitian: ||a - a^dag||_F = {dev:.3e} "
            f"exceeds {rtol:.0e} * ||a||_F"
        )
    return 0.5 * (a + a.conj().T)


def trace_norm_hermitian(a) -> float:
    """Schatten-1 norm of a Hermitian matrix, as the sum of |eigenvalues|.

    The input must be Hermitian up to a relative 1e-8 Frobenius tolerance;
    it is symmetrized before the eigensolve.
    """
    h = _check_hermitian(a)
    return float(np.abs(np.linalg.eigvalsh(h)).sum())


def hermitian_eigen(a) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and eigenvectors of a Hermitian matrix."""
    h = _check_hermitian(a)
    try:
        return np.linalg.eigh(h)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            f"eigensolver did not converge for {h.shape[0]}x{h.shape[1]} matrix"
        ) from exc
