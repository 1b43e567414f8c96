"""Orthonormal Hermitian operator bases and their block extensions.

The single-site basis is the normalized Gell-Mann family: element 0 is the
normalized identity 1/sqrt(d), followed by the traceless generators ordered
as symmetric pairs (lexicographic (j,k), j < k), then antisymmetric pairs,
then diagonal generators.  All elements satisfy Tr(g_i g_j) = delta_ij.

Blocks of s sites use the Kronecker-product basis with the leftmost site as
the most significant index: the flat index of (i_1, ..., i_s) is the usual
C-order value sum_k i_k * (d^2)^(s-k).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "HermitianBasis",
    "gellmann",
    "flat_index",
    "multi_index",
    "block_element",
    "expand_in_basis",
    "assemble_from_coefficients",
]


@dataclass(frozen=True)
class HermitianBasis:
    """Orthonormal Hermitian basis of d x d matrices, identity at index 0."""

    dim: int
    elements: np.ndarray = field(repr=False)  # shape (dim^2, dim, dim), complex

    def __post_init__(self):
        self.elements.setflags(write=False)

    @property
    def size(self) -> int:
        return self.elements.shape[0]

    def block_size(self, sites: int) -> int:
        return self.size ** sites


def gellmann(d: int) -> HermitianBasis:
    """Normalized Gell-Mann basis for local dimension d >= 2."""
    if d < 2:
        raise ValueError(f"local dimension must be >= 2, got {d}")
    return _hermitian_basis(d)


def _hermitian_basis(d: int) -> HermitianBasis:
    # Internal variant that also admits the trivial d = 1 memory algebra.
    elements = [np.eye(d, dtype=complex) / np.sqrt(d)]
    for j in range(d):
        for k in range(j + 1, d):
            e = np.zeros((d, d), dtype=complex)
            e[j, k] = e[k, j] = 1.0
            elements.append(e / np.sqrt(2.0))
    for j in range(d):
        for k in range(j + 1, d):
            f = np.zeros((d, d), dtype=complex)
            f[j, k] = -1.0j
            f[k, j] = 1.0j
            elements.append(f / np.sqrt(2.0))
    for l in range(1, d):
        v = np.zeros(d)
        v[:l] = 1.0
        v[l] = -float(l)
        elements.append(np.diag(v).astype(complex) / np.sqrt(l * (l + 1.0)))
    return HermitianBasis(dim=d, elements=np.array(elements))


def flat_index(multi: Sequence[int], d: int) -> int:
    """Flat block index of a multi-index, first entry most significant."""
    n = d * d
    flat = 0
    for i in multi:
        if not 0 <= i < n:
            raise IndexError(f"basis index {i} out of range [0, {n})")
        flat = flat * n + i
    return flat


def multi_index(flat: int, sites: int, d: int) -> tuple[int, ...]:
    """Inverse of :func:`flat_index` for a block of the given length."""
    n = d * d
    if not 0 <= flat < n ** sites:
        raise IndexError(f"flat index {flat} out of range for {sites} sites")
    out = []
    for _ in range(sites):
        out.append(flat % n)
        flat //= n
    return tuple(reversed(out))


def block_element(basis: HermitianBasis, multi: Iterable[int]) -> np.ndarray:
    """Kronecker product of basis elements, leftmost site = leftmost factor."""
    multi = tuple(multi)
    if not multi:
        raise IndexError("empty block index")
    out = None
    for i in multi:
        if not 0 <= i < basis.size:
            raise IndexError(f"basis index {i} out of range [0, {basis.size})")
        out = basis.elements[i] if out is None else np.kron(out, basis.elements[i])
    return out


def expand_in_basis(m, basis: HermitianBasis, sites: int, imag_tol=1e-10) -> np.ndarray:
    """Real coefficient vector of a Hermitian block matrix.

    Returns c with c[flat(i_1..i_s)] = Tr(g_{i_1} x ... x g_{i_s} m).  The
    input must be Hermitian so the coefficients are real; imaginary parts
    beyond ``imag_tol`` (relative to the matrix norm) raise.
    """
    m = np.asarray(m)
    d = basis.dim
    n = d ** sites
    if m.shape != (n, n):
        raise ValueError(f"expected a {n}x{n} matrix for {sites} sites, got {m.shape}")
    # Tr(G m) with G = g_{i_1} x ... x g_{i_s} contracts, site by site, the
    # row index of m with the column index of g and vice versa.
    x = m.reshape((d,) * (2 * sites))
    for site in range(sites):
        x = np.tensordot(x, basis.elements, axes=([site, sites], [2, 1]))
        x = np.moveaxis(x, -1, site)
    scale = max(np.linalg.norm(m), 1e-300)
    imag = np.abs(x.imag).max()
    if imag > imag_tol * max(scale, 1.0):
        raise ValueError(f"coefficients are not real: max imaginary part {imag:.3e}")
    return np.ascontiguousarray(x.real).reshape(-1)


def assemble_from_coefficients(coeffs, basis: HermitianBasis, sites: int) -> np.ndarray:
    """Block matrix sum_w c[w] g_{w_1} x ... x g_{w_s} from real coefficients."""
    coeffs = np.asarray(coeffs, dtype=float)
    d = basis.dim
    nb = basis.size
    if coeffs.size != nb ** sites:
        raise ValueError(
            f"expected {nb ** sites} coefficients for {sites} sites, got {coeffs.size}"
        )
    x = coeffs.reshape((nb,) * sites).astype(complex)
    for _ in range(sites):
        x = np.tensordot(x, basis.elements, axes=([0], [0]))
    # axes are now (r_1, c_1, ..., r_s, c_s); interleave back to block form
    perm = list(range(0, 2 * sites, 2)) + list(range(1, 2 * sites, 2))
    n = d ** sites
    return np.ascontiguousarray(x.transpose(perm)).reshape(n, n)
