"""Finitely correlated states as ground truth.

A realization is a quadruple (memory dimension m, transition tensor kappa,
boundary vector e, boundary functional rho) evaluating correlation words as

    omega(A_1 x ... x A_t) = rho . K_{A_1} ... K_{A_t} . e,

where K_A = sum_a Tr(g_a A) kappa[a] in a fixed orthonormal Hermitian basis
{g_a} of the site algebra.  All realization data is real because memory
coordinates are taken in a Hermitian basis of the memory algebra.

The module provides exact evaluation and dense marginals, constructors
(AKLT family, product states, seeded Haar-random quantum-channel models,
random finite chains), rank profiling of the induced bilinear form, and the
JSON persistence format.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .opbasis import (
    HermitianBasis,
    _hermitian_basis,
    assemble_from_coefficients,
    expand_in_basis,
    gellmann,
)

__all__ = [
    "DEFAULT_DENSE_CAP",
    "AKLT_THETA",
    "DensityMatrix",
    "Realization",
    "CStarRealization",
    "ChainRealization",
    "partial_trace_window",
    "evaluate_word",
    "word_coefficient_tensor",
    "marginal",
    "from_cstar",
    "product_realization",
    "aklt",
    "random_cstar",
    "stationary_state",
    "dense_state",
    "random_chain",
    "chain_state",
    "rank_profile",
    "t_star",
    "realization_to_dict",
    "realization_from_dict",
    "save_realization",
    "load_realization",
]

# Largest dense Hilbert dimension we assemble/eigensolve by default (3^7).
DEFAULT_DENSE_CAP = 2187

# cos(theta) = sqrt(2/3) reproduces the AKLT ground state.
AKLT_THETA = math.acos(math.sqrt(2.0 / 3.0))


@dataclass
class DensityMatrix:
    """Hermitian trace-one matrix on a block of `sites` qudits of dimension `dim`.

    `coeffs` caches the real expansion coefficients in the block Hermitian
    basis when they are already known (reconstruction and marginals produce
    them for free); use :meth:`coefficients` to compute them on demand.
    """

    matrix: np.ndarray
    dim: int
    sites: int
    coeffs: np.ndarray | None = field(default=None, repr=False)

    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def coefficients(self, basis: HermitianBasis) -> np.ndarray:
        if self.coeffs is None:
            self.coeffs = expand_in_basis(self.matrix, basis, self.sites)
        return self.coeffs

    def validate(self, trace_tol=1e-10, psd_tol=1e-9, herm_tol=1e-10):
        m = self.matrix
        herm = np.abs(m - m.conj().T).max()
        if herm > herm_tol:
            raise ValueError(f"not Hermitian: max deviation {herm:.3e}")
        tr = self.trace()
        if abs(tr - 1.0) > trace_tol:
            raise ValueError(f"trace {tr!r} differs from 1 beyond {trace_tol:.0e}")
        lo = float(np.linalg.eigvalsh(0.5 * (m + m.conj().T)).min())
        if lo < -psd_tol:
            raise ValueError(f"not positive semidefinite: min eigenvalue {lo:.3e}")
        return self


def partial_trace_window(matrix, dim: int, sites: int, first: int, last: int) -> np.ndarray:
    """Reduce a `sites`-site density matrix to the window [first, last] (1-based)."""
    if not 1 <= first <= last <= sites:
        raise ValueError(f"invalid window [{first}, {last}] for {sites} sites")
    pre = dim ** (first - 1)
    mid = dim ** (last - first + 1)
    post = dim ** (sites - last)
    r = np.asarray(matrix).reshape(pre, mid, post, pre, mid, post)
    return np.einsum("ambacb->mc", r)


# ---------------------------------------------------------------------------
# realization records
# ---------------------------------------------------------------------------

@dataclass
class Realization:
    """Linear realization with real data in a Hermitian site basis.

    kappa[a] is the m x m matrix of the generating map evaluated on basis
    element a; kappa[0] corresponds to the normalized identity, so the
    identity transfer matrix is sqrt(d_a) * kappa[0].
    """

    d_a: int
    kappa: np.ndarray  # (d_a^2, m, m) real
    e: np.ndarray      # (m,)
    rho: np.ndarray    # (m,)

    @property
    def m(self) -> int:
        return self.kappa.shape[1]

    def transfer_identity(self) -> np.ndarray:
        return math.sqrt(self.d_a) * self.kappa[0]

    def validate(self, stat_tol=1e-10, norm_tol=1e-12):
        kappa = np.asarray(self.kappa, dtype=float)
        if kappa.ndim != 3 or kappa.shape[0] != self.d_a ** 2 or kappa.shape[1] != kappa.shape[2]:
            raise ValueError(f"kappa has shape {kappa.shape}, expected ({self.d_a ** 2}, m, m)")
        if not (np.all(np.isfinite(kappa)) and np.all(np.isfinite(self.e)) and np.all(np.isfinite(self.rho))):
            raise ValueError("realization contains non-finite entries")
        t = self.transfer_identity()
        left = np.abs(self.rho @ t - self.rho).max()
        right = np.abs(t @ self.e - self.e).max()
        if max(left, right) > stat_tol:
            raise ValueError(
                f"stationarity violated: residuals left={left:.3e} right={right:.3e}"
            )
        norm = float(self.rho @ self.e)
        if abs(norm - 1.0) > norm_tol:
            raise ValueError(f"normalization rho(e) = {norm!r} differs from 1")
        return self


@dataclass
class CStarRealization:
    """Quantum-channel model: isometry V : C^d_b -> C^d_a x C^d_b, state rho0.

    The generating map is E_A(B) = V^dag (A x B) V; its unital dual is the
    channel rho -> Tr_site(V rho V^dag) whose fixed point rho0 must be.
    """

    d_a: int
    d_b: int
    v: np.ndarray      # (d_a * d_b, d_b) complex isometry
    rho0: np.ndarray   # (d_b, d_b) density matrix

    def validate(self, tol=1e-10):
        v = np.asarray(self.v)
        if v.shape != (self.d_a * self.d_b, self.d_b):
            raise ValueError(f"isometry has shape {v.shape}, expected ({self.d_a * self.d_b}, {self.d_b})")
        dev = np.abs(v.conj().T @ v - np.eye(self.d_b)).max()
        if dev > tol:
            raise ValueError(f"V is not an isometry: max |V^dag V - I| = {dev:.3e}")
        rho0 = np.asarray(self.rho0)
        if np.abs(rho0 - rho0.conj().T).max() > tol:
            raise ValueError("rho0 is not Hermitian")
        if abs(np.trace(rho0).real - 1.0) > tol:
            raise ValueError(f"rho0 has trace {np.trace(rho0).real!r}")
        if float(np.linalg.eigvalsh(0.5 * (rho0 + rho0.conj().T)).min()) < -tol:
            raise ValueError("rho0 is not positive semidefinite")
        res = np.abs(_dual_step(v, rho0, self.d_a, self.d_b) - rho0).max()
        if res > tol:
            raise ValueError(f"rho0 is not stationary: residual {res:.3e}")
        return self


@dataclass
class ChainRealization:
    """Non-homogeneous finite chain: one channel isometry per site."""

    d_a: int
    d_b: int
    isometries: list[np.ndarray]  # each (d_a * d_b, d_b)
    rho0: np.ndarray

    @property
    def n_sites(self) -> int:
        return len(self.isometries)

    def validate(self, tol=1e-10):
        for j, v in enumerate(self.isometries, start=1):
            if v.shape != (self.d_a * self.d_b, self.d_b):
                raise ValueError(f"isometry at site {j} has shape {v.shape}")
            dev = np.abs(v.conj().T @ v - np.eye(self.d_b)).max()
            if dev > tol:
                raise ValueError(f"site {j}: V is not an isometry (max dev {dev:.3e})")
        rho0 = np.asarray(self.rho0)
        if abs(np.trace(rho0).real - 1.0) > tol or np.abs(rho0 - rho0.conj().T).max() > tol:
            raise ValueError("rho0 is not a state")
        return self


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def evaluate_word(r: Realization, word) -> float:
    """Correlation value rho . K_{c_1} ... K_{c_t} . e for coefficient vectors c_k."""
    n = r.kappa.shape[0]
    v = np.asarray(r.e, dtype=float)
    for c in reversed(list(word)):
        c = np.asarray(c, dtype=float)
        if c.shape != (n,):
            raise ValueError(f"coefficient vector has shape {c.shape}, expected ({n},)")
        v = np.tensordot(c, r.kappa, axes=(0, 0)) @ v
    return float(np.asarray(r.rho, dtype=float) @ v)


def word_coefficient_tensor(rho, kappa, e, t: int) -> np.ndarray:
    """All correlation words of length t as a flat ((d^2)^t,) array.

    Entry at flat index (i_1..i_t) is rho . kappa[i_1] ... kappa[i_t] . e.
    Built from both ends so the large intermediate is a single matmul.
    """
    rho = np.asarray(rho, dtype=float)
    e = np.asarray(e, dtype=float)
    kappa = np.asarray(kappa, dtype=float)
    m = kappa.shape[1]
    t_left = t // 2
    left = rho.reshape(1, m)
    for _ in range(t_left):
        left = np.einsum("wi,aij->waj", left, kappa).reshape(-1, m)
    right = e.reshape(1, m)
    for _ in range(t - t_left):
        right = np.einsum("aij,wj->awi", kappa, right).reshape(-1, m)
    return (left @ right.T).reshape(-1)


def marginal(r: Realization, t: int, basis: HermitianBasis | None = None,
             cap: int = DEFAULT_DENSE_CAP) -> DensityMatrix:
    """Dense t-site marginal assembled from all correlation words."""
    if t < 1:
        raise ValueError("t must be >= 1")
    if r.d_a ** t > cap:
        raise ValueError(f"dense cap exceeded: {r.d_a}^{t} > {cap}")
    if basis is None:
        basis = gellmann(r.d_a)
    coeffs = word_coefficient_tensor(r.rho, r.kappa, r.e, t)
    matrix = assemble_from_coefficients(coeffs, basis, t)
    return DensityMatrix(matrix=matrix, dim=r.d_a, sites=t, coeffs=coeffs)


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------

def from_cstar(c: CStarRealization, site_basis: HermitianBasis | None = None) -> Realization:
    """Real-coordinate realization of a quantum-channel model.

    Memory coordinates are taken in the orthonormal Hermitian basis of the
    d_b x d_b memory algebra, so kappa, e and rho all come out real.
    """
    c.validate()
    if site_basis is None:
        site_basis = gellmann(c.d_a)
    mem = _hermitian_basis(c.d_b)
    n_site = site_basis.size
    n_mem = mem.size
    v = np.asarray(c.v)
    kappa = np.zeros((n_site, n_mem, n_mem))
    for a in range(n_site):
        for j in range(n_mem):
            w = v.conj().T @ np.kron(site_basis.elements[a], mem.elements[j]) @ v
            col = np.einsum("iab,ba->i", mem.elements, w)
            if np.abs(col.imag).max() > 1e-10:
                raise ValueError("transition coefficients are not real")
            kappa[a, :, j] = col.real
    e = np.array([np.trace(mu).real for mu in mem.elements])
    rho = np.array([np.trace(np.asarray(c.rho0) @ mu).real for mu in mem.elements])
    return Realization(d_a=c.d_a, kappa=kappa, e=e, rho=rho).validate()


def product_realization(site_state, basis: HermitianBasis) -> Realization:
    """Rank-one realization of the product state site_state^(x infinity)."""
    site_state = np.asarray(site_state)
    d = basis.dim
    if site_state.shape != (d, d):
        raise ValueError(f"site state has shape {site_state.shape}, expected ({d}, {d})")
    if abs(np.trace(site_state).real - 1.0) > 1e-10:
        raise ValueError("site state must have trace 1")
    phi = np.array([np.trace(site_state @ g).real for g in basis.elements])
    kappa = phi.reshape(-1, 1, 1)
    return Realization(d_a=d, kappa=kappa, e=np.ones(1), rho=np.ones(1)).validate()


def aklt(theta: float = AKLT_THETA) -> CStarRealization:
    """Spin-1 valence-bond family; theta = arccos(sqrt(2/3)) is the AKLT point.

    Site basis order |1>, |0>, |-1>; memory basis |+1/2>, |-1/2>.  The
    defining isometry sends
        |+1/2> -> cos(theta) |1, -1/2> - sin(theta) |0, +1/2>,
        |-1/2> -> sin(theta) |0, -1/2> - cos(theta) |-1, +1/2>.
    The maximally mixed memory state is stationary for every theta.
    """
    c, s = math.cos(theta), math.sin(theta)
    v = np.zeros((6, 2), dtype=complex)
    v[0 * 2 + 1, 0] = c    # |1, -1/2>
    v[1 * 2 + 0, 0] = -s   # |0, +1/2>
    v[1 * 2 + 1, 1] = s    # |0, -1/2>
    v[2 * 2 + 0, 1] = -c   # |-1, +1/2>
    return CStarRealization(d_a=3, d_b=2, v=v, rho0=np.eye(2) / 2.0).validate()


def _dual_step(v, rho, d_a, d_b):
    # dual of B -> V^dag (1 x B) V, i.e. rho -> Tr_site(V rho V^dag)
    w = v @ rho @ v.conj().T
    return np.einsum("aiaj->ij", w.reshape(d_a, d_b, d_a, d_b))


def stationary_state(v, d_a: int, d_b: int, tol=1e-12, max_iter=100_000) -> np.ndarray:
    """Fixed point of the memory channel by power iteration from 1/d_b."""
    rho = np.eye(d_b, dtype=complex) / d_b
    for _ in range(max_iter):
        nxt = _dual_step(v, rho, d_a, d_b)
        nxt = 0.5 * (nxt + nxt.conj().T)
        nxt /= np.trace(nxt).real
        if np.abs(nxt - rho).max() < tol:
            return nxt
        rho = nxt
    raise RuntimeError(
        f"stationary state iteration did not converge within {max_iter} steps "
        "(degenerate peripheral spectrum?)"
    )


def _haar_isometry(rows: int, cols: int, rng) -> np.ndarray:
    g = rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))
    q, r = np.linalg.qr(g)
    d = np.diag(r)
    return q * (d / np.abs(d))


def random_cstar(d_a: int, d_b: int, seed: int) -> CStarRealization:
    """Seeded Haar-random channel model with its stationary memory state."""
    if d_a < 1 or d_b < 1:
        raise ValueError("dimensions must be >= 1")
    rng = np.random.default_rng(seed)
    v = _haar_isometry(d_a * d_b, d_b, rng)
    rho0 = stationary_state(v, d_a, d_b)
    return CStarRealization(d_a=d_a, d_b=d_b, v=v, rho0=rho0).validate()


def dense_state(c: CStarRealization, t: int, cap: int = DEFAULT_DENSE_CAP) -> DensityMatrix:
    """Brute-force t-site marginal by sequential channel application.

    Independent oracle for :func:`marginal`: grows the dense state one site
    at a time via sigma -> (1 x V) sigma (1 x V)^dag and traces the memory
    at the end.
    """
    if c.d_a ** t > cap:
        raise ValueError(f"dense cap exceeded: {c.d_a}^{t} > {cap}")
    sigma = np.asarray(c.rho0, dtype=complex)
    for k in range(t):
        op = np.kron(np.eye(c.d_a ** k), c.v)
        sigma = op @ sigma @ op.conj().T
    n = c.d_a ** t
    sigma = sigma.reshape(n, c.d_b, n, c.d_b)
    out = np.einsum("ibjb->ij", sigma)
    return DensityMatrix(matrix=out, dim=c.d_a, sites=t)


def random_chain(n_sites: int, d_a: int, d_b: int, seed: int,
                 stationary: bool = False) -> ChainRealization:
    """Seeded chain of Haar-random per-site channels.

    With ``stationary=True`` all sites share one isometry and rho0 is its
    stationary state (useful for translation-invariance checks).
    """
    rng = np.random.default_rng(seed)
    if stationary:
        v = _haar_isometry(d_a * d_b, d_b, rng)
        isometries = [v] * n_sites
        rho0 = stationary_state(v, d_a, d_b)
    else:
        isometries = [_haar_isometry(d_a * d_b, d_b, rng) for _ in range(n_sites)]
        g = rng.standard_normal((d_b, d_b)) + 1j * rng.standard_normal((d_b, d_b))
        rho0 = g @ g.conj().T
        rho0 /= np.trace(rho0).real
    return ChainRealization(d_a=d_a, d_b=d_b, isometries=isometries, rho0=rho0).validate()


def chain_state(chain: ChainRealization, cap: int = DEFAULT_DENSE_CAP) -> DensityMatrix:
    """Dense state of the full finite chain (memory traced out)."""
    n = chain.n_sites
    if chain.d_a ** n > cap:
        raise ValueError(f"dense cap exceeded: {chain.d_a}^{n} > {cap}")
    sigma = np.asarray(chain.rho0, dtype=complex)
    for k, v in enumerate(chain.isometries):
        op = np.kron(np.eye(chain.d_a ** k), v)
        sigma = op @ sigma @ op.conj().T
    dim = chain.d_a ** n
    sigma = sigma.reshape(dim, chain.d_b, dim, chain.d_b)
    out = np.einsum("ibjb->ij", sigma)
    return DensityMatrix(matrix=out, dim=chain.d_a, sites=n)


def chain_window_form(state: DensityMatrix, basis: HermitianBasis,
                      i: int, j: int, k: int) -> np.ndarray:
    """Window bilinear form of a finite-chain state, as a matrix.

    Rows index the Hermitian product basis on sites [i, j], columns the one
    on [j+1, k]; out-of-range i or k are clipped to the chain, matching the
    boundary convention of the non-homogeneous reconstruction.  For j = i-1
    the left block is empty and a single-row matrix is returned.
    """
    n = state.sites
    i = max(1, i)
    k = min(n, k)
    if not i - 1 <= j <= k:
        raise ValueError(f"invalid window split [{i}, {j}, {k}]")
    w = partial_trace_window(state.matrix, state.dim, n, i, k)
    c = expand_in_basis(w, basis, k - i + 1)
    nb = basis.size
    return c.reshape(nb ** (j - i + 1), nb ** (k - j))


# ---------------------------------------------------------------------------
# rank profiling
# ---------------------------------------------------------------------------

def rank_profile(r: Realization, basis: HermitianBasis, max_block: int,
                 tol: float = 1e-9, cap: int = DEFAULT_DENSE_CAP) -> np.ndarray:
    """Numerical ranks of the block bilinear forms.

    Entry [i-1, j-1] is the rank (threshold tol * sigma_1) of the matrix
    [omega(Y x X)] with left block of j sites and right block of i sites.
    Ranks are non-decreasing in both block sizes and bounded by m.
    """
    # the largest form spans 2 * max_block sites
    if r.d_a ** (2 * max_block) > cap:
        raise ValueError(f"dense cap exceeded for block size {max_block}")
    lefts = _left_words(r, max_block)
    rights = _right_words(r, max_block)
    out = np.zeros((max_block, max_block), dtype=int)
    for i in range(1, max_block + 1):
        for j in range(1, max_block + 1):
            om = lefts[j] @ rights[i].T
            s = np.linalg.svd(om, compute_uv=False)
            out[i - 1, j - 1] = int((s > tol * s[0]).sum()) if s[0] > 0 else 0
    return out


def t_star(profile: np.ndarray) -> tuple[int, int]:
    """Smallest (left, right) block widths at which the rank stabilizes."""
    full = profile[-1, -1]
    t1 = 1 + int(np.argmax(profile[-1, :] == full))
    t2 = 1 + int(np.argmax(profile[:, -1] == full))
    while profile[t2 - 1, t1 - 1] != full:
        if t1 <= t2 and t1 < profile.shape[1]:
            t1 += 1
        elif t2 < profile.shape[0]:
            t2 += 1
        else:
            break
    return t1, t2


def _left_words(r: Realization, max_block: int) -> dict[int, np.ndarray]:
    """rho . K-word rows for every block length up to max_block."""
    m = r.m
    out = {}
    cur = np.asarray(r.rho, dtype=float).reshape(1, m)
    for k in range(1, max_block + 1):
        cur = np.einsum("wi,aij->waj", cur, r.kappa).reshape(-1, m)
        out[k] = cur
    return out


def _right_words(r: Realization, max_block: int) -> dict[int, np.ndarray]:
    """K-word . e columns for every block length up to max_block."""
    m = r.m
    out = {}
    cur = np.asarray(r.e, dtype=float).reshape(1, m)
    for k in range(1, max_block + 1):
        cur = np.einsum("aij,wj->awi", r.kappa, cur).reshape(-1, m)
        out[k] = cur
    return out


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def realization_to_dict(r: Realization, diagnostics: dict | None = None) -> dict:
    doc = {
        "version": 1,
        "d_a": int(r.d_a),
        "m": int(r.m),
        "kappa": np.asarray(r.kappa, dtype=float).tolist(),
        "e": np.asarray(r.e, dtype=float).tolist(),
        "rho": np.asarray(r.rho, dtype=float).tolist(),
    }
    if diagnostics is not None:
        doc["diagnostics"] = diagnostics
    return doc


def realization_from_dict(doc: dict, validate: bool = True) -> Realization:
    if doc.get("version") != 1:
        raise ValueError(f"unsupported realization document version {doc.get('version')!r}")
    d_a = int(doc["d_a"])
    m = int(doc["m"])
    kappa = np.asarray(doc["kappa"], dtype=float)
    if kappa.shape != (d_a ** 2, m, m):
        raise ValueError(f"kappa has shape {kappa.shape}, expected ({d_a ** 2}, {m}, {m})")
    r = Realization(
        d_a=d_a,
        kappa=kappa,
        e=np.asarray(doc["e"], dtype=float),
        rho=np.asarray(doc["rho"], dtype=float),
    )
    return r.validate() if validate else r


def save_realization(r: Realization, path, diagnostics: dict | None = None):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(realization_to_dict(r, diagnostics), fh, indent=1)
        fh.write("\n")


def load_realization(path) -> Realization:
    with open(path, encoding="utf-8") as fh:
        return realization_from_dict(json.load(fh))
