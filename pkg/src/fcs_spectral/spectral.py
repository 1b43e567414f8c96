"""The learning core: Omega data, truncated SVD, spectral reconstruction.

Translation-invariant path
    1. collect the bilinear-form data (Omega, Omega_dot, Omega(1), tau Omega)
       in a fixed Hermitian product basis, either exactly from a realization
       or from (estimated) marginals;
    2. truncate the SVD of Omega to a fixed rank or singular value threshold;
    3. form the estimated realization
           e_hat   = U^T Omega(1)
           rho_hat = (tau Omega) (U^T Omega)^+
           K_hat_a = U^T Omega_a (U^T Omega)^+
       and evaluate reconstructed words rho_hat K_hat ... K_hat e_hat.

Non-homogeneous path: per-site window forms Omega^{[i,j,k]} with the
asymmetric boundary maps; see :func:`nonhomog_reconstruct`.

Estimates are generally neither stationary nor positive semidefinite, so
the reconstruction type carries no invariants beyond shape; an optional
projection to the nearest density matrix is provided for downstream
consumers and is outside the error analysis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import fcs
from .fcs import DEFAULT_DENSE_CAP, DensityMatrix, Realization
from .linalg import pseudoinverse, svd
from .opbasis import HermitianBasis, assemble_from_coefficients, gellmann

__all__ = [
    "OmegaData",
    "SvdTruncation",
    "SpectralRealization",
    "build_omega",
    "build_omega_from_marginals",
    "omega_data_from_coefficients",
    "truncate",
    "spectral_realization",
    "empirical_realization",
    "reconstruct_coefficients",
    "reconstruct_marginal",
    "project_to_density_matrix",
    "ChainOmegaData",
    "build_chain_omega",
    "NonhomogReconstruction",
    "nonhomog_reconstruct",
]


@dataclass
class OmegaData:
    """Bilinear-form data of a state in a Hermitian product basis.

    omega[j, i]        = omega(Y_j x X_i)          (left s_left, right s_right sites)
    omega_dot[k, j, i] = omega(Y_j x Z_k x X_i)    (one middle site)
    omega_one[j]       = omega(Y_j)
    tau_omega[i]       = omega(X_i)
    """

    d_a: int
    s_left: int
    s_right: int
    omega: np.ndarray
    omega_dot: np.ndarray
    omega_one: np.ndarray
    tau_omega: np.ndarray

    def copy(self) -> "OmegaData":
        return OmegaData(self.d_a, self.s_left, self.s_right, self.omega.copy(),
                         self.omega_dot.copy(), self.omega_one.copy(), self.tau_omega.copy())

    def validate_exact(self, atol=1e-10):
        """Marginal-compatibility identities that hold for exact data only.

        Appending an identity site is invisible to the state, so entries
        with trailing/leading identity indices must agree with the smaller
        marginals after the 1/sqrt(d) basis normalization.
        """
        d = self.d_a
        nb = d * d
        # omega_one[j] = sqrt(d^s_right) * omega[j, all-identity right index]
        dev1 = np.abs(self.omega_one - math.sqrt(float(d ** self.s_right)) * self.omega[:, 0]).max()
        dev2 = np.abs(self.tau_omega - math.sqrt(float(d ** self.s_left)) * self.omega[0, :]).max()
        # right index ending in the identity relates omega_dot to omega with
        # the middle label shifted into the right block:
        #   sqrt(d) * omega_dot[k, j, (i_1..i_{s-1}, 0)] = omega[j, (k, i_1..i_{s-1})]
        dot = self.omega_dot.reshape(nb, self.omega.shape[0], nb ** (self.s_right - 1), nb)
        lhs = math.sqrt(float(d)) * dot[..., 0]
        rhs = self.omega.reshape(self.omega.shape[0], nb, nb ** (self.s_right - 1)).transpose(1, 0, 2)
        dev3 = np.abs(lhs - rhs).max()
        worst = max(dev1, dev2, dev3)
        if worst > atol:
            raise ValueError(f"exact-mode consistency violated: max deviation {worst:.3e}")
        return self


def build_omega(r: Realization, basis: HermitianBasis | None = None,
                s_left: int = 1, s_right: int = 1,
                cap: int = DEFAULT_DENSE_CAP) -> OmegaData:
    """Exact Omega data of a realization for given block sizes."""
    if basis is not None and basis.dim != r.d_a:
        raise ValueError("basis dimension does not match the realization")
    if r.d_a ** (s_left + s_right) > cap:
        raise ValueError(f"dense cap exceeded for blocks ({s_left}, {s_right})")
    left = fcs._left_words(r, s_left)[s_left]     # (nL, m) rows rho.K_word
    right = fcs._right_words(r, s_right)[s_right]  # (nR, m) rows K_word.e
    omega = left @ right.T
    omega_dot = np.einsum("jm,amn,in->aji", left, r.kappa, right)
    omega_one = left @ np.asarray(r.e, dtype=float)
    tau_omega = right @ np.asarray(r.rho, dtype=float)
    return OmegaData(r.d_a, s_left, s_right, omega, omega_dot, omega_one, tau_omega)


def build_omega_from_marginals(marg_s: DensityMatrix, marg_2s: DensityMatrix,
                               marg_2s1: DensityMatrix,
                               basis: HermitianBasis) -> OmegaData:
    """Omega data from the three marginals of block size s, 2s and 2s+1."""
    s = marg_s.sites
    if marg_2s.sites != 2 * s or marg_2s1.sites != 2 * s + 1:
        raise ValueError(
            f"marginal sizes ({marg_s.sites}, {marg_2s.sites}, {marg_2s1.sites}) "
            f"are not of the form (s, 2s, 2s+1)"
        )
    return omega_data_from_coefficients(
        marg_s.coefficients(basis),
        marg_2s.coefficients(basis),
        marg_2s1.coefficients(basis),
        d_a=basis.dim,
        s=s,
    )


def omega_data_from_coefficients(c_s, c_2s, c_2s1, d_a: int, s: int) -> OmegaData:
    """Assemble Omega data from raw coefficient vectors (e.g. tomography output)."""
    nb = d_a * d_a
    n_blk = nb ** s
    c_s = np.asarray(c_s, dtype=float)
    c_2s = np.asarray(c_2s, dtype=float)
    c_2s1 = np.asarray(c_2s1, dtype=float)
    if c_s.size != n_blk or c_2s.size != n_blk ** 2 or c_2s1.size != nb * n_blk ** 2:
        raise ValueError("coefficient vector sizes do not match block size s")
    omega = c_2s.reshape(n_blk, n_blk)
    omega_dot = c_2s1.reshape(n_blk, nb, n_blk).transpose(1, 0, 2).copy()
    return OmegaData(d_a, s, s, omega, omega_dot, c_s.copy(), c_s.copy())


# ---------------------------------------------------------------------------
# truncation and reconstruction
# ---------------------------------------------------------------------------

@dataclass
class SvdTruncation:
    """Retained left singular frame of an Omega estimate."""

    u_hat: np.ndarray          # (nL, m_hat), orthonormal columns
    retained: np.ndarray       # singular values kept, descending
    discarded: np.ndarray      # singular values dropped
    mode: str                  # "rank" or "threshold"
    param: float

    @property
    def rank(self) -> int:
        return self.u_hat.shape[1]


def truncate(omega, rank: int | None = None, threshold: float | None = None) -> SvdTruncation:
    """Truncated SVD frame of Omega, by fixed rank or singular value threshold.

    In threshold mode every singular value >= threshold is kept (the tie at
    the threshold is kept: the selection condition is closed).
    """
    if (rank is None) == (threshold is None):
        raise ValueError("specify exactly one of rank or threshold")
    u, s, _ = svd(np.asarray(omega, dtype=float))
    if rank is not None:
        if not 1 <= rank <= s.size:
            raise ValueError(f"rank {rank} out of range [1, {s.size}]")
        if s[rank - 1] <= 1e-14:
            raise ValueError(f"rank-deficient truncation: sigma_{rank} = {s[rank - 1]:.3e}")
        keep = rank
        mode, param = "rank", float(rank)
    else:
        keep = int((s >= threshold).sum())
        if keep == 0:
            raise ValueError(f"threshold {threshold} discards every singular value")
        mode, param = "threshold", float(threshold)
    return SvdTruncation(u_hat=u[:, :keep], retained=s[:keep].copy(),
                         discarded=s[keep:].copy(), mode=mode, param=param)


@dataclass
class SpectralRealization:
    """Estimated realization triple; not necessarily stationary or positive."""

    d_a: int
    e_hat: np.ndarray
    rho_hat: np.ndarray
    k_hat: np.ndarray          # (d_a^2, m_hat, m_hat)
    diagnostics: dict = field(default_factory=dict)

    @property
    def m(self) -> int:
        return self.k_hat.shape[1]

    def evaluate_word(self, word) -> float:
        v = self.e_hat
        for c in reversed(list(word)):
            v = np.tensordot(np.asarray(c, dtype=float), self.k_hat, axes=(0, 0)) @ v
        return float(self.rho_hat @ v)

    def to_dict(self) -> dict:
        doc = {
            "version": 1,
            "d_a": int(self.d_a),
            "m": int(self.m),
            "kappa": self.k_hat.tolist(),
            "e": self.e_hat.tolist(),
            "rho": self.rho_hat.tolist(),
            "diagnostics": {k: _jsonable(v) for k, v in self.diagnostics.items()},
        }
        return doc


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    return v


def spectral_realization(od: OmegaData, tr: SvdTruncation,
                         pinv_tol: float = 1e-12) -> SpectralRealization:
    """Estimated realization from Omega data and a truncated frame.

    The pseudoinverse cutoff is relative (default 1e-12 * sigma_1): the
    truncation already fixes the rank, so no second truncation happens here.
    """
    if tr.u_hat.shape[0] != od.omega.shape[0]:
        raise ValueError("truncation frame does not match the Omega row space")
    b = tr.u_hat.T @ od.omega               # (m_hat, nR)
    b_pinv = pseudoinverse(b, tol=pinv_tol)
    e_hat = tr.u_hat.T @ od.omega_one
    rho_hat = od.tau_omega @ b_pinv
    k_hat = np.einsum("lj,alk,kr->ajr", tr.u_hat, od.omega_dot, b_pinv, optimize=True)
    sv_b = np.linalg.svd(b, compute_uv=False)
    diagnostics = {
        "sigma_m_hat": float(tr.retained[-1]),
        "rank": tr.rank,
        "cond_utomega": float(sv_b[0] / sv_b[-1]) if sv_b[-1] > 0 else float("inf"),
        "discarded_max": float(tr.discarded[0]) if tr.discarded.size else 0.0,
    }
    return SpectralRealization(d_a=od.d_a, e_hat=e_hat, rho_hat=rho_hat,
                               k_hat=k_hat, diagnostics=diagnostics)


def empirical_realization(od_exact: OmegaData, u_hat: np.ndarray,
                          min_overlap: float = 1e-8,
                          pinv_tol: float = 1e-12) -> SpectralRealization:
    """Exact-data realization in an estimated frame.

    Uses the true Omega data with a (possibly noisy) left frame u_hat; as
    long as u_hat^T u is invertible this is an exact realization of the
    state.  The invertibility check sigma_min(u_hat^T u) > min_overlap
    uses the exact rank-m frame u of Omega.
    """
    m_hat = u_hat.shape[1]
    u_exact = svd(od_exact.omega).u[:, :m_hat]
    overlap = np.linalg.svd(u_hat.T @ u_exact, compute_uv=False)
    if overlap[-1] <= min_overlap:
        raise ValueError(
            f"u_hat^T u is numerically singular: sigma_min = {overlap[-1]:.3e}"
        )
    b = u_hat.T @ od_exact.omega
    b_pinv = pseudoinverse(b, tol=pinv_tol)
    e_t = u_hat.T @ od_exact.omega_one
    rho_t = od_exact.tau_omega @ b_pinv
    k_t = np.einsum("lj,alk,kr->ajr", u_hat, od_exact.omega_dot, b_pinv, optimize=True)
    return SpectralRealization(
        d_a=od_exact.d_a, e_hat=e_t, rho_hat=rho_t, k_hat=k_t,
        diagnostics={"u_overlap_sigma_min": float(overlap[-1])},
    )


def reconstruct_coefficients(sr: SpectralRealization, t: int) -> np.ndarray:
    """Flat coefficient tensor of the reconstructed t-site marginal."""
    return fcs.word_coefficient_tensor(sr.rho_hat, sr.k_hat, sr.e_hat, t)


def reconstruct_marginal(sr: SpectralRealization, t: int,
                         basis: HermitianBasis | None = None,
                         cap: int = DEFAULT_DENSE_CAP) -> DensityMatrix:
    """Dense reconstructed marginal; Hermitian by construction, trace reported
    as computed (no renormalization, no positivity projection)."""
    if sr.d_a ** t > cap:
        raise ValueError(f"dense cap exceeded: {sr.d_a}^{t} > {cap}")
    if basis is None:
        basis = gellmann(sr.d_a)
    coeffs = reconstruct_coefficients(sr, t)
    matrix = assemble_from_coefficients(coeffs, basis, t)
    return DensityMatrix(matrix=matrix, dim=sr.d_a, sites=t, coeffs=coeffs)


def project_to_density_matrix(dm: DensityMatrix) -> DensityMatrix:
    """Nearest-density-matrix post-processing: clip negative eigenvalues and
    renormalize the trace.  Outside the reconstruction error analysis."""
    h = 0.5 * (dm.matrix + dm.matrix.conj().T)
    w, v = np.linalg.eigh(h)
    w = np.clip(w, 0.0, None)
    s = w.sum()
    if s <= 0:
        raise ValueError("projection failed: no positive spectral weight")
    out = (v * (w / s)) @ v.conj().T
    return DensityMatrix(matrix=out, dim=dm.dim, sites=dm.sites)


# ---------------------------------------------------------------------------
# non-homogeneous case
# ---------------------------------------------------------------------------

@dataclass
class ChainOmegaData:
    """Window bilinear forms of a finite-chain state.

    For site j the window form uses left block [max(1, j-l+1), j] and right
    block [j+1, min(j+r, N)]; the middle forms shift the left block one site
    down and carry the site-j label on their first axis.  Boundary forms at
    j = 1 and j = N have a trivial (one-dimensional) outer side.
    """

    d_a: int
    n_sites: int
    left_width: int
    right_width: int
    omegas: dict[int, np.ndarray]       # j = 1..N-1
    omega_dots: dict[int, np.ndarray]   # j = 1..N, shape (d^2, nL_j, nR_j)

    def copy(self) -> "ChainOmegaData":
        return ChainOmegaData(
            self.d_a, self.n_sites, self.left_width, self.right_width,
            {j: m.copy() for j, m in self.omegas.items()},
            {j: m.copy() for j, m in self.omega_dots.items()},
        )


def build_chain_omega(state: DensityMatrix, basis: HermitianBasis,
                      left_width: int, right_width: int) -> ChainOmegaData:
    """Exact window forms of a dense finite-chain state (indices clipped at
    the boundary as usual)."""
    n = state.sites
    nb = basis.size
    if left_width < 1 or right_width < 1:
        raise ValueError("block widths must be >= 1")
    omegas = {}
    omega_dots = {}
    for j in range(1, n):
        omegas[j] = fcs.chain_window_form(
            state, basis, j - left_width + 1, j, j + right_width)
    for j in range(1, n + 1):
        # same window with the split one site down; the site-j label becomes
        # the leading axis
        f = fcs.chain_window_form(state, basis, j - left_width, j - 1, j + right_width)
        omega_dots[j] = np.ascontiguousarray(
            f.reshape(f.shape[0], nb, -1).transpose(1, 0, 2))
    return ChainOmegaData(d_a=state.dim, n_sites=n, left_width=left_width,
                          right_width=right_width, omegas=omegas, omega_dots=omega_dots)


@dataclass
class NonhomogReconstruction:
    """Per-site reconstructed maps and derived quantities."""

    d_a: int
    n_sites: int
    k_maps: list[np.ndarray]   # k_maps[j-1] has shape (d^2, m_{j-1}, m_j); m_0 = m_N = 1
    ranks: list[int]

    def coefficients(self) -> np.ndarray:
        cur = self.k_maps[0][:, 0, :]                      # (nb, m_1)
        for k in self.k_maps[1:]:
            cur = np.einsum("wp,apq->waq", cur, k).reshape(-1, k.shape[2])
        return cur.reshape(-1)

    def state(self, basis: HermitianBasis) -> DensityMatrix:
        coeffs = self.coefficients()
        matrix = assemble_from_coefficients(coeffs, basis, self.n_sites)
        return DensityMatrix(matrix=matrix, dim=self.d_a, sites=self.n_sites, coeffs=coeffs)


def nonhomog_reconstruct(cod: ChainOmegaData, ranks: list[int] | None = None,
                         threshold: float | None = None,
                         pinv_tol: float = 1e-12) -> NonhomogReconstruction:
    """Spectral reconstruction of a finite chain from window form estimates.

    Per-site ranks are either given (list of length N-1 for sites 1..N-1)
    or resolved by the singular value threshold.  Boundary maps follow the
    asymmetric formulas: site 1 has no left frame, site N no pseudoinverse.
    """
    n = cod.n_sites
    if ranks is not None and len(ranks) != n - 1:
        raise ValueError(f"expected {n - 1} per-site ranks, got {len(ranks)}")
    if (ranks is None) == (threshold is None):
        raise ValueError("specify exactly one of ranks or threshold")
    frames: dict[int, np.ndarray] = {}
    out_ranks: list[int] = []
    for j in range(1, n):
        try:
            if ranks is not None:
                tr = truncate(cod.omegas[j], rank=ranks[j - 1])
            else:
                tr = truncate(cod.omegas[j], threshold=threshold)
        except ValueError as exc:
            raise ValueError(f"truncation failed at site {j}: {exc}") from exc
        frames[j] = tr.u_hat
        out_ranks.append(tr.rank)

    def projected_pinv(j: int) -> np.ndarray:
        b = frames[j].T @ cod.omegas[j]
        sv = np.linalg.svd(b, compute_uv=False)
        if sv[-1] <= 1e-14 * max(sv[0], 1e-300):
            raise ValueError(f"rank-deficient projected Omega at site {j}")
        return pseudoinverse(b, tol=pinv_tol)

    k_maps: list[np.ndarray] = []
    # site 1: (d^2, 1, m_1)
    k1 = np.einsum("alr,rq->alq", cod.omega_dots[1], projected_pinv(1))
    k_maps.append(k1)
    for j in range(2, n):
        kj = np.einsum(
            "lp,alr,rq->apq", frames[j - 1], cod.omega_dots[j], projected_pinv(j)
        )
        k_maps.append(kj)
    # site N: (d^2, m_{N-1}, 1)
    kn = np.einsum("lp,alr->apr", frames[n - 1], cod.omega_dots[n])
    k_maps.append(kn)
    return NonhomogReconstruction(d_a=cod.d_a, n_sites=n, k_maps=k_maps, ranks=out_ranks)
