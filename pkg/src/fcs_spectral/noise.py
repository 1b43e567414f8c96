"""Simulated estimation error, seeded and reproducible.

Two noise families:

* Gaussian matrix perturbation ``a + epsilon * P / ||P||`` with P drawn
  entrywise from N(0, 1).  The default normalization is Frobenius, so the
  Schatten-2 distance of the perturbed object is exactly epsilon; spectral
  normalization is available behind a flag.
* A shot-noise tomography simulator that measures each block basis element
  on n copies, either by actual multinomial sampling of its eigenvalues or
  by a Gaussian surrogate with the exact single-shot variance.

RNG contract: streams come from numpy's PCG64 generator.  Per-trial
sub-streams are derived with ``numpy.random.SeedSequence(seed, spawn_key)``
where the spawn key is the tuple of loop indices; statistical (not
bit-level cross-language) reproducibility is the contract.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .opbasis import HermitianBasis, block_element, multi_index
from .spectral import ChainOmegaData, OmegaData

__all__ = [
    "NoiseSpec",
    "make_rng",
    "spawn_rng",
    "perturb_matrix",
    "perturb_vector",
    "perturb_omega_data",
    "perturb_chain_omega",
    "simulate_tomography",
]

NOISE_MODES = ("gaussian_matrix", "shot_gaussian", "shot_multinomial")


@dataclass
class NoiseSpec:
    """Noise configuration for an experiment run."""

    mode: str = "gaussian_matrix"
    epsilon: float = 0.0
    epsilon_prime: float | None = None  # defaults to epsilon
    shots: int = 1

    def __post_init__(self):
        if self.mode not in NOISE_MODES:
            raise ValueError(f"unknown noise mode {self.mode!r}")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.shots < 1:
            raise ValueError("shots must be >= 1")

    @property
    def eps_prime(self) -> float:
        return self.epsilon if self.epsilon_prime is None else self.epsilon_prime


def make_rng(seed) -> np.random.Generator:
    """PCG64 generator for the given seed (or SeedSequence)."""
    return np.random.Generator(np.random.PCG64(seed))


def spawn_rng(seed: int, *key: int) -> np.random.Generator:
    """Deterministic sub-stream for a trial, keyed by loop indices."""
    return make_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


def perturb_matrix(a, epsilon: float, rng, norm: str = "fro") -> np.ndarray:
    """a + epsilon * P/||P|| with standard normal entries of P.

    With the default Frobenius normalization the output is exactly at
    Frobenius distance epsilon from a; norm="spectral" normalizes by the
    largest singular value instead.
    """
    a = np.asarray(a, dtype=float)
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    if epsilon == 0:
        return a.copy()
    p = rng.standard_normal(a.shape)
    if norm == "fro":
        scale = np.linalg.norm(p)
    elif norm == "spectral":
        scale = np.linalg.svd(p, compute_uv=False)[0]
    else:
        raise ValueError(f"unknown norm {norm!r}")
    return a + (epsilon / scale) * p


def perturb_vector(v, epsilon: float, rng) -> np.ndarray:
    """v + epsilon * p/||p||_2 with standard normal p."""
    v = np.asarray(v, dtype=float)
    if epsilon == 0:
        return v.copy()
    p = rng.standard_normal(v.shape)
    return v + (epsilon / np.linalg.norm(p)) * p


def perturb_omega_data(od: OmegaData, epsilon: float, epsilon_prime: float | None,
                       rng, norm: str = "fro") -> OmegaData:
    """Independently perturb Omega at epsilon, each Omega_dot slice at
    epsilon', and the two vectors at epsilon (Euclidean normalization)."""
    eps_p = epsilon if epsilon_prime is None else epsilon_prime
    out = od.copy()
    out.omega = perturb_matrix(od.omega, epsilon, rng, norm=norm)
    for k in range(od.omega_dot.shape[0]):
        out.omega_dot[k] = perturb_matrix(od.omega_dot[k], eps_p, rng, norm=norm)
    out.omega_one = perturb_vector(od.omega_one, epsilon, rng)
    out.tau_omega = perturb_vector(od.tau_omega, epsilon, rng)
    return out


def perturb_chain_omega(cod: ChainOmegaData, epsilon: float, epsilon_prime: float | None,
                        rng, norm: str = "fro") -> ChainOmegaData:
    """Perturb every window form at epsilon and every middle slice at epsilon'."""
    eps_p = epsilon if epsilon_prime is None else epsilon_prime
    out = cod.copy()
    for j in sorted(out.omegas):
        out.omegas[j] = perturb_matrix(cod.omegas[j], epsilon, rng, norm=norm)
    for j in sorted(out.omega_dots):
        for k in range(out.omega_dots[j].shape[0]):
            out.omega_dots[j][k] = perturb_matrix(cod.omega_dots[j][k], eps_p, rng, norm=norm)
    return out


def simulate_tomography(dm, basis: HermitianBasis, shots: int, rng,
                        mode: str = "shot_multinomial") -> np.ndarray:
    """Estimated coefficient vector of a marginal from n measurement shots.

    For each block basis element G = sum_k g_k Pi_k the simulator draws n
    outcomes with probabilities Tr(Pi_k rho) and returns the sample mean
    (mode "shot_multinomial"), or a Gaussian surrogate with the identical
    mean and variance (<G^2> - <G>^2)/n (mode "shot_gaussian").  Estimates
    are unbiased; a zero-variance observable is returned exactly.
    """
    if mode not in ("shot_multinomial", "shot_gaussian"):
        raise ValueError(f"unknown tomography mode {mode!r}")
    if shots < 1:
        raise ValueError("shots must be >= 1")
    rho = np.asarray(dm.matrix)
    sites = dm.sites
    n_out = basis.size ** sites
    est = np.empty(n_out)
    for flat in range(n_out):
        g = block_element(basis, multi_index(flat, sites, basis.dim))
        vals, vecs = np.linalg.eigh(g)
        probs = np.einsum("ik,ij,jk->k", vecs.conj(), rho, vecs).real
        lo = probs.min()
        if lo < -1e-9:
            warnings.warn(
                f"clipping negative outcome probability {lo:.3e} (non-PSD input)",
                RuntimeWarning,
                stacklevel=2,
            )
        probs = np.clip(probs, 0.0, None)
        probs /= probs.sum()
        mean = float(vals @ probs)
        var = float((vals ** 2) @ probs) - mean ** 2
        if var <= 1e-18 * max(1.0, float(vals.max() ** 2)):
            # deterministic outcome (degenerate spectrum), up to roundoff
            est[flat] = mean
        elif mode == "shot_multinomial":
            counts = rng.multinomial(shots, probs)
            est[flat] = float(vals @ counts) / shots
        else:
            est[flat] = mean + rng.standard_normal() * np.sqrt(var / shots)
    return est
