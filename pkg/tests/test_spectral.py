import numpy as np
import pytest

from fcs_spectral import fcs
from fcs_spectral.analysis import trace_distance, trace_distance_from_coefficients
from fcs_spectral.fcs import (
    chain_state,
    from_cstar,
    marginal,
    product_realization,
    random_cstar,
    random_chain,
)
from fcs_spectral.noise import make_rng, perturb_chain_omega, perturb_omega_data, spawn_rng
from fcs_spectral.spectral import (
    build_chain_omega,
    build_omega,
    build_omega_from_marginals,
    empirical_realization,
    nonhomog_reconstruct,
    project_to_density_matrix,
    reconstruct_marginal,
    spectral_realization,
    truncate,
)


# -- Omega assembly -----------------------------------------------------------

def test_product_state_omega_is_rank_one(basis2):
    r = product_realization(np.diag([0.8, 0.2]).astype(complex), basis2)
    od = build_omega(r, basis2, s_left=2, s_right=2)
    s = np.linalg.svd(od.omega, compute_uv=False)
    assert s[0] > 0 and np.all(s[1:] <= 1e-12)
    # omega = xi xi^T with xi the 2-site coefficient vector
    xi = marginal(r, 2, basis2).coefficients(basis2)
    assert np.abs(od.omega - np.outer(xi, xi)).max() <= 1e-12


def test_aklt_omega_identity_entry(aklt_omega):
    assert aklt_omega.omega[0, 0] == pytest.approx(1.0 / 3.0, abs=1e-12)


def test_aklt_omega_rank_four(aklt_omega):
    s = np.linalg.svd(aklt_omega.omega, compute_uv=False)
    assert int((s > 1e-10).sum()) == 4


def test_omega_exact_consistency(aklt_omega):
    aklt_omega.validate_exact()


def test_build_omega_matches_marginal_path(aklt_realization, basis3, aklt_omega):
    od2 = build_omega_from_marginals(
        marginal(aklt_realization, 1, basis3),
        marginal(aklt_realization, 2, basis3),
        marginal(aklt_realization, 3, basis3),
        basis3,
    )
    assert np.abs(od2.omega - aklt_omega.omega).max() <= 1e-12
    assert np.abs(od2.omega_dot - aklt_omega.omega_dot).max() <= 1e-12
    assert np.abs(od2.omega_one - aklt_omega.omega_one).max() <= 1e-12
    assert np.abs(od2.tau_omega - aklt_omega.tau_omega).max() <= 1e-12


def test_build_omega_is_linear_in_marginals(basis2):
    ra = from_cstar(random_cstar(2, 2, 21))
    rb = from_cstar(random_cstar(2, 2, 22))
    margs_a = [marginal(ra, k, basis2) for k in (1, 2, 3)]
    margs_b = [marginal(rb, k, basis2) for k in (1, 2, 3)]
    lam = 0.3
    mixed = [
        fcs.DensityMatrix(matrix=lam * a.matrix + (1 - lam) * b.matrix, dim=2, sites=a.sites)
        for a, b in zip(margs_a, margs_b)
    ]
    od_mix = build_omega_from_marginals(*mixed, basis2)
    od_a = build_omega_from_marginals(*margs_a, basis2)
    od_b = build_omega_from_marginals(*margs_b, basis2)
    assert np.abs(od_mix.omega - (lam * od_a.omega + (1 - lam) * od_b.omega)).max() <= 1e-12


# -- truncation ----------------------------------------------------------------

def test_truncate_threshold_keeps_everything_above():
    tr = truncate(np.eye(4), threshold=0.5)
    assert tr.rank == 4 and tr.discarded.size == 0


def test_truncate_threshold_tie_is_kept():
    tr = truncate(np.diag([1.0, 0.5, 0.3]), threshold=0.5)
    assert tr.rank == 2


def test_truncate_threshold_splits():
    tr = truncate(np.diag([1.0, 0.3]), threshold=0.5)
    assert tr.rank == 1
    assert np.allclose(tr.discarded, [0.3])


def test_truncate_fixed_rank_aklt(aklt_omega):
    tr = truncate(aklt_omega.omega, rank=4)
    assert np.all(tr.discarded <= 1e-10)
    assert np.abs(tr.u_hat.T @ tr.u_hat - np.eye(4)).max() <= 1e-10


def test_truncate_rank_deficient_raises():
    with pytest.raises(ValueError, match="rank-deficient"):
        truncate(np.diag([1.0, 0.0]), rank=2)


def test_truncate_argument_validation(aklt_omega):
    with pytest.raises(ValueError):
        truncate(aklt_omega.omega)
    with pytest.raises(ValueError):
        truncate(aklt_omega.omega, rank=4, threshold=0.1)


# -- spectral reconstruction ----------------------------------------------------

def test_product_state_reconstruction(basis2):
    rho_site = np.diag([0.8, 0.2]).astype(complex)
    r = product_realization(rho_site, basis2)
    od = build_omega(r, basis2)
    tr = truncate(od.omega, rank=1)
    sr = spectral_realization(od, tr)
    assert sr.m == 1
    expected = rho_site.copy()
    for t in range(1, 6):
        rec = reconstruct_marginal(sr, t, basis2)
        assert np.abs(rec.matrix - expected).max() <= 1e-10
        expected = np.kron(expected, rho_site)


def test_aklt_exact_round_trip_small(aklt_realization, basis3, aklt_omega):
    tr = truncate(aklt_omega.omega, rank=4)
    sr = spectral_realization(aklt_omega, tr)
    for t in (1, 2, 3, 4):
        rec = reconstruct_marginal(sr, t, basis3)
        exact = marginal(aklt_realization, t, basis3)
        assert trace_distance(rec, exact) <= 1e-9
        assert rec.trace() == pytest.approx(1.0, abs=1e-9)


def test_block_size_must_reach_stabilized_rank(basis2):
    # memory-3 qubit model: the bilinear form has rank 9, but single-site
    # blocks span only a 4-dimensional space; reconstruction is exact once
    # the blocks are wide enough and garbage below that
    from fcs_spectral.fcs import rank_profile, t_star, word_coefficient_tensor

    r = from_cstar(random_cstar(2, 3, 42))
    profile = rank_profile(r, basis2, 3)
    assert profile[0, 0] == 4 and profile[-1, -1] == 9
    assert t_star(profile) == (2, 2)
    od2 = build_omega(r, basis2, 2, 2)
    sr = spectral_realization(od2, truncate(od2.omega, rank=9))
    exact = word_coefficient_tensor(r.rho, r.kappa, r.e, 4)
    rec = fcs.word_coefficient_tensor(sr.rho_hat, sr.k_hat, sr.e_hat, 4)
    assert trace_distance_from_coefficients(rec, exact, basis2, 4) <= 1e-9
    od1 = build_omega(r, basis2, 1, 1)
    sr1 = spectral_realization(od1, truncate(od1.omega, rank=4))
    rec1 = fcs.word_coefficient_tensor(sr1.rho_hat, sr1.k_hat, sr1.e_hat, 4)
    assert trace_distance_from_coefficients(rec1, exact, basis2, 4) > 0.1


def test_asymmetric_blocks_still_exact(aklt_realization, basis3):
    # left block of 2 sites, right block of 1: rank stays 4 and the
    # reconstruction is still exact
    od = build_omega(aklt_realization, basis3, s_left=2, s_right=1)
    od.validate_exact()
    assert od.omega.shape == (81, 9)
    sr = spectral_realization(od, truncate(od.omega, rank=4))
    for t in (1, 3, 4):
        rec = reconstruct_marginal(sr, t, basis3)
        exact = marginal(aklt_realization, t, basis3)
        assert trace_distance(rec, exact) <= 1e-9


@pytest.mark.parametrize("seed", [11, 23])
def test_random_model_exact_round_trip(seed, basis2):
    r = from_cstar(random_cstar(2, 2, seed))
    od = build_omega(r, basis2, s_left=2, s_right=2)
    sv = np.linalg.svd(od.omega, compute_uv=False)
    rank = int((sv > 1e-9 * sv[0]).sum())
    sr = spectral_realization(od, truncate(od.omega, rank=rank))
    for t in (1, 3, 5):
        rec = reconstruct_marginal(sr, t, basis2)
        exact = marginal(r, t, basis2)
        assert trace_distance(rec, exact) <= 1e-9


def test_gauge_invariance_of_reconstruction(aklt_omega, basis3, aklt_realization):
    tr = truncate(aklt_omega.omega, rank=4)
    sr = spectral_realization(aklt_omega, tr)
    rng = np.random.default_rng(8)
    q = np.linalg.qr(rng.standard_normal((4, 4)))[0]
    tr_rot = truncate(aklt_omega.omega, rank=4)
    tr_rot.u_hat = tr.u_hat @ q
    sr_rot = spectral_realization(aklt_omega, tr_rot)
    for t in (1, 2, 3):
        a = fcs.word_coefficient_tensor(sr.rho_hat, sr.k_hat, sr.e_hat, t)
        b = fcs.word_coefficient_tensor(sr_rot.rho_hat, sr_rot.k_hat, sr_rot.e_hat, t)
        assert np.abs(a - b).max() <= 1e-10


def test_noisy_reconstruction_regression(aklt_omega, basis3):
    # recorded on first run: trace of the noisy rank-4 reconstruction
    od_hat = perturb_omega_data(aklt_omega, 1e-3, 1e-3, make_rng(1))
    sr = spectral_realization(od_hat, truncate(od_hat.omega, rank=4))
    rec = reconstruct_marginal(sr, 4, basis3)
    assert np.abs(rec.matrix - rec.matrix.conj().T).max() <= 1e-12
    assert rec.trace() == pytest.approx(1.0, abs=1e-2)
    assert rec.trace() == pytest.approx(0.9983678908710114, abs=1e-6)


def test_projection_to_density_matrix(aklt_omega, basis3):
    od_hat = perturb_omega_data(aklt_omega, 1e-2, 1e-2, make_rng(2))
    sr = spectral_realization(od_hat, truncate(od_hat.omega, rank=4))
    rec = reconstruct_marginal(sr, 3, basis3)
    proj = project_to_density_matrix(rec)
    proj.validate(psd_tol=1e-12, trace_tol=1e-12)


# -- empirical realization ------------------------------------------------------

def test_empirical_realization_with_exact_frame(aklt_omega, aklt_realization):
    from fcs_spectral.linalg import svd

    u = svd(aklt_omega.omega).u[:, :4]
    er = empirical_realization(aklt_omega, u)
    for t in (1, 2, 3):
        got = fcs.word_coefficient_tensor(er.rho_hat, er.k_hat, er.e_hat, t)
        want = fcs.word_coefficient_tensor(
            aklt_realization.rho, aklt_realization.kappa, aklt_realization.e, t)
        assert np.abs(got - want).max() <= 1e-10


def test_empirical_realization_noisy_frame_still_exact(aklt_omega, aklt_realization):
    od_hat = perturb_omega_data(aklt_omega, 1e-4, 1e-4, make_rng(4))
    u_hat = truncate(od_hat.omega, rank=4).u_hat
    er = empirical_realization(aklt_omega, u_hat)
    for t in (1, 2, 4):
        got = fcs.word_coefficient_tensor(er.rho_hat, er.k_hat, er.e_hat, t)
        want = fcs.word_coefficient_tensor(
            aklt_realization.rho, aklt_realization.kappa, aklt_realization.e, t)
        assert np.abs(got - want).max() <= 1e-8


def test_empirical_realization_rotation_invariance(aklt_omega):
    from fcs_spectral.linalg import svd

    u = svd(aklt_omega.omega).u[:, :4]
    rng = np.random.default_rng(0)
    skew = rng.standard_normal((4, 4)) * 0.05
    q = np.linalg.qr(np.eye(4) + skew - skew.T)[0]
    er = empirical_realization(aklt_omega, u @ q)
    base = empirical_realization(aklt_omega, u)
    for t in (1, 3):
        a = fcs.word_coefficient_tensor(er.rho_hat, er.k_hat, er.e_hat, t)
        b = fcs.word_coefficient_tensor(base.rho_hat, base.k_hat, base.e_hat, t)
        assert np.abs(a - b).max() <= 1e-10


def test_empirical_realization_rejects_orthogonal_frame(aklt_omega):
    from fcs_spectral.linalg import svd

    full = svd(aklt_omega.omega)
    bad = full.u[:, 4:8]  # orthogonal complement of the range
    with pytest.raises(ValueError, match="sigma_min"):
        empirical_realization(aklt_omega, bad)


# -- non-homogeneous --------------------------------------------------------------

def test_nonhomog_product_chain_exact(basis2):
    # N = 2 chain of two independent pure sites
    psis = []
    rng = np.random.default_rng(5)
    isos = []
    for _ in range(2):
        psi = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        psi /= np.linalg.norm(psi)
        psis.append(psi)
    # memory dimension 1: V maps C -> C^2 (x) C
    chain = fcs.ChainRealization(
        d_a=2, d_b=1,
        isometries=[psi.reshape(2, 1) for psi in psis],
        rho0=np.eye(1, dtype=complex),
    )
    state = chain_state(chain)
    cod = build_chain_omega(state, basis2, 1, 1)
    recon = nonhomog_reconstruct(cod, ranks=[1])
    got = recon.state(basis2)
    expected = np.kron(np.outer(psis[0], psis[0].conj()), np.outer(psis[1], psis[1].conj()))
    assert np.abs(got.matrix - expected).max() <= 1e-10


@pytest.mark.parametrize("seed", [3, 17])
def test_nonhomog_exact_recovery(seed, basis2):
    chain = random_chain(5, 2, 2, seed)
    state = chain_state(chain)
    cod = build_chain_omega(state, basis2, 2, 2)
    recon = nonhomog_reconstruct(cod, threshold=1e-8)
    exact = state.coefficients(basis2)
    td = trace_distance_from_coefficients(recon.coefficients(), exact, basis2, 5)
    assert td <= 1e-8


@pytest.mark.parametrize("n_sites", [2, 3, 4, 5, 6])
def test_nonhomog_exact_equals_brute_force_all_lengths(n_sites, basis2):
    # 4 seeds per length x 5 lengths: 20 random chains in total
    for seed in range(4):
        chain = random_chain(n_sites, 2, 2, 40 + 10 * n_sites + seed)
        state = chain_state(chain)
        cod = build_chain_omega(state, basis2, 2, 2)
        recon = nonhomog_reconstruct(cod, threshold=1e-8)
        exact = state.coefficients(basis2)
        td = trace_distance_from_coefficients(
            recon.coefficients(), exact, basis2, n_sites)
        assert td <= 1e-8, f"N={n_sites} seed={seed}: TD {td:.2e}"


def test_nonhomog_noisy_regression(basis2):
    # recorded on first run: eps = 1e-4 noise stays below 1e-3 trace distance
    chain = random_chain(5, 2, 2, 3)
    state = chain_state(chain)
    cod = build_chain_omega(state, basis2, 2, 2)
    ranks = [4, 4, 4, 4]
    exact = state.coefficients(basis2)
    tds = []
    for trial in range(5):
        cod_hat = perturb_chain_omega(cod, 1e-4, 1e-4, spawn_rng(3, 0, trial))
        recon = nonhomog_reconstruct(cod_hat, ranks=ranks)
        tds.append(trace_distance_from_coefficients(recon.coefficients(), exact, basis2, 5))
    assert max(tds) <= 1e-3
    assert min(tds) > 0


def test_nonhomog_failure_names_site(basis2):
    chain = random_chain(4, 2, 2, 6)
    state = chain_state(chain)
    cod = build_chain_omega(state, basis2, 2, 2)
    cod.omegas[2] = np.zeros_like(cod.omegas[2])
    with pytest.raises(ValueError, match="site 2"):
        nonhomog_reconstruct(cod, ranks=[4, 4, 4])
