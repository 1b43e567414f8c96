import csv
import json

import numpy as np
import pytest

from fcs_spectral import cli
from fcs_spectral.fcs import marginal
from fcs_spectral.spectral import SpectralRealization


def write_config(tmp_path, name, cfg):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


def run_cli(tmp_path, command, cfg, out="out"):
    cfg_path = write_config(tmp_path, f"{command}.json", cfg)
    out_dir = tmp_path / out
    rc = cli.main([command, "--config", str(cfg_path), "--out", str(out_dir),
                   "--log-level", "warning"])
    assert rc == 0, f"{command} failed"
    return out_dir


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


AKLT_CFG = {
    "model": {"kind": "aklt"},
    "truncation": {"mode": "rank", "value": 4},
    "epsilons": [0.0, 1e-3],
    "sites": [2, 3],
    "trials": 2,
    "seed": 7,
    "output": "aklt.csv",
}


def test_cmd_aklt_zero_noise_row(tmp_path):
    out = run_cli(tmp_path, "aklt", AKLT_CFG)
    rows = read_rows(out / "aklt.csv")
    assert len(rows) == 8
    zero_rows = [r for r in rows if float(r["epsilon"]) == 0.0]
    assert zero_rows and all(float(r["trace_distance"]) <= 1e-9 for r in zero_rows)
    for r in rows:
        t = int(r["sites"])
        assert float(r["td_per_site"]) == pytest.approx(float(r["trace_distance"]) / t)
        assert int(r["rank_used"]) == 4


def test_cmd_aklt_header_golden(tmp_path):
    out = run_cli(tmp_path, "aklt", AKLT_CFG)
    header = (out / "aklt.csv").read_text().splitlines()[0]
    assert header == ("model,sites,epsilon,seed,trial,trace_distance,hs_distance,"
                      "sigma_m,rank_used,bound_surrogate,wall_time_ms,td_per_site")


def test_cmd_aklt_rerun_byte_identical(tmp_path):
    out1 = run_cli(tmp_path, "aklt", AKLT_CFG, out="run1")
    out2 = run_cli(tmp_path, "aklt", AKLT_CFG, out="run2")
    assert (out1 / "aklt.csv").read_bytes() == (out2 / "aklt.csv").read_bytes()


def test_cmd_aklt_row_order_and_format(tmp_path):
    out = run_cli(tmp_path, "aklt", AKLT_CFG)
    rows = read_rows(out / "aklt.csv")
    keys = [(float(r["epsilon"]), int(r["sites"]), int(r["trial"])) for r in rows]
    assert keys == sorted(keys)
    # golden zero-noise row fields: %.12e floats, exact sigma_4 = 2/9,
    # integer columns plain
    raw = (out / "aklt.csv").read_text().splitlines()[1].split(",")
    assert raw[0] == "aklt(theta=0.61548)"
    assert raw[1] == "2" and raw[3] == "7" and raw[4] == "0" and raw[8] == "4"
    assert raw[2] == "0.000000000000e+00"
    assert raw[7] == "2.222222222222e-01"
    assert raw[10] == "0.000000000000e+00"
    assert "e" in raw[5] and len(raw[5].split("e")[0].split(".")[1]) == 12


def test_cmd_aklt_unknown_key_rejected(tmp_path):
    cfg = dict(AKLT_CFG, bogus=1)
    cfg_path = write_config(tmp_path, "bad.json", cfg)
    rc = cli.main(["aklt", "--config", str(cfg_path), "--out", str(tmp_path),
                   "--log-level", "error"])
    assert rc == 2


def test_cmd_aklt_missing_key_rejected(tmp_path):
    cfg = {k: v for k, v in AKLT_CFG.items() if k != "trials"}
    cfg_path = write_config(tmp_path, "bad.json", cfg)
    rc = cli.main(["aklt", "--config", str(cfg_path), "--out", str(tmp_path),
                   "--log-level", "error"])
    assert rc == 2


def test_cmd_aklt_worker_pool_matches_sequential(tmp_path):
    seq = run_cli(tmp_path, "aklt", AKLT_CFG, out="seq")
    par = run_cli(tmp_path, "aklt", dict(AKLT_CFG, workers=2), out="par")
    assert (seq / "aklt.csv").read_bytes() == (par / "aklt.csv").read_bytes()


def test_cmd_aklt_shot_noise_mode(tmp_path):
    cfg = {
        "model": {"kind": "aklt"},
        "truncation": {"mode": "rank", "value": 4},
        "noise": {"mode": "shot_gaussian"},
        "shots_sweep": [1000000],
        "sites": [2],
        "trials": 2,
        "seed": 3,
        "output": "shots.csv",
    }
    out = run_cli(tmp_path, "aklt", cfg)
    rows = read_rows(out / "shots.csv")
    assert len(rows) == 2
    assert all(float(r["trace_distance"]) < 0.02 for r in rows)
    assert all(float(r["epsilon"]) == 1000000.0 for r in rows)


def test_cmd_rank_scan_aklt(tmp_path):
    cfg = {"model": {"kind": "aklt"}, "max_block": 2, "output": "ranks.csv"}
    out = run_cli(tmp_path, "rank-scan", cfg)
    rows = read_rows(out / "ranks.csv")
    assert {(int(r["left_block"]), int(r["right_block"])): int(r["rank"]) for r in rows} == {
        (1, 1): 4, (1, 2): 4, (2, 1): 4, (2, 2): 4,
    }


def test_cmd_aklt_threshold_truncation(tmp_path):
    # eta between sigma_5 (noise scale) and sigma_4 = 2/9 selects rank 4
    cfg = dict(AKLT_CFG, truncation={"mode": "threshold", "value": 0.11},
               epsilons=[0.0, 1e-3], output="thr.csv")
    out = run_cli(tmp_path, "aklt", cfg)
    rows = read_rows(out / "thr.csv")
    assert all(int(r["rank_used"]) == 4 for r in rows)
    zero = [r for r in rows if float(r["epsilon"]) == 0.0]
    assert all(float(r["trace_distance"]) <= 1e-9 for r in zero)


NONHOMOG_CFG = {
    "chain": {"n_sites": 4, "d_a": 2, "d_b": 2, "seed": 3},
    "left_width": 2,
    "right_width": 2,
    "epsilons": [0.0, 1e-4],
    "trials": 2,
    "seed": 11,
    "output": "chain.csv",
}


def test_cmd_nonhomog_exact_and_noisy(tmp_path):
    out = run_cli(tmp_path, "nonhomog", NONHOMOG_CFG)
    rows = read_rows(out / "chain.csv")
    assert len(rows) == 4
    exact = [r for r in rows if float(r["epsilon"]) == 0.0]
    noisy = [r for r in rows if float(r["epsilon"]) > 0.0]
    assert all(float(r["trace_distance"]) <= 1e-8 for r in exact)
    assert all(1e-8 < float(r["trace_distance"]) < 1e-2 for r in noisy)
    assert all(int(r["sites"]) == 4 for r in rows)


def test_cmd_lemma_check_report(tmp_path):
    cfg = {"seed": 1, "count": 20, "max_dim": 10, "models_seeds": 2,
           "output": "report.json"}
    out = run_cli(tmp_path, "lemma-check", cfg)
    doc = json.loads((out / "report.json").read_text())
    assert doc["version"] == 1
    assert set(doc["suites"]) == {
        "singular_value_perturbation", "pseudoinverse_perturbation",
        "singular_subspace_stability", "projected_sigma_stability",
        "realization_estimate_bounds",
    }
    for suite in doc["suites"].values():
        assert suite["violations"] == 0
        assert suite["worst"]["margin"] >= -1e-9


def test_cmd_robustness_xi_zero_matches_aklt(tmp_path):
    base = dict(AKLT_CFG, epsilons=[1e-3], trials=2, output="a.csv")
    rob = dict(base, xis=[0.0, 0.1, 0.2], output="r.csv")
    out_a = run_cli(tmp_path, "aklt", base, out="a")
    out_r = run_cli(tmp_path, "robustness", rob, out="r")
    rows_a = read_rows(out_a / "a.csv")
    rows_r = read_rows(out_r / "r.csv")
    zero = [r for r in rows_r if "mix(xi=0)" in r["model"]]
    assert len(zero) == len(rows_a)
    for ra, rr in zip(rows_a, zero):
        assert rr["trace_distance"] == ra["trace_distance"]

    def mean_td(xi, t):
        vals = [float(r["trace_distance"]) for r in rows_r
                if f"mix(xi={xi:g})" in r["model"] and int(r["sites"]) == t]
        assert vals
        return float(np.mean(vals))

    eps = 1e-3
    for t in (2, 3):
        # degradation is O(xi + eps): bounded by a per-site constant and
        # roughly linear between the two mixing levels
        assert mean_td(0.0, t) < mean_td(0.1, t) < mean_td(0.2, t)
        assert mean_td(0.2, t) <= 0.6 * t * (0.2 + eps)
        ratio = mean_td(0.2, t) / mean_td(0.1, t)
        assert 1.6 <= ratio <= 2.4


def test_cmd_robustness_requires_xis(tmp_path):
    cfg_path = write_config(tmp_path, "r.json", dict(AKLT_CFG))
    rc = cli.main(["robustness", "--config", str(cfg_path), "--out", str(tmp_path),
                   "--log-level", "error"])
    assert rc == 2


def test_cmd_reconstruct_roundtrip(tmp_path, aklt_realization, basis3):
    marginals = {k: marginal(aklt_realization, k, basis3) for k in (1, 2, 3)}
    cli.save_marginals(tmp_path / "marginals.json", 3, marginals)
    cfg = {
        "input": str(tmp_path / "marginals.json"),
        "block_size": 1,
        "truncation": {"mode": "rank", "value": 4},
        "sites": [2],
        "output": "realization.json",
        "marginals_output": "rec_marginals.json",
    }
    out = run_cli(tmp_path, "reconstruct", cfg)
    doc = json.loads((out / "realization.json").read_text())
    assert doc["version"] == 1 and doc["m"] == 4 and doc["d_a"] == 3
    sr = SpectralRealization(
        d_a=doc["d_a"],
        e_hat=np.array(doc["e"]),
        rho_hat=np.array(doc["rho"]),
        k_hat=np.array(doc["kappa"]),
    )
    c = np.zeros(9)
    c[0] = np.sqrt(3.0)
    assert sr.evaluate_word([c, c]) == pytest.approx(1.0, abs=1e-8)
    d, recs = cli.load_marginals(out / "rec_marginals.json")
    assert d == 3
    assert np.abs(recs[2].matrix - marginals[2].matrix).max() <= 1e-8


def test_cmd_reconstruct_from_shot_tomography(tmp_path, aklt_realization, basis3):
    # full estimation path through the file interface: simulate measurement
    # statistics, write the marginals document, reconstruct via the CLI
    from fcs_spectral.fcs import DensityMatrix
    from fcs_spectral.noise import make_rng, simulate_tomography
    from fcs_spectral.opbasis import assemble_from_coefficients

    rng = make_rng(12)
    marginals = {}
    for k in (1, 2, 3):
        exact = marginal(aklt_realization, k, basis3)
        est = simulate_tomography(exact, basis3, shots=10 ** 6, rng=rng,
                                  mode="shot_gaussian")
        marginals[k] = DensityMatrix(
            matrix=assemble_from_coefficients(est, basis3, k), dim=3, sites=k)
    cli.save_marginals(tmp_path / "estimated.json", 3, marginals)
    cfg = {
        "input": str(tmp_path / "estimated.json"),
        "block_size": 1,
        "truncation": {"mode": "rank", "value": 4},
        "sites": [3],
        "marginals_output": "rec.json",
    }
    out = run_cli(tmp_path, "reconstruct", cfg)
    assert (out / "realization.json").exists()
    _, recs = cli.load_marginals(out / "rec.json")
    exact3 = marginal(aklt_realization, 3, basis3)
    from fcs_spectral.analysis import trace_distance

    assert trace_distance(recs[3].matrix, exact3.matrix, herm_tol=1e-6) < 0.05


def test_cmd_reconstruct_missing_marginal(tmp_path, aklt_realization, basis3):
    marginals = {k: marginal(aklt_realization, k, basis3) for k in (1, 2)}
    cli.save_marginals(tmp_path / "marginals.json", 3, marginals)
    cfg_path = write_config(tmp_path, "cfg.json", {
        "input": str(tmp_path / "marginals.json"),
        "block_size": 1,
        "truncation": {"mode": "rank", "value": 4},
    })
    rc = cli.main(["reconstruct", "--config", str(cfg_path), "--out", str(tmp_path),
                   "--log-level", "error"])
    assert rc == 2


def test_svg_quick_look_output(tmp_path):
    out1 = run_cli(tmp_path, "aklt", dict(AKLT_CFG, svg="sweep.svg"), out="s1")
    out2 = run_cli(tmp_path, "aklt", dict(AKLT_CFG, svg="sweep.svg"), out="s2")
    svg = (out1 / "sweep.svg").read_text()
    assert svg.startswith("<svg") and "circle" in svg and "trace distance" in svg
    assert (out1 / "sweep.svg").read_bytes() == (out2 / "sweep.svg").read_bytes()


def test_chain_window_form_accessor(basis2):
    from fcs_spectral.fcs import chain_state, chain_window_form, random_chain

    chain = random_chain(4, 2, 2, 2)
    state = chain_state(chain)
    # interior window: rows = 2-site left basis, cols = 1-site right basis
    f = chain_window_form(state, basis2, 1, 2, 3)
    assert f.shape == (16, 4)
    # indices clip at the boundary
    g = chain_window_form(state, basis2, -1, 1, 2)
    assert g.shape == (4, 4)
    # empty left block gives a single row
    h = chain_window_form(state, basis2, 1, 0, 2)
    assert h.shape == (1, 16)


def test_timing_column_zero_by_default(tmp_path):
    out = run_cli(tmp_path, "aklt", AKLT_CFG)
    rows = read_rows(out / "aklt.csv")
    assert all(float(r["wall_time_ms"]) == 0.0 for r in rows)


def test_timing_flag_records_positive(tmp_path):
    out = run_cli(tmp_path, "aklt", dict(AKLT_CFG, timing=True))
    rows = read_rows(out / "aklt.csv")
    assert any(float(r["wall_time_ms"]) > 0.0 for r in rows)
