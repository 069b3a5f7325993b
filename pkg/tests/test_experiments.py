from __future__ import annotations

import json

import numpy as np
import pytest

from ecdlab.config import ExperimentConfig
from ecdlab.experiments import (ResultSet, Row, fit_slope, needed_tau, run,
                                single_period_infidelity, worst_case_infidelity)
from ecdlab.linalg import SIGMA_X, SIGMA_Y, SIGMA_Z, expm_skew
from ecdlab.models import ModelParams, lzm
from ecdlab.output import csv_text, read_csv, write_results


def small_sweep(experiment="standalone_sweep", **kw):
    values = dict(tau_grid=(2.0, 4.0, 6.0), adiabatic_tau_grid=(40.0, 60.0, 80.0), k=(1.0, 0.5))
    values.update(kw)
    return ExperimentConfig.for_experiment(experiment, **values)


@pytest.fixture(scope="module")
def sweeps():
    return {name: run(small_sweep(name)) for name in ("standalone_sweep", "ontop_sweep")}


def test_sweep_output_independent_of_threads_and_reruns(sweeps):
    cfg = small_sweep()
    a = csv_text(sweeps["standalone_sweep"])
    assert csv_text(run(cfg, threads=4)) == a
    assert csv_text(run(cfg, threads=1)) == a


def test_standalone_and_ontop_share_period_counts(sweeps):
    st, on = sweeps["standalone_sweep"], sweeps["ontop_sweep"]
    key = lambda rs: {(r.sweep_var, r.value): r.n_periods for r in rs.rows if r.sweep_var != "adiabatic"}
    assert key(st) == key(on) and len(key(st)) > 0
    # both conventions are reported
    assert {r.sweep_var.rsplit(":", 1)[1] for r in st.rows if r.sweep_var.startswith("ecd")} == {"literal", "sqrt"}


def test_sweep_rows_respect_budget(sweeps):
    for r in sweeps["standalone_sweep"].rows:
        if r.sweep_var.startswith("ecd"):
            k = float(r.sweep_var.split(":")[1][2:])
            assert r.strength_corr <= k * r.strength_base * (1 + 1e-9)
            assert r.n_periods >= 1


def test_robustness_zero_offset_is_exact():
    cfg = ExperimentConfig.for_experiment("robustness", delta_grid=(-1e-3, 0.0, 1e-3),
                                          n_periods=10, steps_per_period=64)
    rs = run(cfg)
    assert rs.summary["zero_offset_relative_error"] == 0.0
    assert {r.sweep_var for r in rs.rows} == {"amplitude", "phase"}
    assert rs.summary["phase_max_asymmetry"] < 1e-10


def test_needed_tau_interpolates_log_linearly():
    taus = np.array([1.0, 2.0, 3.0, 4.0])
    infs = np.exp(-2.0 * taus)
    thr = np.exp(-5.0)
    assert needed_tau(taus, infs, thr) == pytest.approx(2.5, abs=1e-12)
    # a late excursion above threshold moves the answer past it
    bumpy = infs.copy()
    bumpy[2] = 1.0
    assert 3.0 < needed_tau(taus, bumpy, thr) < 4.0
    assert np.isnan(needed_tau(taus, np.ones(4), thr))
    assert needed_tau(taus, np.zeros(4), thr) == 1.0


def test_fit_slope_recovers_power_law():
    x = np.logspace(-3, -1, 9)
    fit = fit_slope(x, 7 * x ** 3)
    assert fit["slope"] == pytest.approx(3.0) and fit["r2"] == pytest.approx(1.0)
    assert not fit["flagged"]
    noisy = fit_slope(x, np.random.default_rng(0).uniform(1, 10, 9))
    assert noisy["flagged"]
    assert fit_slope([1.0], [1.0])["flagged"]
    assert np.isnan(fit_slope([1e-3, 1e-3], [1.0, 2.0])["slope"])


def test_worst_case_infidelity_matches_state_search():
    rng = np.random.default_rng(2)
    for _ in range(5):
        n = rng.normal(size=3)
        E = expm_skew((n[0] * SIGMA_X + n[1] * SIGMA_Y + n[2] * SIGMA_Z) / np.linalg.norm(n), 0.3)
        E = np.exp(0.7j) * E
        psi = rng.normal(size=(4000, 2)) + 1j * rng.normal(size=(4000, 2))
        psi /= np.linalg.norm(psi, axis=1, keepdims=True)
        vals = 1 - np.abs(np.einsum("ki,ij,kj->k", psi.conj(), E, psi)) ** 2
        assert worst_case_infidelity(E) == pytest.approx(np.sin(0.3) ** 2, rel=1e-12)
        assert np.max(vals) <= worst_case_infidelity(E) + 1e-12
        assert np.max(vals) > 0.95 * worst_case_infidelity(E)
    with pytest.raises(ValueError):
        worst_case_infidelity(np.eye(3))


def test_single_period_error_orders():
    cfg = ExperimentConfig.for_experiment("scaling_order")
    base = lzm(ModelParams(cfg.epsilon, cfg.tau))
    T = np.array([0.02, 0.01])
    first = [single_period_infidelity(cfg, base, t, False)["worst"] for t in T]
    third = [single_period_infidelity(cfg, base, t, True)["worst"] for t in T]
    assert np.log2(first[0] / first[1]) == pytest.approx(3.0, abs=0.2)
    assert np.log2(third[0] / third[1]) == pytest.approx(4.0, abs=0.2)


def test_result_set_sorting_and_certification():
    rows = [Row("b", 2.0, 0.1), Row("a", 3.0, 0.2, certified=False), Row("a", 1.0, 0.3)]
    rs = ResultSet("x", ExperimentConfig.for_experiment("lzm_dynamics"), rows)
    assert [(r.sweep_var, r.value) for r in rs.rows] == [("a", 1.0), ("a", 3.0), ("b", 2.0)]
    assert rs.non_certified == [("a", 3.0)]
    assert list(rs.column("infidelity", "a")) == [0.3, 0.2]


def test_written_files_round_trip(sweeps, tmp_path):
    rs = sweeps["ontop_sweep"]
    out = write_results(rs, tmp_path / "run")
    back = read_csv(out / "results.csv")
    assert len(back) == len(rs.rows)
    for a, b in zip(back, rs.rows):
        assert (a.sweep_var, a.value, a.infidelity, a.n_periods) == (b.sweep_var, b.value, b.infidelity, b.n_periods)
    meta = json.loads((out / "results.json").read_text())
    assert meta["config_hash"] == rs.config.digest()
    assert meta["summary"]["mode"] == "ontop"
    assert {"ecdlab", "numpy", "scipy", "python"} <= set(meta["versions"])
    assert (out / "config.ini").is_file()
    assert all((out / "series" / f"{name}.dat").is_file() for name in meta["series"])
