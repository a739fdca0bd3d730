import numpy as np
import pytest

from risshield.scenario import build_scenario, initial_partition, partition_channels
from risshield.metrics import constraint_report, interference_power
from risshield.algorithms import (AlgorithmSettings, RunTrace, TraceRow, droppable_indices,
                                  find_initial_point, judicious_state, optimize_psi,
                                  optimize_u_and_partition, run_main)

from conftest import desk_config, fast_settings


def test_settings_validation():
    with pytest.raises(ValueError):
        AlgorithmSettings(eps_converge=-1.0)
    with pytest.raises(ValueError):
        AlgorithmSettings(max_iter_outer=0)


def test_droppable_indices_thresholding():
    u = np.array([0.9, 1e-7, 0.436])
    assert np.array_equal(droppable_indices(u, 1e-3), [1])
    assert droppable_indices(np.array([0.5, 0.6, 0.7]), 1e-3).size == 0
    # never empties the absorptive set
    tiny = droppable_indices(np.array([1e-9, 2e-9]), 1e-3)
    assert 1 not in tiny and tiny.size <= 1


def test_judicious_state_is_comm_feasible(desk_scene):
    cfg, channels, partition, _ = desk_scene
    pch = partition_channels(channels, partition)
    state = judicious_state(pch, cfg)
    report = constraint_report(state, pch, cfg)
    assert report["power"] <= cfg.p_max * (1 + 1e-9)
    assert report["u_norm_err"] <= 1e-9
    assert report["comm_margin"] >= 0.0
    assert report["phi_modulus_err"] <= 1e-12


def test_find_initial_point_feasible(desk_scene):
    cfg, channels, _, _ = desk_scene
    state, partition, status = find_initial_point(channels, cfg, AlgorithmSettings())
    assert status == "feasible"
    assert partition.n_r == int(np.ceil(0.625 * cfg.n))
    pch = partition_channels(channels, partition)
    report = constraint_report(state, pch, cfg)
    assert report["sensing_margin"] >= -1e-9
    assert report["comm_margin"] >= -1e-9
    assert report["power_margin"] >= -1e-9
    assert report["u_norm_err"] <= 1e-9


def test_find_initial_point_trivial_thresholds(desk_cfg):
    cfg = desk_config(gamma_s_db=-120.0, gamma_c_db=-120.0)
    channels, _, _ = build_scenario(cfg)
    state, _, status = find_initial_point(channels, cfg, AlgorithmSettings())
    assert status == "feasible"


def test_optimize_psi_ascent_and_stopping(desk_scene):
    cfg, channels, _, _ = desk_scene
    settings = fast_settings(max_iter_inner=10)
    state, partition, status = find_initial_point(channels, cfg, settings)
    assert status == "feasible"
    pch = partition_channels(channels, partition)
    trace = RunTrace()
    new_state, psi_status = optimize_psi(state, pch, cfg, settings, trace=trace)
    series = trace.interference_series("psi")
    assert series.size >= 1
    assert np.all(np.diff(series) >= -1e-6 * np.maximum(series[:-1], 1e-30))
    assert interference_power(new_state, pch) >= interference_power(state, pch) * (1 - 1e-6)
    assert "projection-rejected" not in psi_status


def test_optimize_u_reassigns_and_preserves_sensing(desk_scene):
    cfg, channels, partition, _ = desk_scene
    settings = fast_settings()
    state, partition, status = find_initial_point(channels, cfg, settings)
    assert status == "feasible"
    pch = partition_channels(channels, partition)
    state, _ = optimize_psi(state, pch, cfg, settings)
    n_r_before = partition.n_r
    state2, part2, pch2, u_status = optimize_u_and_partition(
        state, channels, partition, cfg, settings, allow_reassign=True)
    assert part2.n_r >= n_r_before
    assert part2.n_r + part2.n_a == cfg.n
    assert np.intersect1d(part2.reflecting, part2.absorptive).size == 0
    assert state2.u.size == part2.n_a
    assert abs(np.linalg.norm(state2.u) - 1.0) <= 1e-9
    report = constraint_report(state2, pch2, cfg)
    assert report["sensing_margin"] >= -1e-6
    if part2.n_r > n_r_before:
        # new reflecting elements enter at unit modulus when a feasible phase
        # exists, at zero magnitude otherwise; never anything in between
        fresh = np.isin(part2.reflecting, partition.absorptive)
        mags = np.abs(state2.phi[fresh])
        assert np.all((np.abs(mags - 1.0) < 1e-12) | (mags == 0.0))
        assert report["comm_margin"] >= -settings.projection_rel_tol


def test_optimize_u_respects_fixed_partition(desk_scene):
    cfg, channels, partition, _ = desk_scene
    settings = fast_settings()
    state, partition, _ = find_initial_point(channels, cfg, settings)
    _, part2, _, _ = optimize_u_and_partition(
        state, channels, partition, cfg, settings, allow_reassign=False)
    assert np.array_equal(part2.reflecting, partition.reflecting)


def test_run_main_adaptive_desk():
    out = run_main(desk_config(seed=7, m=2), fast_settings())
    assert out.feasible
    assert out.trace.notes["init_status"] == "feasible"
    n_r_series = [row.n_r for row in out.trace.rows]
    assert all(b >= a for a, b in zip(n_r_series, n_r_series[1:]))
    rep = out.trace.notes["final_report"]
    assert rep["phi_modulus_err"] <= 1e-3
    assert rep["u_norm_err"] <= 1e-6
    assert rep["power"] <= 10.0 * (1 + 1e-6)


def test_run_main_modes_share_initialization():
    outs = {mode: run_main(desk_config(seed=8, m=4), fast_settings(), mode=mode)
            for mode in ("adaptive", "fixed", "sense-max")}
    init_rows = {m: o.trace.rows[0] for m, o in outs.items()}
    values = {m: r.interference for m, r in init_rows.items()}
    assert len(set(values.values())) == 1  # identical channels and initialization
    assert outs["sense-max"].partition.n_r == outs["fixed"].partition.n_r


def test_run_main_rejects_unknown_mode(desk_cfg):
    with pytest.raises(ValueError):
        run_main(desk_cfg, AlgorithmSettings(), mode="bogus")


def test_run_main_deterministic_trace(tmp_path):
    cfg = desk_config(seed=9, m=2)
    settings = fast_settings()
    a = run_main(cfg, settings)
    b = run_main(cfg, settings)
    pa, pb = tmp_path / "a.csv", tmp_path / "b.csv"
    a.trace.to_csv(str(pa))
    b.trace.to_csv(str(pb))
    assert pa.read_bytes() == pb.read_bytes()


def test_trace_csv_columns(tmp_path):
    trace = RunTrace()
    trace.add(TraceRow(phase="psi", outer=1, inner=2, interference=1.5e-9,
                       max_det_sinr_db=3.25, n_r=10, residual=0.0, status="optimal"))
    path = tmp_path / "t.csv"
    trace.to_csv(str(path))
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(RunTrace.COLUMNS)
    assert lines[1].startswith("psi,1,2,1.5e-09,3.25,10,0,optimal")
