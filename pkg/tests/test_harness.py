import csv
import json
import math

import numpy as np
import pytest

from bswave.algorithms import single_tone_bound
from bswave.checks import check_solution
from bswave.config import EHModel, linear_to_db
from bswave.harness import (
    Algorithm,
    SweepSpec,
    TradeoffPoint,
    Variant,
    _sweep_one,
    compare_models,
    default_grid,
    make_config,
    noise_for_snr,
    replay,
    run_command,
    save_channels,
    sweep_channels,
    tdma_comparison,
    trace_region,
    zdc_vs_kn,
)
from bswave.link import mmse_combiners

from .conftest import model_b_channel


def test_noise_for_snr_normalises_path_gains(budget):
    sigma2 = noise_for_snr(20.0, budget)
    assert budget.tx_power * budget.forward_gain * budget.backward_gain / sigma2 == pytest.approx(100.0)


def test_sweep_spec_validation():
    cfg = make_config(1, 4)
    with pytest.raises(ValueError, match="ascending"):
        SweepSpec(cfg, targets_db=(5.0, 0.0))
    with pytest.raises(ValueError):
        SweepSpec(cfg, realizations=0)
    spec = SweepSpec(cfg, targets_db=(0, 5), algorithm="Alg3")
    assert spec.algorithm is Algorithm.ALG3
    assert SweepSpec.from_params(spec.to_params()) == spec


def test_infeasible_point_has_no_zdc():
    with pytest.raises(ValueError):
        TradeoffPoint(0, 0.0, 1.0, False, 1e-6, None, None, 0, "x")


def test_default_grid_reaches_bound():
    cfg = make_config(1, 4)
    ch = model_b_channel(1, 4)
    grid = default_grid(cfg, ch)
    top = linear_to_db(single_tone_bound(cfg, ch)[0])
    assert grid[0] == -10.0 and np.allclose(np.diff(grid), 2.0)
    assert grid[-1] <= top < grid[-1] + 2.0


@pytest.fixture(scope="module")
def k1_sweep():
    cfg = make_config(1, 4)
    ch = model_b_channel(1, 4, 1)
    points, waves = _sweep_one(cfg, ch, 0, (-4.0, 4.0, 12.0, 20.0), Algorithm.ALG2, "Forward")
    return cfg, ch, points, waves


def test_region_anchors_and_monotone(k1_sweep):
    cfg, ch, points, _ = k1_sweep
    methods = [p.method for p in points]
    assert "SingleTone" in methods
    assert any(p.target_db == -math.inf for p in points)
    feas = sorted((p for p in points if p.feasible), key=lambda p: p.target)
    z = [p.z_dc for p in feas]
    assert all(b <= a * (1 + 1e-6) for a, b in zip(z, z[1:]))


def test_region_points_pass_checker(k1_sweep):
    cfg, ch, points, waves = k1_sweep
    for p, w in zip(points, waves):
        if p.feasible and w is not None:
            c = cfg.replace(sinr_targets=(p.target,))
            assert check_solution(w, mmse_combiners(w, ch, cfg.noise_var), ch, c, tol=1e-6).ok


def test_grid_above_bound_all_infeasible():
    cfg = make_config(1, 4)
    ch = model_b_channel(1, 4)
    top = float(linear_to_db(single_tone_bound(cfg, ch)[0]))
    pts = trace_region(SweepSpec(cfg, targets_db=(top + 0.5, top + 3.0), anchors=False))
    assert pts and not any(p.feasible for p in pts)
    assert all(p.z_dc is None for p in pts)


def test_channel_file_replay_is_identical(tmp_path):
    cfg = make_config(2, 4)
    save_channels([model_b_channel(2, 4, 3)], tmp_path / "ch.json")
    spec = SweepSpec(cfg, targets_db=(0.0, 6.0), channel_file=str(tmp_path / "ch.json"), anchors=False)
    a, b = trace_region(spec), trace_region(spec)
    strip = lambda pts: [(p.target_db, p.feasible, p.z_dc, p.per_tag, p.sinrs, p.method) for p in pts]
    assert strip(a) == strip(b)


def test_channel_file_shape_checked(tmp_path):
    save_channels([model_b_channel(1, 4)], tmp_path / "ch.json")
    with pytest.raises(ValueError, match="shape"):
        sweep_channels(SweepSpec(make_config(1, 8), channel_file=str(tmp_path / "ch.json")))


def test_single_tone_models_coincide():
    cfg = make_config(1, 1)
    pairs = compare_models(SweepSpec(cfg, targets_db=(-10.0,), realizations=3))
    assert any(p.feasible for p in pairs)
    for p in (p for p in pairs if p.feasible):
        assert p.z_nonlinear == pytest.approx(p.z_linear, rel=1e-9)


def test_nonlinear_design_dominates_at_16_tones():
    cfg = make_config(1, 16)
    (p,) = compare_models(SweepSpec(cfg, targets_db=(10.0,), seed=5))
    assert p.feasible
    assert p.z_nonlinear >= p.z_linear - 1e-6


def test_tdma_extreme_split_silences_tag():
    cfg = make_config(2, 4, 10.0, sinr_targets=(1.0, 1.0))
    res = tdma_comparison(cfg, realizations=1, splits=[(10, 0), (5, 5)])
    assert len(res.used) == 1
    rows = {(r.t1, r.t2): r for r in res.rows if r.scheme == "tdma"}
    assert rows[(10, 0)].avg_tag[1] == 0.0
    full = rows[(10, 0)].avg_tag[0]
    assert rows[(5, 5)].avg_tag[0] == pytest.approx(0.5 * full)


def test_tdma_rejects_bad_splits():
    cfg = make_config(2, 4)
    with pytest.raises(ValueError):
        tdma_comparison(cfg, realizations=1, splits=[(6, 6)])
    with pytest.raises(ValueError):
        tdma_comparison(make_config(1, 4), realizations=1)


def test_tdma_energy_conserving_boosts_short_slots():
    cfg = make_config(2, 4, 10.0, sinr_targets=(1.0, 1.0))
    same = tdma_comparison(cfg, realizations=1, splits=[(2, 8)])
    boost = tdma_comparison(cfg, realizations=1, splits=[(2, 8)], energy_conserving=True)
    a = [r for r in same.rows if r.scheme == "tdma"][0]
    b = [r for r in boost.rows if r.scheme == "tdma"][0]
    assert b.avg_tag[0] > a.avg_tag[0]


def test_zdc_vs_kn_small():
    cells, trouble = zdc_vs_kn([(1, 2), (2, 2)], realizations=2, variants=[Variant(EHModel.NONLINEAR_4TH)])
    assert not trouble
    assert [(c.n_tags, c.n_tones) for c in cells] == [(1, 2), (2, 2)]
    for c in cells:
        assert c.n_total == 2 and 0.0 <= c.failure_rate <= 1.0
        if c.n_feasible:
            assert c.mean_per_tag == pytest.approx(c.mean_z_dc / c.n_tags)
    with pytest.raises(ValueError):
        zdc_vs_kn([(3, 2)], realizations=1)


def test_run_command_writes_csv_manifest_and_replays(tmp_path):
    params = SweepSpec(make_config(2, 4), targets_db=(0.0, 30.0), realizations=1).to_params()
    outcome = run_command("region", params, tmp_path / "a", traces=True)
    assert outcome.any_feasible and not outcome.trouble
    with open(tmp_path / "a" / "region.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == [
        "realization", "target_db", "feasible", "z_dc_total", "z_dc_tag_1", "z_dc_tag_2",
        "sinr_tag_1", "sinr_tag_2", "iters", "method",
    ]
    infeasible = [r for r in rows[1:] if r[2] == "false"]
    assert infeasible and all(r[3] == "" for r in infeasible)
    assert (tmp_path / "a" / "region.seconds.csv").exists()
    traces = json.loads((tmp_path / "a" / "region.traces.json").read_text())
    assert any("gamma_trace" in t for t in traces)
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert set(manifest) >= {"command", "params", "config_hash", "seed", "code_version", "outputs"}
    report = replay(tmp_path / "a" / "manifest.json", tmp_path / "b")
    assert report.identical
    assert (tmp_path / "a" / "region.csv").read_bytes() == (tmp_path / "b" / "region.csv").read_bytes()


def test_replay_detects_tampering(tmp_path):
    params = SweepSpec(make_config(1, 2), targets_db=(0.0,), anchors=False).to_params()
    run_command("region", params, tmp_path / "a")
    m = json.loads((tmp_path / "a" / "manifest.json").read_text())
    m["outputs"]["region.csv"] = "0" * 64
    (tmp_path / "a" / "manifest.json").write_text(json.dumps(m))
    assert replay(tmp_path / "a" / "manifest.json", tmp_path / "b").mismatched == ["region.csv"]
