import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bswave.algorithms import (
    DELTA_CAP,
    achieved_delta,
    algorithm1_feasibility,
    algorithm2_optimize,
    algorithm3_simplified,
    design_metric,
    linearized_objective,
    q_value,
    quartic_weights,
    sca_linearize,
    single_tone_bound,
)
from bswave.checks import check_solution
from bswave.config import EHModel, db_to_linear
from bswave.harvest import build_m_diagonals, z_dc_scalar

from .conftest import model_b_channel, model_b_config


def test_quartic_weights():
    a = quartic_weights(4, 2.0)
    assert np.allclose(a, [-0.75, -1.5, -1.5, -1.5])


@given(st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_linearisation_tangent_and_majorant(n, seed):
    rng = np.random.default_rng(seed)
    t0 = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    t = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    assert sca_linearize(t0, t0, 3.0) == pytest.approx(q_value(t0, 3.0), rel=1e-14, abs=1e-14)
    assert q_value(t, 3.0) <= sca_linearize(t0, t, 3.0) + 1e-12
    assert sca_linearize(np.zeros(n), t, 3.0) == 0.0


def test_linearized_objective_matches_tangent(rng):
    k, n = 2, 5
    ch = model_b_channel(k, n)
    cfg = model_b_config(k, n)
    mset = build_m_diagonals(ch)
    V = rng.standard_normal((n, 2)) + 1j * rng.standard_normal((n, 2))
    Xp = V @ V.conj().T
    X = np.outer(V[:, 0], np.conj(V[:, 0]))
    tp, t = mset.traces(Xp), mset.traces(X)
    A, offset = linearized_objective(tp, mset, cfg)
    b2, b4 = cfg.rectenna.beta2, cfg.rectenna.beta4
    expect = -sum(0.5 * b2 * t[j, 0].real - sca_linearize(tp[j], t[j], b4) for j in range(k))
    assert np.trace(A @ X).real + offset == pytest.approx(expect, rel=1e-10)
    # at the expansion point the surrogate equals the true metric
    assert np.trace(A @ Xp).real + offset == pytest.approx(-design_metric(tp, cfg), rel=1e-10)


def test_linear_model_objective_has_no_offset():
    ch = model_b_channel(1, 4)
    cfg = model_b_config(1, 4, eh_model=EHModel.LINEAR_2ND)
    mset = build_m_diagonals(ch)
    A, offset = linearized_objective(mset.traces(np.eye(4)), mset, cfg)
    assert offset == 0.0
    assert np.allclose(A, -0.5 * cfg.rectenna.beta2 * np.diag(np.abs(ch.forward[0]) ** 2))


def test_zero_targets_trivially_feasible():
    ch = model_b_channel(2, 4)
    cfg = model_b_config(2, 4, sinr_targets=(0.0, 0.0))
    res = algorithm1_feasibility(cfg, ch)
    assert res.delta_star == DELTA_CAP and res.feasible


@pytest.mark.parametrize("index", range(3))
def test_single_tag_feasibility_boundary(index):
    ch = model_b_channel(1, 8, index)
    cfg = model_b_config(1, 8)
    bound = single_tone_bound(cfg, ch)[0]
    assert algorithm1_feasibility(cfg.replace(sinr_targets=(0.99 * bound,)), ch).feasible
    assert not algorithm1_feasibility(cfg.replace(sinr_targets=(1.01 * bound,)), ch).feasible


def test_delta_trace_monotone_and_result_consistent():
    ch = model_b_channel(3, 8, 1)
    cfg = model_b_config(3, 8, sinr_targets=(db_to_linear(12.0),) * 3)
    res = algorithm1_feasibility(cfg, ch)
    assert np.all(np.diff(res.delta_trace) >= -1e-9)
    assert res.delta_star == res.delta_trace[-1]
    assert achieved_delta(res.waveform, res.combiners, ch, cfg) >= res.delta_star * (1 - 1e-6)
    assert 0.5 * np.vdot(res.waveform, res.waveform).real <= cfg.tx_power * (1 + 1e-7)


@pytest.fixture(scope="module")
def two_tag_run():
    ch = model_b_channel(2, 8, 2)
    cfg = model_b_config(2, 8, sinr_targets=(db_to_linear(3.0),) * 2)
    warm = algorithm1_feasibility(cfg, ch)
    assert warm.feasible
    return ch, cfg, warm


@pytest.mark.parametrize("optimizer", [algorithm2_optimize, algorithm3_simplified])
def test_sca_monotone_and_feasible(two_tag_run, optimizer):
    ch, cfg, warm = two_tag_run
    sol = optimizer(cfg, ch, warm)
    gam = np.asarray(sol.gamma_trace)
    assert np.all(np.diff(gam) <= 1e-9 * np.abs(gam[:-1]))
    warm_val = design_metric(build_m_diagonals(ch).traces(np.outer(warm.waveform, np.conj(warm.waveform))), cfg)
    assert gam[-1] <= -warm_val + 1e-7 * warm_val
    assert check_solution(sol.waveform, sol.combiners, ch, cfg, tol=1e-6).ok
    assert sol.z_dc == pytest.approx(z_dc_scalar(sol.waveform, ch, cfg).total)
    assert sol.rounded_zdc <= sol.relaxed_zdc * (1 + 1e-6)


def test_alg3_keeps_combiners_fixed(two_tag_run, monkeypatch):
    import bswave.algorithms as alg

    ch, cfg, warm = two_tag_run
    calls = []
    real = alg.eigen_combiners
    monkeypatch.setattr(alg, "eigen_combiners", lambda *a, **k: calls.append(1) or real(*a, **k))
    sol = algorithm3_simplified(cfg, ch, warm)
    assert len(calls) == 1
    calls.clear()
    sol = algorithm2_optimize(cfg, ch, warm)
    assert len(calls) == sol.iterations


def test_backscatter_only_design_runs(two_tag_run):
    ch, cfg, warm = two_tag_run
    fwd = algorithm2_optimize(cfg, ch, warm)
    bsc = algorithm2_optimize(cfg, ch, warm, design_gains=ch.backscatter)
    assert check_solution(bsc.waveform, bsc.combiners, ch, cfg).ok
    # the harvest is always scored on the forward channel
    assert bsc.z_dc == pytest.approx(z_dc_scalar(bsc.waveform, ch, cfg).total)
    assert fwd.z_dc >= bsc.z_dc * (1 - 1e-6)


def test_infeasible_warm_start_rejected():
    ch = model_b_channel(1, 4)
    cfg = model_b_config(1, 4)
    bound = single_tone_bound(cfg, ch)[0]
    cfg = cfg.replace(sinr_targets=(2 * bound,))
    warm = algorithm1_feasibility(cfg, ch)
    with pytest.raises(ValueError, match="infeasible"):
        algorithm2_optimize(cfg, ch, warm)


def test_single_tag_rounding_is_tight():
    ch = model_b_channel(1, 8, 4)
    cfg = model_b_config(1, 8, sinr_targets=(db_to_linear(10.0),))
    sol = algorithm2_optimize(cfg, ch, algorithm1_feasibility(cfg, ch))
    assert sol.rounded_zdc >= 0.98 * sol.relaxed_zdc
