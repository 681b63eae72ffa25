import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bswave.checks import check_solution
from bswave.conic import sinr_gram
from bswave.harvest import build_m_diagonals
from bswave.link import mmse_combiners
from bswave.rank_one import (
    Extraction,
    ExtractionError,
    extract_rank_one,
    principal_component,
    randomize,
    rank_reduction,
)

from .conftest import model_b_config, random_channel, random_waveform


def _psd(rng, n, rank):
    V = rng.standard_normal((n, rank)) + 1j * rng.standard_normal((n, rank))
    return V @ V.conj().T


def test_principal_component(rng):
    w = random_waveform(rng, 5)
    v, share = principal_component(np.outer(w, np.conj(w)))
    assert share == pytest.approx(1.0)
    assert abs(np.vdot(v, w)) == pytest.approx(np.vdot(w, w).real)


@given(st.integers(3, 7), st.integers(0, 2**32 - 1))
def test_rank_reduction_keeps_three_traces(n, seed):
    rng = np.random.default_rng(seed)
    X = _psd(rng, n, 3)
    mats = [_psd(rng, n, 2) - _psd(rng, n, 1) for _ in range(2)] + [np.eye(n)]
    Y = rank_reduction(X, mats)
    for F in mats:
        assert np.trace(F @ Y).real == pytest.approx(np.trace(F @ X).real, rel=1e-8, abs=1e-10)
    vals = np.linalg.eigvalsh(Y)
    assert vals[0] > -1e-9 * vals[-1]
    # three real constraints leave room for a rank-one point
    assert vals[-2] <= 1e-8 * vals[-1]


def _sinr_setup(rng, k, n, target):
    ch = random_channel(rng, k, n)
    cfg = model_b_config(k, n).replace(tx_power=1.0, noise_var=0.05, sinr_targets=(target,) * k)
    return ch, cfg


def test_rank_one_input_is_returned_as_is(rng):
    ch, cfg = _sinr_setup(rng, 2, 6, 0.5)
    w = random_waveform(rng, 6, power=1.0)
    g = mmse_combiners(w, ch, cfg.noise_var)
    sig, itf = sinr_gram(ch, g.vectors)
    if not check_solution(w, g, ch, cfg).ok:
        pytest.skip("draw misses the targets")
    mats = [s - r * i for s, r, i in zip(sig, cfg.targets, itf)]
    out, _, method = extract_rank_one(np.outer(w, np.conj(w)), ch, cfg, mats, build_m_diagonals(ch))
    assert method is Extraction.ALREADY_RANK_ONE
    assert np.allclose(np.outer(out, np.conj(out)), np.outer(w, np.conj(w)))


def test_randomization_candidates_are_feasible(rng):
    ch, cfg = _sinr_setup(rng, 3, 6, 0.05)
    X = _psd(rng, 6, 3)
    X *= 2 * cfg.tx_power / np.trace(X).real
    w, g, n_ok = randomize(X, ch, cfg, build_m_diagonals(ch), np.random.default_rng(0), 200)
    assert n_ok > 0
    rep = check_solution(w, g, ch, cfg)
    assert rep.ok and rep.power_ratio == pytest.approx(1.0)


def test_extraction_error_when_nothing_qualifies(rng):
    ch, cfg = _sinr_setup(rng, 3, 4, 1e6)
    X = _psd(rng, 4, 3)
    with pytest.raises(ExtractionError):
        extract_rank_one(X, ch, cfg, [np.eye(4)] * 3, build_m_diagonals(ch), draws=20)
