import numpy as np
import pytest
import scipy.linalg
from hypothesis import given
from hypothesis import strategies as st

from bswave.link import (
    CombinerError,
    CombinerSet,
    eigen_combiner,
    mmse_combiner,
    mmse_combiners,
    sinr,
    sinr_matrix,
)

from .conftest import random_channel, random_waveform


def _generalised_best(X, ch, j, noise):
    hs, hi = ch.signal_diag(j), ch.interference_diag(j)
    num = hs[:, None] * X * np.conj(hs)[None, :]
    den = noise * np.eye(X.shape[0]) + hi[:, None] * X * np.conj(hi)[None, :]
    vals, vecs = scipy.linalg.eigh(num, den)
    return vals[-1], vecs[:, -1]


def test_sinr_invariant_to_combiner_scaling(rng):
    ch = random_channel(rng, 2, 4)
    w = random_waveform(rng, 4)
    g = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    assert sinr(w, 3.7j * g, ch, 0, 0.1) == pytest.approx(sinr(w, g, ch, 0, 0.1))
    with pytest.raises(CombinerError):
        sinr(w, np.zeros(4), ch, 0, 0.1)


@given(st.integers(1, 3), st.integers(3, 8), st.integers(0, 2**32 - 1))
def test_mmse_matches_generalised_eigenvector(k, n, seed):
    rng = np.random.default_rng(seed)
    ch = random_channel(rng, k, n)
    w = random_waveform(rng, n)
    for j in range(k):
        g = mmse_combiner(w, ch, j, 0.05)
        best, _ = _generalised_best(np.outer(w, np.conj(w)), ch, j, 0.05)
        assert sinr(w, g, ch, j, 0.05) == pytest.approx(best, rel=1e-8)
        assert np.linalg.norm(g) == pytest.approx(1.0)
        inner = np.vdot(g, ch.signal_diag(j) * w)
        assert abs(inner.imag) <= 1e-12 * abs(inner) and inner.real > 0


def test_single_tag_is_matched_filter(rng):
    ch = random_channel(rng, 1, 6)
    w = random_waveform(rng, 6)
    a = ch.signal_diag(0) * w
    g = mmse_combiner(w, ch, 0, 0.2)
    assert abs(np.vdot(g, a / np.linalg.norm(a))) == pytest.approx(1.0)
    assert sinr(w, g, ch, 0, 0.2) == pytest.approx(np.vdot(a, a).real / 0.2)


def test_mmse_beats_random_combiners(rng):
    for _ in range(10):
        ch = random_channel(rng, 3, 6)
        w = random_waveform(rng, 6)
        best = sinr(w, mmse_combiner(w, ch, 1, 0.1), ch, 1, 0.1)
        for _ in range(50):
            g = rng.standard_normal(6) + 1j * rng.standard_normal(6)
            assert sinr(w, g, ch, 1, 0.1) <= best * (1 + 1e-12)


def test_mmse_undefined_when_signal_vanishes(rng):
    ch = random_channel(rng, 2, 4)
    with pytest.raises(CombinerError):
        mmse_combiner(np.zeros(4), ch, 0, 0.1)


def test_eigen_combiner_rank_one_agrees_with_mmse(rng):
    ch = random_channel(rng, 3, 8)
    w = random_waveform(rng, 8)
    X = np.outer(w, np.conj(w))
    for j in range(3):
        a = eigen_combiner(X, ch, j, 0.1)
        b = mmse_combiner(w, ch, j, 0.1)
        assert abs(np.vdot(a, b)) >= 1 - 1e-8


def test_eigen_combiner_high_rank_is_optimal(rng):
    ch = random_channel(rng, 2, 5)
    V = rng.standard_normal((5, 3)) + 1j * rng.standard_normal((5, 3))
    X = V @ V.conj().T
    g = eigen_combiner(X, ch, 0, 0.3)
    best, _ = _generalised_best(X, ch, 0, 0.3)
    assert sinr_matrix(X, g, ch, 0, 0.3) == pytest.approx(best, rel=1e-9)
    for _ in range(50):
        r = rng.standard_normal(5) + 1j * rng.standard_normal(5)
        assert sinr_matrix(X, r, ch, 0, 0.3) <= best * (1 + 1e-12)


def test_eigen_combiner_deterministic_on_ties():
    # identical channel gains on every tone give a fully degenerate spectrum
    from bswave.channel import ChannelRealization

    ch = ChannelRealization(np.ones((1, 3)), np.ones((1, 3)))
    X = np.eye(3)
    g1 = eigen_combiner(X, ch, 0, 1.0)
    g2 = eigen_combiner(X.copy(), ch, 0, 1.0)
    assert np.array_equal(g1, g2)


def test_sinr_matrix_rank_one_consistent(rng):
    ch = random_channel(rng, 2, 4)
    w = random_waveform(rng, 4)
    g = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    assert sinr_matrix(np.outer(w, np.conj(w)), g, ch, 1, 0.1) == pytest.approx(sinr(w, g, ch, 1, 0.1))


def test_combiner_set_requires_unit_rows(rng):
    ch = random_channel(rng, 2, 4)
    cs = mmse_combiners(random_waveform(rng, 4), ch, 0.1)
    assert len(cs) == 2
    with pytest.raises(ValueError):
        CombinerSet(2 * cs.vectors)
