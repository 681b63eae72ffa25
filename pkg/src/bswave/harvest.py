"""Rectenna DC model: scalar and matrix forms of the harvested-DC metric.

The per-tag metric is ``z_dc = beta2 * A{y^2} + beta4 * A{y^4}`` where
``A{.}`` is the DC component of the received multisine. Two equivalent
evaluations are provided: the tone-domain sums (``dc_power_2nd``,
``dc_power_4th``) and the trace form over the diagonals of
``M_j = conj(h_j) h_j^T`` (``z_dc_matrix``). ``time_domain_oracle`` evaluates
the same moments by brute-force sampling of the waveform.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import EHModel, SystemConfig


@dataclass(frozen=True)
class Waveform:
    """Complex tone weights ``w_n = s_n exp(i phi_n)``."""

    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=complex).ravel())

    @property
    def magnitudes(self) -> np.ndarray:
        return np.abs(self.weights)

    @property
    def phases(self) -> np.ndarray:
        return np.angle(self.weights)

    def power(self) -> float:
        return 0.5 * float(np.vdot(self.weights, self.weights).real)

    def __len__(self):
        return self.weights.size


def as_weights(w) -> np.ndarray:
    if isinstance(w, Waveform):
        return w.weights
    return np.asarray(w, dtype=complex).ravel()


def _check_lengths(w: np.ndarray, h: np.ndarray) -> None:
    if w.shape != h.shape:
        raise ValueError(f"waveform has {w.size} tones but channel has {h.size}")


@dataclass(frozen=True)
class HarvestReport:
    per_tag: np.ndarray
    total: float

    @classmethod
    def from_per_tag(cls, per_tag, weights) -> "HarvestReport":
        per_tag = np.asarray(per_tag, dtype=float)
        return cls(per_tag=per_tag, total=float(np.dot(weights, per_tag)))


def dc_power_2nd(w, forward_gains) -> float:
    """``A{y^2} = 1/2 sum_n s_n^2 A_n^2``."""
    w = as_weights(w)
    h = np.asarray(forward_gains, dtype=complex).ravel()
    _check_lengths(w, h)
    return 0.5 * float(np.sum(np.abs(w) ** 2 * np.abs(h) ** 2))


def dc_power_4th(w, forward_gains) -> float:
    """``A{y^4}`` by direct enumeration of tone quadruples with n1+n2 = n3+n4.

    Each quadruple contributes ``prod_m s_{n_m} A_{n_m} * cos(psi_1 + psi_2 - psi_3 - psi_4)``,
    which is ``Re(a_1 a_2 conj(a_3) conj(a_4))`` with ``a_n = h_n w_n``.
    """
    w = as_weights(w)
    h = np.asarray(forward_gains, dtype=complex).ravel()
    _check_lengths(w, h)
    a = h * w
    n = a.size
    total = 0.0
    for n1 in range(n):
        for n2 in range(n):
            left = a[n1] * a[n2]
            for n3 in range(n):
                n4 = n1 + n2 - n3
                if 0 <= n4 < n:
                    total += (left * np.conj(a[n3] * a[n4])).real
    return 0.375 * total


def z_dc_scalar(w, channel, cfg: SystemConfig, forward=None) -> HarvestReport:
    """Per-tag and weighted DC metric from the tone-domain sums.

    ``forward`` overrides ``channel.forward`` (K x N) when given.
    """
    h = np.asarray(channel.forward if forward is None else forward, dtype=complex)
    beta2, beta4 = cfg.rectenna.beta2, cfg.rectenna.beta4
    per_tag = np.empty(h.shape[0])
    for j, hj in enumerate(h):
        z = beta2 * dc_power_2nd(w, hj)
        if cfg.eh_model is EHModel.NONLINEAR_4TH:
            z += beta4 * dc_power_4th(w, hj)
        per_tag[j] = z
    return HarvestReport.from_per_tag(per_tag, cfg.weights)


@dataclass(frozen=True)
class MDiagonalSet:
    """Diagonal pieces ``M_{j,k}`` of ``M_j = conj(h_j) h_j^T``.

    ``M_{j,k}`` keeps only the k-th superdiagonal (k = 0 is the main diagonal).
    Matrices are materialised on demand; trace products use the diagonals directly.
    """

    gains: np.ndarray  # K x N

    def __post_init__(self):
        g = np.atleast_2d(np.asarray(self.gains, dtype=complex))
        object.__setattr__(self, "gains", g)

    @property
    def n_tags(self) -> int:
        return self.gains.shape[0]

    @property
    def n_tones(self) -> int:
        return self.gains.shape[1]

    def full(self, j: int) -> np.ndarray:
        h = self.gains[j]
        return np.outer(np.conj(h), h)

    def matrix(self, j: int, k: int) -> np.ndarray:
        if not 0 <= k < self.n_tones:
            raise IndexError(f"diagonal index {k} out of range")
        m = self.full(j)
        return np.triu(np.tril(m, k), k)

    def traces(self, X: np.ndarray) -> np.ndarray:
        """``t[j, k] = Tr(M_{j,k} X)`` for all tags and diagonals."""
        X = np.asarray(X, dtype=complex)
        n = self.n_tones
        t = np.empty((self.n_tags, n), dtype=complex)
        for j in range(self.n_tags):
            prod = self.full(j) * X.T
            for k in range(n):
                t[j, k] = np.trace(prod, offset=k)
        t[:, 0] = t[:, 0].real
        return t


def build_m_diagonals(channel=None, gains=None) -> MDiagonalSet:
    """M-diagonal set from ``channel.forward`` or from explicit K x N ``gains``."""
    if gains is None:
        if channel is None:
            raise ValueError("need a channel or explicit gains")
        gains = channel.forward
    gains = np.atleast_2d(np.asarray(gains, dtype=complex))
    if gains.ndim != 2 or gains.shape[1] == 0:
        raise ValueError("gains must be a non-empty K x N array")
    return MDiagonalSet(gains)


def check_hermitian_psd(X: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """Validate ``X`` as Hermitian PSD within tolerance and return it symmetrised."""
    X = np.asarray(X, dtype=complex)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise ValueError("X must be square")
    scale = np.linalg.norm(X)
    if np.linalg.norm(X - X.conj().T) > tol * max(scale, 1e-300):
        raise ValueError("X is not Hermitian within tolerance")
    X = 0.5 * (X + X.conj().T)
    tr = float(np.trace(X).real)
    if X.size and np.linalg.eigvalsh(X)[0] < -tol * max(abs(tr), 1e-300):
        raise ValueError("X is indefinite beyond tolerance")
    return X


def z_dc_from_traces(t: np.ndarray, cfg: SystemConfig) -> np.ndarray:
    """Per-tag DC metric from the trace values ``t[j, k]``."""
    t = np.atleast_2d(t)
    beta2, beta4 = cfg.rectenna.beta2, cfg.rectenna.beta4
    z = 0.5 * beta2 * t[:, 0].real
    if cfg.eh_model is EHModel.NONLINEAR_4TH:
        z = z + beta4 * (0.375 * np.abs(t[:, 0]) ** 2 + 0.75 * np.sum(np.abs(t[:, 1:]) ** 2, axis=1))
    return z


def z_dc_matrix(X, mset: MDiagonalSet, cfg: SystemConfig) -> HarvestReport:
    X = check_hermitian_psd(X)
    return HarvestReport.from_per_tag(z_dc_from_traces(mset.traces(X), cfg), cfg.weights)


def time_domain_oracle(w, forward_gains, moment: int, samples: int | None = None) -> float:
    """Mean of ``y(t)**moment`` over one period of the sampled multisine.

    Tone n sits at ``(n + 4N) * df`` so no sum-frequency product of order
    ``moment`` folds onto DC; with uniform samples over one period the mean is
    exact for the resulting trigonometric polynomial.
    """
    if moment not in (2, 4):
        raise ValueError("moment must be 2 or 4")
    a = np.asarray(forward_gains, dtype=complex).ravel() * as_weights(w)
    n = a.size
    if samples is None:
        samples = 64 * moment * 5 * n
    t = np.arange(samples) / samples  # one period of 1/df with df = 1
    freqs = np.arange(n) + 4 * n
    y = (a[None, :] * np.exp(2j * np.pi * t[:, None] * freqs[None, :])).real.sum(axis=1)
    return float(np.mean(y**moment))
