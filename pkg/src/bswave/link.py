"""Reader-side detection model: SINR and receive combiners."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .harvest import as_weights


class CombinerError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class CombinerSet:
    vectors: np.ndarray  # K x N, one unit-norm combiner per row

    def __post_init__(self):
        g = np.atleast_2d(np.asarray(self.vectors, dtype=complex))
        norms = np.linalg.norm(g, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-10):
            raise ValueError(f"combiners must have unit norm, got norms {norms}")
        object.__setattr__(self, "vectors", g)

    def __getitem__(self, j):
        return self.vectors[j]

    def __len__(self):
        return self.vectors.shape[0]


def sinr(w, g, channel, j: int, noise_var: float) -> float:
    """``|g^H H_j w|^2 / (sigma^2 ||g||^2 + |g^H H~_j w|^2)``.

    The ``||g||^2`` factor makes the value invariant to any complex scaling of g.
    """
    w = as_weights(w)
    g = np.asarray(g, dtype=complex).ravel()
    gn = float(np.vdot(g, g).real)
    if gn == 0.0:
        raise CombinerError("zero-norm combiner")
    signal = abs(np.vdot(g, channel.signal_diag(j) * w)) ** 2
    interf = abs(np.vdot(g, channel.interference_diag(j) * w)) ** 2
    return float(signal / (noise_var * gn + interf))


def sinr_all(w, combiners, channel, noise_var: float) -> np.ndarray:
    return np.array([sinr(w, combiners[j], channel, j, noise_var) for j in range(channel.n_tags)])


def mmse_combiner(w, channel, j: int, noise_var: float) -> np.ndarray:
    """Unit-norm MMSE combiner ``(H~ w w^H H~^H + sigma^2 I)^{-1} H w``.

    The phase is fixed so that ``g^H H_j w`` is real and nonnegative.
    """
    w = as_weights(w)
    a = channel.signal_diag(j) * w
    b = channel.interference_diag(j) * w
    # Sherman-Morrison on sigma^2 I + b b^H
    bb = float(np.vdot(b, b).real)
    g = (a - b * (np.vdot(b, a) / (noise_var + bb))) / noise_var
    nrm = np.linalg.norm(g)
    if nrm == 0.0:
        raise CombinerError("H_j w vanishes; combiner undefined")
    g = g / nrm
    inner = np.vdot(g, a)
    if abs(inner) > 0:
        g = g * (inner / abs(inner))
    return g


def mmse_combiners(w, channel, noise_var: float) -> CombinerSet:
    return CombinerSet(np.array([mmse_combiner(w, channel, j, noise_var) for j in range(channel.n_tags)]))


def _dominant_eigvec(D: np.ndarray, rtol: float = 1e-12) -> np.ndarray:
    vals, vecs = np.linalg.eigh(D)
    top = vals[-1]
    tied = np.nonzero(vals >= top - rtol * max(abs(top), 1e-300))[0]
    cands = []
    for idx in tied:
        v = vecs[:, idx]
        nz = np.nonzero(np.abs(v) > 1e-12)[0]
        first = v[nz[0]] if nz.size else 0.0
        # rotate so the first nonzero entry is real positive before comparing
        v = v * (np.conj(first) / abs(first)) if abs(first) > 0 else v
        cands.append(v)
    v = max(cands, key=lambda c: tuple(np.round(c.real, 12)))
    k = int(np.argmax(np.abs(v)))
    return v * (np.conj(v[k]) / abs(v[k]))


def eigen_combiner(X, channel, j: int, noise_var: float) -> np.ndarray:
    """Combiner maximising ``g^H H X H^H g / g^H (sigma^2 I + H~ X H~^H) g``.

    Whitens with the Cholesky factor ``C`` of the denominator matrix, takes the
    dominant eigenvector of ``D = C^{-1} H X H^H C^{-H}`` and maps it back.
    """
    X = np.asarray(X, dtype=complex)
    n = X.shape[0]
    hs = channel.signal_diag(j)
    hi = channel.interference_diag(j)
    num = hs[:, None] * X * np.conj(hs)[None, :]
    den = noise_var * np.eye(n) + hi[:, None] * X * np.conj(hi)[None, :]
    den = 0.5 * (den + den.conj().T)
    try:
        C = np.linalg.cholesky(den)
    except np.linalg.LinAlgError:
        jitter = 1e-12 * float(np.trace(X).real) / n
        try:
            C = np.linalg.cholesky(den + jitter * np.eye(n))
        except np.linalg.LinAlgError as exc:
            raise CombinerError("X is not sufficiently PSD for the whitening factor") from exc
    Cinv_num = scipy.linalg.solve_triangular(C, num, lower=True)
    D = scipy.linalg.solve_triangular(C, Cinv_num.conj().T, lower=True).conj().T
    D = 0.5 * (D + D.conj().T)
    gt = _dominant_eigvec(D)
    g = scipy.linalg.solve_triangular(C.conj().T, gt, lower=False)
    return g / np.linalg.norm(g)


def eigen_combiners(X, channel, noise_var: float) -> CombinerSet:
    return CombinerSet(np.array([eigen_combiner(X, channel, j, noise_var) for j in range(channel.n_tags)]))


def sinr_matrix(X, g, channel, j: int, noise_var: float) -> float:
    """SINR of a (possibly high-rank) covariance X with combiner g."""
    g = np.asarray(g, dtype=complex)
    gn = float(np.vdot(g, g).real)
    a = np.conj(channel.signal_diag(j)) * g  # H^H g
    b = np.conj(channel.interference_diag(j)) * g
    num = np.vdot(a, X @ a).real
    den = noise_var * gn + np.vdot(b, X @ b).real
    return float(num / den)
