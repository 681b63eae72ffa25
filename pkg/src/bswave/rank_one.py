"""Rank-one recovery from a high-rank SDP solution."""

from __future__ import annotations

import enum
import logging

import numpy as np

from .checks import check_solution
from .harvest import z_dc_from_traces
from .link import mmse_combiners

log = logging.getLogger(__name__)


class Extraction(str, enum.Enum):
    ALREADY_RANK_ONE = "AlreadyRankOne"
    RANK_REDUCTION = "RankReduction"
    RANDOMIZATION = "Randomization"


class ExtractionError(RuntimeError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


def principal_component(X: np.ndarray) -> tuple[np.ndarray, float]:
    """Scaled dominant eigenvector of X and the share of the trace it carries."""
    vals, vecs = np.linalg.eigh(0.5 * (X + X.conj().T))
    tr = float(np.sum(np.clip(vals, 0, None)))
    w = np.sqrt(max(vals[-1], 0.0)) * vecs[:, -1]
    return w, (vals[-1] / tr if tr > 0 else 1.0)


def _factor(X: np.ndarray, rtol: float = 1e-9) -> np.ndarray:
    vals, vecs = np.linalg.eigh(0.5 * (X + X.conj().T))
    keep = vals > rtol * max(vals[-1], 1e-300)
    return vecs[:, keep] * np.sqrt(vals[keep])


def _hermitian_basis(r: int):
    for a in range(r):
        e = np.zeros((r, r), complex)
        e[a, a] = 1.0
        yield e
    for a in range(r):
        for b in range(a + 1, r):
            e = np.zeros((r, r), complex)
            e[a, b] = e[b, a] = 1.0
            yield e
            e = np.zeros((r, r), complex)
            e[a, b], e[b, a] = 1j, -1j
            yield e


def rank_reduction(X: np.ndarray, constraint_mats, objective=None, max_steps: int = 64) -> np.ndarray:
    """Purify X towards rank one while keeping every ``Tr(F X)`` fixed.

    Each step writes ``X = V V^H``, finds a nonzero Hermitian ``D`` with
    ``Tr(V^H F V D) = 0`` for all constraint matrices, and moves to
    ``V (I - D / lam) V^H`` where ``lam`` is the eigenvalue of D of largest
    magnitude; that matrix stays PSD and loses at least one rank. The
    objective is held fixed too while the null space is large enough.
    """
    mats = list(constraint_mats)
    for _ in range(max_steps):
        V = _factor(X)
        r = V.shape[1]
        if r <= 1:
            break
        use = mats + ([objective] if objective is not None and r * r > len(mats) + 1 else [])
        basis = list(_hermitian_basis(r))
        rows = np.array([[np.trace((V.conj().T @ F @ V) @ B).real for B in basis] for F in use])
        _, s, vh = np.linalg.svd(rows) if rows.size else (None, np.array([]), np.eye(len(basis)))
        rank = int(np.sum(s > 1e-10 * max(s[0], 1e-300))) if s.size else 0
        if rank >= len(basis):
            break
        coef = vh[-1]
        D = sum(c * B for c, B in zip(coef, basis))
        lam = np.linalg.eigvalsh(D)
        lead = lam[np.argmax(np.abs(lam))]
        core = np.eye(r) - D / lead
        X = V @ core @ V.conj().T
        X = 0.5 * (X + X.conj().T)
    return X


def _scale_to_budget(w: np.ndarray, cfg) -> np.ndarray:
    nrm2 = float(np.vdot(w, w).real)
    if nrm2 == 0:
        return w
    scale = np.sqrt(2.0 * cfg.tx_power / nrm2)
    if cfg.psd_limit is not None:
        peak = float(np.max(np.abs(w) ** 2))
        scale = min(scale, np.sqrt(2.0 * cfg.psd_limit / peak))
    return w * scale


def _design_value(w, mset, cfg) -> float:
    X = np.outer(w, np.conj(w))
    return float(np.dot(cfg.weights, z_dc_from_traces(mset.traces(X), cfg)))


def randomize(X, channel, cfg, mset, rng, draws: int, tol: float = 1e-9):
    """Best feasible rank-one candidate among ``draws`` randomized vectors.

    Candidates are ``U S^{1/2} v`` with unit-modulus uniform-phase entries of v,
    rescaled to the power budget, each paired with its MMSE combiners. The
    principal eigenvector is always offered as one extra candidate.
    Returns ``(w, combiners, n_feasible)``; ``w`` is None when nothing qualifies.
    """
    vals, vecs = np.linalg.eigh(0.5 * (X + X.conj().T))
    root = vecs * np.sqrt(np.clip(vals, 0, None))
    phases = rng.uniform(0.0, 2.0 * np.pi, size=(draws, X.shape[0]))
    cands = (np.exp(1j * phases) @ root.T)
    pc, _ = principal_component(X)
    cands = np.vstack([pc[None, :], cands])
    best, best_val, best_g, n_ok = None, -np.inf, None, 0
    for w in cands:
        w = _scale_to_budget(w, cfg)
        if not np.any(w):
            continue
        try:
            g = mmse_combiners(w, channel, cfg.noise_var)
        except np.linalg.LinAlgError:
            continue
        if not check_solution(w, g, channel, cfg, tol=tol).ok:
            continue
        n_ok += 1
        val = _design_value(w, mset, cfg)
        if val > best_val:
            best, best_val, best_g = w, val, g
    return best, best_g, n_ok


def extract_rank_one(
    X,
    channel,
    cfg,
    sinr_mats,
    mset,
    rng=None,
    draws: int = 1000,
    objective=None,
    rank_one_share: float = 1e-6,
    tol: float = 1e-6,
):
    """Return ``(w, combiners, method)`` for a rank-one point derived from X.

    ``sinr_mats`` are the per-tag ``B_j = G_j - rho_j G~_j`` matrices of the
    final SDP; ``mset`` is the M-diagonal set used for the design metric.
    """
    X = np.asarray(X, dtype=complex)
    w, share = principal_component(X)
    if share >= 1.0 - rank_one_share:
        g = mmse_combiners(w, channel, cfg.noise_var)
        if check_solution(w, g, channel, cfg, tol=tol).ok:
            return w, g, Extraction.ALREADY_RANK_ONE
        log.debug("principal component misses the SINR targets; trying the other routes")
    if channel.n_tags <= 2:
        mats = list(sinr_mats) + [np.eye(X.shape[0])]
        Xr = rank_reduction(X, mats, objective=objective)
        w, share = principal_component(Xr)
        g = mmse_combiners(w, channel, cfg.noise_var)
        if share >= 1.0 - rank_one_share and check_solution(w, g, channel, cfg, tol=tol).ok:
            return w, g, Extraction.RANK_REDUCTION
        log.debug("rank reduction stopped at share %.3g; falling back to randomization", share)
    rng = np.random.default_rng(cfg.rng_seed) if rng is None else rng
    n_total = 0
    for n_draws in (draws, 10 * draws):
        w, g, n_ok = randomize(X, channel, cfg, mset, rng, n_draws, tol=tol * 1e-3)
        n_total += n_draws
        if w is not None:
            return w, g, Extraction.RANDOMIZATION
    raise ExtractionError(
        "no randomized candidate met the SINR targets",
        {"draws": n_total, "rank_one_share": share, "eigenvalues": np.linalg.eigvalsh(X).tolist()},
    )
