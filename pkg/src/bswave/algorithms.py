"""Feasibility search and the joint waveform/combiner optimizers.

``algorithm1_feasibility`` alternates MMSE combiners with a bisection over the
SINR scaling ``delta`` (one SOCP per probe). ``algorithm2_optimize`` and
``algorithm3_simplified`` run successive convex approximation on the relaxed
matrix problem, with and without refreshing the combiners, then recover a
rank-one waveform.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .config import EHModel, SystemConfig
from .conic import (
    NumericalTrouble,
    SdpStepSpec,
    SocpStepSpec,
    Status,
    sinr_gram,
    solve_sdp_step,
    solve_socp_step,
)
from .harvest import HarvestReport, build_m_diagonals, z_dc_from_traces, z_dc_scalar
from .link import CombinerSet, eigen_combiners, mmse_combiners, sinr_all
from .rank_one import Extraction, extract_rank_one

log = logging.getLogger(__name__)

BISECTION_TOL = 1e-4
MAX_OUTER_FEASIBILITY = 50
MAX_SCA_ITER = 100
DELTA_CAP = 2.0  # delta_max when no tag carries a positive SINR target


# --------------------------------------------------------------------------
# feasibility


@dataclass
class FeasibilityResult:
    delta_star: float
    waveform: np.ndarray
    combiners: CombinerSet
    iterations: int
    delta_trace: list[float]
    delta_max: float
    socp_solves: int = 0
    events: list[str] = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return self.delta_star >= 1.0


def single_tone_bound(cfg: SystemConfig, channel) -> np.ndarray:
    """Per-tag SINR upper bound ``2P max_n |h_n h^b_n|^2 / sigma^2``."""
    return 2.0 * cfg.tx_power * np.max(np.abs(channel.backscatter) ** 2, axis=1) / cfg.noise_var


def achieved_delta(w, combiners, channel, cfg) -> float:
    rho = sinr_all(w, combiners, channel, cfg.noise_var)
    pos = cfg.targets > 0
    if not pos.any():
        return np.inf
    return float(np.min(rho[pos] / cfg.targets[pos]))


def _respect_caps(w, cfg):
    if cfg.psd_limit is None:
        return w
    peak = float(np.max(np.abs(w) ** 2))
    if peak > 2.0 * cfg.psd_limit:
        w = w * np.sqrt(2.0 * cfg.psd_limit / peak)
    return w


def initial_waveform(cfg: SystemConfig, channel) -> np.ndarray:
    """Starting point for the feasibility search.

    Two candidates: uniform power with zero phases, and all power on the tone
    maximising the worst tag's normalised backscatter gain. Uniform power is
    kept whenever it already meets every target (a single tone is a stationary
    point of the SCA loops, a poor place to start them); otherwise the larger
    worst-case SINR ratio under MMSE combining wins.
    """
    n = channel.n_tones
    p2 = 2.0 * cfg.tx_power
    uniform = _respect_caps(np.full(n, np.sqrt(p2 / n), dtype=complex), cfg)
    pos = cfg.targets > 0
    if not pos.any():
        return uniform
    gain = np.abs(channel.backscatter[pos]) ** 2 / cfg.targets[pos, None]
    tone = int(np.argmax(np.min(gain, axis=0)))
    single = np.zeros(n, dtype=complex)
    single[tone] = np.sqrt(p2)
    single = _respect_caps(single, cfg)
    best, best_delta = uniform, -np.inf
    try:
        if achieved_delta(uniform, mmse_combiners(uniform, channel, cfg.noise_var), channel, cfg) >= 1.0:
            return uniform
    except np.linalg.LinAlgError:
        pass
    for cand in (uniform, single):
        try:
            d = achieved_delta(cand, mmse_combiners(cand, channel, cfg.noise_var), channel, cfg)
        except np.linalg.LinAlgError:
            continue
        if d > best_delta:
            best, best_delta = cand, d
    return best


def _socp_spec(cfg, channel, combiners, delta):
    return SocpStepSpec.from_channel(
        channel,
        combiners.vectors,
        delta * cfg.targets,
        cfg.noise_var,
        2.0 * cfg.tx_power,
        None if cfg.psd_limit is None else 2.0 * cfg.psd_limit,
    )


def algorithm1_feasibility(
    cfg: SystemConfig,
    channel,
    w0=None,
    bisection_tol: float = BISECTION_TOL,
    max_outer: int = MAX_OUTER_FEASIBILITY,
) -> FeasibilityResult:
    """Maximise ``delta = min_j rho_j / rho_bar_j`` by alternating optimisation.

    Each outer pass refreshes the MMSE combiners for the current waveform, then
    bisects ``delta`` on ``[delta_min, delta_max]``; ``delta_min`` is carried
    over between passes and ``delta_max`` is reset. Stops once ``delta_min``
    gains at most ``bisection_tol`` or reaches 1.
    """
    w = initial_waveform(cfg, channel) if w0 is None else np.asarray(w0, dtype=complex)
    pos = cfg.targets > 0
    if not pos.any():
        g = mmse_combiners(w, channel, cfg.noise_var)
        return FeasibilityResult(DELTA_CAP, w, g, 0, [DELTA_CAP], DELTA_CAP)

    bound = single_tone_bound(cfg, channel)
    delta_max0 = 2.0 * float(np.max(bound[pos] / cfg.targets[pos]))
    delta_min = 0.0
    prev_star = 0.0
    trace: list[float] = []
    events: list[str] = []
    solves = 0
    outer = 0
    for outer in range(1, max_outer + 1):
        g = mmse_combiners(w, channel, cfg.noise_var)
        lo, hi = delta_min, delta_max0
        if lo > 0 and achieved_delta(w, g, channel, cfg) < lo * (1 - 1e-7):
            # carried delta_min not reproducible under the refreshed combiners
            events.append(f"outer {outer}: carried delta_min {lo:.6g} not attained; re-probing downward")
            while lo > bisection_tol:
                lo /= 2
                solves += 1
                if solve_socp_step(_socp_spec(cfg, channel, g, lo)).ok:
                    break
            else:
                lo = 0.0
        stored = None
        while hi - lo > bisection_tol:
            mid = 0.5 * (hi + lo)
            res = solve_socp_step(_socp_spec(cfg, channel, g, mid))
            solves += 1
            if res.ok:
                lo, stored = mid, res.solution
            else:
                if res.status is not Status.INFEASIBLE:
                    events.append(f"outer {outer}: SOCP {res.status.value} at delta={mid:.6g}")
                hi = mid
        if stored is not None:
            w = stored
        delta_min = lo
        trace.append(delta_min)
        if delta_min - prev_star <= bisection_tol or delta_min >= 1.0:
            break
        prev_star = delta_min
    g = mmse_combiners(w, channel, cfg.noise_var)
    return FeasibilityResult(delta_min, w, g, outer, trace, delta_max0, solves, events)


# --------------------------------------------------------------------------
# successive convex approximation


def quartic_weights(n: int, beta4: float) -> np.ndarray:
    """Diagonal of ``A0 = diag(-3 beta4 / 8, -3 beta4 / 4, ...)``."""
    a = np.full(n, -0.75 * beta4)
    a[0] = -0.375 * beta4
    return a


def q_value(t, beta4: float) -> float:
    """``q(t) = t^H A0 t``."""
    t = np.asarray(t, dtype=complex)
    return float(np.sum(quartic_weights(t.size, beta4) * np.abs(t) ** 2))


def sca_linearize(t_prev, t, beta4: float) -> float:
    """First-order expansion of ``q`` at ``t_prev``; majorises ``q`` since ``A0 <= 0``."""
    t_prev = np.asarray(t_prev, dtype=complex)
    t = np.asarray(t, dtype=complex)
    a = quartic_weights(t.size, beta4)
    return float(2.0 * np.sum(a * np.conj(t_prev) * t).real - np.sum(a * np.abs(t_prev) ** 2))


def linearized_objective(t_prev: np.ndarray, mset, cfg: SystemConfig) -> tuple[np.ndarray, float]:
    """Hermitian ``A`` and offset with ``Tr(A X) + offset = -sum_j c_j (beta2/2 t_j0 - q~_j)``."""
    n = mset.n_tones
    beta2 = cfg.rectenna.beta2
    beta4 = cfg.rectenna.beta4 if cfg.eh_model is EHModel.NONLINEAR_4TH else 0.0
    a = quartic_weights(n, beta4)
    lag = np.subtract.outer(np.arange(n), np.arange(n)).T  # lag[m, p] = p - m
    A = np.zeros((n, n), dtype=complex)
    offset = 0.0
    for j, c in enumerate(cfg.weights):
        if c == 0:
            continue
        M = mset.full(j)
        coef = a * np.conj(t_prev[j])
        W = np.where(lag >= 0, coef[np.clip(lag, 0, None)], 0.0)
        upper = M * W
        Aj = -0.5 * beta2 * np.diag(np.diag(M)) + upper + upper.conj().T
        A += c * Aj
        offset -= c * float(np.sum(a * np.abs(t_prev[j]) ** 2))
    return 0.5 * (A + A.conj().T), offset


def design_metric(t: np.ndarray, cfg: SystemConfig) -> float:
    return float(np.dot(cfg.weights, z_dc_from_traces(t, cfg)))


@dataclass
class ScaState:
    X: np.ndarray
    t: np.ndarray
    gamma: float
    combiners: CombinerSet
    iteration: int


@dataclass
class WaveformSolution:
    waveform: np.ndarray
    combiners: CombinerSet
    sinrs: np.ndarray
    harvest: HarvestReport
    relaxed_zdc: float
    rounded_zdc: float
    method: Extraction
    gamma_trace: list[float]
    iterations: int
    X: np.ndarray
    seconds: float = 0.0
    events: list[str] = field(default_factory=list)

    @property
    def z_dc(self) -> float:
        return self.harvest.total


def _sdp_spec(cfg, channel, combiners, A, offset):
    sig, itf = sinr_gram(channel, combiners.vectors)
    return SdpStepSpec(
        objective=A,
        signal=sig,
        interf=itf,
        targets=cfg.targets,
        noise_var=cfg.noise_var,
        power_budget=2.0 * cfg.tx_power,
        offset=offset,
        diag_cap=None if cfg.psd_limit is None else 2.0 * cfg.psd_limit,
    )


def _sca(cfg, channel, warm, refresh: bool, design_gains=None, max_iter=MAX_SCA_ITER, rng=None, draws=1000):
    start = time.perf_counter()
    w0 = np.asarray(warm.waveform if hasattr(warm, "waveform") else warm, dtype=complex)
    true_mset = build_m_diagonals(channel)
    mset = true_mset if design_gains is None else build_m_diagonals(gains=design_gains)
    X = np.outer(w0, np.conj(w0))
    t = mset.traces(X)
    gamma = -design_metric(t, cfg)
    trace = [gamma]
    events: list[str] = []
    g = eigen_combiners(X, channel, cfg.noise_var)
    state = ScaState(X, t, gamma, g, 0)
    spec = None
    for it in range(1, max_iter + 1):
        if refresh and it > 1:
            g = eigen_combiners(X, channel, cfg.noise_var)
        A, offset = linearized_objective(t, mset, cfg)
        spec = _sdp_spec(cfg, channel, g, A, offset)
        res = solve_sdp_step(spec)
        if not res.ok:
            raise NumericalTrouble(
                f"SDP step {it} ended with {res.status.value} ({res.solver_status})",
                {"gamma_trace": trace, "violation": res.violation, "iteration": it},
            )
        X_new, val_new = res.solution, res.objective
        val_old = spec.value(X)
        if val_new > val_old:
            # the incumbent is feasible for this step; never move uphill
            if val_new - val_old > 1e-12 * abs(val_old):
                events.append(f"iteration {it}: kept incumbent ({val_new:.12g} > {val_old:.12g})")
            X_new, val_new = X, val_old
        X = X_new
        t = mset.traces(X)
        prev, gamma = gamma, val_new
        trace.append(gamma)
        state = ScaState(X, t, gamma, g, it)
        if abs(gamma - prev) <= cfg.tolerance * abs(gamma):
            break
    sig, itf = sinr_gram(channel, state.combiners.vectors)
    bmats = [s - r * i for s, r, i in zip(sig, cfg.targets, itf)]
    w, gsel, method = extract_rank_one(
        state.X, channel, cfg, bmats, mset, rng=rng, draws=draws, objective=spec.objective if spec else None
    )
    harvest = z_dc_scalar(w, channel, cfg)
    relaxed = float(np.dot(cfg.weights, z_dc_from_traces(true_mset.traces(state.X), cfg)))
    return WaveformSolution(
        waveform=w,
        combiners=gsel,
        sinrs=sinr_all(w, gsel, channel, cfg.noise_var),
        harvest=harvest,
        relaxed_zdc=relaxed,
        rounded_zdc=harvest.total,
        method=method,
        gamma_trace=trace,
        iterations=state.iteration,
        X=state.X,
        seconds=time.perf_counter() - start,
        events=events,
    )


def _check_warm(warm):
    if isinstance(warm, FeasibilityResult) and not warm.feasible:
        raise ValueError(f"warm start is infeasible (delta*={warm.delta_star:.6g} < 1)")


def algorithm2_optimize(cfg, channel, warm, design_gains=None, **kw) -> WaveformSolution:
    """SCA with the combiners re-optimised before every SDP step."""
    _check_warm(warm)
    return _sca(cfg, channel, warm, refresh=True, design_gains=design_gains, **kw)


def algorithm3_simplified(cfg, channel, warm, design_gains=None, **kw) -> WaveformSolution:
    """SCA with the combiners computed once from the warm start and then held fixed."""
    _check_warm(warm)
    return _sca(cfg, channel, warm, refresh=False, design_gains=design_gains, **kw)
