"""Solver-independent feasibility checks for final waveform/combiner pairs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .harvest import as_weights
from .link import sinr_all


@dataclass(frozen=True)
class CheckReport:
    sinr_ratio: np.ndarray  # achieved / target, inf where target is 0
    power_ratio: float  # (||w||^2 / 2) / P
    cap_ratio: float  # max_n (|w_n|^2 / 2) / psd_limit, 0 without a cap
    tol: float

    @property
    def sinr_ok(self) -> bool:
        return bool(np.all(self.sinr_ratio >= 1.0 - self.tol))

    @property
    def power_ok(self) -> bool:
        return self.power_ratio <= 1.0 + self.tol

    @property
    def cap_ok(self) -> bool:
        return self.cap_ratio <= 1.0 + self.tol

    @property
    def ok(self) -> bool:
        return self.sinr_ok and self.power_ok and self.cap_ok


def check_solution(w, combiners, channel, cfg, tol: float = 1e-6) -> CheckReport:
    """Re-evaluate SINR, power and per-tone caps from scratch."""
    w = as_weights(w)
    rho = sinr_all(w, combiners, channel, cfg.noise_var)
    targets = cfg.targets
    with np.errstate(divide="ignore"):
        ratio = np.where(targets > 0, rho / np.where(targets > 0, targets, 1.0), np.inf)
    power = 0.5 * float(np.vdot(w, w).real)
    cap = 0.0
    if cfg.psd_limit is not None:
        cap = 0.5 * float(np.max(np.abs(w) ** 2)) / cfg.psd_limit
    return CheckReport(ratio, power / cfg.tx_power, cap, tol)
