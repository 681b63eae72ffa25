"""System configuration and rectenna parameters.

Tones are indexed 0..N-1 everywhere in this package.
"""

from __future__ import annotations

import dataclasses
import enum
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np


class ConfigError(ValueError):
    """Raised for invalid configuration values or malformed config documents."""


class EHModel(str, enum.Enum):
    NONLINEAR_4TH = "Nonlinear4th"
    LINEAR_2ND = "Linear2nd"


def derive_taylor_coeffs(i_s: float, n_ideality: float, v_t: float) -> tuple[float, float]:
    """Return the diode Taylor coefficients ``(k2, k4)``.

    ``k_u = i_s / (u! * (n * v_t)**u)``.
    """
    for name, value in (("i_s", i_s), ("n_ideality", n_ideality), ("v_t", v_t)):
        if not (value > 0 and math.isfinite(value)):
            raise ConfigError(f"{name} must be strictly positive, got {value!r}")
    nvt = n_ideality * v_t
    return i_s / (2.0 * nvt**2), i_s / (24.0 * nvt**4)


@dataclass(frozen=True)
class RectennaParams:
    i_s: float = 5e-6
    n_ideality: float = 1.05
    v_t: float = 0.02586
    r_ant: float = 50.0

    def __post_init__(self):
        if not (self.r_ant > 0 and math.isfinite(self.r_ant)):
            raise ConfigError(f"r_ant must be strictly positive, got {self.r_ant!r}")
        derive_taylor_coeffs(self.i_s, self.n_ideality, self.v_t)

    @property
    def k2(self) -> float:
        return derive_taylor_coeffs(self.i_s, self.n_ideality, self.v_t)[0]

    @property
    def k4(self) -> float:
        return derive_taylor_coeffs(self.i_s, self.n_ideality, self.v_t)[1]

    @property
    def beta2(self) -> float:
        return self.k2 * self.r_ant

    @property
    def beta4(self) -> float:
        return self.k4 * self.r_ant**2


@dataclass(frozen=True)
class SystemConfig:
    """Everything the optimizers need besides the channel.

    ``sinr_targets`` are linear scale. ``tolerance`` is the relative stopping
    tolerance of the SCA loops.
    """

    n_tones: int
    n_tags: int
    tx_power: float
    noise_var: float
    sinr_targets: tuple[float, ...]
    tag_weights: tuple[float, ...] = ()
    rectenna: RectennaParams = field(default_factory=RectennaParams)
    eh_model: EHModel = EHModel.NONLINEAR_4TH
    psd_limit: float | None = None
    tolerance: float = 1e-7
    rng_seed: int = 0

    def __post_init__(self):
        # normalise sequences so the dataclass stays hashable and comparable
        targets = tuple(float(x) for x in np.broadcast_to(self.sinr_targets, (self.n_tags,)))
        weights = self.tag_weights if len(self.tag_weights) else (1.0,) * self.n_tags
        weights = tuple(float(x) for x in np.broadcast_to(weights, (self.n_tags,)))
        object.__setattr__(self, "sinr_targets", targets)
        object.__setattr__(self, "tag_weights", weights)
        object.__setattr__(self, "eh_model", EHModel(self.eh_model))
        if isinstance(self.rectenna, dict):
            object.__setattr__(self, "rectenna", RectennaParams(**self.rectenna))
        self.validate()

    def validate(self) -> None:
        if self.n_tags < 1:
            raise ConfigError("n_tags must be >= 1")
        if self.n_tones < self.n_tags:
            raise ConfigError(f"n_tones ({self.n_tones}) must be >= n_tags ({self.n_tags})")
        if not self.tx_power > 0:
            raise ConfigError("tx_power must be > 0")
        if not self.noise_var > 0:
            raise ConfigError("noise_var must be > 0")
        if any(not (r >= 0) for r in self.sinr_targets):
            raise ConfigError("sinr_targets must be >= 0")
        if any(not (c >= 0) for c in self.tag_weights):
            raise ConfigError("tag_weights must be >= 0")
        if self.psd_limit is not None and not self.psd_limit > 0:
            raise ConfigError("psd_limit must be > 0 when given")
        if not self.tolerance > 0:
            raise ConfigError("tolerance must be > 0")

    @property
    def weights(self) -> np.ndarray:
        return np.asarray(self.tag_weights, dtype=float)

    @property
    def targets(self) -> np.ndarray:
        return np.asarray(self.sinr_targets, dtype=float)

    def replace(self, **changes) -> "SystemConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        out = dataclasses.asdict(self)
        out["sinr_targets"] = list(self.sinr_targets)
        out["tag_weights"] = list(self.tag_weights)
        out["eh_model"] = self.eh_model.value
        return out

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "SystemConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        doc = dict(doc)
        if "rectenna" in doc:
            rect = doc["rectenna"]
            rect_known = {f.name for f in dataclasses.fields(RectennaParams)}
            bad = set(rect) - rect_known
            if bad:
                raise ConfigError(f"unknown rectenna fields: {sorted(bad)}")
            doc["rectenna"] = RectennaParams(**rect)
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, path: str | Path) -> "SystemConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def linear_to_db(lin):
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(np.asarray(lin, dtype=float))
