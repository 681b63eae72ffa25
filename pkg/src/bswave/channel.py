"""Frequency-selective forward/backward channel synthesis."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


_MODEL_B_NS = (0, 10, 20, 30, 50, 80, 110, 140, 180, 230, 280, 330, 380, 430, 490, 560, 640, 730)
_MODEL_B_DB = (-2.6, -3.0, -3.5, -3.9, 0.0, -1.3, -2.6, -3.9, -3.4, -5.6, -7.7, -9.9, -12.1, -14.3, -15.4, -18.4, -20.7, -24.6)


@dataclass(frozen=True)
class PowerDelayProfile:
    delays: np.ndarray  # seconds
    powers: np.ndarray  # normalised to sum 1

    def __post_init__(self):
        delays = np.asarray(self.delays, dtype=float).ravel()
        powers = np.asarray(self.powers, dtype=float).ravel()
        if delays.size == 0:
            raise ValueError("power delay profile has no taps")
        if delays.shape != powers.shape:
            raise ValueError("delays and powers differ in length")
        if np.any(powers < 0) or not powers.sum() > 0:
            raise ValueError("tap powers must be nonnegative with positive sum")
        object.__setattr__(self, "delays", delays)
        object.__setattr__(self, "powers", powers / powers.sum())

    @property
    def n_taps(self) -> int:
        return self.delays.size

    @classmethod
    def exponential(cls, n_taps: int = 6, spacing: float = 10e-9, decay: float = 30e-9):
        delays = spacing * np.arange(n_taps)
        return cls(delays, np.exp(-delays / decay))

    @classmethod
    def model_b(cls):
        """HIPERLAN/2 model B: 18-tap NLOS office profile, about 100 ns rms delay spread."""
        return cls(1e-9 * np.asarray(_MODEL_B_NS, dtype=float), 10.0 ** (np.asarray(_MODEL_B_DB) / 10.0))

    @classmethod
    def flat(cls):
        return cls([0.0], [1.0])

    @classmethod
    def from_json(cls, path: str | Path) -> "PowerDelayProfile":
        with open(path) as fh:
            taps = json.load(fh)
        return cls([1e-9 * t["delay_ns"] for t in taps], [t["power"] for t in taps])

    def to_json_obj(self) -> list[dict]:
        return [{"delay_ns": float(d * 1e9), "power": float(p)} for d, p in zip(self.delays, self.powers)]


@dataclass(frozen=True)
class LinkBudget:
    """Large-scale link parameters. Defaults give -20 dBm mean receive power at a tag."""

    center_freq: float = 5.18e9
    bandwidth: float = 10e6
    eirp_dbm: float = 36.0
    path_loss_db: float = 58.0
    tag_gain_dbi: float = 2.0
    reader_gain_dbi: float = 2.0

    @classmethod
    def unit(cls, **kw) -> "LinkBudget":
        """Budget with 0 dB net gain on both links."""
        return cls(path_loss_db=0.0, tag_gain_dbi=0.0, reader_gain_dbi=0.0, **kw)

    @property
    def tx_power(self) -> float:
        """Transmit power in W; the transmit antenna gain is folded into the EIRP."""
        return 10.0 ** ((self.eirp_dbm - 30.0) / 10.0)

    @property
    def forward_gain(self) -> float:
        return 10.0 ** ((self.tag_gain_dbi - self.path_loss_db) / 10.0)

    @property
    def backward_gain(self) -> float:
        return 10.0 ** ((self.tag_gain_dbi + self.reader_gain_dbi - self.path_loss_db) / 10.0)

    def tone_frequencies(self, n_tones: int) -> np.ndarray:
        df = self.bandwidth / n_tones
        return self.center_freq + (np.arange(n_tones) - (n_tones - 1) / 2.0) * df


@dataclass(frozen=True)
class ChannelRealization:
    forward: np.ndarray  # K x N
    backward: np.ndarray  # K x N

    def __post_init__(self):
        fwd = np.atleast_2d(np.asarray(self.forward, dtype=complex))
        bwd = np.atleast_2d(np.asarray(self.backward, dtype=complex))
        if fwd.shape != bwd.shape:
            raise ValueError("forward and backward shapes differ")
        object.__setattr__(self, "forward", fwd)
        object.__setattr__(self, "backward", bwd)

    @property
    def n_tags(self) -> int:
        return self.forward.shape[0]

    @property
    def n_tones(self) -> int:
        return self.forward.shape[1]

    @property
    def backscatter(self) -> np.ndarray:
        return self.forward * self.backward

    def signal_diag(self, j: int) -> np.ndarray:
        """Diagonal of ``H_j``."""
        return self.backscatter[j]

    def interference_diag(self, j: int) -> np.ndarray:
        """Diagonal of ``H~_j``, the summed backscatter gain of every other tag."""
        bs = self.backscatter
        return bs.sum(axis=0) - bs[j] if self.n_tags > 1 else np.zeros(self.n_tones, complex)

    def H(self, j: int) -> np.ndarray:
        return np.diag(self.signal_diag(j))

    def H_interf(self, j: int) -> np.ndarray:
        return np.diag(self.interference_diag(j))

    def subset(self, tags) -> "ChannelRealization":
        tags = list(tags)
        return ChannelRealization(self.forward[tags], self.backward[tags])

    def to_json_obj(self) -> dict:
        def enc(a):
            return {"real": a.real.tolist(), "imag": a.imag.tolist()}

        return {"forward": enc(self.forward), "backward": enc(self.backward)}

    @classmethod
    def from_json_obj(cls, obj: dict) -> "ChannelRealization":
        def dec(d):
            return np.asarray(d["real"], dtype=float) + 1j * np.asarray(d["imag"], dtype=float)

        return cls(dec(obj["forward"]), dec(obj["backward"]))

    def save(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_obj(), fh)

    @classmethod
    def load(cls, path: str | Path) -> "ChannelRealization":
        with open(path) as fh:
            return cls.from_json_obj(json.load(fh))


def reciprocal_backward(forward: np.ndarray) -> np.ndarray:
    return np.array(forward, dtype=complex, copy=True)


def draw_taps(pdp: PowerDelayProfile, n_tags: int, rng: np.random.Generator) -> np.ndarray:
    """CN(0, beta_l) taps, shape ``(n_tags, L)``."""
    scale = np.sqrt(pdp.powers / 2.0)
    re = rng.standard_normal((n_tags, pdp.n_taps))
    im = rng.standard_normal((n_tags, pdp.n_taps))
    return (re + 1j * im) * scale


def frequency_response(taps: np.ndarray, delays: np.ndarray, freqs: np.ndarray) -> np.ndarray:
    """``h[j, n] = sum_l taps[j, l] exp(-i 2 pi f_n tau_l)``."""
    phase = np.exp(-2j * np.pi * np.outer(delays, freqs))  # L x N
    return taps @ phase


def draw_realization(
    pdp: PowerDelayProfile,
    n_tags: int,
    n_tones: int,
    rng: np.random.Generator,
    budget: LinkBudget = LinkBudget(),
    reciprocal: bool = False,
) -> ChannelRealization:
    """Draw one forward/backward realization.

    Forward taps are drawn first, then backward taps, so the forward channel
    of a given RNG stream does not depend on the reciprocity flag or on N.
    """
    freqs = budget.tone_frequencies(n_tones)
    fwd_taps = draw_taps(pdp, n_tags, rng)
    bwd_taps = draw_taps(pdp, n_tags, rng)
    forward = np.sqrt(budget.forward_gain) * frequency_response(fwd_taps, pdp.delays, freqs)
    if reciprocal:
        backward = reciprocal_backward(forward)
    else:
        backward = np.sqrt(budget.backward_gain) * frequency_response(bwd_taps, pdp.delays, freqs)
    return ChannelRealization(forward, backward)


def stream(seed: int, index: int) -> np.random.Generator:
    """Independent RNG stream ``index`` derived from ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(int(index),)))


def tag_stream(seed: int, index: int, tag: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(int(index), int(tag))))


def draw_tagwise(
    pdp: PowerDelayProfile,
    n_tags: int,
    n_tones: int,
    seed: int,
    index: int,
    budget: LinkBudget = LinkBudget(),
    reciprocal: bool = False,
) -> ChannelRealization:
    """Realization ``index`` with every tag on its own RNG stream.

    Tag j's channels depend only on ``(seed, index, j)`` and the tone grid, so
    sweeps over the number of tags compare like with like.
    """
    rows = [draw_realization(pdp, 1, n_tones, tag_stream(seed, index, j), budget, reciprocal) for j in range(n_tags)]
    return ChannelRealization(
        np.vstack([r.forward for r in rows]),
        np.vstack([r.backward for r in rows]),
    )

