"""Experiment orchestration: tradeoff sweeps, model comparison, TDMA baseline, (K, N) grids.

Every runner takes a plain JSON-able parameter dict so that a run can be
written to a manifest and re-executed later by ``replay``.
"""

from __future__ import annotations

import csv
import dataclasses
import enum
import hashlib
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .algorithms import (
    FeasibilityResult,
    algorithm1_feasibility,
    design_metric,
    algorithm2_optimize,
    algorithm3_simplified,
    single_tone_bound,
)
from .channel import ChannelRealization, LinkBudget, PowerDelayProfile, draw_tagwise
from .checks import check_solution
from .config import EHModel, SystemConfig, db_to_linear, linear_to_db
from .conic import NumericalTrouble
from .harvest import build_m_diagonals, z_dc_scalar
from .link import mmse_combiners, sinr_all
from .rank_one import ExtractionError

log = logging.getLogger(__name__)

CHECK_TOL = 1e-6
DEFAULT_GRID_START_DB = -10.0
DEFAULT_GRID_STEP_DB = 2.0


class Algorithm(str, enum.Enum):
    ALG2 = "Alg2"
    ALG3 = "Alg3"


class DesignChannel(str, enum.Enum):
    FORWARD = "Forward"
    BACKSCATTER_ONLY = "BackscatterOnly"


def noise_for_snr(snr_db: float, budget: LinkBudget = LinkBudget()) -> float:
    """Noise variance for a reader SNR ``P / sigma^2`` measured on the normalised channel.

    The two large-scale gains are folded in so that ``snr_db`` keeps its meaning
    whatever the path loss.
    """
    return budget.tx_power * budget.forward_gain * budget.backward_gain / float(db_to_linear(snr_db))


def make_config(n_tags: int, n_tones: int, snr_db: float = 20.0, budget: LinkBudget = LinkBudget(), **kw) -> SystemConfig:
    kw.setdefault("sinr_targets", (1.0,) * n_tags)
    return SystemConfig(
        n_tones=n_tones,
        n_tags=n_tags,
        tx_power=budget.tx_power,
        noise_var=noise_for_snr(snr_db, budget),
        **kw,
    )


# --------------------------------------------------------------------------
# specs and results


@dataclass(frozen=True)
class SweepSpec:
    config: SystemConfig
    targets_db: tuple[float, ...] | None = None  # None: per-realization default grid
    seed: int = 0
    realizations: int = 1
    channel_file: str | None = None
    eh_model: EHModel = EHModel.NONLINEAR_4TH
    algorithm: Algorithm = Algorithm.ALG2
    design: DesignChannel = DesignChannel.FORWARD
    anchors: bool = True
    out: str | None = None

    def __post_init__(self):
        if self.targets_db is not None:
            grid = tuple(float(t) for t in self.targets_db)
            if list(grid) != sorted(grid):
                raise ValueError("targets_db must be sorted ascending")
            object.__setattr__(self, "targets_db", grid)
        if self.realizations < 1:
            raise ValueError("realizations must be >= 1")
        object.__setattr__(self, "eh_model", EHModel(self.eh_model))
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))
        object.__setattr__(self, "design", DesignChannel(self.design))

    def to_params(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}
        out["config"] = self.config.to_dict()
        out["targets_db"] = None if self.targets_db is None else list(self.targets_db)
        for key in ("eh_model", "algorithm", "design"):
            out[key] = out[key].value
        out.pop("out")
        return out

    @classmethod
    def from_params(cls, params: dict, out=None) -> "SweepSpec":
        p = dict(params)
        p["config"] = SystemConfig.from_dict(p["config"])
        return cls(out=out, **p)


@dataclass
class TradeoffPoint:
    realization: int
    target_db: float
    target: float
    feasible: bool
    z_dc: float | None
    per_tag: tuple[float, ...] | None
    sinrs: tuple[float, ...] | None
    iterations: int
    method: str
    seconds: float = 0.0
    delta_star: float = float("nan")
    relaxed_zdc: float | None = None
    trouble: bool = False
    trace: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.feasible and self.z_dc is not None:
            raise ValueError("an infeasible point carries no Z_DC")

    @property
    def sort_key(self):
        return (self.realization, self.target)


def load_channels(path: str | Path) -> list[ChannelRealization]:
    """A saved realization, or a JSON list of them."""
    with open(path) as fh:
        doc = json.load(fh)
    docs = doc if isinstance(doc, list) else [doc]
    return [ChannelRealization.from_json_obj(d) for d in docs]


def save_channels(channels, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump([c.to_json_obj() for c in channels], fh)


def sweep_channels(spec: SweepSpec) -> list[tuple[int, ChannelRealization]]:
    cfg = spec.config
    if spec.channel_file:
        chans = load_channels(spec.channel_file)
        for c in chans:
            if (c.n_tags, c.n_tones) != (cfg.n_tags, cfg.n_tones):
                raise ValueError(f"channel file has shape {(c.n_tags, c.n_tones)}, config wants {(cfg.n_tags, cfg.n_tones)}")
        return list(enumerate(chans))
    pdp = PowerDelayProfile.model_b()
    return [(r, draw_tagwise(pdp, cfg.n_tags, cfg.n_tones, spec.seed, r)) for r in range(spec.realizations)]


def default_grid(cfg: SystemConfig, channel) -> tuple[float, ...]:
    """-10 dB up to the worst tag's single-tone SNR bound, in 2 dB steps."""
    top = float(linear_to_db(np.min(single_tone_bound(cfg, channel))))
    if top < DEFAULT_GRID_START_DB:
        return (DEFAULT_GRID_START_DB,)
    return tuple(np.arange(DEFAULT_GRID_START_DB, top + 1e-9, DEFAULT_GRID_STEP_DB).tolist())


# --------------------------------------------------------------------------
# single design point


def _optimizer(algorithm: Algorithm):
    return algorithm2_optimize if algorithm is Algorithm.ALG2 else algorithm3_simplified


def solve_point(
    cfg: SystemConfig,
    channel,
    target: float,
    realization: int = 0,
    algorithm: Algorithm = Algorithm.ALG2,
    design: DesignChannel = DesignChannel.FORWARD,
    score_cfg: SystemConfig | None = None,
    target_db: float | None = None,
    warm_candidates=(),
) -> tuple[TradeoffPoint, np.ndarray | None]:
    """Feasibility search then, if feasible, the selected optimizer.

    ``score_cfg`` picks the metric the final waveform is reported under (the
    design metric by default). ``warm_candidates`` are extra waveforms that may
    replace the feasibility waveform as the optimizer's starting point: the
    feasible one with the best design metric wins. Returns the point and the
    waveform.
    """
    start = time.perf_counter()
    cfg = cfg.replace(sinr_targets=(float(target),) * cfg.n_tags)
    score_cfg = cfg if score_cfg is None else score_cfg.replace(sinr_targets=cfg.sinr_targets)
    tdb = float(linear_to_db(target)) if target_db is None else target_db
    trace: dict = {}

    def fail(method, feas=None, trouble=False):
        return TradeoffPoint(
            realization, tdb, float(target), False, None, None,
            None if feas is None else tuple(sinr_all(feas.waveform, feas.combiners, channel, cfg.noise_var).tolist()),
            0 if feas is None else feas.iterations, method, time.perf_counter() - start,
            float("nan") if feas is None else feas.delta_star, None, trouble, trace,
        )

    try:
        feas = algorithm1_feasibility(cfg, channel)
    except NumericalTrouble as exc:
        log.warning("feasibility search failed: %s", exc)
        return fail("NumericalTrouble", trouble=True), None
    trace.update(delta_trace=list(feas.delta_trace), feasibility_events=list(feas.events))
    if not feas.feasible:
        return fail("Infeasible", feas), None
    gains = channel.backscatter if design is DesignChannel.BACKSCATTER_ONLY else None
    warm = pick_warm_start(cfg, channel, feas, warm_candidates, gains)
    if warm is not feas:
        trace["warm_start"] = "candidate"
    try:
        sol = _optimizer(algorithm)(cfg, channel, warm, design_gains=gains)
    except NumericalTrouble as exc:
        log.warning("optimizer failed: %s", exc)
        return fail("NumericalTrouble", feas, trouble=True), None
    except ExtractionError as exc:
        log.warning("rank-one extraction failed: %s", exc)
        return fail("ExtractionError", feas), None
    trace.update(gamma_trace=list(sol.gamma_trace), optimizer_events=list(sol.events))
    if not check_solution(sol.waveform, sol.combiners, channel, cfg, tol=CHECK_TOL).ok:
        # never report a point the independent checker rejects
        return fail("CheckFailed", feas), None
    score = z_dc_scalar(sol.waveform, channel, score_cfg)
    point = TradeoffPoint(
        realization, tdb, float(target), True, score.total, tuple(score.per_tag.tolist()),
        tuple(sol.sinrs.tolist()), sol.iterations, sol.method.value, time.perf_counter() - start,
        feas.delta_star, sol.relaxed_zdc, False, trace,
    )
    return point, sol.waveform


def pick_warm_start(cfg, channel, feas: FeasibilityResult, candidates, design_gains=None) -> FeasibilityResult:
    """The feasibility result, or a copy carrying a better feasible candidate waveform."""
    mset = build_m_diagonals(channel) if design_gains is None else build_m_diagonals(gains=design_gains)

    def metric(w):
        return design_metric(mset.traces(np.outer(w, np.conj(w))), cfg)

    best, best_val = feas, metric(feas.waveform)
    for w in candidates:
        if w is None:
            continue
        w = np.asarray(w, dtype=complex)
        try:
            g = mmse_combiners(w, channel, cfg.noise_var)
        except np.linalg.LinAlgError:
            continue
        if not check_solution(w, g, channel, cfg, tol=0.0).ok:
            continue
        val = metric(w)
        if val > best_val:
            best, best_val = dataclasses.replace(feas, waveform=w, combiners=g), val
    return best


def max_snr_anchor(cfg: SystemConfig, channel, realization: int = 0) -> TradeoffPoint:
    """Single-tag endpoint: full power on the tone maximising ``|h_n h^b_n|``."""
    if channel.n_tags != 1:
        raise ValueError("the single-tone anchor is defined for one tag")
    start = time.perf_counter()
    tone = int(np.argmax(np.abs(channel.backscatter[0])))
    w = np.zeros(channel.n_tones, complex)
    w[tone] = np.sqrt(2.0 * cfg.tx_power)
    if cfg.psd_limit is not None:
        w[tone] = min(w[tone].real, np.sqrt(2.0 * cfg.psd_limit))
    g = mmse_combiners(w, channel, cfg.noise_var)
    rho = float(sinr_all(w, g, channel, cfg.noise_var)[0])
    score = z_dc_scalar(w, channel, cfg)
    return TradeoffPoint(
        realization, float(linear_to_db(rho)), rho, True, score.total, tuple(score.per_tag.tolist()),
        (rho,), 0, "SingleTone", time.perf_counter() - start, 1.0,
    )


# --------------------------------------------------------------------------
# experiments


def trace_region(spec: SweepSpec) -> list[TradeoffPoint]:
    """SINR-target sweep per realization, with the two endpoint anchors."""
    cfg = spec.config.replace(eh_model=spec.eh_model)
    points = []
    for r, ch in sweep_channels(spec):
        grid = spec.targets_db if spec.targets_db is not None else default_grid(cfg, ch)
        points += _sweep_one(cfg, ch, r, grid, spec.algorithm, spec.design, spec.anchors)[0]
    return sorted(points, key=lambda p: p.sort_key)


def _sweep_one(cfg, ch, r, grid, algorithm, design, anchors=True, score_cfg=None, carry=True):
    """Points for one realization and their waveforms.

    With ``carry`` the grid is walked from the top down so each point may start
    from the pure-WPT waveform or from the solution one step higher, both of
    which stay feasible at lower targets.
    """
    points, waves = [], []
    wpt, w_wpt = solve_point(cfg, ch, 0.0, r, algorithm, design, score_cfg, target_db=-math.inf)
    if anchors:
        points.append(wpt)
        waves.append(w_wpt)
    prev = None
    for tdb in sorted(grid, reverse=True):
        cands = (w_wpt, prev) if carry else ()
        p, w = solve_point(cfg, ch, float(db_to_linear(tdb)), r, algorithm, design, score_cfg, tdb, cands)
        points.append(p)
        waves.append(w)
        if w is not None:
            prev = w
    if anchors and cfg.n_tags == 1:
        points.append(max_snr_anchor(cfg, ch, r))
        waves.append(None)
    return points, waves


@dataclass
class ModelPair:
    realization: int
    target_db: float
    feasible: bool
    z_nonlinear: float | None
    z_linear: float | None
    method_nonlinear: str
    method_linear: str
    trouble: bool = False

    @property
    def gap(self) -> float | None:
        if self.z_nonlinear is None or self.z_linear is None:
            return None
        return self.z_nonlinear - self.z_linear


def compare_models(spec: SweepSpec) -> list[ModelPair]:
    """Nonlinear- and linear-designed waveforms, both scored with the nonlinear metric."""
    nl = spec.config.replace(eh_model=EHModel.NONLINEAR_4TH)
    lin = spec.config.replace(eh_model=EHModel.LINEAR_2ND)
    pairs = []
    for r, ch in sweep_channels(spec):
        grid = spec.targets_db if spec.targets_db is not None else default_grid(nl, ch)
        a_pts, _ = _sweep_one(nl, ch, r, grid, spec.algorithm, spec.design, anchors=False)
        b_pts, _ = _sweep_one(lin, ch, r, grid, spec.algorithm, spec.design, anchors=False, score_cfg=nl)
        for a, b in zip(sorted(a_pts, key=lambda p: p.target), sorted(b_pts, key=lambda p: p.target)):
            both = a.feasible and b.feasible
            pairs.append(
                ModelPair(
                    r, a.target_db, both,
                    a.z_dc if both else None, b.z_dc if both else None,
                    a.method, b.method, a.trouble or b.trouble,
                )
            )
    return sorted(pairs, key=lambda p: (p.realization, p.target_db))


DEFAULT_SPLITS = tuple((t, 10 - t) for t in range(11))


@dataclass
class TdmaRow:
    scheme: str  # "simultaneous" or "tdma"
    t1: int | None
    t2: int | None
    avg_z_dc: float
    avg_tag: tuple[float, float]


@dataclass
class TdmaResult:
    rows: list[TdmaRow]
    used: list[int]  # realizations where every scheme was feasible
    dropped: list[int]
    trouble: bool = False


def tdma_comparison(
    cfg: SystemConfig,
    realizations: int = 20,
    seed: int = 0,
    splits=DEFAULT_SPLITS,
    energy_conserving: bool = False,
    algorithm: Algorithm = Algorithm.ALG2,
) -> TdmaResult:
    """Simultaneous service of two tags against time-sharing.

    In a TDMA slot only its owner is served (the other tag is silent and
    harvests nothing), so over ``T1 + T2 = 10`` slots tag j averages
    ``T_j / 10`` of its single-tag optimum. With ``energy_conserving`` a slot
    owner gets ``10 P / T_j`` instead of ``P``.

    Averages run over ``realizations`` channel draws on which every scheme is
    feasible; draws are taken in stream order, at most ``10 * realizations``.
    """
    if cfg.n_tags != 2:
        raise ValueError("the TDMA comparison is defined for two tags")
    splits = [tuple(int(x) for x in s) for s in splits]
    for s in splits:
        if len(s) != 2 or min(s) < 0 or sum(s) != 10:
            raise ValueError(f"slot split {s} must be two nonnegative integers summing to 10")
    pdp = PowerDelayProfile.model_b()
    sim_z, tdma_z, used, dropped = [], [], [], []
    trouble = False
    for r in range(10 * realizations):
        if len(used) == realizations:
            break
        ch = draw_tagwise(pdp, 2, cfg.n_tones, seed, r)
        p, _ = solve_point(cfg, ch, cfg.targets[0], r, algorithm)
        trouble |= p.trouble
        ok = p.feasible
        single: dict[tuple[int, int], float] = {}
        for j in (0, 1):
            sub = ch.subset([j])
            slots = {s[j] for s in splits if s[j] > 0}
            powers = {t: (cfg.tx_power * 10 / t if energy_conserving else cfg.tx_power) for t in slots}
            cache: dict[float, float | None] = {}
            for t in sorted(slots):
                pw = powers[t]
                if pw not in cache:
                    c1 = cfg.replace(
                        n_tags=1, tx_power=pw, sinr_targets=(cfg.targets[j],), tag_weights=(cfg.weights[j],)
                    )
                    q, _ = solve_point(c1, sub, cfg.targets[j], r, algorithm)
                    trouble |= q.trouble
                    cache[pw] = q.z_dc if q.feasible else None
                single[(j, t)] = cache[pw]
        if not ok or any(v is None for v in single.values()):
            dropped.append(r)
            continue
        used.append(r)
        sim_z.append(p.per_tag)
        tdma_z.append(
            [
                [s[j] / 10 * single[(j, s[j])] if s[j] > 0 else 0.0 for j in (0, 1)]
                for s in splits
            ]
        )
    rows = []
    if used:
        sim = np.mean(np.asarray(sim_z), axis=0)
        rows.append(TdmaRow("simultaneous", None, None, float(sim.sum()), (float(sim[0]), float(sim[1]))))
        td = np.mean(np.asarray(tdma_z), axis=0)  # splits x 2
        for s, tags in zip(splits, td):
            rows.append(TdmaRow("tdma", s[0], s[1], float(tags.sum()), (float(tags[0]), float(tags[1]))))
    return TdmaResult(rows, used, dropped, trouble)


@dataclass(frozen=True)
class Variant:
    eh_model: EHModel = EHModel.NONLINEAR_4TH
    algorithm: Algorithm = Algorithm.ALG2
    design: DesignChannel = DesignChannel.FORWARD

    def __post_init__(self):
        object.__setattr__(self, "eh_model", EHModel(self.eh_model))
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))
        object.__setattr__(self, "design", DesignChannel(self.design))

    @property
    def label(self) -> str:
        return f"{self.eh_model.value}/{self.algorithm.value}/{self.design.value}"

    def to_list(self) -> list[str]:
        return [self.eh_model.value, self.algorithm.value, self.design.value]


DEFAULT_VARIANTS = (
    Variant(EHModel.NONLINEAR_4TH, Algorithm.ALG2),
    Variant(EHModel.NONLINEAR_4TH, Algorithm.ALG3),
    Variant(EHModel.LINEAR_2ND, Algorithm.ALG2),
    Variant(EHModel.LINEAR_2ND, Algorithm.ALG3),
    Variant(EHModel.NONLINEAR_4TH, Algorithm.ALG2, DesignChannel.BACKSCATTER_ONLY),
)


@dataclass
class KnCell:
    n_tags: int
    n_tones: int
    variant: Variant
    mean_z_dc: float  # nan when no realization was feasible
    mean_per_tag: float
    n_feasible: int
    n_total: int

    @property
    def failure_rate(self) -> float:
        return 1.0 - self.n_feasible / self.n_total


def zdc_vs_kn(
    cells,
    target_db: float = 3.0,
    realizations: int = 30,
    seed: int = 0,
    snr_db: float = 20.0,
    variants=DEFAULT_VARIANTS,
    template: SystemConfig | None = None,
) -> tuple[list[KnCell], bool]:
    """Average Z_DC per (K, N) cell and design variant, all scored with the nonlinear metric.

    Each point may start from the variant's pure-WPT waveform when that meets
    the targets (see ``solve_point``).

    ``template`` supplies the rectenna, tolerance, caps and RNG seed. Returns
    the cells and whether any solve hit numerical trouble.
    """
    pdp = PowerDelayProfile.model_b()
    target = float(db_to_linear(target_db))
    out, trouble = [], False
    for k, n in cells:
        if n < k:
            raise ValueError(f"cell (K={k}, N={n}) needs N >= K")
        base = make_config(k, n, snr_db)
        if template is not None:
            base = base.replace(
                rectenna=template.rectenna, tolerance=template.tolerance,
                psd_limit=template.psd_limit, rng_seed=template.rng_seed,
            )
        score = base.replace(eh_model=EHModel.NONLINEAR_4TH)
        vals = {v: [] for v in variants}
        for r in range(realizations):
            ch = draw_tagwise(pdp, k, n, seed, r)
            wpt: dict = {}
            for v in variants:
                cfg = base.replace(eh_model=v.eh_model)
                key = (v.eh_model, v.design)
                if key not in wpt:
                    q, wpt[key] = solve_point(cfg, ch, 0.0, r, Algorithm.ALG2, v.design)
                    trouble |= q.trouble
                p, _ = solve_point(cfg, ch, target, r, v.algorithm, v.design, score_cfg=score, warm_candidates=(wpt[key],))
                trouble |= p.trouble
                if p.feasible:
                    vals[v].append(p.z_dc)
        for v in variants:
            z = vals[v]
            mean = float(np.mean(z)) if z else float("nan")
            out.append(KnCell(k, n, v, mean, mean / k, len(z), realizations))
    return out, trouble


# --------------------------------------------------------------------------
# persistence


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_points_csv(points, path: str | Path, n_tags: int) -> None:
    """One row per point; wall-clock seconds go to a ``.seconds.csv`` sidecar."""
    path = Path(path)
    header = ["realization", "target_db", "feasible", "z_dc_total"]
    header += [f"z_dc_tag_{j + 1}" for j in range(n_tags)]
    header += [f"sinr_tag_{j + 1}" for j in range(n_tags)]
    header += ["iters", "method"]
    points = sorted(points, key=lambda p: p.sort_key)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for p in points:
            per_tag = list(p.per_tag) if p.per_tag else [None] * n_tags
            sinrs = list(p.sinrs) if p.sinrs else [None] * n_tags
            w.writerow([_fmt(v) for v in [p.realization, p.target_db, p.feasible, p.z_dc, *per_tag, *sinrs, p.iterations, p.method]])
    with open(path.with_suffix(".seconds.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["realization", "target_db", "seconds"])
        for p in points:
            w.writerow([p.realization, _fmt(p.target_db), f"{p.seconds:.6f}"])


def write_traces(points, path: str | Path) -> None:
    doc = [
        {"realization": p.realization, "target_db": p.target_db, "method": p.method, **p.trace}
        for p in sorted(points, key=lambda p: p.sort_key)
    ]
    Path(path).write_text(json.dumps(doc, indent=1, default=float))


def write_pairs_csv(pairs, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["realization", "target_db", "feasible", "z_dc_nonlinear", "z_dc_linear", "gap", "method_nonlinear", "method_linear"])
        for p in pairs:
            w.writerow([_fmt(v) for v in [p.realization, p.target_db, p.feasible, p.z_nonlinear, p.z_linear, p.gap, p.method_nonlinear, p.method_linear]])


def write_tdma_csv(res: TdmaResult, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scheme", "t1", "t2", "avg_z_dc_total", "avg_z_dc_tag_1", "avg_z_dc_tag_2", "realizations_used"])
        for row in res.rows:
            w.writerow([_fmt(v) for v in [row.scheme, row.t1, row.t2, row.avg_z_dc, *row.avg_tag, len(res.used)]])


def write_kn_csv(cells, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n_tags", "n_tones", "eh_model", "algorithm", "design", "mean_z_dc", "mean_z_dc_per_tag", "n_feasible", "n_total", "failure_rate"])
        for c in cells:
            w.writerow([_fmt(v) for v in [c.n_tags, c.n_tones, *c.variant.to_list(), c.mean_z_dc, c.mean_per_tag, c.n_feasible, c.n_total, c.failure_rate]])


def file_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# --------------------------------------------------------------------------
# commands and replay


@dataclass
class RunOutcome:
    outputs: list[str]  # CSV file names inside the output directory
    trouble: bool
    any_feasible: bool


def _run_region(params, out: Path, traces: bool) -> RunOutcome:
    spec = SweepSpec.from_params(params, out=str(out))
    points = trace_region(spec)
    write_points_csv(points, out / "region.csv", spec.config.n_tags)
    if traces:
        write_traces(points, out / "region.traces.json")
    grid_points = [p for p in points if p.method != "SingleTone"]
    return RunOutcome(["region.csv"], any(p.trouble for p in points), any(p.feasible for p in grid_points))


def _run_compare(params, out: Path, traces: bool) -> RunOutcome:
    spec = SweepSpec.from_params(params, out=str(out))
    pairs = compare_models(spec)
    write_pairs_csv(pairs, out / "compare_models.csv")
    return RunOutcome(["compare_models.csv"], any(p.trouble for p in pairs), any(p.feasible for p in pairs))


def _run_tdma(params, out: Path, traces: bool) -> RunOutcome:
    cfg = SystemConfig.from_dict(params["config"])
    res = tdma_comparison(
        cfg, params["realizations"], params["seed"], [tuple(s) for s in params["splits"]],
        params["energy_conserving"], Algorithm(params["algorithm"]),
    )
    write_tdma_csv(res, out / "tdma.csv")
    return RunOutcome(["tdma.csv"], res.trouble, bool(res.used))


def _run_grid(params, out: Path, traces: bool) -> RunOutcome:
    template = SystemConfig.from_dict(params["config"]) if params.get("config") else None
    cells, trouble = zdc_vs_kn(
        [tuple(c) for c in params["cells"]], params["target_db"], params["realizations"], params["seed"],
        params["snr_db"], [Variant(*v) for v in params["variants"]], template,
    )
    write_kn_csv(cells, out / "grid.csv")
    return RunOutcome(["grid.csv"], trouble, any(c.n_feasible for c in cells))


RUNNERS = {
    "region": _run_region,
    "compare-models": _run_compare,
    "tdma": _run_tdma,
    "grid": _run_grid,
}


def run_command(command: str, params: dict, out: str | Path, traces: bool = False) -> RunOutcome:
    """Run one experiment, write its CSVs and a replay manifest into ``out``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    outcome = RUNNERS[command](params, out, traces)
    cfg_doc = params.get("config")
    manifest = {
        "command": command,
        "params": params,
        "config_hash": SystemConfig.from_dict(cfg_doc).digest() if cfg_doc else None,
        "seed": params.get("seed"),
        "code_version": __version__,
        "outputs": {name: file_digest(out / name) for name in outcome.outputs},
    }
    if params.get("channel_file"):
        manifest["channel_file_sha256"] = file_digest(params["channel_file"])
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return outcome


@dataclass
class ReplayReport:
    outcome: RunOutcome
    mismatched: list[str]

    @property
    def identical(self) -> bool:
        return not self.mismatched


def replay(manifest_path: str | Path, out: str | Path) -> ReplayReport:
    """Re-execute a manifest into ``out`` and compare every CSV byte for byte."""
    manifest = json.loads(Path(manifest_path).read_text())
    params = manifest["params"]
    if "channel_file_sha256" in manifest and file_digest(params["channel_file"]) != manifest["channel_file_sha256"]:
        raise ValueError("channel file changed since the manifest was written")
    if manifest.get("code_version") != __version__:
        log.warning("manifest written by version %s, replaying with %s", manifest.get("code_version"), __version__)
    outcome = run_command(manifest["command"], params, out)
    bad = [name for name, digest in manifest["outputs"].items() if file_digest(Path(out) / name) != digest]
    return ReplayReport(outcome, bad)
