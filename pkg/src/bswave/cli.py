"""Command-line entry point: ``bswave {region,compare-models,tdma,grid,replay}``.

Exit codes: 0 on success, 2 if any conic solve ran into numerical trouble,
3 if no point of the sweep was feasible, 1 on bad input or a replay that did
not reproduce.
"""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from .config import ConfigError, SystemConfig, db_to_linear
from .harness import DEFAULT_SPLITS, DEFAULT_VARIANTS, Algorithm, DesignChannel, SweepSpec, make_config, replay, run_command

EXIT_OK, EXIT_FAILURE, EXIT_TROUBLE, EXIT_INFEASIBLE = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors, which is taken by EXIT_TROUBLE
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_FAILURE, f"{self.prog}: error: {message}\n")


def parse_grid(text: str) -> list[float]:
    """``"0,5,10"`` or ``"start:stop:step"`` (stop inclusive)."""
    if ":" in text:
        start, stop, step = (float(x) for x in text.split(":"))
        if step <= 0:
            raise argparse.ArgumentTypeError("grid step must be positive")
        return np.arange(start, stop + 1e-9 * abs(step), step).round(12).tolist()
    return sorted(float(x) for x in text.split(",") if x.strip())


def parse_cells(text: str) -> list[tuple[int, int]]:
    cells = []
    for item in text.split(","):
        k, n = item.lower().split("x")
        cells.append((int(k), int(n)))
    return cells


def parse_splits(text: str) -> list[tuple[int, int]]:
    return [tuple(int(x) for x in item.split("/")) for item in text.split(",")]


def _config(args, n_tags, n_tones, snr_db) -> SystemConfig:
    if args.config:
        return SystemConfig.from_json(args.config)
    return make_config(n_tags, n_tones, snr_db)


def _common(p, tags=1, tones=8, snr_db=20.0):
    p.add_argument("--config", help="SystemConfig JSON; overrides --tags/--tones/--snr-db")
    p.add_argument("--tags", type=int, default=tags)
    p.add_argument("--tones", type=int, default=tones)
    p.add_argument("--snr-db", type=float, default=snr_db, help="reader SNR P/sigma^2 on the normalised channel")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--realizations", type=int, default=1)
    p.add_argument("--algorithm", choices=[a.value for a in Algorithm], default=Algorithm.ALG2.value)
    p.add_argument("--out", required=True, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="bswave", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    for name in ("region", "compare-models"):
        p = sub.add_parser(name)
        _common(p)
        p.add_argument("--targets-db", type=parse_grid, help="SINR grid, default -10 dB to the single-tone bound in 2 dB steps")
        p.add_argument("--channel-file", help="saved realization(s) to use instead of drawing")
        p.add_argument("--design", choices=[d.value for d in DesignChannel], default=DesignChannel.FORWARD.value)
        if name == "region":
            p.add_argument("--eh-model", choices=["Nonlinear4th", "Linear2nd"], default="Nonlinear4th")
            p.add_argument("--no-anchors", action="store_true")
            p.add_argument("--traces", action="store_true", help="also write per-point iteration traces as JSON")

    p = sub.add_parser("tdma")
    _common(p, tags=2, tones=8, snr_db=10.0)
    p.set_defaults(realizations=20)
    p.add_argument("--target-db", type=float, default=10.0)
    p.add_argument("--splits", type=parse_splits, default=list(DEFAULT_SPLITS), help='e.g. "1/9,5/5,9/1"')
    p.add_argument("--energy-conserving", action="store_true", help="slot owner transmits 10P/T_j instead of P")

    p = sub.add_parser("grid")
    _common(p)
    p.set_defaults(realizations=30)
    p.add_argument("--cells", type=parse_cells, default=[(1, 4), (2, 4), (3, 4), (1, 8), (2, 8), (3, 8)], help='e.g. "1x4,2x8"')
    p.add_argument("--target-db", type=float, default=3.0)
    p.add_argument("--variants", default=",".join(v.label for v in DEFAULT_VARIANTS), help="model/algorithm/design triples")

    p = sub.add_parser("replay")
    p.add_argument("manifest")
    p.add_argument("--out", required=True)
    return ap


def params_from_args(args) -> dict:
    cmd = args.command
    if cmd in ("region", "compare-models"):
        cfg = _config(args, args.tags, args.tones, args.snr_db)
        spec = SweepSpec(
            config=cfg,
            targets_db=args.targets_db,
            seed=args.seed,
            realizations=args.realizations,
            channel_file=args.channel_file,
            eh_model=getattr(args, "eh_model", "Nonlinear4th"),
            algorithm=args.algorithm,
            design=args.design,
            anchors=not getattr(args, "no_anchors", False),
        )
        return spec.to_params()
    if cmd == "tdma":
        cfg = _config(args, 2, args.tones, args.snr_db)
        cfg = cfg.replace(sinr_targets=(float(db_to_linear(args.target_db)),) * cfg.n_tags)
        return {
            "config": cfg.to_dict(),
            "seed": args.seed,
            "realizations": args.realizations,
            "splits": [list(s) for s in args.splits],
            "energy_conserving": args.energy_conserving,
            "algorithm": args.algorithm,
        }
    if cmd == "grid":
        return {
            "config": SystemConfig.from_json(args.config).to_dict() if args.config else None,
            "cells": [list(c) for c in args.cells],
            "target_db": args.target_db,
            "seed": args.seed,
            "realizations": args.realizations,
            "snr_db": args.snr_db,
            "variants": [v.split("/") for v in args.variants.split(",")],
        }
    raise ValueError(cmd)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "replay":
            report = replay(args.manifest, args.out)
            for name in report.mismatched:
                print(f"mismatch: {name}", file=sys.stderr)
            if not report.identical:
                return EXIT_FAILURE
            outcome = report.outcome
        else:
            outcome = run_command(args.command, params_from_args(args), args.out, traces=getattr(args, "traces", False))
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    if outcome.trouble:
        return EXIT_TROUBLE
    if not outcome.any_feasible:
        return EXIT_INFEASIBLE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
