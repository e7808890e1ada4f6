"""Command-line entry point: ``gloloc {sweep,multistart,single,export}``.

Results are summarized as JSON on stdout. Failures print a JSON object with
``error`` and ``message`` keys on stderr and exit with status 1 (2 for usage
errors, as argparse does).
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from . import harness
from .de import Member


def _parse_set(items):
    out = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"--set expects key=value, got {item!r}")
        out[key] = yaml.safe_load(value)
    return out


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="YAML configuration or JSON sidecar of an earlier run")
    p.add_argument("--problem", choices=["CD", "CS"])
    p.add_argument("--T", type=float, nargs="+", dest="durations", metavar="MS", help="durations in ms")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--max-evals", type=int, help="cost-evaluation budget per duration")
    p.add_argument("--max-generations", type=int)
    p.add_argument("--M", type=int, help="basis size")
    p.add_argument("--workers", type=int, help="worker processes for the hybrid")
    p.add_argument("--output-dir", help="directory for CSV and JSON output")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="dotted override, e.g. hybrid.de.Cr=0.9")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gloloc", description="Global-Local optimal control of 1D condensates")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in [
        ("sweep", "hybrid optimization at each duration"),
        ("multistart", "independent GROUP runs from random starts"),
        ("single", "one GROUP run per duration"),
    ]:
        _common(sub.add_parser(name, help=help_))
    exp = sub.add_parser("export", help="write control, <x>(t) and density data for a recorded result")
    exp.add_argument("sidecar", help="JSON sidecar of a sweep")
    exp.add_argument("--index", type=int, default=0, help="which duration of the sweep")
    exp.add_argument("--output", required=True, help="CSV path for the control trace")
    exp.add_argument("--snapshots", type=int, default=11)
    return parser


def _config(args, mode: str) -> harness.RunConfig:
    overrides = _parse_set(args.set)
    direct = {
        "problem": args.problem,
        "durations_ms": args.durations,
        "hybrid.master_seed": args.seed,
        "hybrid.max_evals": args.max_evals,
        "hybrid.max_generations": args.max_generations,
        "hybrid.n_workers": args.workers,
        "M": args.M,
        "output_dir": args.output_dir,
    }
    overrides.update({k: v for k, v in direct.items() if v is not None})
    overrides["mode"] = mode
    return harness.load_config(args.config, overrides)


def _export(args) -> dict:
    meta = json.loads(Path(args.sidecar).read_text())
    cfg = harness.config_from_dict(meta["config"])
    rec = meta["records"][args.index]
    if rec.get("error"):
        raise ValueError(f"record {args.index} failed during the run: {rec['error']}")
    problem = harness.make_problem(cfg)
    genome = [*rec["best_coeffs"], *rec["best_r"]]
    member = Member(np.array(genome, dtype=float), float("nan"))
    path, dens = harness.export_control(
        member, problem, problem.duration_from_ms(rec["T_ms"]), args.output, cfg, args.snapshots
    )
    return {"control": str(path), "density": str(dens)}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "export":
            out = _export(args)
        else:
            mode = {"sweep": "hybrid", "multistart": "multistart", "single": "single-local"}[args.command]
            cfg = _config(args, mode)
            records = harness.sweep_F_of_T(cfg)
            out = {
                "output_dir": cfg.output_dir,
                "config_hash": harness.config_hash(cfg),
                "records": [dataclasses.asdict(r) for r in records],
            }
        json.dump(out, sys.stdout, indent=2, default=float)
        sys.stdout.write("\n")
        return 0
    except Exception as err:  # noqa: BLE001 - every failure becomes a JSON error
        json.dump({"error": type(err).__name__, "message": str(err)}, sys.stderr)
        sys.stderr.write("\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
