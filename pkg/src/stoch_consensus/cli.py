"""Command line entry point: ``stoch-consensus {certify|simulate|run|validate} SCENARIO``.

Exit codes: 0 all checks pass, 1 a check failed, 2 invalid input
(including an inadmissible gain), 3 a sample path blew up.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import pipeline
from .dynamics import SimulationError
from .scenario import ScenarioError, bundled_scenario, load_scenario

log = logging.getLogger("stoch_consensus")


def _setup_logging():
    level = os.environ.get("STOCH_CONSENSUS_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _resolve(path: str) -> Path:
    p = Path(path)
    if p.exists():
        return p
    try:
        return bundled_scenario(path)
    except FileNotFoundError:
        return p


def _gain(value: str):
    if value == "auto":
        return value
    try:
        return float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number or 'auto', got {value!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stoch-consensus", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("certify", "compute gain bounds and spectral data (no simulation)"),
        ("simulate", "simulate sample paths and write them (no analysis)"),
        ("run", "certify, simulate and analyze"),
        ("validate", "check a scenario file"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("scenario", help="scenario JSON file, or the name of a bundled scenario")
        p.add_argument("--seed", type=int)
        p.add_argument("--paths", type=int)
        p.add_argument("--dt", type=float)
        p.add_argument("--gain", type=_gain)
        p.add_argument("--workers", type=int, default=None, help="simulation threads (default: all cores)")
        p.add_argument("--out-dir", type=Path)
        p.add_argument("--dump-paths", action="store_true", help="also write paths.csv")
    return parser


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    path = _resolve(args.scenario)
    try:
        scenario = load_scenario(path)
        scenario = scenario.with_overrides(seed=args.seed, paths=args.paths, dt=args.dt, gain=args.gain)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return pipeline.EXIT_INVALID
    except ScenarioError as exc:
        print(str(exc), file=sys.stderr)
        return pipeline.EXIT_INVALID

    if args.command == "validate":
        print(f"{path}: valid ({'switching' if scenario.switching else 'fixed'} topology, N={scenario.n})")
        return pipeline.EXIT_OK

    out_dir = args.out_dir or Path("runs") / scenario.name
    try:
        if args.command == "certify":
            cert = pipeline.certify(scenario)
            text = json.dumps(cert.certificate, indent=2)
            print(text)
            if args.out_dir:
                out_dir.mkdir(parents=True, exist_ok=True)
                pipeline.write_json(out_dir / "certificate.json", cert.certificate)
            return pipeline.EXIT_OK
        if args.command == "simulate":
            cert = pipeline.certify(scenario)
            out_dir.mkdir(parents=True, exist_ok=True)
            ens = pipeline.simulate(scenario, cert, args.workers)
            pipeline.write_paths_csv(out_dir / "paths.csv", ens)
            return pipeline.EXIT_OK
        status = pipeline.run(scenario, out_dir, workers=args.workers, dump_paths=args.dump_paths)
    except pipeline.GainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return pipeline.EXIT_INVALID
    except SimulationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return pipeline.EXIT_BLOWUP
    report = json.loads((out_dir / "report.json").read_text())
    for c in report.get("checks", []):
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {c['name']} (verdict={c['verdict']}, expected={c['expect']})")
    print(f"artifacts in {out_dir}")
    return status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
