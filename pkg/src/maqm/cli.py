"""Command-line front end.

Exit status: 0 ok, 2 config error, 3 runtime error. Worker count comes
from ``MAQM_WORKERS`` (default 1) and never changes results.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .fitting import FitError, fit_exponential
from .rng import check_seed
from .runner import ConfigError, KINDS, RunError, load_config, run_scenario, sweep, write_bundle

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _u64(text: str) -> int:
    try:
        return check_seed(int(text, 0))
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="scenario JSON file")
    p.add_argument("--seed", type=_u64, help="master seed (unsigned 64-bit)")
    p.add_argument("--shots", type=int, help="number of shots")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--format", choices=("csv", "json"), default="csv", help="table format")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="maqm", description="Multicell memory repeater simulator")
    sub = ap.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        _common(sub.add_parser(kind, help=f"run a {kind} scenario"))
    sw = sub.add_parser("sweep", help="run a scenario over a parameter grid")
    _common(sw)
    sw.add_argument("--kind", choices=KINDS, help="scenario kind when the config does not set one")
    sw.add_argument("--param", required=True, help="dotted parameter path, e.g. noise.coherence_time")
    sw.add_argument("--values", default="", help="comma-separated JSON values")
    ft = sub.add_parser("fit", help="fit an exponential decay to a (t, value, sigma) CSV")
    ft.add_argument("points", help="CSV with columns t,value,sigma")
    ft.add_argument("--out", help="write the fit result as JSON here")
    return ap


def _load(args, kind):
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as e:
            raise ConfigError(f"cannot read config: {e}") from None
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"config is not valid JSON: {e}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
    else:
        data = {}
    if kind is not None:
        if data.get("kind", kind) != kind:
            raise ConfigError(f"config kind {data['kind']!r} does not match subcommand {kind!r}")
        data["kind"] = kind
    return load_config(data, seed=args.seed, shots=args.shots)


def _parse_values(text: str):
    if not text.strip():
        return []
    try:
        return [json.loads(v) for v in text.split(",")]
    except json.JSONDecodeError as e:
        raise ConfigError(f"--values: {e}") from None


def _fit(args) -> int:
    try:
        with open(args.points, newline="") as fh:
            rows = list(csv.DictReader(fh))
        pts = [(float(r["t"]), float(r["value"]), float(r["sigma"])) for r in rows]
    except (OSError, KeyError, ValueError, TypeError) as e:
        print(f"error: cannot read points: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        res = fit_exponential(pts)
    except FitError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    out = {"R0": res.R0, "tau": res.tau, "R0_err": res.R0_err, "tau_err": res.tau_err,
           "covariance": res.covariance.tolist(), "residual_norm": res.residual_norm}
    text = json.dumps(out, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    print(text, end="")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "fit":
        return _fit(args)
    try:
        if args.command == "sweep":
            cfg = _load(args, args.kind)
            bundle = sweep(cfg, args.param, _parse_values(args.values))
        else:
            cfg = _load(args, args.command)
            bundle = run_scenario(cfg)
        write_bundle(bundle, args.out, args.format)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except RunError as e:
        print(f"runtime error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    print(json.dumps(bundle.summary, indent=2, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
