"""Command-line interface: ``polygonal <command> ...``.

Exit status is 0 on success, 1 for usage or input errors and 2 for numerical
failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .approx import named_target, polygonal_from_concave, tabulated_target
from .core import PolygonalParams, as_sample
from .divergence import DensityFn, hellinger_sq, kl_divergence, sup_distance
from .em import FitConfig, em_fit, fit_nested
from .harness import ExperimentConfig, format_table, run_experiment
from .selection import PENALTY_MODES, select_g, select_with_calibration
from .validation import DomainError, NumericalError

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2

logger = logging.getLogger("polygonal")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Argument parser that reports usage errors with exit status 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# Input readers
# ---------------------------------------------------------------------------


def read_sample(path: str) -> np.ndarray:
    """Observations from a JSON array or a CSV file with an ``x`` column."""
    text = _read_text(path)
    if Path(path).suffix.lower() == ".json":
        try:
            values = json.loads(text)
        except json.JSONDecodeError as exc:
            raise UsageError(f"{path}: invalid JSON: {exc}") from exc
        if not isinstance(values, list):
            raise UsageError(f"{path}: expected a JSON array of numbers")
    else:
        reader = csv.DictReader(text.splitlines())
        if reader.fieldnames is None or "x" not in reader.fieldnames:
            raise UsageError(f"{path}: expected a CSV header with an 'x' column")
        values = [row["x"] for row in reader]
    try:
        return np.asarray(values, dtype=float)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"{path}: non-numeric observation: {exc}") from exc


def _read_text(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from exc


def read_density(spec: str) -> DensityFn:
    """A mixture JSON file, or one of ``uniform``, ``tri:<theta>``, ``quad6``, ``sine``."""
    if Path(spec).is_file():
        try:
            params = PolygonalParams.from_json(_read_text(spec))
        except json.JSONDecodeError as exc:
            raise UsageError(f"{spec}: invalid JSON: {exc}") from exc
        if not params.normalized:
            raise UsageError(f"{spec}: weights must sum to one")
        return DensityFn.from_params(params, name=Path(spec).stem)
    return named_target(spec).as_density()


def read_target(spec: str):
    """A built-in target name, or a table of ``x,y`` rows (CSV) or ``{"x": [...], "y": [...]}`` (JSON)."""
    if not Path(spec).is_file():
        return named_target(spec)
    text = _read_text(spec)
    try:
        if Path(spec).suffix.lower() == ".json":
            data = json.loads(text)
            x, y = data["x"], data["y"]
        else:
            rows = list(csv.DictReader(text.splitlines()))
            x = [r["x"] for r in rows]
            y = [r["y"] for r in rows]
        return tabulated_target(np.asarray(x, dtype=float), np.asarray(y, dtype=float), Path(spec).stem)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, DomainError):
            raise
        raise UsageError(f"{spec}: expected columns x and y: {exc}") from exc


def _emit(text: str, out: str | None):
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_fit(args) -> int:
    sample = as_sample(read_sample(args.sample))
    cfg = FitConfig(g=args.g, max_iter=args.max_iter, tol=args.tol, restarts=args.restarts, seed=args.seed)
    result = em_fit(sample, cfg)
    _emit(result.to_json(indent=2) + "\n", args.out)
    return EXIT_OK


def cmd_approximate(args) -> int:
    result = polygonal_from_concave(read_target(args.target), args.g)
    _emit(result.to_json(indent=2) + "\n", args.out)
    return EXIT_OK


def cmd_select(args) -> int:
    sample = as_sample(read_sample(args.sample))
    cfg = FitConfig(g=1, max_iter=args.max_iter, tol=args.tol, restarts=args.restarts, seed=args.seed)
    fits = fit_nested(sample, args.gamma, cfg)
    if args.kappa is not None:
        result = select_g(fits, sample.n, args.kappa, mode=args.penalty)
    else:
        result = select_with_calibration(fits, sample.n, mode=args.penalty)
        if args.path_csv:
            Path(args.path_csv).write_text(result.path_csv())
    _emit(result.to_json(indent=2) + "\n", args.out)
    return EXIT_OK


_METRICS = {
    "kl": kl_divergence,
    "hellinger": hellinger_sq,
    "sup": sup_distance,
}


def cmd_divergence(args) -> int:
    a, b = read_density(args.first), read_density(args.second)
    value = _METRICS[args.metric](a, b)
    sys.stdout.write(f"{value:.12g}\n")
    return EXIT_OK


def cmd_simulate(args) -> int:
    try:
        data = json.loads(_read_text(args.config))
    except json.JSONDecodeError as exc:
        raise UsageError(f"{args.config}: invalid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise UsageError(f"{args.config}: expected a JSON object")
    for key, value in (("seed", args.seed), ("format", args.format), ("output", args.out)):
        if value is not None:
            data[key] = value
    if args.timing:
        data["timing"] = True
    cfg = ExperimentConfig.from_dict(data)
    _emit(format_table(run_experiment(cfg), cfg.format), cfg.output)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="polygonal", description="Polygonal (mixture of triangles) densities on [0, 1].")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def em_flags(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--restarts", type=int, default=10)
        p.add_argument("--tol", type=float, default=1e-8)
        p.add_argument("--max-iter", type=int, default=500)
        p.add_argument("--out", help="write JSON here instead of stdout")

    p = sub.add_parser("fit", help="fit a g-component mixture by EM")
    p.add_argument("sample", help="CSV with an 'x' column, or a JSON array")
    p.add_argument("--g", type=int, required=True)
    em_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("approximate", help="polygonal approximation of a concave function")
    p.add_argument("target", help="quad6, uniform, sine, tri:<theta>, or an x,y table file")
    p.add_argument("--g", type=int, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_approximate)

    p = sub.add_parser("select", help="choose the number of components")
    p.add_argument("sample")
    p.add_argument("--gamma", type=int, default=5, help="largest g considered")
    p.add_argument("--kappa", type=float, help="fixed multiplier (default: calibrate)")
    p.add_argument("--penalty", choices=PENALTY_MODES, default="solved")
    p.add_argument("--path-csv", help="write the calibration path here")
    em_flags(p)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("divergence", help="divergence between two densities")
    p.add_argument("first", help="mixture JSON file or uniform, tri:<theta>, quad6, sine")
    p.add_argument("second")
    p.add_argument("--metric", choices=sorted(_METRICS), default="kl")
    p.set_defaults(func=cmd_divergence)

    p = sub.add_parser("simulate", help="run a simulation experiment from a JSON config")
    p.add_argument("config")
    p.add_argument("--out")
    p.add_argument("--format", choices=("csv", "json"))
    p.add_argument("--seed", type=int)
    p.add_argument("--timing", action="store_true", help="record wall time in the ms column")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, DomainError) as exc:
        print(f"polygonal {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, FloatingPointError) as exc:
        print(f"polygonal {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
