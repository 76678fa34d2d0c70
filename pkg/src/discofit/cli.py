"""Command-line front end: ``discofit {fit,eval,detect,repair,bench,certify}``.

Datasets are CSV files with a header ``x1,...,xd,y``; lines starting with
``#`` are comments.  Jump tables (``certify`` input) use the header
``x1,...,xd,h``.  Kernel profile tables are ``radius,value`` CSV files
(linearly interpolated, zero past the last radius) passed as
``--kernel table:PATH``.

Exit codes: 0 success, 2 input error, 3 numeric or budget failure.  The
``DISCOFIT_THREADS`` environment variable caps the BLAS thread pool.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .bench import ExperimentConfig, Example2Config, run_example2, run_table1, seed_sweep, write_plot, write_report
from .detect import Dataset, DetectionConfig, JumpPoint, detect_jumps
from .errors import (
    BudgetUnreachable,
    DiscofitError,
    IllConditioned,
    NonConformingKernel,
    NonFiniteLoss,
    SingularNormalEquations,
)
from .hybrid import HybridRegressor, atomic_write, load_model, make_learner, save_model
from .kernels import estimate_tail_bounds, load_profile_table, make_kernel
from .singular import build_singular_network, certify, seed_scale
from .smooth import TrainConfig

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3

NUMERIC_ERRORS = (BudgetUnreachable, IllConditioned, SingularNormalEquations, NonFiniteLoss, ArithmeticError)


class InputError(DiscofitError, ValueError):
    """Bad command-line input (file format, flags)."""


# -- CSV ------------------------------------------------------------------------

def _data_lines(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror or exc}") from None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if line and not line.startswith("#"):
            yield lineno, line


def read_table(path, last="y"):
    """Read a headed numeric CSV whose last column is named ``last``."""
    lines = list(_data_lines(path))
    if not lines:
        raise InputError(f"{path}: no data")
    header = [h.strip() for h in lines[0][1].split(",")]
    d = len(header) - 1
    expected = [f"x{i}" for i in range(1, d + 1)] + [last]
    if d < 1 or header != expected:
        raise InputError(f"{path}:{lines[0][0]}: header must be {','.join(expected) if d >= 1 else 'x1,...,xd,' + last}")
    rows = []
    for lineno, line in lines[1:]:
        parts = line.split(",")
        if len(parts) != d + 1:
            raise InputError(f"{path}:{lineno}: expected {d + 1} fields, got {len(parts)}")
        try:
            vals = [float(p) for p in parts]
        except ValueError:
            raise InputError(f"{path}:{lineno}: non-numeric field") from None
        if not all(math.isfinite(v) for v in vals):
            raise InputError(f"{path}:{lineno}: non-finite value")
        rows.append(vals)
    if not rows:
        raise InputError(f"{path}: header but no rows")
    arr = np.array(rows)
    return arr[:, :d], arr[:, d]


def read_dataset(path) -> Dataset:
    X, y = read_table(path, "y")
    return Dataset(X, y)


def format_table(X, y, last="y") -> str:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    d = X.shape[1]
    lines = [",".join([f"x{i}" for i in range(1, d + 1)] + [last])]
    for row, v in zip(X, np.asarray(y, dtype=float)):
        lines.append(",".join(repr(float(c)) for c in (*row, v)))
    return "\n".join(lines) + "\n"


def write_dataset(path, data: Dataset) -> None:
    atomic_write(path, format_table(data.inputs, data.targets))


def _points(args_point, csv_path):
    if args_point is not None:
        try:
            return np.array([[float(v) for v in args_point.split(",")]])
        except ValueError:
            raise InputError(f"bad --point {args_point!r}") from None
    lines = list(_data_lines(csv_path))
    if not lines:
        raise InputError(f"{csv_path}: no data")
    header = [h.strip() for h in lines[0][1].split(",")]
    if header and header[-1] == "y":
        return read_table(csv_path, "y")[0]
    d = len(header)
    if header != [f"x{i}" for i in range(1, d + 1)]:
        raise InputError(f"{csv_path}: header must be x1,...,xd (optionally followed by y)")
    rows = []
    for lineno, line in lines[1:]:
        parts = line.split(",")
        if len(parts) != d:
            raise InputError(f"{csv_path}:{lineno}: expected {d} fields, got {len(parts)}")
        try:
            rows.append([float(p) for p in parts])
        except ValueError:
            raise InputError(f"{csv_path}:{lineno}: non-numeric field") from None
    return np.array(rows).reshape(-1, d)


def parse_kernel(spec: str):
    if spec.startswith("table:"):
        return load_profile_table(spec[len("table:"):])
    if spec == "custom":
        raise InputError("custom kernels are given as table:PATH")
    return make_kernel(spec)


def _learner_arg(value: str) -> str:
    name, _, n = value.partition(":")
    if name not in ("mlp", "gridrbf") or not n.isdigit() or int(n) < 1:
        raise argparse.ArgumentTypeError("expected mlp:N or gridrbf:S with a positive integer")
    return value


def _positive(value: str) -> float:
    v = float(value)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


# -- subcommands -------------------------------------------------------------------

def _jump_lines(jumps) -> List[str]:
    out = []
    for j in jumps:
        loc = ",".join(f"{v:.10g}" for v in j.location)
        out.append(f"  row {j.source_index}: x=({loc}) height={j.height:.8g}")
    return out


def _fit(data, args, kernel="gaussian"):
    model = HybridRegressor(
        smooth=make_learner(args.learner, TrainConfig(seed=args.seed)),
        epsilon=args.epsilon,
        kernel=kernel,
        neighbor_count=args.neighbors,
        threshold_multiplier=args.threshold,
        min_points=args.min_points,
    )
    return model.fit(data.inputs, data.targets)


def cmd_fit(args) -> int:
    data = read_dataset(args.csv_in)
    model = _fit(data, args, parse_kernel(args.kernel))
    report = model.report_
    save_model(model, args.model_out)
    print(f"rows: {len(data)}  dim: {data.dim}")
    print(f"jumps: {len(model.jumps_)}")
    for line in _jump_lines(model.jumps_):
        print(line)
    if model.singular_ is not None:
        print(f"scale A: {model.singular_.scale:.10g}")
    print(f"certified residual: {model.certified_residual:.6e} (epsilon {args.epsilon:g})")
    print(f"train RMSE: {report.train_rmse:.6e}")
    print(f"train time: {report.train_time:.3f} s")
    print(f"model written to {args.model_out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    model = load_model(args.model_in)
    X = _points(args.point, args.csv_in)
    pred = model.predict(X)
    sys.stdout.write(format_table(X, pred))
    if args.emit_plot:
        cols = {f"x{i + 1}": X[:, i] for i in range(X.shape[1])}
        if X.shape[1] == 1:
            cols = {"x": X[:, 0]}
        truth = read_table(args.csv_in, "y")[1] if args.csv_in and _has_targets(args.csv_in) else np.full(len(X), np.nan)
        cols.update(truth=truth, smooth=model.smooth_.predict(X), hybrid=pred)
        write_plot(args.emit_plot, cols)
    return EXIT_OK


def _has_targets(path) -> bool:
    for _, line in _data_lines(path):
        return line.split(",")[-1].strip() == "y"
    return False


def cmd_detect(args) -> int:
    data = read_dataset(args.csv_in)
    continuous, jumps, threshold = detect_jumps(data, DetectionConfig(args.neighbors, args.threshold, args.min_points))
    print(f"threshold: {threshold:.6e}")
    print(f"candidates: {len(jumps)}")
    for line in _jump_lines(jumps):
        print(line)
    if args.out:
        write_dataset(args.out, continuous)
    return EXIT_OK


def cmd_repair(args) -> int:
    data = read_dataset(args.csv_in)
    model = _fit(data, args)
    X = data.inputs
    cols = {"x": X[:, 0]} if data.dim == 1 else {f"x{i + 1}": X[:, i] for i in range(data.dim)}
    cols.update(truth=data.targets, smooth=model.smooth_.predict(X), hybrid=model.predict(X))
    write_plot(args.out, cols)
    if args.model_out:
        save_model(model, args.model_out)
    print(f"jumps: {len(model.jumps_)}")
    for line in _jump_lines(model.jumps_):
        print(line)
    print(f"certified residual: {model.certified_residual:.6e}")
    print(f"repaired values written to {args.out}")
    return EXIT_OK


def cmd_certify(args) -> int:
    X, h = read_table(args.jumps_csv, "h")
    try:
        jumps = [JumpPoint(tuple(x), float(v), i) for i, (x, v) in enumerate(zip(X, h))]
    except ValueError as exc:
        raise InputError(f"{args.jumps_csv}: {exc}") from None
    kernel = parse_kernel(args.kernel)
    tail = estimate_tail_bounds(kernel)
    try:
        start = seed_scale(jumps, tail, args.epsilon, kernel)
    except NonConformingKernel:
        start = 1.0
    net = certify(build_singular_network(jumps, kernel, start), args.epsilon, max_doublings=args.max_doublings)
    print(f"units: {net.n_units}  dim: {net.dim}  kernel: {kernel.kind}")
    print(f"seed scale: {start:.10g}")
    print(f"scale A: {net.scale:.10g}  doublings: {net.doublings}")
    print(f"certified residual: {net.certified_residual:.6e} (epsilon {args.epsilon:g})")
    return EXIT_OK


def _load_bench_config(path):
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"{path}: {exc}") from None
    if not isinstance(doc, dict):
        raise InputError(f"{path}: expected a JSON object")
    return doc


def cmd_bench(args) -> int:
    doc = _load_bench_config(args.config)
    experiment = doc.pop("experiment", args.experiment)
    doc.setdefault("seed", args.seed)
    try:
        if experiment == "table1":
            cfg = ExperimentConfig(**doc)
        elif experiment == "example2":
            cfg = Example2Config(**doc)
        else:
            raise InputError(f"unknown experiment {experiment!r}; expected table1 or example2")
    except TypeError as exc:
        raise InputError(f"bad bench config: {exc}") from None
    report = run_table1(cfg) if experiment == "table1" else run_example2(cfg)
    paths = write_report(report, args.out, experiment)
    sys.stdout.write(report.to_text())
    for p in paths:
        print(f"wrote {p}")
    if args.seed_sweep and experiment == "table1":
        results = seed_sweep(cfg, args.seed_sweep)
        path = Path(args.out) / "seed_sweep.json"
        atomic_write(path, json.dumps(results, indent=2) + "\n")
        passed = sum(all(v for k, v in r.items() if k != "seed") for r in results)
        print(f"seed sweep: {passed}/{len(results)} seeds satisfy every qualitative check; wrote {path}")
    return EXIT_OK


# -- parser ----------------------------------------------------------------------

def _add_detect_flags(p):
    p.add_argument("--neighbors", type=int, default=8, help="neighbours per leave-self-out fit (default 8)")
    p.add_argument("--threshold", type=_positive, default=6.0, help="flagging threshold in scaled MADs (default 6)")
    p.add_argument("--min-points", type=int, default=20, help="smallest accepted dataset (default 20)")


def _add_fit_flags(p):
    p.add_argument("--epsilon", type=_positive, default=0.01, help="L2 budget for the constructed part (default 0.01)")
    p.add_argument("--learner", type=_learner_arg, default="mlp:4", help="smooth learner: mlp:N or gridrbf:S (default mlp:4)")
    p.add_argument("--seed", type=int, default=42, help="seed for every random draw (default 42)")
    _add_detect_flags(p)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="discofit", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("fit", help="fit a hybrid model to a CSV dataset")
    p.add_argument("csv_in")
    p.add_argument("model_out")
    p.add_argument("--kernel", default="gaussian", help="gaussian, mexican_hat, morlet or table:PATH")
    _add_fit_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("eval", help="evaluate a saved model")
    p.add_argument("model_in")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("csv_in", nargs="?", help="CSV with header x1,...,xd[,y]")
    src.add_argument("--point", help="single comma-separated point")
    p.add_argument("--emit-plot", metavar="PATH", help="write x, truth, smooth, hybrid columns to PATH")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("detect", help="list jump candidates in a CSV dataset")
    p.add_argument("csv_in")
    p.add_argument("--out", help="write the continuous subset to this CSV")
    _add_detect_flags(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("repair", help="fit and write smooth and repaired values at the data rows")
    p.add_argument("csv_in")
    p.add_argument("out", help="output CSV with x, truth, smooth, hybrid columns")
    p.add_argument("--model-out", help="also save the fitted model here")
    _add_fit_flags(p)
    p.set_defaults(func=cmd_repair)

    p = sub.add_parser("certify", help="certify a bump network for a table of jumps")
    p.add_argument("jumps_csv", help="CSV with header x1,...,xd,h")
    p.add_argument("--epsilon", type=_positive, default=0.01)
    p.add_argument("--kernel", default="gaussian", help="gaussian, mexican_hat, morlet or table:PATH")
    p.add_argument("--max-doublings", type=int, default=60)
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("bench", help="run the overfitting or 2-D repair benchmark")
    p.add_argument("--config", help="JSON object with 'experiment' (table1 or example2) and config fields")
    p.add_argument("--experiment", choices=("table1", "example2"), default="table1")
    p.add_argument("--out", default="bench_out", help="output directory (default bench_out)")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--seed-sweep", type=int, default=0, metavar="N",
                   help="also rerun table1 for N consecutive seeds and summarise the checks")
    p.set_defaults(func=cmd_bench)
    return parser


def _thread_cap() -> Optional[int]:
    raw = os.environ.get("DISCOFIT_THREADS")
    if not raw:
        return None
    try:
        n = int(raw)
    except ValueError:
        raise InputError(f"DISCOFIT_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise InputError("DISCOFIT_THREADS must be >= 1")
    return n


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with threadpool_limits(limits=_thread_cap()):
            return args.func(args)
    except NUMERIC_ERRORS as exc:
        print(f"discofit {args.command}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError, KeyError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"discofit {args.command}: {msg}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
