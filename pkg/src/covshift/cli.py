"""Command-line interface.

Exit codes: 0 success, 1 invalid input or usage, 2 runtime failure.
Messages go to stderr; results go to the requested files or stdout.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from .data import load_csv, save_csv
from .errors import CalibrationError, CovshiftError, ValidationError
from .ess import BoundParams, check_weights, empirical_ess, generalization_bound
from .experiments import BenchConfig, ToyConfig, generate_friedman, run_benchmark, run_toy
from .gmm import K_RANGE
from .logistic import C_GRID, C_RANGE
from .mi import MiConfig, backward_eliminate, forward_select
from .ratio import fit_density_ratio, predict_weights
from .shift import calibrate_sigma, sample_direction
from .tree import MIN_LEAF_GRID

STOCHASTIC = {"inject", "fit-ratio", "mi-select", "toy", "bench"}

DEFAULTS_EPILOG = (
    "fixed defaults: ESS target 0.01; noise augmentation to 32 columns; at most 15 selected "
    f"features; logistic C grid of {len(C_GRID)} log-spaced values in [{C_RANGE[0]:g}, {C_RANGE[1]:g}]; "
    f"tree min-leaf grid {list(MIN_LEAF_GRID)}; GMM components {K_RANGE[0]}..{K_RANGE[-1]}. "
    "File formats are described in FORMATS.md."
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _int_list(text):
    return [int(v) for v in str(text).split(",") if v.strip()]


def _float_list(text):
    return [float(v) for v in str(text).split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = _Parser(prog="covshift", description=__doc__.splitlines()[0], epilog=DEFAULTS_EPILOG, formatter_class=fmt)
    parser.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="worker threads for runners")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    def command(name, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text, epilog=DEFAULTS_EPILOG, formatter_class=fmt)
        p.add_argument("--config", default=None, help="flat key=value file; flags override its values")
        if name in STOCHASTIC:
            p.add_argument("--seed", type=int, default=None, help="random seed (required)")
        return p

    p = command("ess", "empirical effective sample size of a weight column")
    p.add_argument("--weights", default=None, help="CSV with one weight per row (header optional)")
    p.add_argument("--column", default="0", help="weight column name or zero-based index")

    p = command("bound", "ESS generalization bound for given ESS*, pseudo-dimension, n and delta")
    p.add_argument("--ess-star", type=float, default=None, help="population ESS in (0, 1]")
    p.add_argument("--pdim", type=int, default=None, help="pseudo-dimension")
    p.add_argument("--n", type=int, default=None, help="training sample size")
    p.add_argument("--delta", type=float, default=0.05, help="failure probability")

    p = command("inject", "split a dataset into shifted train/test parts")
    p.add_argument("--data", default=None, help="input CSV with header")
    p.add_argument("--label-column", default=None, help="label column name or index (kept out of the projection)")
    p.add_argument("--ess-target", type=float, default=0.01, help="ESS of training-side true weights must fall below this")
    p.add_argument("--direction-attempts", type=int, default=20, help="random directions tried before giving up")
    p.add_argument("--train-out", default="train.csv", help="training rows CSV")
    p.add_argument("--test-out", default="test.csv", help="test rows CSV")
    p.add_argument("--weights-out", default=None, help="optional CSV of true weights on training rows")
    p.add_argument("--record-out", default="-", help="JSON record (direction, sigma, ESS, sizes); '-' for stdout")

    p = command("fit-ratio", "importance weights from a source-vs-target classifier")
    p.add_argument("--source", default=None, help="source feature CSV with header")
    p.add_argument("--target", default=None, help="target feature CSV with header")
    p.add_argument("--query", default=None, help="rows to weight (defaults to the source file)")
    p.add_argument("--label-column", default=None, help="column to drop from all three files")
    p.add_argument("--weights-out", default="-", help="weights CSV; '-' for stdout")
    p.add_argument("--summary-out", default=None, help="JSON summary (C, holdout log loss, source ESS)")

    p = command("mi-select", "mutual-information feature search")
    p.add_argument("--data", default=None, help="labelled CSV with header")
    p.add_argument("--label-column", default="-1", help="label column name or index")
    p.add_argument("--task", choices=("regression", "classification"), default="regression", help="label type")
    p.add_argument("--method", choices=("forward", "backward"), default="forward", help="search direction")
    p.add_argument("--threshold", type=float, default=0.01, help="relative improvement threshold")
    p.add_argument("--max-features", type=int, default=15, help="forward search cap")
    p.add_argument("--out", default="-", help="JSON result; '-' for stdout")

    p = command("toy", "Gaussian toy study: analytic ESS curves and weighted-tree RMSE")
    p.add_argument("--lambdas", type=_float_list, default="0.25", help="comma-separated shift sizes")
    p.add_argument("--dims", type=_int_list, default="1,2,4,8,16", help="comma-separated dimensions")
    p.add_argument("--n", type=int, default=20000, help="rows per train and per test set")
    p.add_argument("--reps", type=int, default=10, help="replications per (lambda, d)")
    p.add_argument("--min-leaf", type=int, default=10, help="tree min_samples_leaf")
    p.add_argument("--out", default="toy_report.json", help="JSON report; '-' for stdout")
    p.add_argument("--table-out", default=None, help="optional CSV, one row per (lambda, d, replication)")

    p = command("bench", "four-scenario benchmark over injected shifts")
    p.add_argument("--data", default=None, help="labelled CSV; omit to use the synthetic friedman data")
    p.add_argument("--label-column", default="-1", help="label column name or index")
    p.add_argument("--friedman-rows", type=int, default=1000, help="rows of synthetic data when --data is omitted")
    p.add_argument("--task", choices=("regression", "classification"), default=None, help="defaults to the label type")
    p.add_argument("--simulations", type=int, default=20, help="number of injected shifts")
    p.add_argument("--ess-target", type=float, default=0.01, help="calibration ESS target")
    p.add_argument("--noise-width", type=int, default=32, help="pad features with noise columns up to this width")
    p.add_argument("--max-rows", type=int, default=8000, help="subsample size per simulation")
    p.add_argument("--threshold", type=float, default=0.01, help="selection relative improvement threshold")
    p.add_argument("--max-features", type=int, default=15, help="selection cap")
    p.add_argument("--ratio-fraction", type=float, default=0.8, help="share of target rows used to fit the ratio model")
    p.add_argument("--out", default="bench_report.json", help="JSON report; '-' for stdout")
    p.add_argument("--table-out", default=None, help="optional CSV, one row per (simulation, scenario)")
    return parser


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment; keys may use - or _."""
    values = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc.strerror}") from None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def _subparser(parser, name):
    for action in parser._subparsers._group_actions:
        if name in action.choices:
            return action.choices[name]
    raise UsageError(f"unknown command {name}")


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        raise UsageError(parser.format_usage() + "covshift: a command is required")
    if args.config:
        values = read_config_file(args.config)
        sub = _subparser(parser, args.command)
        known = {a.dest: a for a in sub._actions}
        unknown = sorted(set(values) - set(known) - {"config"})
        if unknown:
            raise ValidationError(f"{args.config}: unknown keys {unknown}")
        explicit = _explicit_dests(sub, argv)
        for key, value in values.items():
            if key in explicit or key == "config":
                continue
            action = known[key]
            try:
                setattr(args, key, action.type(value) if action.type else value)
            except (ValueError, argparse.ArgumentTypeError):
                raise ValidationError(f"{args.config}: bad value for {key}: {value!r}") from None
    return args


def _explicit_dests(sub, argv):
    flags = {}
    for action in sub._actions:
        for opt in action.option_strings:
            flags[opt] = action.dest
    seen = set()
    for tok in argv:
        opt = tok.split("=", 1)[0]
        if opt in flags:
            seen.add(flags[opt])
    return seen


# ------------------------------------------------------------------ output


def _clean(value):
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_clean(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return v if math.isfinite(v) else None
    return value


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value)) if math.isfinite(value) else ""
    if isinstance(value, (list, tuple)):
        return ";".join(_cell(v) for v in value)
    return str(value)


def emit_report(report, path, format: str = "json") -> None:
    """Write a report deterministically; ``path == '-'`` writes to stdout.

    JSON objects keep their construction order; floats use the shortest
    round-trip representation and non-finite floats become null. CSV expects
    a list of flat dicts and writes a header from the first row's keys.
    """
    if format == "json":
        text = json.dumps(_clean(report), indent=2) + "\n"
    elif format == "csv":
        rows = list(report)
        if not rows:
            raise ValidationError("nothing to write: empty table")
        header = list(rows[0].keys())
        lines = [",".join(header)]
        for row in rows:
            lines.append(",".join(_cell(row.get(k)) for k in header))
        text = "\n".join(lines) + "\n"
    else:
        raise ValidationError(f"unknown report format {format!r}")
    if str(path) == "-":
        sys.stdout.write(text)
        return
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise CovshiftError(f"cannot write {path}: {exc.strerror}") from None


def _need(args, *names):
    missing = [n for n in names if getattr(args, n) is None]
    if missing:
        raise ValidationError("missing required option(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))


def _load(path, label_column=None, label_required=False):
    try:
        ds = load_csv(path, has_header=True, label_column=label_column)
    except FileNotFoundError:
        raise ValidationError(f"{path}: file not found") from None
    if label_required and ds.labels is None:
        raise ValidationError(f"{path}: labels required")
    return ds


def read_weights(path, column="0") -> np.ndarray:
    """Weights from a CSV column; the first row is a header if it is not numeric."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [r for r in csv.reader(fh) if r]
    except FileNotFoundError:
        raise ValidationError(f"{path}: file not found") from None
    if not rows:
        raise ValidationError(f"{path}: empty file")
    header = None
    try:
        [float(v) for v in rows[0]]
    except ValueError:
        header, rows = [h.strip() for h in rows[0]], rows[1:]
    col = str(column)
    if header is not None and col in header:
        idx = header.index(col)
    elif col.lstrip("-").isdigit():
        idx = int(col)
    else:
        raise ValidationError(f"{path}: no column {column!r}")
    out = []
    for i, row in enumerate(rows):
        try:
            out.append(float(row[idx]))
        except (ValueError, IndexError):
            line = i + (2 if header is not None else 1)
            raise ValidationError(f"{path}: bad weight on line {line}: {row!r}") from None
    return check_weights(out)


# ---------------------------------------------------------------- commands


def cmd_ess(args):
    _need(args, "weights")
    print(repr(empirical_ess(read_weights(args.weights, args.column))))


def cmd_bound(args):
    _need(args, "ess_star", "pdim", "n")
    print(repr(generalization_bound(BoundParams(args.ess_star, args.pdim, args.n, args.delta))))


def cmd_inject(args):
    _need(args, "data")
    ds = _load(args.data, args.label_column)
    rng = np.random.default_rng(args.seed)
    if args.direction_attempts < 1:
        raise ValidationError("--direction-attempts must be >= 1")
    last = None
    for attempt in range(1, args.direction_attempts + 1):
        try:
            shift = calibrate_sigma(ds.features, sample_direction(ds.d, rng), rng, args.ess_target)
            break
        except CalibrationError as exc:
            last = exc
    else:
        raise CalibrationError(f"no direction out of {args.direction_attempts} reached the target: {last}")
    save_csv(ds.take(shift.train_rows), args.train_out)
    save_csv(ds.take(shift.test_rows), args.test_out)
    if args.weights_out:
        emit_report([{"weight": w} for w in shift.true_weights_train], args.weights_out, "csv")
    record = shift.to_dict()
    record["direction_attempts"] = attempt
    emit_report(record, args.record_out, "json")


def cmd_fit_ratio(args):
    _need(args, "source", "target")
    src = _load(args.source, args.label_column)
    tgt = _load(args.target, args.label_column)
    query = _load(args.query, args.label_column) if args.query else src
    model = fit_density_ratio(src.features, tgt.features, np.random.default_rng(args.seed))
    w = predict_weights(model, query.features)
    emit_report([{"weight": v} for v in w], args.weights_out, "csv")
    if args.summary_out:
        summary = model.summary()
        summary["source_ess"] = empirical_ess(predict_weights(model, src.features))
        emit_report(summary, args.summary_out, "json")


def cmd_mi_select(args):
    _need(args, "data")
    ds = _load(args.data, args.label_column, label_required=True)
    cfg = MiConfig(improvement_threshold=args.threshold, max_features=args.max_features)
    search = forward_select if args.method == "forward" else backward_eliminate
    result = search(ds.features, ds.labels, args.task, cfg, np.random.default_rng(args.seed))
    doc = result.to_dict()
    doc["selected_names"] = [ds.feature_names[j] for j in result.selected]
    emit_report(doc, args.out, "json")


def cmd_toy(args):
    cfg = ToyConfig(tuple(args.lambdas), tuple(args.dims), args.n, args.reps, args.min_leaf, args.seed)
    report = run_toy(cfg)
    emit_report(report.to_dict(), args.out, "json")
    if args.table_out:
        emit_report(report.table(), args.table_out, "csv")


def cmd_bench(args):
    if args.data:
        ds = _load(args.data, args.label_column, label_required=True)
    else:
        if args.friedman_rows < 200:
            raise ValidationError("--friedman-rows must be >= 200")
        ds = generate_friedman(args.friedman_rows, np.random.default_rng([args.seed, 2**32]))
    cfg = BenchConfig(
        simulations=args.simulations,
        ess_target=args.ess_target,
        noise_target_width=args.noise_width,
        max_rows=args.max_rows,
        selection=MiConfig(improvement_threshold=args.threshold, max_features=args.max_features),
        ratio_train_fraction=args.ratio_fraction,
        seed=args.seed,
        threads=max(1, args.threads),
    )
    report = run_benchmark(ds, cfg, args.task)
    emit_report(report.to_dict(), args.out, "json")
    if args.table_out:
        emit_report(report.table(), args.table_out, "csv")
    for idx in report.skipped:
        print(f"simulation {idx} skipped", file=sys.stderr)


COMMANDS = {
    "ess": cmd_ess,
    "bound": cmd_bound,
    "inject": cmd_inject,
    "fit-ratio": cmd_fit_ratio,
    "mi-select": cmd_mi_select,
    "toy": cmd_toy,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
        if args.command in STOCHASTIC and args.seed is None:
            raise ValidationError(f"{args.command}: --seed is required")
        COMMANDS[args.command](args)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except UsageError as exc:
        print(str(exc).rstrip(), file=sys.stderr)
        return 1
    except ValidationError as exc:
        print(f"covshift: error: {exc}", file=sys.stderr)
        return 1
    except (CovshiftError, OSError, np.linalg.LinAlgError, MemoryError) as exc:
        print(f"covshift: failed: {exc}", file=sys.stderr)
        return 2
    return 0
