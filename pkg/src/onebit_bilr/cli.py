"""Command-line entry point: ``onebit-bilr <command> [options]``.

Exit status is 0 on success, 1 on invalid input or usage, 2 on I/O errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .diagnostics import rip_audit_bilr
from .experiments import (
    ConfigError,
    error_column,
    fit_decay_slope,
    load_config,
    read_records,
    records_to_csv,
    records_to_json,
    run_experiment,
    summarize,
)
from .matrix_core import generate_bilr
from .recovery import recover_multistep, recover_pbp
from .sensing import ensemble_from_spec, make_dense_ensemble, make_factorized_ensemble, quantize, sense_raw

log = logging.getLogger("onebit_bilr")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _matrix_csv(M: np.ndarray) -> str:
    return "".join(",".join(format(v, ".17g") for v in row) + "\n" for row in M)


def _read_matrix(path: str) -> np.ndarray:
    text = Path(path).read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        return np.array(json.loads(text)["matrix"], dtype=float)
    return np.array([[float(v) for v in row] for row in csv.reader(io.StringIO(text)) if row])


def cmd_generate(args) -> None:
    Z = generate_bilr(args.n, args.s, args.r, args.seed)
    if args.format == "csv":
        _emit(_matrix_csv(Z.dense()), args.out)
        return
    doc = {"n": Z.n, "s": Z.s, "r": Z.r, "seed": args.seed, "row_support": list(Z.row_support),
           "col_support": list(Z.col_support), "matrix": Z.dense().tolist()}
    _emit(json.dumps(doc) + "\n", args.out)


def cmd_sense(args) -> None:
    X = _read_matrix(args.input)
    n = X.shape[0]
    if args.scheme == "dense":
        ens = make_dense_ensemble(n, args.m, args.seed, normalized=not args.unnormalized)
    else:
        if args.p is None:
            raise ValueError("--p is required for the factorized scheme")
        ens = make_factorized_ensemble(n, args.m, args.p, args.seed)
    signs = quantize(sense_raw(ens, X))
    if args.format == "csv":
        _emit("".join(f"{int(v)}\n" for v in signs), args.out)
        return
    _emit(json.dumps({"ensemble": ens.to_spec(), "signs": signs.tolist()}) + "\n", args.out)


def cmd_recover(args) -> None:
    doc = json.loads(Path(args.input).read_text(encoding="utf-8"))
    ens = ensemble_from_spec(doc["ensemble"])
    y = np.array(doc["signs"])
    if doc["ensemble"]["kind"] == "dense":
        out = recover_pbp(y, ens, args.s, args.r, allow_heuristic=args.allow_heuristic)
    else:
        out = recover_multistep(y, ens, args.s, args.r)
    Z = out.estimate_structured
    if args.format == "csv":
        _emit(_matrix_csv(out.estimate), args.out)
        return
    meta = {k: v for k, v in out.metadata.items() if not isinstance(v, np.ndarray)}
    result = {"row_support": list(Z.row_support), "col_support": list(Z.col_support),
              "norm": out.norm, "metadata": meta, "matrix": out.estimate.tolist()}
    _emit(json.dumps(result) + "\n", args.out)


def cmd_rip_audit(args) -> None:
    ens_seed = args.seed if args.ensemble_seed is None else args.ensemble_seed
    ens = make_dense_ensemble(args.n, args.m, ens_seed, normalized=True)
    report = rip_audit_bilr(ens, args.s, args.r, args.trials, args.seed)
    log.info("implied_delta is an empirical lower bound on the isometry constant")
    doc = report.to_dict()
    if args.format == "csv":
        _emit(",".join(doc) + "\n" + ",".join(_fmt_cell(v) for v in doc.values()) + "\n", args.out)
    else:
        _emit(json.dumps(doc) + "\n", args.out)


def _fmt_cell(v) -> str:
    return format(v, ".17g") if isinstance(v, float) else str(v)


def cmd_experiment(args) -> None:
    if args.config is None:
        raise ValueError("--config is required")
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = type(cfg).from_dict({**cfg.to_dict(), "master_seed": args.seed})
    records = run_experiment(cfg, jobs=args.jobs, timing=args.timing)
    text = records_to_csv(records) if args.format == "csv" else records_to_json(records)
    _emit(text, args.out or cfg.output_path)
    columns = ["error_raw", "error_unit"] if cfg.error_mode == "both" else [error_column(cfg.error_mode)]
    for col in columns:
        for m, v in summarize(records, col).items():
            log.info("m=%d median %s=%.6g", m, col, v)


def cmd_fit(args) -> None:
    records = read_records(args.input)
    slope, intercept = fit_decay_slope(records, args.statistic, args.column)
    _emit(json.dumps({"slope": slope, "intercept": intercept}) + "\n", args.out)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="onebit-bilr", description="One-bit sensing and recovery of bisparse low-rank matrices.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def common(p, fmt=True):
        p.add_argument("--out", help="output file (default: stdout)")
        if fmt:
            p.add_argument("--format", choices=("csv", "json"), default="json")

    p = sub.add_parser("generate", help="draw a random unit-norm bilr matrix")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--s", type=int, required=True)
    p.add_argument("--r", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("sense", help="one-bit measurements of a matrix file")
    p.add_argument("--in", dest="input", required=True, help="matrix as JSON (from generate) or CSV")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scheme", choices=("dense", "factorized"), default="dense")
    p.add_argument("--p", type=int)
    p.add_argument("--unnormalized", action="store_true")
    common(p)
    p.set_defaults(func=cmd_sense)

    p = sub.add_parser("recover", help="recover a matrix from a sense output file")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--s", type=int, required=True)
    p.add_argument("--r", type=int, required=True)
    p.add_argument("--allow-heuristic", action="store_true")
    common(p)
    p.set_defaults(func=cmd_recover)

    p = sub.add_parser("rip-audit", help="randomized isometry audit of a dense ensemble")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--s", type=int, required=True)
    p.add_argument("--r", type=int, required=True)
    p.add_argument("--trials", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ensemble-seed", type=int)
    common(p)
    p.set_defaults(func=cmd_rip_audit)

    p = sub.add_parser("experiment", help="run a Monte-Carlo sweep from a JSON config")
    p.add_argument("--config")
    p.add_argument("--seed", type=int, help="override master_seed")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--timing", action="store_true", help="record wall times (output no longer deterministic)")
    p.add_argument("--out")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("fit", help="fit the log-log decay slope of a results file")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--statistic", choices=("median", "mean"), default="median")
    p.add_argument("--column", choices=("error_unit", "error_raw"), default="error_unit")
    common(p, fmt=False)
    p.set_defaults(func=cmd_fit)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    if args.command is None:
        parser.print_help(sys.stderr)
        return 1
    try:
        args.func(args)
    except OSError as exc:
        where = exc.filename if exc.filename is not None else ""
        print(f"error: cannot access {where}: {exc.strerror or exc}", file=sys.stderr)
        return 2
    except (ConfigError, ValueError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
