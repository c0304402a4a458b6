"""Command-line entry point: ``fbident {generate,identify,sweep,verify}``.

Exit codes: 0 success, 1 usage/config/input error, 2 numerical failure
(rank deficiency), 3 verification failure.
"""
from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from . import verify
from .experiment import ConfigError, ExperimentConfig, format_table, make_inputs, make_outputs, snr_label, sweep
from .ident import METHODS, IdentConfig, RankDeficiencyError, identify
from .mimo_core import read_model_csv, write_model_csv
from .signals import read_csv, write_csv

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_VERIFY = 0, 1, 2, 3

REPORT_HEADER = ["snr", "m", "p", "l", "true", "estimated", "abs_error"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _cell(v):
    return "" if v is None else repr(v) if isinstance(v, float) else str(v)


def write_report_csv(rows, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_HEADER)
        for row in rows:
            w.writerow([_cell(v) for v in row])


def write_residuals_csv(report, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["m", "rss", "samples"])
        for row in report.residual_rows():
            w.writerow([_cell(v) for v in row])


def cmd_generate(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    out = Path(args.output_dir) if args.output_dir else cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    seed = cfg.seeds[0] if args.seed is None else args.seed
    x = make_inputs(cfg, seed)
    write_csv(x, out / "inputs.csv")
    write_csv(make_outputs(cfg, x, seed, None), out / "outputs_clean.csv")
    for snr in cfg.snrs:
        write_csv(make_outputs(cfg, x, seed, snr), out / f"outputs_snr_{snr_label(snr)}.csv")
    write_model_csv(cfg.true_model, out / "true_model.csv")
    print(f"wrote {2 + len(cfg.snrs)} signal files ({cfg.samples} samples, seed {seed}) to {out}")
    return EXIT_OK


def cmd_identify(args) -> int:
    ridge = args.ridge if args.ridge is not None else (1e-6 if args.method == "rls" else 0.0)
    try:
        cfg = IdentConfig(args.taps, args.method, ridge, args.forgetting, args.window)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    x = read_csv(args.inputs)
    d = read_csv(args.outputs)
    reference = read_model_csv(args.reference) if args.reference else None
    if reference is not None and reference.coefficients.shape != (d.channels, x.channels, cfg.taps):
        raise UsageError(
            f"reference model has shape {reference.coefficients.shape}, "
            f"expected {(d.channels, x.channels, cfg.taps)}"
        )
    report = identify(x, d, cfg, reference=reference)
    if args.report:
        write_report_csv(report.rows(args.snr), args.report)
    if args.residuals:
        write_residuals_csv(report, args.residuals)
    summary = f"method={cfg.method} taps={cfg.taps} samples={report.samples}"
    summary += " rss=" + ",".join(f"{r:.6g}" for r in report.rss)
    if report.errors is not None:
        summary += f" max_abs_error={report.errors.max_error:.6g}"
    print(summary)
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    out = Path(args.output_dir) if args.output_dir else cfg.output_dir
    rows = sweep(cfg, workers=args.jobs)
    out.mkdir(parents=True, exist_ok=True)
    write_report_csv(
        [(r.snr, r.m, r.p, r.l, r.true, r.estimated, r.abs_error) for r in rows], out / "sweep.csv"
    )
    print(format_table(rows, cfg.structure))
    errs = [r.abs_error for r in rows if r.abs_error is not None]
    if errs:
        for snr in cfg.snrs:
            worst = max(r.abs_error for r in rows if r.snr == snr)
            print(f"snr={snr_label(snr)} max_abs_error={worst:.4f} (mean over {len(cfg.seeds)} seeds)")
    return EXIT_OK


def cmd_verify(args) -> int:
    results = verify.run_all(args.seed, inject_fault=args.inject_fault)
    for r in results:
        print(r.line())
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} properties passed")
    return EXIT_VERIFY if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fbident", description="MIMO FIR identification via filter-bank serialization")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write seeded input/output CSVs for an experiment config")
    g.add_argument("config")
    g.add_argument("--output-dir")
    g.add_argument("--seed", type=int, help="run seed (default: first entry of noise.seeds)")
    g.set_defaults(func=cmd_generate)

    i = sub.add_parser("identify", help="identify a MIMO FIR model from input/output CSVs")
    i.add_argument("--inputs", required=True)
    i.add_argument("--outputs", required=True)
    i.add_argument("--taps", type=_positive_int, required=True)
    i.add_argument("--method", choices=METHODS, default="block-ls")
    i.add_argument("--ridge", type=float, help="normal-equation ridge (default 0, rls 1e-6)")
    i.add_argument("--lambda", dest="forgetting", type=float, default=1.0, help="rls forgetting factor")
    i.add_argument("--window", choices=("covariance", "prewindowed", "autocorrelation"), default="covariance")
    i.add_argument("--reference", help="true model CSV (m,p,l,h) for error columns")
    i.add_argument("--report", help="report CSV path")
    i.add_argument("--residuals", help="residual CSV path (m,rss,samples)")
    i.add_argument("--snr", type=float, help="value for the report's snr column")
    i.set_defaults(func=cmd_identify)

    s = sub.add_parser("sweep", help="run every (snr, seed) job and print the mean-estimate table")
    s.add_argument("config")
    s.add_argument("--output-dir")
    s.add_argument("--jobs", type=_positive_int, help="parallel jobs (default: FBIDENT_THREADS or CPU count)")
    s.set_defaults(func=cmd_sweep)

    v = sub.add_parser("verify", help="run the randomized equivalence suite")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except RankDeficiencyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
