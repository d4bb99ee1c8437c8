"""Batch command line: parse, identify, fit, assess, render."""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import dataclass

from scipy import stats

from . import assess, data, identify, syntax
from .estimate import FitOptions, MomentsError, fit as run_fit
from .ptable import ModelBuildError, ScalingOptions, build_parameter_table

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_IDENTIFICATION = 3
EXIT_NONCONVERGENCE = 4
EXIT_IO = 5

log = logging.getLogger("compsem")


@dataclass
class RunConfig:
    model_path: str
    data_path: str | None = None
    cov_path: str | None = None
    n: int | None = None
    estimator: str = "ml"
    standardized: bool = False
    estimate_t: bool = False
    force: bool = False
    chisq_multiplier: str = "n-1"
    output: str = "text"
    seed: int | None = None
    threads: int = 1
    delimiter: str = ","

    def validate(self):
        if (self.data_path is None) == (self.cov_path is None):
            raise ValueError("provide exactly one of --data or --cov")
        if self.cov_path is not None and self.n is None:
            raise ValueError("--n is required with --cov")


def _round6(x):
    if isinstance(x, float):
        if math.isnan(x) or math.isinf(x):
            return None
        return float(f"{x:.6g}")
    if isinstance(x, dict):
        return {k: _round6(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_round6(v) for v in x]
    return x


def _param_records(table, std_table=None):
    recs = []
    for i, r in enumerate(table.rows):
        rec = {
            "lhs": r.lhs,
            "op": r.op,
            "rhs": r.rhs,
            "role": r.role,
            "status": r.status,
            "label": r.label,
            "estimate": r.value,
            "se": r.se,
        }
        if r.se is not None and r.se > 0:
            z = r.value / r.se
            rec["z"] = z
            rec["pvalue"] = float(2.0 * stats.norm.sf(abs(z)))
        else:
            rec["z"] = None
            rec["pvalue"] = None
        if std_table is not None:
            rec["std"] = std_table.rows[i].value
        recs.append(rec)
    return recs


def _render_text(report, out):
    h = report["header"]
    out.write(
        f"compsem fit: N = {h['n_obs']}, P = {h['n_indicators']}, "
        f"df = {h['df']}, estimator = {h['estimator']}\n"
    )
    out.write(
        f"converged: {h['converged']} in {h['iterations']} iterations "
        f"(F = {h['F_min']:.6g}, |grad| = {h['gradient_norm']:.3g})\n"
    )
    for w in h["warnings"]:
        out.write(f"warning: {w}\n")
    fs = report["fit"]
    out.write("\nFit statistics\n")
    pv = "NA" if fs["pvalue"] is None else f"{fs['pvalue']:.4f}"
    out.write(
        f"  chi-square = {fs['chisq']:.4f}  df = {fs['df']}  p = {pv}\n"
        f"  SRMR = {fs['srmr']:.4f}  RMSEA = {fs['rmsea']:.4f}  "
        f"AIC = {fs['aic']:.3f}\n"
    )
    out.write("\nParameters\n")
    has_std = any("std" in r for r in report["parameters"])
    head = f"  {'lhs':>12} {'op':>3} {'rhs':>12} {'estimate':>10} {'se':>9} {'z':>8} {'p':>7}"
    if has_std:
        head += f" {'std':>9}"
    out.write(head + "\n")
    for r in report["parameters"]:
        se = f"{r['se']:9.4f}" if r["se"] is not None else "        -"
        z = f"{r['z']:8.3f}" if r["z"] is not None else "       -"
        p = f"{r['pvalue']:7.4f}" if r["pvalue"] is not None else "      -"
        line = (
            f"  {r['lhs']:>12} {r['op']:>3} {r['rhs']:>12} "
            f"{r['estimate']:10.4f} {se} {z} {p}"
        )
        if has_std:
            line += f" {r['std']:9.4f}" if r.get("std") is not None else "        -"
        out.write(line + "\n")
    idr = report["identification"]
    out.write("\nIdentification checks\n")
    for c in idr["checks"]:
        out.write(f"  [{c['status']:>4}] {c['name']}: {c['message']}\n")


def run(config: RunConfig, out=None) -> int:
    """Execute the full pipeline; returns the process exit code."""
    if out is None:
        out = sys.stdout
    try:
        config.validate()
    except ValueError as e:
        log.error(str(e))
        return EXIT_IO

    try:
        with open(config.model_path, encoding="utf-8") as fh:
            source = fh.read()
    except OSError as e:
        log.error("cannot read model file: %s", e)
        return EXIT_IO

    try:
        spec = syntax.parse_model(source)
    except syntax.ModelSyntaxError as e:
        log.error("model syntax error: %s", e)
        return EXIT_PARSE

    try:
        if config.data_path is not None:
            df = data.read_csv(config.data_path, delimiter=config.delimiter)
            observed = list(df.columns)
        else:
            moments = data.read_cov_csv(
                config.cov_path, config.n, delimiter=config.delimiter
            )
            observed = moments.names
    except (OSError, data.DataError, MomentsError) as e:
        log.error("data error: %s", e)
        return EXIT_IO

    try:
        table = build_parameter_table(
            spec, observed, ScalingOptions(estimate_t=config.estimate_t)
        )
    except ModelBuildError as e:
        log.error("model error: %s", e)
        return EXIT_PARSE

    if config.data_path is not None:
        try:
            complete, dropped = data.complete_cases(df, table.variable_names)
            if dropped:
                log.warning("dropped %d incomplete rows (listwise)", dropped)
            moments = data.sample_moments(complete)
        except data.DataError as e:
            log.error("data error: %s", e)
            return EXIT_IO

    report = identify.check_identification(spec, table)
    if not report.overall and not config.force:
        log.error("identification failed:")
        for c in report.checks:
            if c.status == identify.FAIL:
                log.error("  %s: %s", c.name, c.message)
        return EXIT_IDENTIFICATION

    options = FitOptions(
        estimator=config.estimator,
        chisq_multiplier=config.chisq_multiplier,
        seed=config.seed if config.seed is not None else 0,
        multistart=3 if config.seed is not None else 0,
    )
    try:
        result = run_fit(moments, table, options)
    except MomentsError as e:
        log.error("data error: %s", e)
        return EXIT_IO
    for w in result.warnings:
        log.warning("%s", w)

    fitstats = assess.fit_statistics(result, report.df)
    std_table = assess.standardize(result) if config.standardized else None

    rendered = {
        "header": {
            "n_obs": moments.N,
            "n_indicators": len(table.variable_names),
            "df": report.df,
            "estimator": config.estimator,
            "converged": result.converged,
            "iterations": result.iterations,
            "F_min": result.F_min,
            "gradient_norm": result.gradient_norm,
            "warnings": result.warnings,
        },
        "identification": report.to_dict(),
        "fit": fitstats.to_dict(),
        "parameters": _param_records(result.table, std_table),
    }
    if config.output == "json":
        json.dump(_round6(rendered), out, indent=2, sort_keys=True)
        out.write("\n")
    else:
        _render_text(_round6(rendered), out)

    if not result.converged:
        return EXIT_NONCONVERGENCE
    return EXIT_OK


def build_arg_parser():
    p = argparse.ArgumentParser(prog="compsem")
    sub = p.add_subparsers(dest="command", required=True)
    f = sub.add_parser("fit", help="estimate a model on a dataset or covariance matrix")
    f.add_argument("--model", required=True, help="model description file")
    f.add_argument("--data", help="raw data CSV (header row required)")
    f.add_argument("--cov", help="covariance CSV (square, labeled)")
    f.add_argument("--n", type=int, help="observation count for --cov")
    f.add_argument("--estimator", choices=["ml", "gls"], default="ml")
    f.add_argument("--standardized", action="store_true")
    f.add_argument("--estimate-t", action="store_true",
                   help="estimate composite-indicator (co)variances freely")
    f.add_argument("--force", action="store_true",
                   help="downgrade identification failures to warnings")
    f.add_argument("--chisq-multiplier", choices=["nm1", "n"], default="nm1")
    f.add_argument("--output", choices=["text", "json"], default="text")
    f.add_argument("--seed", type=int, help="enable multi-start with this seed")
    f.add_argument("--threads", type=int, default=1)
    f.add_argument("--delimiter", default=",")
    return p


def main(argv=None) -> int:
    level = os.environ.get("COMPSEM_LOG", "warn").upper()
    level = {"WARN": "WARNING"}.get(level, level)
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s: %(message)s")
    args = build_arg_parser().parse_args(argv)
    config = RunConfig(
        model_path=args.model,
        data_path=args.data,
        cov_path=args.cov,
        n=args.n,
        estimator=args.estimator,
        standardized=args.standardized,
        estimate_t=args.estimate_t,
        force=args.force,
        chisq_multiplier={"nm1": "n-1", "n": "n"}[args.chisq_multiplier],
        output=args.output,
        seed=args.seed,
        threads=args.threads,
        delimiter=args.delimiter,
    )
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
