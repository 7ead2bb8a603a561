"""Command-line entry point: ``shrinkcount {fit,path,report,simulate,synth}``.

Exit codes: 0 success, 2 input error, 3 convergence failure, 4 internal error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .count_models import ModelFamily, mle_fit
from .cross_validation import check_grid, cv_compare, default_lambda_grid, load_grid, make_folds, pick_min_cv
from .errors import ShrinkCountError
from .estimator import FitRequest, fit_penalized, regularization_path
from .io import (
    AnalysisReport,
    cv_row,
    estimates_table,
    fit_diagnostics,
    load_counts_csv,
    summary_table,
    synthetic_wri,
    write_counts_csv,
    write_rows,
)
from .penalties import NONE, PenaltyKind, PenaltySpec
from .simulation import load_config, mse_ratio_study

log = logging.getLogger("shrinkcount")

EXIT_OK, EXIT_INPUT, EXIT_CONVERGENCE, EXIT_INTERNAL = 0, 2, 3, 4
PENALTY_CHOICES = ("none", "pen1", "pen2", "pen3", "pen4", "pen5", "mean-l2", "mean-q2", "full", "auto")


class ConvergenceFailure(ShrinkCountError):
    pass


def auto_penalties(family: ModelFamily) -> list[PenaltySpec]:
    """Candidates compared by ``--penalty auto``."""
    names = ["none", "pen1", "pen2", "pen3", "mean-l2", "mean-q2"]
    if family is not ModelFamily.BINOMIAL:
        names.append("full")
    return [PenaltySpec.parse(n, family) for n in names]


def _penalties(args, family) -> list[PenaltySpec]:
    if args.penalty == "auto":
        return auto_penalties(family)
    return [PenaltySpec.parse(args.penalty, family, args.kappa)]


def _grid(args):
    return load_grid(args.grid) if args.grid else default_lambda_grid()


def _emit(rows, out, name):
    """Write rows to ``out/name`` when --out is given, else print CSV to stdout."""
    if out:
        write_rows(rows, Path(out) / name)
    elif rows:
        w = csv.DictWriter(sys.stdout, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def _dump_json(obj, out, name):
    text = json.dumps(obj, indent=2, sort_keys=True)
    if out:
        Path(out).mkdir(parents=True, exist_ok=True)
        (Path(out) / name).write_text(text + "\n")
    else:
        print(text)


# ---------------------------------------------------------------------------
# commands


def cmd_fit(args) -> int:
    data = load_counts_csv(args.data)
    family = ModelFamily.parse(args.family)
    penalties = _penalties(args, family)
    nbar = float(np.mean(data.n))
    info = {"family": family.value, "nbar": nbar, "seed": args.seed}

    if args.reg == "cv":
        folds = make_folds(data, args.folds, args.seed)
        results = cv_compare(family, penalties, _grid(args), data, folds)
        best = pick_min_cv(results)
        params, final = best.final_params, best.final_fit
        info.update(penalty=best.penalty.name, lambda_opt=best.lambda_opt, log_lambda_plus_1=best.log_lambda,
                    cv_score=best.best_score, folds=args.folds,
                    cv_table=[cv_row(family, r.penalty.name, r.best_score, r.lambda_opt) for r in results])
        if args.out:
            write_rows(info["cv_table"], Path(args.out) / "cv_table.csv")
    else:
        if len(penalties) != 1:
            raise ValueError("--penalty auto needs --lambda cv")
        lam = float(args.reg)
        final = fit_penalized(FitRequest(family, penalties[0], lam * nbar, data))
        params = final.params
        info.update(penalty=penalties[0].name, lambda_opt=lam, log_lambda_plus_1=math.log(lam + 1.0))

    converged = final is None or final.converged
    info["converged"] = bool(converged)
    _emit(estimates_table(data, {info["penalty"]: params}), args.out, "estimates.csv")
    if args.out:
        _dump_json(info, args.out, "fit.json")
    else:
        print(f"# penalty={info['penalty']} lambda={info['lambda_opt']!r} "
              f"log(lambda+1)={info['log_lambda_plus_1']:.6f} converged={converged}", file=sys.stderr)
    if not converged:
        raise ConvergenceFailure("final penalized fit did not converge")
    return EXIT_OK


def cmd_path(args) -> int:
    data = load_counts_csv(args.data)
    family = ModelFamily.parse(args.family)
    penalty = PenaltySpec.parse(args.penalty, family, args.kappa)
    grid = check_grid(_grid(args))
    nbar = float(np.mean(data.n))
    rows = []
    for r in regularization_path(family, penalty, grid, data, scale=nbar):
        for i, vid in enumerate(data.ids):
            row = {"lambda": r.lam, "variable_id": vid}
            for name in family.param_names:
                row[name] = float(r.params.column(name)[i])
            row["p"] = float(r.params.mean[i])
            row["converged"] = r.converged
            rows.append(row)
    _emit(rows, args.out, "path.csv")
    return EXIT_OK


def cmd_report(args) -> int:
    data = load_counts_csv(args.data)
    families = [ModelFamily.parse(f) for f in args.families.split(",")]
    folds = make_folds(data, args.folds, args.seed)
    grid = _grid(args)
    report = AnalysisReport(summary=summary_table(data))
    best_overall = None
    for family in families:
        names = [n.strip() for n in args.penalties.split(",")]
        pens = [PenaltySpec.parse(n, family, args.kappa) for n in names
                if not (n.strip() == "full" and family is ModelFamily.BINOMIAL)]
        results = cv_compare(family, pens, grid, data, folds)
        report.cv_table += [cv_row(family, r.penalty.name, r.best_score, r.lambda_opt) for r in results]
        fits = {f"{family.value}:mle": mle_fit(family, data)}
        fits.update({f"{family.value}:{r.penalty.name}": r.final_params
                     for r in results if r.penalty.kind is not PenaltyKind.NONE})
        report.estimates += estimates_table(data, fits)
        best = pick_min_cv(results)
        if best_overall is None or best.best_score < best_overall.best_score:
            best_overall = best
    report.fit_diagnostics = fit_diagnostics(best_overall.final_params, data)
    out = Path(args.out)
    report.write(out)
    _dump_json({"seed": args.seed, "folds": args.folds, "grid": list(map(float, grid)),
                "diagnostics_fit": f"{best_overall.family.value}:{best_overall.penalty.name}",
                "lambda_opt": best_overall.lambda_opt}, out, "report.json")
    return EXIT_OK


def cmd_simulate(args) -> int:
    config = load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.K is not None:
        overrides["K"] = args.K
    if args.grid:
        overrides["grid"] = load_grid(args.grid)
    if overrides:
        from dataclasses import replace

        config = replace(config, **overrides)
    report = mse_ratio_study(config, workers=args.workers)
    out = Path(args.out)
    write_rows(report.rows(), out / f"{config.name}_mse.csv")
    provenance = {
        "config": config.name, "family": config.family.value, "master_seed": config.master_seed,
        "K": config.K, "V": config.V, "I": config.I, "N": config.N, "n": config.n,
        "penalties": [p.name for p in config.penalties], "grid": list(map(float, config.grid)),
        "excluded": report.excluded, "valid": report.valid, "errors": report.errors,
        "mincv_choices": report.mincv_choices, "version": __version__,
    }
    _dump_json(provenance, out, f"{config.name}_provenance.json")
    for row in report.rows():
        print(", ".join(f"{k}={v:.4f}" if isinstance(v, float) else f"{k}={v}" for k, v in row.items()))
    return EXIT_OK if report.valid else EXIT_CONVERGENCE


def cmd_synth(args) -> int:
    data = synthetic_wri(args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_counts_csv(data, out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _lambda_arg(text):
    if text == "cv":
        return text
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("expected a number or 'cv'") from None
    if not (v >= 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError("lambda must be finite and nonnegative")
    return text


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="shrinkcount", description="Penalized shrinkage for bounded counts.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, penalty_default="none", penalty_choices=PENALTY_CHOICES):
        p.add_argument("data", help="CSV with header variable_id,N,count")
        p.add_argument("--family", choices=[f.value for f in ModelFamily], default="binomial")
        p.add_argument("--penalty", choices=penalty_choices, default=penalty_default)
        p.add_argument("--kappa", type=float, default=None, help="target for pen5")
        p.add_argument("--grid", help="file of lambda values (first must be 0)")
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("fit", help="fit one model, with fixed or cross-validated lambda")
    common(p)
    p.add_argument("--lambda", dest="reg", type=_lambda_arg, default="cv")
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("path", help="estimates along the lambda grid")
    common(p, penalty_choices=[c for c in PENALTY_CHOICES if c != "auto"])
    p.set_defaults(func=cmd_path)

    p = sub.add_parser("report", help="summary, CV comparison, estimates and fit diagnostics")
    p.add_argument("data")
    p.add_argument("--families", default="binomial,zib,betabin")
    p.add_argument("--penalties", default="none,pen2,mean-l2,full")
    p.add_argument("--kappa", type=float, default=None)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("simulate", help="run an MSE-ratio study from a config file or bundled name")
    p.add_argument("config")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None, help="override the config's master seed")
    p.add_argument("--K", type=int, default=None, help="override the replicate count")
    p.add_argument("--grid")
    p.add_argument("--workers", type=int, default=None, help="defaults to SHRINKCOUNT_THREADS or the cpu count")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("synth", help="write a synthetic reading-error dataset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="CSV path")
    p.set_defaults(func=cmd_synth)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConvergenceFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (ShrinkCountError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
