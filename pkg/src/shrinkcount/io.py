"""CSV ingestion and the tables written by the command-line tool."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .count_models import CountDataset, ModelParams, VariableData, logpmf
from .errors import ConstraintError, ParseError

HEADER = ("variable_id", "N", "count")


def _int_field(text: str, what: str, line: int) -> int:
    try:
        return int(text.strip())
    except ValueError:
        raise ParseError(f"{what} {text.strip()!r} is not an integer", line) from None


def load_counts_csv(path) -> CountDataset:
    """Read ``variable_id,N,count`` rows; variables keep first-appearance order."""
    groups: dict[str, list[int]] = {}
    trials: dict[str, int] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != HEADER:
            raise ParseError(f"header must be {','.join(HEADER)}", 1)
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise ParseError(f"expected 3 fields, got {len(row)}", line)
            vid = row[0].strip()
            if not vid:
                raise ParseError("empty variable_id", line)
            N = _int_field(row[1], "N", line)
            x = _int_field(row[2], "count", line)
            if N < 1:
                raise ConstraintError(f"N must be positive, got {N}", line)
            if x < 0:
                raise ConstraintError(f"negative count {x}", line)
            if x > N:
                raise ConstraintError(f"count {x} exceeds N={N}", line)
            if trials.setdefault(vid, N) != N:
                raise ConstraintError(f"N={N} differs from N={trials[vid]} seen earlier for {vid!r}", line)
            groups.setdefault(vid, []).append(x)
    if not groups:
        raise ParseError("no data rows")
    return CountDataset(tuple(VariableData(v, trials[v], tuple(c)) for v, c in groups.items()))


def write_counts_csv(data: CountDataset, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(HEADER)
        for var in data.variables:
            for x in var.counts:
                w.writerow((var.id, var.N, x))


def write_rows(rows: list[dict], path) -> None:
    """Write a list of flat dicts as CSV; columns in order of first appearance."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if not rows:
            return
        fields = list(dict.fromkeys(k for r in rows for k in r))
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(v) for k, v in r.items()})


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


# ---------------------------------------------------------------------------
# report tables


def lower_median(values) -> int:
    s = sorted(values)
    return s[(len(s) - 1) // 2]


def summary_table(data: CountDataset) -> list[dict]:
    return [
        {"variable_id": v.id, "sample_size": v.n, "N": v.N, "min": min(v.counts),
         "median": lower_median(v.counts), "max": max(v.counts)}
        for v in data.variables
    ]


def cv_row(family, penalty_name: str, score: float, lambda_opt: float) -> dict:
    return {"family": family.value, "penalty": penalty_name, "cv_score": float(score),
            "log_lambda_plus_1": math.log(lambda_opt + 1.0), "lambda": float(lambda_opt)}


def estimates_table(data: CountDataset, fits: dict[str, ModelParams]) -> list[dict]:
    """Long format: one row per (fit label, variable) with parameters and p."""
    rows = []
    for label, params in fits.items():
        p = params.mean
        for i, var in enumerate(data.variables):
            row = {"fit": label, "family": params.family.value, "variable_id": var.id}
            for name in params.family.param_names:
                row[name] = float(params.column(name)[i])
            row["p"] = float(p[i])
            rows.append(row)
    return rows


CDF_TAIL = 1e-9


def fit_diagnostics(params: ModelParams, data: CountDataset) -> dict[str, list[dict]]:
    """Empirical and model pmf/cdf per variable.

    x runs over 0..max+2 and is extended (up to N) until the model cdf
    reaches 1 - 1e-9, so the model cdf always ends at or above the
    empirical one.
    """
    out = {}
    for i, var in enumerate(data.variables):
        counts = np.bincount(var.counts, minlength=var.N + 1).astype(float)
        emp = counts / var.n
        top = min(max(var.counts) + 2, var.N)
        model = np.exp(logpmf(params, i, np.arange(var.N + 1), var.N))
        mcdf = np.cumsum(model)
        while top < var.N and mcdf[top] < 1.0 - CDF_TAIL:
            top += 1
        ecdf = np.cumsum(emp)
        out[var.id] = [
            {"x": x, "empirical_pmf": float(emp[x]), "model_pmf": float(model[x]),
             "empirical_cdf": float(ecdf[x]), "model_cdf": float(mcdf[x])}
            for x in range(top + 1)
        ]
    return out


@dataclass
class AnalysisReport:
    summary: list[dict]
    cv_table: list[dict] = field(default_factory=list)
    estimates: list[dict] = field(default_factory=list)
    fit_diagnostics: dict[str, list[dict]] = field(default_factory=dict)

    def write(self, out_dir) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = []
        for name, rows in (("summary", self.summary), ("cv_table", self.cv_table), ("estimates", self.estimates)):
            if rows:
                write_rows(rows, out / f"{name}.csv")
                written.append(out / f"{name}.csv")
        for vid, rows in self.fit_diagnostics.items():
            path = out / "diagnostics" / f"{_safe(vid)}.csv"
            write_rows(rows, path)
            written.append(path)
        return written


def _safe(name: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in name)


# ---------------------------------------------------------------------------
# synthetic reading-error data

# per passage: sample size, length, median, maximum (minimum is 0 everywhere)
PASSAGES = (
    (49, 48, 0, 4), (51, 50, 1, 6), (51, 69, 1, 19), (50, 50, 1, 5), (52, 44, 1, 13),
    (51, 56, 1, 9), (50, 44, 1, 10), (53, 48, 1, 13), (51, 51, 1, 10), (50, 47, 1, 14),
)


def synthetic_wri(seed: int = 0, passages=PASSAGES) -> CountDataset:
    """SYNTHETIC words-read-incorrectly counts matching the published passage marginals.

    Counts are overdispersed draws with similar error proportions across
    passages, then adjusted so that each passage's minimum, lower median and
    maximum hit the target values.  Not real data.
    """
    rng = np.random.default_rng(seed)
    variables = []
    for k, (n, N, med, mx) in enumerate(passages, 1):
        p = rng.uniform(0.02, 0.035)
        total = 1.0  # alpha + beta; small means strong overdispersion
        x = np.sort(rng.binomial(N, rng.beta(p * total, (1 - p) * total, size=n)))
        m = (n - 1) // 2
        x = np.minimum(x, mx)
        x[: m + 1] = np.minimum(x[: m + 1], med)
        x[m:] = np.maximum(x[m:], med)
        x[0] = 0
        x[-1] = mx
        variables.append(VariableData(f"P{k}", N, tuple(int(v) for v in rng.permutation(x))))
    return CountDataset(tuple(variables))
