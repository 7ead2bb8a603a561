"""V-fold cross-validation over a lambda grid, and minCV selection across penalties.

Training fits use the penalty coefficient ``lam * nbar_train`` where
``nbar_train`` is the average per-variable training sample size; the final
refit on all data uses ``lam_opt * nbar``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .count_models import CountDataset, ModelFamily, ModelParams, clamp, log_likelihood, mle_fit
from .errors import DomainError, InvalidV
from .estimator import FitRequest, FitResult, fit_penalized
from .penalties import PenaltyKind, PenaltySpec

log = logging.getLogger(__name__)

TIE_TOL = 1e-9


@dataclass(frozen=True)
class FoldPlan:
    V: int
    assignments: tuple[np.ndarray, ...]
    seed: int

    def masks(self, v: int):
        """Per-variable boolean masks (train, valid) for fold ``v``."""
        valid = [a == v for a in self.assignments]
        return [~m for m in valid], valid

    def fold_sizes(self) -> list[np.ndarray]:
        return [np.bincount(a, minlength=self.V) for a in self.assignments]


def make_folds(data: CountDataset, V: int = 10, seed: int = 0) -> FoldPlan:
    """Shuffle each variable's observations and deal them round-robin into V folds."""
    V = int(V)
    if V < 2 or V > int(data.n.min()):
        raise InvalidV(f"need 2 <= V <= min sample size ({int(data.n.min())}), got V={V}")
    rng = np.random.default_rng(seed)
    out = []
    for n_i in data.n:
        perm = rng.permutation(n_i)
        a = np.empty(n_i, dtype=int)
        a[perm] = np.arange(n_i) % V
        out.append(a)
    return FoldPlan(V, tuple(out), seed)


def default_lambda_grid() -> np.ndarray:
    """0 followed by 62 log-equidistant values from 1e-2 to 1e4."""
    return np.concatenate([[0.0], np.logspace(-2, 4, 62)])


def check_grid(grid) -> np.ndarray:
    g = np.asarray(grid, dtype=float)
    if g.ndim != 1 or g.size == 0:
        raise DomainError("lambda grid must be a non-empty 1-d sequence")
    if g[0] != 0.0:
        raise DomainError("lambda grid must start at exactly 0")
    if np.any(np.diff(g) <= 0):
        raise DomainError("lambda grid must be strictly increasing")
    return g


def load_grid(path) -> np.ndarray:
    """Read a grid file: numbers separated by whitespace, commas or newlines; '#' comments."""
    vals = []
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0]
            vals.extend(float(tok) for tok in line.replace(",", " ").split())
    return check_grid(vals)


@dataclass
class CVResult:
    grid: np.ndarray
    scores: np.ndarray
    lambda_opt: float
    penalty: PenaltySpec
    final_params: ModelParams
    family: ModelFamily
    final_fit: FitResult | None = None
    flags: np.ndarray = field(default=None)

    @property
    def best_score(self) -> float:
        return float(np.min(self.scores))

    @property
    def log_lambda(self) -> float:
        return float(np.log(self.lambda_opt + 1.0))


def _split(data: CountDataset, folds: FoldPlan):
    if len(folds.assignments) != data.I or any(len(a) != n for a, n in zip(folds.assignments, data.n)):
        raise DomainError("fold plan does not match the dataset shape")
    out = []
    for v in range(folds.V):
        train_m, valid_m = folds.masks(v)
        out.append((data.subset(train_m), data.subset(valid_m)))
    return out


def select_lambda(grid, scores) -> int:
    """Index of the smallest lambda whose score is within TIE_TOL of the minimum."""
    scores = np.asarray(scores, dtype=float)
    finite = np.where(np.isfinite(scores), scores, np.inf)
    best = np.min(finite)
    return int(np.flatnonzero(finite <= best + TIE_TOL)[0])


def _fold_scores(family, penalty, grid, train, valid):
    """Held-out negative log-likelihood at every grid point for one fold."""
    nbar = float(np.mean(train.n))
    scores = np.empty(grid.size)
    flags = np.zeros(grid.size, dtype=bool)
    mle = ModelParams(family, clamp(family, np.asarray(mle_fit(family, train).values)))
    mle_score = -log_likelihood(mle, valid)
    prev = mle
    for m, lam in enumerate(grid):
        if lam == 0 or penalty.kind is PenaltyKind.NONE:
            scores[m] = mle_score
            continue
        r = fit_penalized(FitRequest(family, penalty, lam * nbar, train, prev))
        flags[m] = not r.converged
        prev = r.params
        scores[m] = -log_likelihood(r.params, valid)
    return scores, flags


def _vfcv_splits(family, penalty, grid, data, splits) -> CVResult:
    scores = np.zeros(grid.size)
    flags = np.zeros(grid.size, dtype=bool)
    for train, valid in splits:
        s, f = _fold_scores(family, penalty, grid, train, valid)
        scores += s
        flags |= f
    k = select_lambda(grid, scores)
    lam_opt = float(grid[k])
    nbar = float(np.mean(data.n))
    final = fit_penalized(FitRequest(family, penalty, lam_opt * nbar, data))
    return CVResult(grid, scores, lam_opt, penalty, final.params, family, final, flags)


def vfcv(family, penalty: PenaltySpec, grid, data: CountDataset, folds: FoldPlan) -> CVResult:
    """Cross-validated lambda selection followed by a full-data refit."""
    family = ModelFamily.parse(family)
    penalty.check_family(family)
    grid = check_grid(grid)
    return _vfcv_splits(family, penalty, grid, data, _split(data, folds))


def cv_compare(family, penalties, grid, data: CountDataset, folds: FoldPlan) -> list[CVResult]:
    """Run vfcv for each penalty on one shared set of partitions."""
    family = ModelFamily.parse(family)
    grid = check_grid(grid)
    for pen in penalties:
        pen.check_family(family)
    splits = _split(data, folds)
    return [_vfcv_splits(family, pen, grid, data, splits) for pen in penalties]


def pick_min_cv(results: list[CVResult]) -> CVResult:
    """The result with the smallest best score; earlier entries win ties."""
    best = min(range(len(results)), key=lambda j: (results[j].best_score, j))
    return results[best]


def min_cv_select(family, penalties, grid, data: CountDataset, folds: FoldPlan) -> CVResult:
    if not penalties:
        raise DomainError("min_cv_select needs at least one penalty")
    return pick_min_cv(cv_compare(family, penalties, grid, data, folds))
