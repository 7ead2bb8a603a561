"""Penalized maximum likelihood: minimize -loglik(theta) + lam * Pen(theta).

Numerical fits run a projected Newton iteration on logit (probabilities) or
log (beta-binomial shapes) coordinates with analytic derivatives.  Closed
forms for four binomial penalties are provided separately so they can serve
as an independent check on the numerical route.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .count_models import (
    CountDataset,
    ModelFamily,
    ModelParams,
    block_diag,
    chain_to_unconstrained,
    clamp,
    log_likelihood,
    mle_fit,
    nll_terms,
    param_bounds,
    to_natural,
    to_unconstrained,
)
from .errors import DomainError, UnsupportedPenalty
from .optimize import newton_minimize
from .penalties import PenaltyKind, PenaltySpec, penalty_terms, penalty_value

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FitRequest:
    family: ModelFamily
    penalty: PenaltySpec
    lam: float
    data: CountDataset
    init: ModelParams | None = None

    def __post_init__(self):
        object.__setattr__(self, "family", ModelFamily.parse(self.family))
        if not (self.lam >= 0) or not np.isfinite(self.lam):
            raise DomainError("lambda must be a finite nonnegative number")


@dataclass
class FitResult:
    params: ModelParams
    objective: float
    converged: bool
    iterations: int
    boundary_flags: tuple[bool, ...]
    lam: float = 0.0
    error: str | None = field(default=None)

    @property
    def mean(self) -> np.ndarray:
        return self.params.mean


def penalized_objective(family, penalty: PenaltySpec, lam: float, params: ModelParams, data: CountDataset) -> float:
    family = ModelFamily.parse(family)
    if params.family is not family:
        raise DomainError("parameter family does not match the requested family")
    nll = -log_likelihood(params, data)
    if lam == 0 or penalty.kind is PenaltyKind.NONE:
        return nll
    return nll + lam * penalty_value(penalty, params)


def closed_form_binomial(penalty: PenaltySpec, data: CountDataset, lam: float) -> np.ndarray:
    """Coordinate-wise closed-form penalized estimates for binomial data.

    Multi-observation variables are reduced to (total count, n*N trials),
    which leaves the binomial likelihood in p unchanged.
    """
    if penalty.kind not in (PenaltyKind.PEN1, PenaltyKind.PEN3, PenaltyKind.PEN4, PenaltyKind.PEN5):
        raise UnsupportedPenalty(f"no closed form for {penalty.name}")
    st = data.stats
    x = st.total
    M = st.trials
    phat = x / M
    if lam == 0:
        return phat
    if penalty.kind is PenaltyKind.PEN1:
        li = lam / M
        t = 4.0 * li * phat / (li + 1.0) ** 2
        # 1 - sqrt(1 - t) written without cancellation
        return 0.5 * (li + 1.0) / li * t / (1.0 + np.sqrt(1.0 - t))
    if penalty.kind is PenaltyKind.PEN3:
        return M / (M + lam) * phat
    if penalty.kind is PenaltyKind.PEN5:
        return M / (M + lam) * phat + lam / (M + lam) * penalty.kappa
    with np.errstate(divide="ignore", invalid="ignore"):
        inner = (x - lam) / (M - lam)
    return np.where(lam >= x, 0.0, inner)


class _Objective:
    def __init__(self, family, penalty, lam, data):
        self.family = family
        self.penalty = penalty
        self.lam = float(lam)
        self.st = data.stats
        self.use_pen = self.lam > 0 and penalty.kind is not PenaltyKind.NONE

    def __call__(self, u, order):
        fam = self.family
        theta, d1, d2 = to_natural(fam, u)
        if order == 0:
            f = nll_terms(fam, theta, self.st, 0)
            if self.use_pen:
                f += self.lam * penalty_terms(self.penalty, fam, theta, 0)
            return f
        f, g, h = nll_terms(fam, theta, self.st, 1)
        g = g.ravel()
        H = block_diag(h)
        if self.use_pen:
            pv, pg, pH = penalty_terms(self.penalty, fam, theta, 1)
            f += self.lam * pv
            g = g + self.lam * pg
            H += self.lam * pH
        gu, Hu = chain_to_unconstrained(g, H, d1, d2)
        return (f, gu) if order == 1 else (f, gu, Hu)


def _default_init(family, data):
    return clamp(family, np.asarray(mle_fit(family, data).values))


START_EPS = 1e-6


def _near_edge(family, u) -> bool:
    theta = to_natural(family, u)[0]
    return bool(np.any((theta < START_EPS) | (theta > 1.0 - START_EPS)))


def _edge_rows(family, params) -> tuple[bool, ...]:
    v = np.asarray(params.values)
    if family is ModelFamily.BETABIN:
        return tuple(False for _ in range(v.shape[0]))
    return tuple(bool(b) for b in ((v <= 0) | (v >= 1)).any(axis=1))


def _pull_inside(family, theta):
    """Move probability coordinates off the box edge, where logit gradients vanish."""
    if family is ModelFamily.BETABIN:
        return theta
    return np.clip(theta, START_EPS, 1.0 - START_EPS)


def fit_penalized(req: FitRequest) -> FitResult:
    """Minimize the penalized negative log-likelihood for one lambda."""
    family, penalty, lam, data = req.family, req.penalty, float(req.lam), req.data
    penalty.check_family(family)
    if penalty.kind is PenaltyKind.PEN4 and family is not ModelFamily.BINOMIAL and lam > 0:
        raise UnsupportedPenalty("pen4 is only supported for the binomial family")
    if req.init is not None:
        if req.init.family is not family or req.init.I != data.I:
            raise DomainError("initial parameters do not match the request")
        theta0 = clamp(family, np.asarray(req.init.values))
    else:
        theta0 = _default_init(family, data)

    obj = _Objective(family, penalty, lam, data)
    if not obj.use_pen:
        # nothing to penalize: the MLE itself, not a re-optimized copy of it
        params = mle_fit(family, data)
        return FitResult(params=params, objective=penalized_objective(family, penalty, lam, params, data),
                         converged=True, iterations=0, boundary_flags=_edge_rows(family, params), lam=lam)
    lower, upper = param_bounds(family, data.I)
    res = newton_minimize(obj, to_unconstrained(family, theta0), lower, upper)
    starts = []
    if obj.use_pen:
        if family is not ModelFamily.BETABIN and _near_edge(family, res.x):
            # a start on the box edge can look stationary; also try from just inside
            starts.append(_pull_inside(family, theta0))
        if req.init is None and not penalty.separable and data.I > 1:
            # strong coupling penalties are easier to approach from a common row
            u0 = to_unconstrained(family, theta0).reshape(data.I, -1)
            starts.append(to_natural(family, np.tile(np.median(u0, axis=0), data.I))[0])
    for start in starts:
        if np.array_equal(start, theta0):
            continue
        r = newton_minimize(obj, to_unconstrained(family, start), lower, upper)
        if r.fun < res.fun or (r.fun == res.fun and r.converged and not res.converged):
            res = r
    theta, _, _ = to_natural(family, res.x)
    params = ModelParams(family, theta)
    flags = tuple(bool(b) for b in res.at_bound.reshape(data.I, -1).any(axis=1))
    if not res.converged:
        log.debug("fit did not converge: %s %s lam=%g", family.value, penalty.name, lam)
    return FitResult(
        params=params,
        objective=penalized_objective(family, penalty, lam, params, data),
        converged=res.converged,
        iterations=res.iterations,
        boundary_flags=flags,
        lam=lam,
    )


def fit(family, penalty, lam, data, init=None) -> FitResult:
    """Shorthand for ``fit_penalized(FitRequest(...))``."""
    if not isinstance(penalty, PenaltySpec):
        penalty = PenaltySpec.parse(penalty, family)
    return fit_penalized(FitRequest(ModelFamily.parse(family), penalty, lam, data, init))


def regularization_path(family, penalty: PenaltySpec, lambda_grid, data: CountDataset, scale: float = 1.0) -> list[FitResult]:
    """Warm-started fits along an ascending grid; the objective uses ``scale * lam``."""
    family = ModelFamily.parse(family)
    grid = np.asarray(lambda_grid, dtype=float)
    if np.any(np.diff(grid) < 0):
        raise DomainError("lambda grid must be sorted ascending")
    out = []
    prev = None
    for lam in grid:
        try:
            r = fit_penalized(FitRequest(family, penalty, lam * scale, data, prev))
            r.lam = float(lam)
            prev = r.params
        except (FloatingPointError, np.linalg.LinAlgError) as exc:
            r = FitResult(prev or mle_fit(family, data), float("nan"), False, 0, (False,) * data.I, float(lam), str(exc))
        out.append(r)
    return out
