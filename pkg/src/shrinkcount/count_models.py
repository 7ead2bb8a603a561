"""Bounded count models: binomial, zero-inflated binomial, beta-binomial.

Public scalar pmfs accept numpy arrays and broadcast.  Fitting code works on
per-variable sufficient statistics (``SuffStats``) so that each likelihood
evaluation costs O(I * N) regardless of the number of observations.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.special import betaln, gammaln, log1p, xlog1py, xlogy

from .errors import DomainError
from .optimize import newton_minimize

PROB_EPS = 1e-12
SHAPE_MIN = 1e-8
SHAPE_MAX = 1e8

_LOGIT_BOUND = float(np.log((1.0 - PROB_EPS) / PROB_EPS))
_LOG_LO = float(np.log(SHAPE_MIN))
_LOG_HI = float(np.log(SHAPE_MAX))


class ModelFamily(enum.Enum):
    BINOMIAL = "binomial"
    ZIB = "zib"
    BETABIN = "betabin"

    @property
    def n_params(self) -> int:
        return 1 if self is ModelFamily.BINOMIAL else 2

    @property
    def param_names(self) -> tuple[str, ...]:
        return {
            ModelFamily.BINOMIAL: ("p",),
            ModelFamily.ZIB: ("pi", "gamma"),
            ModelFamily.BETABIN: ("alpha", "beta"),
        }[self]

    @classmethod
    def parse(cls, name) -> "ModelFamily":
        if isinstance(name, cls):
            return name
        aliases = {"bin": "binomial", "betabinomial": "betabin", "beta-binomial": "betabin", "bb": "betabin"}
        key = str(name).strip().lower()
        return cls(aliases.get(key, key))


# ---------------------------------------------------------------------------
# data containers


@dataclass(frozen=True)
class VariableData:
    id: str
    N: int
    counts: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        if int(self.N) < 1:
            raise DomainError(f"variable {self.id!r}: N must be a positive integer")
        object.__setattr__(self, "N", int(self.N))
        if len(self.counts) == 0:
            raise DomainError(f"variable {self.id!r}: needs at least one observation")
        if min(self.counts) < 0 or max(self.counts) > self.N:
            raise DomainError(f"variable {self.id!r}: counts must lie in [0, {self.N}]")

    @property
    def n(self) -> int:
        return len(self.counts)


@dataclass(frozen=True, eq=False)
class SuffStats:
    """Padded per-variable histograms; column x holds the number of observations equal to x."""

    N: np.ndarray
    n: np.ndarray
    hist: np.ndarray
    hist_rev: np.ndarray
    log_binom: np.ndarray

    @property
    def Nmax(self) -> int:
        return self.hist.shape[1] - 1

    @cached_property
    def total(self) -> np.ndarray:
        return self.hist @ np.arange(self.Nmax + 1)

    @cached_property
    def zeros(self) -> np.ndarray:
        return self.hist[:, 0]

    @cached_property
    def trials(self) -> np.ndarray:
        return self.n * self.N

    @cached_property
    def const(self) -> np.ndarray:
        return np.sum(self.hist * self.log_binom, axis=1)

    @cached_property
    def const_nonzero(self) -> np.ndarray:
        return self.const - self.hist[:, 0] * self.log_binom[:, 0]

    def row(self, i: int) -> "SuffStats":
        s = slice(i, i + 1)
        return SuffStats(self.N[s], self.n[s], self.hist[s], self.hist_rev[s], self.log_binom[s])


@dataclass(frozen=True)
class CountDataset:
    variables: tuple[VariableData, ...]

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        if len(self.variables) == 0:
            raise DomainError("a dataset needs at least one variable")

    @classmethod
    def from_arrays(cls, counts: Sequence[Sequence[int]], N, ids=None) -> "CountDataset":
        N = np.broadcast_to(np.asarray(N), (len(counts),))
        if ids is None:
            ids = [f"V{i + 1}" for i in range(len(counts))]
        return cls(tuple(VariableData(str(v), int(m), tuple(c)) for v, m, c in zip(ids, N, counts)))

    @property
    def I(self) -> int:
        return len(self.variables)

    @property
    def ids(self) -> list[str]:
        return [v.id for v in self.variables]

    @property
    def N(self) -> np.ndarray:
        return np.array([v.N for v in self.variables])

    @property
    def n(self) -> np.ndarray:
        return np.array([v.n for v in self.variables])

    @cached_property
    def stats(self) -> SuffStats:
        N = self.N
        Nmax = int(N.max())
        I = self.I
        hist = np.zeros((I, Nmax + 1))
        hist_rev = np.zeros((I, Nmax + 1))
        x = np.arange(Nmax + 1)
        log_binom = np.zeros((I, Nmax + 1))
        for i, var in enumerate(self.variables):
            h = np.bincount(np.asarray(var.counts), minlength=var.N + 1).astype(float)
            hist[i, : var.N + 1] = h
            hist_rev[i, : var.N + 1] = h[::-1]
            xi = x[: var.N + 1]
            log_binom[i, : var.N + 1] = gammaln(var.N + 1) - gammaln(xi + 1) - gammaln(var.N - xi + 1)
        return SuffStats(N.astype(float), self.n.astype(float), hist, hist_rev, log_binom)

    def subset(self, masks: Sequence[np.ndarray]) -> "CountDataset":
        """Keep, for each variable, the observations selected by a boolean mask."""
        out = []
        for var, m in zip(self.variables, masks):
            c = np.asarray(var.counts)[np.asarray(m, dtype=bool)]
            out.append(VariableData(var.id, var.N, tuple(c.tolist())))
        return CountDataset(tuple(out))

    def degenerate(self) -> np.ndarray:
        """True for variables whose counts are all 0 or all N."""
        st = self.stats
        return (st.total == 0) | (st.total == st.trials)


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Parameter rows for I variables; column order follows ``family.param_names``."""

    family: ModelFamily
    values: np.ndarray
    degenerate: tuple[bool, ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[1] != self.family.n_params:
            raise DomainError(f"{self.family.value} parameters need shape (I, {self.family.n_params})")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        _check_params(self.family, v)
        if self.degenerate is None:
            object.__setattr__(self, "degenerate", (False,) * v.shape[0])

    @property
    def I(self) -> int:
        return self.values.shape[0]

    def column(self, name: str) -> np.ndarray:
        if name not in self.family.param_names:
            raise AttributeError(f"{self.family.value} parameters have no {name!r}")
        return self.values[:, self.family.param_names.index(name)]

    p = property(lambda self: self.column("p"))
    pi = property(lambda self: self.column("pi"))
    gamma = property(lambda self: self.column("gamma"))
    alpha = property(lambda self: self.column("alpha"))
    beta = property(lambda self: self.column("beta"))

    @property
    def mean(self) -> np.ndarray:
        return mean_proportion(self)


def _check_params(family, v):
    if not np.all(np.isfinite(v)):
        raise DomainError("parameters must be finite")
    if family is ModelFamily.BINOMIAL:
        ok = np.all((v >= 0) & (v <= 1))
    elif family is ModelFamily.ZIB:
        ok = np.all((v[:, 0] >= 0) & (v[:, 0] <= 1) & (v[:, 1] >= 0) & (v[:, 1] < 1))
    else:
        ok = np.all(v > 0)
    if not ok:
        raise DomainError(f"parameters outside the {family.value} parameter space")


# ---------------------------------------------------------------------------
# probability mass functions


def _check_support(x, N):
    x = np.asarray(x)
    N = np.asarray(N)
    if np.any(x < 0) or np.any(x > N) or np.any(N < 0):
        raise DomainError("counts must satisfy 0 <= x <= N")
    return x, N


def _log_binom_coef(x, N):
    return gammaln(N + 1) - gammaln(x + 1) - gammaln(N - x + 1)


def binom_logpmf(x, N, p):
    """log C(N, x) p^x (1-p)^(N-x); -inf only where the pmf is exactly zero."""
    x, N = _check_support(x, N)
    p = np.asarray(p, dtype=float)
    if np.any((p < 0) | (p > 1)):
        raise DomainError("p must lie in [0, 1]")
    with np.errstate(divide="ignore"):
        out = _log_binom_coef(x, N) + xlogy(x, p) + xlog1py(N - x, -p)
    return out[()] if np.ndim(out) == 0 else out


def zib_logpmf(x, N, pi, gamma):
    x, N = _check_support(x, N)
    pi = np.asarray(pi, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    if np.any((pi < 0) | (pi > 1)):
        raise DomainError("pi must lie in [0, 1]")
    if np.any((gamma < 0) | (gamma >= 1)):
        raise DomainError("gamma must lie in [0, 1)")
    with np.errstate(divide="ignore"):
        zero = np.logaddexp(np.log(gamma), log1p(-gamma) + xlog1py(N, -pi))
        pos = log1p(-gamma) + _log_binom_coef(x, N) + xlogy(x, pi) + xlog1py(N - x, -pi)
    out = np.where(x == 0, zero, pos)
    return out[()] if np.ndim(out) == 0 else out


def betabinom_logpmf(x, N, alpha, beta):
    x, N = _check_support(x, N)
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if np.any(alpha <= 0) or np.any(beta <= 0):
        raise DomainError("alpha and beta must be positive")
    if np.max(N, initial=0) <= RISING_MAX_N:
        # betaln differences cancel badly once alpha + beta is large
        ratio = _log_rising(alpha, x) + _log_rising(beta, N - x) - _log_rising(alpha + beta, N)
    else:
        ratio = betaln(x + alpha, N - x + beta) - betaln(alpha, beta)
    out = _log_binom_coef(x, N) + ratio
    return out[()] if np.ndim(out) == 0 else out


RISING_MAX_N = 5000


def _log_rising(a, m):
    """log of a (a+1) ... (a+m-1), summed term by term."""
    a, m = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(m))
    K = int(np.max(m, initial=0))
    if K == 0:
        return np.zeros(a.shape)
    k = np.arange(K)
    terms = np.where(k < m[..., None], np.log(a[..., None] + k), 0.0)
    return terms.sum(axis=-1)


def logpmf(params: ModelParams, i: int, x, N):
    """Family-dispatched pmf for variable ``i`` of ``params``."""
    row = params.values[i]
    if params.family is ModelFamily.BINOMIAL:
        return binom_logpmf(x, N, row[0])
    if params.family is ModelFamily.ZIB:
        return zib_logpmf(x, N, row[0], row[1])
    return betabinom_logpmf(x, N, row[0], row[1])


# ---------------------------------------------------------------------------
# likelihood on sufficient statistics, with natural-parameter derivatives


def _rising_log_sums(a, K):
    """For each a_i, cumulative sums over k < x of log(a+k), 1/(a+k), 1/(a+k)^2 for x = 0..K."""
    ak = a[:, None] + np.arange(K)
    zeros = np.zeros((a.shape[0], 1))
    inv = 1.0 / ak
    L = np.concatenate([zeros, np.cumsum(np.log(ak), axis=1)], axis=1)
    D = np.concatenate([zeros, np.cumsum(inv, axis=1)], axis=1)
    E = np.concatenate([zeros, np.cumsum(inv * inv, axis=1)], axis=1)
    return L, D, E


def nll_terms(family: ModelFamily, theta: np.ndarray, st: SuffStats, order: int = 0):
    """Negative log-likelihood (summed) and per-variable gradient/Hessian blocks.

    ``theta`` has shape (I, k).  Returns ``f`` or ``(f, g, h)`` with ``g`` of
    shape (I, k) and ``h`` of shape (I, k, k).
    """
    if family is ModelFamily.BINOMIAL:
        p = theta[:, 0]
        S = st.total
        F = st.trials - S
        with np.errstate(divide="ignore", invalid="ignore"):
            f = -np.sum(st.const + xlogy(S, p) + xlog1py(F, -p))
        if order == 0:
            return f
        q = 1.0 - p
        g = (-S / p + F / q)[:, None]
        h = (S / p**2 + F / q**2)[:, None, None]
        return f, g, h

    if family is ModelFamily.ZIB:
        pi, gam = theta[:, 0], theta[:, 1]
        N = st.N
        z = st.zeros
        npos = st.n - z
        S = st.total
        Fp = npos * N - S
        with np.errstate(divide="ignore", invalid="ignore"):
            logq = xlog1py(N, -pi)
            log_f0 = np.logaddexp(np.log(gam), log1p(-gam) + logq)
            f = -np.sum(
                np.where(z > 0, z * log_f0, 0.0)
                + npos * log1p(-gam) + xlogy(S, pi) + xlog1py(Fp, -pi) + st.const_nonzero
            )
        if order == 0:
            return f
        f0 = np.exp(log_f0)
        q = np.exp(logq)
        r = np.exp(xlog1py(N - 1, -pi))
        r2 = np.exp(xlog1py(N - 2, -pi)) * N * (N - 1)
        d_pi = -(1 - gam) * N * r
        d_gam = 1 - q
        d_pipi = (1 - gam) * r2
        d_pigam = N * r
        g_pi = -z * d_pi / f0 - S / pi + Fp / (1 - pi)
        g_gam = -z * d_gam / f0 + npos / (1 - gam)
        h_pipi = -z * (d_pipi / f0 - (d_pi / f0) ** 2) + S / pi**2 + Fp / (1 - pi) ** 2
        h_pigam = -z * (d_pigam / f0 - d_pi * d_gam / f0**2)
        h_gamgam = z * (d_gam / f0) ** 2 + npos / (1 - gam) ** 2
        g = np.stack([g_pi, g_gam], axis=1)
        h = np.empty((theta.shape[0], 2, 2))
        h[:, 0, 0] = h_pipi
        h[:, 0, 1] = h[:, 1, 0] = h_pigam
        h[:, 1, 1] = h_gamgam
        return f, g, h

    a, b = theta[:, 0], theta[:, 1]
    K = st.Nmax
    La, Da, Ea = _rising_log_sums(a, K)
    Lb, Db, Eb = _rising_log_sums(b, K)
    Ls, Ds, Es = _rising_log_sums(a + b, K)
    idx = st.N.astype(int)[:, None]
    n = st.n
    LsN = np.take_along_axis(Ls, idx, axis=1)[:, 0]
    f = -np.sum(st.const + np.sum(st.hist * La, axis=1) + np.sum(st.hist_rev * Lb, axis=1) - n * LsN)
    if order == 0:
        return f
    DsN = np.take_along_axis(Ds, idx, axis=1)[:, 0]
    EsN = np.take_along_axis(Es, idx, axis=1)[:, 0]
    g = np.stack([
        -np.sum(st.hist * Da, axis=1) + n * DsN,
        -np.sum(st.hist_rev * Db, axis=1) + n * DsN,
    ], axis=1)
    h = np.empty((theta.shape[0], 2, 2))
    h[:, 0, 0] = np.sum(st.hist * Ea, axis=1) - n * EsN
    h[:, 1, 1] = np.sum(st.hist_rev * Eb, axis=1) - n * EsN
    h[:, 0, 1] = h[:, 1, 0] = -n * EsN
    return f, g, h


def log_likelihood(params: ModelParams, data: CountDataset) -> float:
    """Sum over variables and observations of the family log-pmf."""
    if params.I != data.I:
        raise DomainError(f"parameters have {params.I} rows but the dataset has {data.I} variables")
    return -float(nll_terms(params.family, np.asarray(params.values), data.stats, 0))


def mean_proportion(params: ModelParams) -> np.ndarray:
    v = params.values
    if params.family is ModelFamily.BINOMIAL:
        return v[:, 0].copy()
    if params.family is ModelFamily.ZIB:
        return v[:, 0] * (1.0 - v[:, 1])
    return v[:, 0] / (v[:, 0] + v[:, 1])


def mean_map(family: ModelFamily, theta: np.ndarray):
    """Mean proportion with its per-variable Jacobian (I, k) and Hessian (I, k, k)."""
    I = theta.shape[0]
    if family is ModelFamily.BINOMIAL:
        return theta[:, 0], np.ones((I, 1)), np.zeros((I, 1, 1))
    if family is ModelFamily.ZIB:
        pi, gam = theta[:, 0], theta[:, 1]
        J = np.stack([1 - gam, -pi], axis=1)
        H = np.zeros((I, 2, 2))
        H[:, 0, 1] = H[:, 1, 0] = -1.0
        return pi * (1 - gam), J, H
    a, b = theta[:, 0], theta[:, 1]
    s = a + b
    J = np.stack([b / s**2, -a / s**2], axis=1)
    H = np.empty((I, 2, 2))
    H[:, 0, 0] = -2 * b / s**3
    H[:, 1, 1] = 2 * a / s**3
    H[:, 0, 1] = H[:, 1, 0] = (a - b) / s**3
    return a / s, J, H


# ---------------------------------------------------------------------------
# unconstrained reparameterization shared with the penalized estimator


def _uses_logit(family: ModelFamily) -> bool:
    return family is not ModelFamily.BETABIN


def param_bounds(family: ModelFamily, I: int):
    k = family.n_params
    if _uses_logit(family):
        return np.full(I * k, -_LOGIT_BOUND), np.full(I * k, _LOGIT_BOUND)
    return np.full(I * k, _LOG_LO), np.full(I * k, _LOG_HI)


def to_unconstrained(family: ModelFamily, theta: np.ndarray) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if _uses_logit(family):
        t = np.clip(theta, PROB_EPS, 1 - PROB_EPS)
        return (np.log(t) - np.log1p(-t)).ravel()
    return np.log(np.clip(theta, SHAPE_MIN, SHAPE_MAX)).ravel()


def to_natural(family: ModelFamily, u: np.ndarray):
    """Map flat unconstrained ``u`` to theta (I, k) plus first and second derivatives."""
    k = family.n_params
    if _uses_logit(family):
        s = 1.0 / (1.0 + np.exp(-u))
        s = np.clip(s, PROB_EPS, 1 - PROB_EPS)
        d1 = s * (1 - s)
        d2 = d1 * (1 - 2 * s)
        return s.reshape(-1, k), d1, d2
    e = np.exp(u)
    return e.reshape(-1, k), e, e


def clamp(family: ModelFamily, theta: np.ndarray) -> np.ndarray:
    if _uses_logit(family):
        return np.clip(theta, PROB_EPS, 1 - PROB_EPS)
    return np.clip(theta, SHAPE_MIN, SHAPE_MAX)


def chain_to_unconstrained(g_theta, H_theta, d1, d2):
    """Gradient and Hessian in u from those in flattened theta."""
    g = g_theta * d1
    H = H_theta * np.outer(d1, d1)
    H[np.diag_indices_from(H)] += g_theta * d2
    return g, H


def block_diag(blocks: np.ndarray) -> np.ndarray:
    I, k, _ = blocks.shape
    out = np.zeros((I * k, I * k))
    for a in range(k):
        for b in range(k):
            out[np.arange(I) * k + a, np.arange(I) * k + b] = blocks[:, a, b]
    return out


def initial_params(family: ModelFamily, st: SuffStats) -> np.ndarray:
    """Moment-based starting values, clamped into the optimization box."""
    N = st.N
    n = st.n
    if family is ModelFamily.BINOMIAL:
        return clamp(family, (st.total / st.trials)[:, None])
    if family is ModelFamily.ZIB:
        npos = n - st.zeros
        mean_pos = np.where(npos > 0, st.total / np.maximum(npos, 1), 0.5)
        pi = np.clip(mean_pos / N, 0.01, 0.99)
        q = (1 - pi) ** N
        gam = np.clip((st.zeros / n - q) / np.maximum(1 - q, 1e-12), 0.01, 0.95)
        return np.stack([pi, gam], axis=1)
    x = np.arange(st.Nmax + 1)
    m1 = st.hist @ x / n
    m2 = st.hist @ x**2 / n
    var = np.maximum(m2 - m1**2, 0.0) * n / np.maximum(n - 1, 1)
    p = np.clip(m1 / N, 0.5 / (n * N), 1 - 0.5 / (n * N))
    nu = np.clip(var / (N * p * (1 - p)), 1.05, np.maximum(N - 0.05, 1.06))
    s = np.clip((N - nu) / (nu - 1), 0.05, 1e4)
    return clamp(family, np.stack([p * s, (1 - p) * s], axis=1))


# ---------------------------------------------------------------------------
# maximum likelihood


def _numeric_mle_row(family: ModelFamily, st: SuffStats, theta0: np.ndarray):
    lower, upper = param_bounds(family, 1)

    def fun(u, order):
        theta, d1, d2 = to_natural(family, u)
        if order == 0:
            return nll_terms(family, theta, st, 0)
        f, g, h = nll_terms(family, theta, st, 1)
        gu, Hu = chain_to_unconstrained(g.ravel(), h[0], d1, d2)
        return (f, gu) if order == 1 else (f, gu, Hu)

    res = newton_minimize(fun, to_unconstrained(family, theta0), lower, upper)
    theta, _, _ = to_natural(family, res.x)
    return theta[0], res


def mle_fit(family, data: CountDataset) -> ModelParams:
    """Unpenalized maximum likelihood, one variable at a time.

    Binomial estimates are the exact proportions (boundary values allowed);
    the other families are fitted numerically inside the clamped box.
    Variables whose counts are all 0 or all N carry ``degenerate=True``.
    """
    family = ModelFamily.parse(family)
    cache = data.__dict__.setdefault("_mle_cache", {})
    if family in cache:
        return cache[family]
    st = data.stats
    degenerate = tuple(bool(d) for d in data.degenerate())
    if family is ModelFamily.BINOMIAL:
        out = ModelParams(family, (st.total / st.trials)[:, None], degenerate)
    else:
        theta0 = initial_params(family, st)
        rows = [_numeric_mle_row(family, st.row(i), theta0[i : i + 1])[0] for i in range(data.I)]
        out = ModelParams(family, np.array(rows), degenerate)
    cache[family] = out
    return out
