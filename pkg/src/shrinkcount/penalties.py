"""Penalty catalog for shrinking success proportions (or raw parameters).

Every p-based penalty acts on the mean proportion of each variable, so it
applies to all three families.  The two "full" penalties act on the raw
parameter pairs and are family specific.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc, xlogy

from .count_models import PROB_EPS, ModelFamily, ModelParams, mean_map, mean_proportion
from .errors import DomainError, FamilyMismatch, UnsupportedPenalty


class PenaltyKind(enum.Enum):
    NONE = "none"
    PEN1 = "pen1"
    PEN2 = "pen2"
    PEN3 = "pen3"
    PEN4 = "pen4"
    PEN5 = "pen5"
    MEAN_L2 = "mean-l2"
    MEAN_Q2 = "mean-q2"
    FULL_ZIB = "full-zib"
    FULL_BB = "full-bb"


_SEPARABLE = {PenaltyKind.NONE, PenaltyKind.PEN1, PenaltyKind.PEN2, PenaltyKind.PEN3, PenaltyKind.PEN4, PenaltyKind.PEN5}
_ALIASES = {"zero": "pen2", "mean": "mean-l2", "l2": "mean-l2", "q2": "mean-q2", "meanl2": "mean-l2", "meanq2": "mean-q2"}


@dataclass(frozen=True)
class PenaltySpec:
    kind: PenaltyKind
    kappa: float | None = None

    def __post_init__(self):
        if self.kind is PenaltyKind.PEN5:
            if self.kappa is None or not (0.0 < self.kappa < 1.0):
                raise DomainError("pen5 needs kappa in (0, 1)")
        elif self.kappa is not None:
            raise DomainError(f"kappa only applies to pen5, not {self.kind.value}")

    @classmethod
    def parse(cls, name, family=None, kappa=None) -> "PenaltySpec":
        """Build a spec from a CLI/config name; ``full`` resolves by family."""
        if isinstance(name, PenaltySpec):
            return name
        key = str(name).strip().lower()
        key = _ALIASES.get(key, key)
        if key == "full":
            family = ModelFamily.parse(family) if family is not None else None
            if family is ModelFamily.ZIB:
                key = "full-zib"
            elif family is ModelFamily.BETABIN:
                key = "full-bb"
            else:
                raise FamilyMismatch("full shrinkage needs the zib or betabin family")
        try:
            kind = PenaltyKind(key)
        except ValueError:
            raise UnsupportedPenalty(f"unknown penalty {name!r}") from None
        if kind is PenaltyKind.PEN5 and kappa is None:
            raise DomainError("pen5 needs kappa in (0, 1)")
        return cls(kind, float(kappa) if kind is PenaltyKind.PEN5 else None)

    @property
    def name(self) -> str:
        if self.kind is PenaltyKind.PEN5:
            return f"pen5(kappa={self.kappa:g})"
        return self.kind.value

    @property
    def separable(self) -> bool:
        return self.kind in _SEPARABLE

    @property
    def is_full(self) -> bool:
        return self.kind in (PenaltyKind.FULL_ZIB, PenaltyKind.FULL_BB)

    def check_family(self, family: ModelFamily) -> None:
        if self.kind is PenaltyKind.FULL_ZIB and family is not ModelFamily.ZIB:
            raise FamilyMismatch("full-zib penalty needs the zib family")
        if self.kind is PenaltyKind.FULL_BB and family is not ModelFamily.BETABIN:
            raise FamilyMismatch("full-bb penalty needs the betabin family")


NONE = PenaltySpec(PenaltyKind.NONE)


# ---------------------------------------------------------------------------
# inverse normal cdf

# rational approximation coefficients (central and tail regions)
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def _polyval(coefs, x):
    out = np.zeros_like(x)
    for c in coefs:
        out = out * x + c
    return out


def normal_cdf(z):
    return 0.5 * erfc(-np.asarray(z, dtype=float) / math.sqrt(2.0))


def inverse_normal_cdf(u):
    """Standard normal quantile; rational approximation plus one Newton step."""
    u = np.asarray(u, dtype=float)
    if np.any((u <= 0) | (u >= 1)) or np.any(np.isnan(u)):
        raise DomainError("inverse_normal_cdf needs u in (0, 1)")
    q = np.minimum(u, 1.0 - u)
    z = np.empty_like(q)
    tail = q < _P_LOW
    if np.any(tail):
        t = np.sqrt(-2.0 * np.log(q[tail]))
        z[tail] = _polyval(_C, t) / (_polyval(_D, t) * t + 1.0)
    mid = ~tail
    if np.any(mid):
        r = q[mid] - 0.5
        r2 = r * r
        z[mid] = _polyval(_A, r2) * r / (_polyval(_B, r2) * r2 + 1.0)
    # z is now the lower-tail quantile of q; refine against the erfc-based cdf
    err = normal_cdf(z) - q
    z = z - err * math.sqrt(2.0 * math.pi) * np.exp(0.5 * z * z)
    z = np.where(u > 0.5, -z, z)
    return z[()] if z.ndim == 0 else z


def _normal_pdf(z):
    return np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)


# ---------------------------------------------------------------------------
# penalty values and derivatives


def _pairwise(x, order):
    """sum_i sum_j (x_i - x_j)^2 over ordered pairs, with gradient and Hessian."""
    I = x.shape[0]
    d = x[:, None] - x[None, :]
    val = float(np.sum(d * d))
    if order == 0:
        return val
    g = 4.0 * I * x - 4.0 * np.sum(x)
    H = 4.0 * I * np.eye(I) - 4.0
    return val, g, H


def _p_penalty(spec: PenaltySpec, p, order):
    """Value (and p-gradient, p-Hessian) of a p-based penalty."""
    kind = spec.kind
    I = p.shape[0]
    if kind is PenaltyKind.MEAN_L2:
        return _pairwise(p, order)
    if kind is PenaltyKind.MEAN_Q2:
        pc = np.clip(p, PROB_EPS, 1 - PROB_EPS)
        q = inverse_normal_cdf(pc)
        if order == 0:
            return _pairwise(q, 0)
        val, G, Hq = _pairwise(q, order)
        dq = 1.0 / _normal_pdf(q)
        g = G * dq
        H = Hq * np.outer(dq, dq) + np.diag(G * q * dq * dq)
        return val, g, H

    with np.errstate(divide="ignore"):
        if kind is PenaltyKind.PEN1:
            val, g, h = np.sum(p), np.ones(I), np.zeros(I)
        elif kind is PenaltyKind.PEN2:
            val, g, h = np.sum(p * p), 2 * p, np.full(I, 2.0)
        elif kind is PenaltyKind.PEN3:
            val = -np.sum(np.log1p(-p))
            if order:
                g, h = 1 / (1 - p), 1 / (1 - p) ** 2
        elif kind is PenaltyKind.PEN4:
            val = np.sum(np.log(p))
            if order:
                g, h = 1 / p, -1 / p**2
        elif kind is PenaltyKind.PEN5:
            k = spec.kappa
            val = -np.sum(xlogy(k, p) + xlogy(1 - k, 1 - p))
            if order:
                g = -k / p + (1 - k) / (1 - p)
                h = k / p**2 + (1 - k) / (1 - p) ** 2
        else:
            raise UnsupportedPenalty(spec.kind.value)
    if order == 0:
        return val
    return val, g, np.diag(h)


def penalty_value(spec: PenaltySpec, params: ModelParams) -> float:
    """Value of the penalty at ``params``; p-based kinds use the mean proportion."""
    spec.check_family(params.family)
    if spec.kind is PenaltyKind.NONE:
        return 0.0
    if spec.is_full:
        v = np.asarray(params.values)
        return float(_pairwise(v[:, 0], 0) + _pairwise(v[:, 1], 0))
    return float(_p_penalty(spec, mean_proportion(params), 0))


def penalty_terms(spec: PenaltySpec, family: ModelFamily, theta: np.ndarray, order: int = 0):
    """Penalty with gradient over flattened theta (I*k,) and dense Hessian (I*k, I*k)."""
    I, k = theta.shape
    P = I * k
    if spec.kind is PenaltyKind.NONE:
        return 0.0 if order == 0 else (0.0, np.zeros(P), np.zeros((P, P)))
    if spec.is_full:
        if order == 0:
            return _pairwise(theta[:, 0], 0) + _pairwise(theta[:, 1], 0)
        g = np.empty((I, 2))
        H = np.zeros((P, P))
        val = 0.0
        for c in range(2):
            v, gc, Hc = _pairwise(theta[:, c], 1)
            val += v
            g[:, c] = gc
            H[c::2, c::2] = Hc
        return val, g.ravel(), H

    p, J, Hm = mean_map(family, theta)
    if order == 0:
        return _p_penalty(spec, p, 0)
    val, gp, Hp = _p_penalty(spec, p, 1)
    B = np.zeros((I, P))
    for c in range(k):
        B[np.arange(I), np.arange(I) * k + c] = J[:, c]
    H = B.T @ Hp @ B
    for c in range(k):
        for d in range(k):
            H[np.arange(I) * k + c, np.arange(I) * k + d] += gp * Hm[:, c, d]
    g = (gp[:, None] * J).ravel()
    return val, g, H
