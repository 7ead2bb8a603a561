"""Projected, eigenvalue-modified Newton iteration for small smooth problems.

The objective callback has signature ``fun(x, order)`` and returns ``f`` when
``order == 0``, ``(f, g)`` when ``order == 1`` and ``(f, g, H)`` when
``order == 2``.  Simple bounds are handled by freezing coordinates that sit on
a bound with the gradient pointing outward.
"""

from dataclasses import dataclass

import numpy as np


@dataclass
class NewtonResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    converged: bool
    iterations: int
    at_bound: np.ndarray


SNAP = 1e-6
STATIONARY_TOL = 1e-6


def _snap(x, lower, upper):
    """Put coordinates that are within SNAP of a bound exactly on it."""
    x = np.where(x - lower <= SNAP, lower, x)
    return np.where(upper - x <= SNAP, upper, x)


def _search(fun, x, f, g, step, lower, upper):
    """Backtracking along the projected path x + t*step; None if no decrease is found."""
    t = 1.0
    while t >= 1e-14:
        xn = np.clip(x + t * step, lower, upper)
        fn = fun(xn, 0)
        if np.isfinite(fn) and fn < f and fn <= f + 1e-4 * (g @ (xn - x)):
            return xn
        t *= 0.5
    return None


def newton_minimize(fun, x0, lower, upper, gtol=1e-9, ftol=1e-10, maxiter=10_000):
    lower = np.broadcast_to(np.asarray(lower, dtype=float), np.shape(x0))
    upper = np.broadcast_to(np.asarray(upper, dtype=float), np.shape(x0))
    x = _snap(np.clip(np.asarray(x0, dtype=float), lower, upper), lower, upper)
    f, g, H = fun(x, 2)
    if not np.isfinite(f):
        raise FloatingPointError("objective is not finite at the starting point")

    converged = False
    it = 0
    for it in range(1, maxiter + 1):
        blocked = ((x <= lower) & (g > 0)) | ((x >= upper) & (g < 0))
        free = ~blocked
        pg = np.where(free, g, 0.0)
        if np.max(np.abs(pg), initial=0.0) <= gtol:
            converged = True
            break

        gf = g[free]
        w, V = np.linalg.eigh(H[np.ix_(free, free)])
        floor = max(1e-14 * np.max(np.abs(w)), 1e-12)
        w = np.maximum(np.abs(w), floor)
        step = np.zeros_like(x)
        step[free] = -V @ ((V.T @ gf) / w)
        decrement = -gf @ step[free]
        scale = max(1.0, abs(f))
        if decrement <= ftol * scale:
            # f cannot resolve the remaining progress; judge full steps by the gradient
            xn = _snap(np.clip(x + step, lower, upper), lower, upper)
            fn, gn, Hn = fun(xn, 2)
            pgn = np.where(~(((xn <= lower) & (gn > 0)) | ((xn >= upper) & (gn < 0))), gn, 0.0)
            if np.isfinite(fn) and np.max(np.abs(pgn)) < 0.5 * np.max(np.abs(pg)):
                x, f, g, H = xn, fn, gn, Hn
                continue
            converged = True
            break

        xn = None
        xt = np.clip(x + step, lower, upper)
        ft = fun(xt, 0)
        if np.isfinite(ft) and abs(ft - f) <= 1e-12 * scale:
            # f is flat to rounding here; judge the full step by the gradient
            _, gn = fun(xt, 1)
            if np.max(np.abs(np.where(free, gn, 0.0))) < np.max(np.abs(pg)):
                xn = xt
        if xn is None:
            xn = _search(fun, x, f, g, step, lower, upper)
        if xn is None:
            # Newton direction spoiled by the bounds or a near-singular Hessian
            xn = _search(fun, x, f, g, -pg / max(1.0, np.max(np.abs(pg))), lower, upper)
        if xn is None:
            # no resolvable decrease in any direction: stationary to rounding if pg is small
            converged = np.max(np.abs(pg)) <= STATIONARY_TOL * scale
            break
        x = _snap(xn, lower, upper)
        f, g, H = fun(x, 2)

    at_bound = (x <= lower) | (x >= upper)
    return NewtonResult(x=x, fun=float(f), grad=g, converged=bool(converged), iterations=it, at_bound=at_bound)
