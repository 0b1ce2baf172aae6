"""Score minimisation shared by the EMOS fits.

Nelder-Mead with restarts from the incumbent, optionally polished by BFGS
with finite-difference gradients. The result is never worse than the
starting point.
"""

from dataclasses import dataclass

import numpy as np
from scipy import optimize


class OptimizationError(RuntimeError):
    """Raised when no finite objective value could be reached.

    ``best_x`` and ``best_fun`` hold the best point seen.
    """

    def __init__(self, message, best_x, best_fun):
        super().__init__(message)
        self.best_x = best_x
        self.best_fun = best_fun


@dataclass(frozen=True)
class MinimizeResult:
    x: np.ndarray
    fun: float
    initial_fun: float
    nfev: int
    improved: bool


def minimize_score(fun, x0, *, restarts=2, maxiter=None, refine=True, xatol=1e-6, fatol=1e-9):
    x0 = np.asarray(x0, dtype=float)
    nfev = 0

    def safe(x):
        nonlocal nfev
        nfev += 1
        v = fun(x)
        return v if np.isfinite(v) else np.inf

    f0 = safe(x0)
    best_x, best_f = x0.copy(), f0
    n = x0.size
    if maxiter is None:
        maxiter = 200 * n
    opts = dict(maxiter=maxiter, maxfev=2 * maxiter, xatol=xatol, fatol=fatol, adaptive=n > 4)

    start = x0
    for _ in range(1 + restarts):
        res = optimize.minimize(safe, start, method="Nelder-Mead", options=opts)
        if res.fun < best_f - fatol:
            best_x, best_f = np.asarray(res.x, dtype=float), float(res.fun)
            start = best_x
        else:
            if res.fun < best_f:
                best_x, best_f = np.asarray(res.x, dtype=float), float(res.fun)
            break

    if refine and np.isfinite(best_f):
        res = optimize.minimize(safe, best_x, method="BFGS", options=dict(maxiter=50 * n, gtol=1e-7))
        if np.isfinite(res.fun) and res.fun < best_f:
            best_x, best_f = np.asarray(res.x, dtype=float), float(res.fun)

    if not np.isfinite(best_f):
        raise OptimizationError("objective not finite at any evaluated point", best_x, best_f)
    return MinimizeResult(best_x, best_f, f0, nfev, best_f < f0)


def minimize_smooth(fun_and_grad, x0, *, maxiter=500, gtol=1e-7, fallback=True):
    """L-BFGS on an objective returning ``(value, gradient)``.

    Falls back to :func:`minimize_score` when the quasi-Newton run does not
    improve on the start; the result is never worse than ``x0``.
    """
    x0 = np.asarray(x0, dtype=float)
    f0 = float(fun_and_grad(x0)[0])

    def safe(x):
        v, g = fun_and_grad(x)
        if not np.isfinite(v):
            return np.inf, np.zeros_like(x)
        return v, g

    res = optimize.minimize(safe, x0, jac=True, method="L-BFGS-B", options=dict(maxiter=maxiter, gtol=gtol))
    best_x, best_f = x0, f0 if np.isfinite(f0) else np.inf
    if np.isfinite(res.fun) and res.fun < best_f:
        best_x, best_f = np.asarray(res.x, dtype=float), float(res.fun)
    nfev = int(res.nfev)
    if fallback and not best_f < f0:
        alt = minimize_score(lambda x: safe(x)[0], best_x, restarts=1, refine=False)
        nfev += alt.nfev
        if alt.fun < best_f:
            best_x, best_f = alt.x, alt.fun
    if not np.isfinite(best_f):
        raise OptimizationError("objective not finite at any evaluated point", best_x, best_f)
    return MinimizeResult(best_x, best_f, f0, nfev, best_f < f0)
