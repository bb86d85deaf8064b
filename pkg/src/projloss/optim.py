"""L-BFGS driver for smooth objectives returning ``(value, gradient)``."""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

CONVERGED = "converged"
MAX_ITER = "max_iter"
LINE_SEARCH_FAILED = "line_search_failed"
NOT_CONVERGED = "not_converged"


@dataclass
class LBFGSResult:
    x: np.ndarray
    fun: float
    grad_norm: float
    n_iter: int
    status: str
    history: list = field(default_factory=list)

    @property
    def converged(self):
        return self.status == CONVERGED


def lbfgs_minimize(fun, x0, memory=10, grad_tol=1e-6, max_iter=500):
    """Minimize ``fun`` from ``x0``.

    Stops when the gradient's infinity norm is at most ``grad_tol`` or after
    ``max_iter`` iterations.  Steps satisfy the strong Wolfe conditions, so
    the objective decreases monotonically over ``history``.  Line-search
    failure does not raise: the best iterate comes back with
    ``status == "line_search_failed"``.
    """
    x0 = np.asarray(x0, dtype=float).ravel()
    f0, g0 = fun(x0)
    f0 = float(f0)
    g0_norm = float(np.max(np.abs(g0))) if g0.size else 0.0
    if max_iter <= 0 or g0_norm <= grad_tol:
        status = CONVERGED if g0_norm <= grad_tol else NOT_CONVERGED
        return LBFGSResult(x0.copy(), f0, g0_norm, 0, status, [f0])

    history = [f0]
    best = {"x": x0.copy(), "f": f0}

    def wrapped(x):
        f, g = fun(x)
        f = float(f)
        if f < best["f"]:
            best["x"], best["f"] = x.copy(), f
        return f, np.asarray(g, dtype=float).ravel()

    def record(intermediate_result):
        history.append(float(intermediate_result.fun))

    res = minimize(wrapped, x0, jac=True, method="L-BFGS-B", callback=record,
                   options={"maxcor": memory, "gtol": grad_tol, "maxiter": max_iter,
                            "ftol": 0.0, "maxls": 50})
    x = res.x if res.fun <= best["f"] else best["x"]
    f, g = fun(x)
    g_norm = float(np.max(np.abs(g)))
    message = str(res.message).upper()
    if g_norm <= grad_tol:
        status = CONVERGED
    elif "ITERATION" in message:
        status = MAX_ITER
    elif "ABNORMAL" in message or "LNSRCH" in message:
        status = LINE_SEARCH_FAILED
    else:
        status = NOT_CONVERGED
    return LBFGSResult(np.asarray(x, dtype=float), float(f), g_norm,
                       int(res.nit), status, history)
