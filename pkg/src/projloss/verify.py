"""Independent oracles and numerical diagnostics.

Nothing here reuses the dedicated projection routines: the brute-force
projection works over convex combinations of enumerated vertices, and the
calibration probes check the excess-risk inequality

    dl**2 / (8 * beta * sigma**2) <= ds

for sampled scores ``theta`` and label distributions ``q``.
"""

from dataclasses import dataclass

import numpy as np

from .encoding import calibrated_decode, enumerate_structures
from .errors import NotConverged
from .geometry import Geometry, dual_norm
from .losses import fy_loss
from .polytopes import enumerate_vertices, smoothness_constant
from .projections import project

BRUTE_FORCE_MAX_ITER = 10**5
CALIBRATION_SLACK = 1e-9


def _simplex_weights_projection(x):
    """Euclidean projection onto the simplex by repeated support pruning.

    Deliberately a different algorithm from the sort-based sparsemax used by
    the dedicated projections.
    """
    active = np.ones(x.shape[0], dtype=bool)
    out = np.zeros_like(x)
    while True:
        tau = (x[active].sum() - 1.0) / active.sum()
        y = x - tau
        drop = active & (y <= 0)
        if not drop.any():
            out[active] = y[active]
            return out
        active &= ~drop


def brute_force_projection(spec, geometry, theta, max_iter=BRUTE_FORCE_MAX_ITER,
                           gap_tol=None, vertices=None, strict=True):
    """Projection computed over the convex hull of enumerated vertices.

    Minimizes ``D_psi(sum_i q_i v_i, grad_psi_star(theta))`` over weights
    ``q`` on the simplex and returns the combination.  Euclidean geometry
    uses restarted accelerated projected gradient; KL uses exponentiated
    gradient with backtracking.  Iteration stops once the Frank-Wolfe gap
    over all vertices falls below ``gap_tol`` (default 1e-10 Euclidean,
    1e-9 KL, whose mirror-descent scheme converges sublinearly).  Without
    ``strict`` the last iterate is returned instead of raising
    :class:`NotConverged`.
    """
    geometry = Geometry.parse(geometry)
    theta = np.asarray(theta, dtype=float)
    verts = enumerate_vertices(spec) if vertices is None else vertices
    try:
        if geometry is Geometry.EUCLIDEAN:
            return _brute_force_euclidean(verts, theta, max_iter, gap_tol or 1e-10)
        return _brute_force_kl(verts, theta, max_iter, gap_tol or 1e-9)
    except NotConverged as exc:
        if strict:
            raise
        return exc.best


def _brute_force_euclidean(verts, theta, max_iter, gap_tol):
    n = verts.shape[0]
    lipschitz = max(np.linalg.norm(verts, 2) ** 2, 1e-12)
    q = np.full(n, 1.0 / n)
    z = q.copy()
    t = 1.0
    f_prev = np.inf
    for _ in range(max_iter):
        mu = z @ verts
        grad_q = verts @ (mu - theta)
        q_new = _simplex_weights_projection(z - grad_q / lipschitz)
        mu_new = q_new @ verts
        resid = theta - mu_new
        gap = float(np.max(verts @ resid) - resid @ mu_new)
        if gap <= gap_tol:
            return mu_new
        f_new = 0.5 * float(resid @ resid)
        if f_new > f_prev:
            # Function-value restart keeps the accelerated scheme monotone.
            t = 1.0
            z = q.copy()
            f_prev = np.inf
            continue
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        z = q_new + ((t - 1.0) / t_new) * (q_new - q)
        q, t, f_prev = q_new, t_new, f_new
    raise NotConverged("brute-force projection did not reach the gap tolerance",
                       best=q @ verts, residual=gap, iterations=max_iter)


def _kl_objective(mu, theta):
    pos = mu > 0
    val = np.sum(mu[pos] * np.log(mu[pos])) - mu @ theta
    return float(val)


def _brute_force_kl(verts, theta, max_iter, gap_tol):
    n = verts.shape[0]
    logq = np.full(n, -np.log(n))
    step = 1.0
    mu = np.exp(logq) @ verts
    f = _kl_objective(mu, theta)
    gap = np.inf
    for _ in range(max_iter):
        with np.errstate(divide="ignore"):
            g_mu = np.log(mu) + 1.0 - theta
        g_mu = np.where(np.isfinite(g_mu), g_mu, -1e6)
        neg = -g_mu
        gap = float(np.max(verts @ neg) - neg @ mu)
        if gap <= gap_tol:
            return mu
        g_q = verts @ g_mu
        while True:
            cand = logq - step * g_q
            cand -= np.logaddexp.reduce(cand)
            mu_c = np.exp(cand) @ verts
            f_c = _kl_objective(mu_c, theta)
            if f_c <= f - 1e-4 * float(g_q @ (np.exp(logq) - np.exp(cand))) or step < 1e-12:
                break
            step *= 0.5
        logq, mu, f = cand, mu_c, f_c
        step *= 2.0
    raise NotConverged("brute-force KL projection did not reach the gap tolerance",
                       best=mu, residual=gap, iterations=max_iter)


def finite_diff_grad(fun, theta, h=1e-5):
    """Central differences of a scalar function, one coordinate at a time."""
    if not h > 0:
        raise ValueError("finite-difference step must be positive")
    theta = np.asarray(theta, dtype=float)
    grad = np.empty_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e.flat[i] = h
        grad.flat[i] = (float(fun(theta + e)) - float(fun(theta - e))) / (2 * h)
    return grad


def sigma_constant(decomposition, geometry):
    """``max over outputs of ||V^T psi(yhat)||_*`` (l2 or l-infinity)."""
    _, outputs = enumerate_structures(decomposition.output_spec)
    if not np.any(decomposition.V):
        return 0.0
    return float(np.max(dual_norm(geometry, outputs @ decomposition.V)))


@dataclass
class CalibrationProbe:
    spec: object
    geometry: object
    decomposition: object
    q: np.ndarray
    theta: np.ndarray
    decode_spec: object = None


@dataclass
class CalibrationCheck:
    delta_loss: float
    delta_surrogate: float
    lhs: float
    rhs: float
    holds: bool


def check_calibration(probe, project_kw=None):
    """Evaluate the pointwise excess risks of one probe and the inequality."""
    project_kw = project_kw or {}
    decomp = probe.decomposition
    decode_spec = probe.decode_spec or decomp.output_spec
    labels, phis = enumerate_structures(decomp.output_spec)
    q = np.asarray(probe.q, dtype=float)
    if q.shape != (len(labels),) or np.any(q < 0) or abs(q.sum() - 1.0) > 1e-9:
        raise ValueError("q must be a distribution over the enumerated structures")
    mu_q = q @ phis

    delta_s = float(fy_loss(probe.spec, probe.geometry, probe.theta, mu_q,
                            **project_kw).value)
    u = project(probe.spec, probe.geometry, probe.theta, **project_kw).mu
    y_dec = calibrated_decode(decomp, decode_spec, u)
    y_bayes = calibrated_decode(decomp, decode_spec, mu_q)
    risk_dir = decomp.V @ mu_q + decomp.b
    delta_l = float((decomp.encode_output(y_dec) - decomp.encode_output(y_bayes))
                    @ risk_dir)

    beta = smoothness_constant(probe.spec, probe.geometry)
    sigma = sigma_constant(decomp, probe.geometry)
    lhs = 0.0 if sigma == 0 else delta_l**2 / (8.0 * beta * sigma**2)
    return CalibrationCheck(delta_l, delta_s, lhs, delta_s,
                            lhs <= delta_s + CALIBRATION_SLACK)


def sample_probes(spec, geometry, decomposition, n, seed, scale=2.0):
    """Seeded probes with ``theta ~ N(0, scale^2)`` and flat-Dirichlet ``q``."""
    rng = np.random.default_rng(seed)
    n_struct = len(enumerate_structures(decomposition.output_spec)[0])
    for _ in range(n):
        theta = rng.normal(scale=scale, size=spec.ambient_dim)
        q = rng.dirichlet(np.ones(n_struct))
        yield CalibrationProbe(spec, geometry, decomposition, q, theta)


def run_calibration(spec, geometry, decomposition, n, seed):
    """Run ``n`` probes; returns the number of violations and the worst ratio."""
    violations = 0
    worst = 0.0
    for probe in sample_probes(spec, geometry, decomposition, n, seed):
        res = check_calibration(probe)
        if not res.holds:
            violations += 1
        if res.rhs > 0:
            worst = max(worst, res.lhs / res.rhs)
    return violations, worst
