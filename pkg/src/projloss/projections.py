"""Euclidean and KL (Bregman) projections onto the supported polytopes.

``project`` dispatches on the set and the geometry.  Every routine accepts
a single vector or a batch with the vector on the last axis; matrix sets use
row-major flattened vectors at the ``project`` level and ``(..., k, k)``
arrays in the dedicated Birkhoff/row-stochastic routines.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, softmax

from .errors import DomainError, InfeasibleBounds, NotConverged, Unbounded
from .geometry import Geometry, grad_psi_star
from .isotonic import isotonic_logsumexp_decreasing, isotonic_regression_decreasing
from .polytopes import Kind, check_dim, lmo

BIRKHOFF_TOL = 1e-6
BIRKHOFF_MAX_ITER = 10**4
# Sinkhorn switches to log-domain updates above this score magnitude.
LOG_DOMAIN_THRESHOLD = 30.0
SINKHORN_NEWTON_AFTER = 200
NEWTON_MAX_STEP = 4.0
NEWTON_MAX_ITER = 100


@dataclass
class ProjectionResult:
    mu: np.ndarray
    iterations: int = 0
    residual: float = 0.0


def project(spec, geometry, theta, tol=BIRKHOFF_TOL, max_iter=BIRKHOFF_MAX_ITER,
            strict=True):
    """Bregman projection of ``grad_psi_star(theta)`` onto ``spec``.

    Closed-form routines report zero iterations and zero residual.  For the
    iterative Birkhoff solvers ``strict=False`` returns the last iterate
    instead of raising :class:`NotConverged`.
    """
    geometry = Geometry.parse(geometry)
    theta = check_dim(spec, theta)
    kind = spec.kind
    euclid = geometry is Geometry.EUCLIDEAN

    if kind is Kind.FULL_SPACE:
        if not euclid:
            raise DomainError("KL projection over the full space is not defined")
        return ProjectionResult(theta.copy())
    if kind is Kind.SIMPLEX:
        mu = project_simplex_euclidean(theta) if euclid else project_simplex_kl(theta)
        return ProjectionResult(mu)
    if kind is Kind.CUBE:
        return ProjectionResult(project_cube(geometry, theta))
    if kind is Kind.KNAPSACK:
        return ProjectionResult(
            project_knapsack(geometry, theta, spec.lower, spec.upper))
    if kind is Kind.ORDER_SIMPLEX:
        fn = project_order_simplex_euclidean if euclid else project_order_simplex_kl
        return ProjectionResult(_rowwise(fn, theta))
    if kind is Kind.PERMUTAHEDRON:
        fn = (project_permutahedron_euclidean if euclid
              else project_permutahedron_kl)
        return ProjectionResult(_rowwise(lambda t: fn(t, spec.weights), theta))

    k = spec.k
    mats = theta.reshape(theta.shape[:-1] + (k, k))
    if kind is Kind.ROW_STOCHASTIC:
        return ProjectionResult(project_rowstochastic(geometry, mats).reshape(theta.shape))
    res = project_birkhoff(geometry, mats, tol=tol, max_iter=max_iter, strict=strict)
    res.mu = res.mu.reshape(theta.shape)
    return res


def _rowwise(fn, theta):
    if theta.ndim == 1:
        return fn(theta)
    flat = theta.reshape(-1, theta.shape[-1])
    return np.array([fn(row) for row in flat]).reshape(theta.shape)


def project_simplex_euclidean(theta):
    """Sparsemax: ``max(theta - tau, 0)`` with tau chosen so the sum is 1."""
    theta = np.asarray(theta, dtype=float)
    k = theta.shape[-1]
    srt = -np.sort(-theta, axis=-1)
    cssv = np.cumsum(srt, axis=-1) - 1.0
    ind = np.arange(1, k + 1)
    support = srt - cssv / ind > 0
    rho = np.count_nonzero(support, axis=-1)
    tau = np.take_along_axis(cssv, rho[..., None] - 1, axis=-1) / rho[..., None]
    return np.maximum(theta - tau, 0.0)


def project_simplex_kl(theta):
    """Softmax, computed with max subtraction."""
    return softmax(np.asarray(theta, dtype=float), axis=-1)


def project_cube(geometry, theta):
    geometry = Geometry.parse(geometry)
    theta = np.asarray(theta, dtype=float)
    if geometry is Geometry.EUCLIDEAN:
        return np.clip(theta, 0.0, 1.0)
    # min(1, exp(theta - 1)) without overflowing for large theta.
    return np.exp(np.minimum(theta - 1.0, 0.0))


def project_knapsack(geometry, theta, lower, upper):
    """Projection onto ``{mu in [0,1]^k : lower <= sum(mu) <= upper}``.

    The cube projection is returned when it already meets the budget;
    otherwise the binding budget ``m`` (``upper`` or ``lower``) is enforced
    as an equality.
    """
    geometry = Geometry.parse(geometry)
    if lower > upper:
        raise InfeasibleBounds(f"knapsack bounds l={lower} > u={upper}")
    theta = np.asarray(theta, dtype=float)
    if theta.ndim > 1:
        return _rowwise(lambda t: project_knapsack(geometry, t, lower, upper), theta)
    if lower == upper:
        m = lower
    else:
        nu = project_cube(geometry, theta)
        total = nu.sum()
        if lower <= total <= upper:
            return nu
        m = upper if total > upper else lower
    if geometry is Geometry.EUCLIDEAN:
        return _capped_simplex_euclidean(theta, m)
    return _capped_simplex_kl(theta, m)


def _capped_simplex_euclidean(theta, m):
    """``clip(theta - tau, 0, 1)`` with ``tau`` solving ``sum = m``.

    The budget is piecewise linear and nonincreasing in tau with breakpoints
    at ``theta_i - 1`` (coordinate leaves 1) and ``theta_i`` (reaches 0);
    scanning the sorted breakpoints finds the crossing segment.
    """
    k = theta.shape[0]
    if m <= 0:
        return np.zeros(k)
    if m >= k:
        return np.ones(k)
    points = np.concatenate([theta - 1.0, theta])
    slopes = np.concatenate([-np.ones(k), np.ones(k)])
    order = np.argsort(points, kind="stable")
    points, slopes = points[order], slopes[order]
    value = float(k)
    active = 0.0
    tau = points[-1]
    for j in range(2 * k - 1):
        active -= slopes[j]
        nxt = value - active * (points[j + 1] - points[j])
        if nxt <= m:
            tau = points[j] + (value - m) / active if active > 0 else points[j]
            break
        value = nxt
    return np.clip(theta - tau, 0.0, 1.0)


def _capped_simplex_kl(theta, m):
    """KL projection onto ``{mu <= 1, sum(mu) = m}``.

    Solution is ``mu_i = min(1, c * exp(theta_i))``.  Walking down the sorted
    scores, each coordinate whose uncapped share exceeds 1 is capped and the
    remaining mass is redistributed softmax-style over the tail.
    """
    k = theta.shape[0]
    if m <= 0:
        return np.zeros(k)
    if m >= k:
        return np.ones(k)
    order = np.argsort(-theta, kind="stable")
    z = theta[order]
    # tail_lse[c] = logsumexp(z[c:])
    tail_lse = np.logaddexp.accumulate(z[::-1])[::-1]
    mu_sorted = np.empty(k)
    c = 0
    while c < m:
        log_mass = np.log(m - c)
        if z[c] + log_mass - tail_lse[c] <= 0.0:
            break
        c += 1
    mu_sorted[:c] = 1.0
    if c < k:
        mu_sorted[c:] = np.exp(np.log(m - c) + z[c:] - tail_lse[c]) if c < m else 0.0
    mu = np.empty(k)
    mu[order] = mu_sorted
    return mu


def project_rowstochastic(geometry, theta_matrix):
    geometry = Geometry.parse(geometry)
    if geometry is Geometry.EUCLIDEAN:
        return project_simplex_euclidean(theta_matrix)
    return project_simplex_kl(theta_matrix)


def _marginal_violation(mats):
    rows = np.abs(mats.sum(axis=-1) - 1.0).max(axis=-1)
    cols = np.abs(mats.sum(axis=-2) - 1.0).max(axis=-1)
    return np.maximum(rows, cols)


def project_birkhoff(geometry, theta_matrix, tol=BIRKHOFF_TOL,
                     max_iter=BIRKHOFF_MAX_ITER, strict=True):
    """Projection onto doubly stochastic matrices.

    KL uses Sinkhorn scaling of ``exp(theta - 1)``; Euclidean uses Dykstra's
    alternating row-simplex / column-simplex projections with correction
    terms.  ``theta_matrix`` may carry leading batch axes.
    """
    geometry = Geometry.parse(geometry)
    theta = np.asarray(theta_matrix, dtype=float)
    if theta.ndim < 2 or theta.shape[-1] != theta.shape[-2]:
        raise ValueError(f"expected square matrices, got shape {theta.shape}")
    if geometry is Geometry.KL:
        mu, it, res = _sinkhorn(theta, tol, max_iter)
    else:
        mu, it, res = _dykstra(theta, tol, max_iter)
    if res > tol and strict:
        raise NotConverged(
            f"Birkhoff projection stopped after {it} iterations with "
            f"marginal violation {res:.3g}", best=mu, residual=res, iterations=it)
    return ProjectionResult(mu, it, res)


def _sinkhorn(theta, tol, max_iter):
    """Sinkhorn scaling, finished by Newton steps on slow samples.

    Sinkhorn slows to a crawl when ``exp(theta)`` spans many orders of
    magnitude.  Samples still infeasible after ``SINKHORN_NEWTON_AFTER``
    sweeps switch to Newton's method on the dual scalings, which converges
    quadratically there.  Newton steps count towards ``max_iter`` and are
    capped at ``NEWTON_MAX_ITER``: for scores spanning hundreds of nats the
    solution sits so close to a permutation that double precision cannot
    resolve it, and the remaining violation is reported instead.
    """
    budget = min(max_iter, SINKHORN_NEWTON_AFTER)
    if np.max(np.abs(theta)) > LOG_DOMAIN_THRESHOLD:
        mu, it, f, g = _sinkhorn_log(theta, tol, budget)
    else:
        mu, it, f, g = _sinkhorn_plain(theta, tol, budget)
    viol = _marginal_violation(mu)
    if it < max_iter and np.any(viol > tol):
        flat_theta = theta.reshape((-1,) + theta.shape[-2:])
        flat_mu = mu.reshape(flat_theta.shape).copy()
        flat_f = f.reshape(flat_theta.shape[:-1])
        flat_g = g.reshape(flat_theta.shape[:-1])
        extra = 0
        for s in np.flatnonzero(viol.reshape(-1) > tol):
            flat_mu[s], n_it = _newton_scaling(flat_theta[s], flat_f[s], flat_g[s],
                                               tol, min(max_iter - it, NEWTON_MAX_ITER))
            extra = max(extra, n_it)
        mu = flat_mu.reshape(theta.shape)
        it += extra
        viol = _marginal_violation(mu)
    return mu, it, float(np.max(viol))


def _sinkhorn_plain(theta, tol, max_iter):
    shift = theta.max(axis=(-2, -1), keepdims=True)
    K = np.exp(theta - shift)
    v = np.ones(theta.shape[:-1])
    it = 0
    while it < max_iter:
        it += 1
        u = 1.0 / np.einsum("...ij,...j->...i", K, v)
        v = 1.0 / np.einsum("...ij,...i->...j", K, u)
        # Columns are exact after the v-update; rows carry the violation.
        mu = u[..., :, None] * K * v[..., None, :]
        if np.max(_marginal_violation(mu)) <= tol:
            break
    return mu, it, np.log(u) - shift[..., 0], np.log(v)


def _sinkhorn_log(theta, tol, max_iter):
    f = np.zeros(theta.shape[:-1])
    g = np.zeros(theta.shape[:-1])
    it = 0
    while it < max_iter:
        it += 1
        f = -logsumexp(theta + g[..., None, :], axis=-1)
        g = -logsumexp(theta + f[..., :, None], axis=-2)
        mu = np.exp(theta + f[..., :, None] + g[..., None, :])
        if np.max(_marginal_violation(mu)) <= tol:
            break
    return mu, it, f, g


def _newton_scaling(theta, f, g, tol, max_iter):
    """Damped Newton on ``sum exp(theta_ij + f_i + g_j) - sum f - sum g``.

    The last column potential is pinned to zero to remove the shift
    invariance.  Near-permutation solutions make the Hessian almost
    singular, so each step is capped at ``NEWTON_MAX_STEP`` in every
    potential, and the sufficient-decrease test works on the change of the
    dual objective computed term by term (its value is dominated by the
    potentials and would swamp the change in rounding).  Returns the
    scaled matrix and the number of steps.
    """
    k = theta.shape[0]
    f = f + g[-1]
    g = g - g[-1]
    x = np.concatenate([f, g[:-1]])

    def scaled(x):
        with np.errstate(over="ignore"):
            return np.exp(theta + x[:k, None] + np.append(x[k:], 0.0)[None, :])

    P = scaled(x)
    it = 0
    while it < max_iter and np.max(_marginal_violation(P)) > tol:
        it += 1
        r, c = P.sum(axis=1), P.sum(axis=0)
        grad = np.concatenate([r - 1.0, c[:-1] - 1.0])
        H = np.block([[np.diag(r), P[:, :-1]], [P[:, :-1].T, np.diag(c[:-1])]])
        try:
            step = -np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = -np.linalg.lstsq(H, grad, rcond=None)[0]
        if not np.all(np.isfinite(step)):
            step = -grad
        step *= min(1.0, NEWTON_MAX_STEP / np.max(np.abs(step)))
        slope = float(grad @ step)
        if slope >= 0:
            step, slope = -grad, -float(grad @ grad)
        t = 1.0
        while t > 1e-12:
            cand = scaled(x + t * step)
            change = float(np.sum(cand - P)) - t * float(np.sum(step))
            if np.isfinite(change) and change <= 1e-4 * t * slope:
                break
            t *= 0.5
        else:
            break  # no further progress possible in floating point
        x, P = x + t * step, cand
    return P, it


def _dykstra(theta, tol, max_iter):
    x = theta.copy()
    p = np.zeros_like(x)
    q = np.zeros_like(x)
    res = np.inf
    it = 0
    while it < max_iter:
        it += 1
        prev, p_prev, q_prev = x, p, q
        y = project_simplex_euclidean(x + p)
        p = x + p - y
        z = y + q
        x = np.swapaxes(project_simplex_euclidean(np.swapaxes(z, -1, -2)), -1, -2)
        q = z - x
        res = float(np.max(_marginal_violation(x)))
        # The iterate alone can stall for a sweep while the correction terms
        # are still moving, so all three must have settled.
        moved = max(np.max(np.abs(x - prev)), np.max(np.abs(p - p_prev)),
                    np.max(np.abs(q - q_prev)))
        if res <= tol and moved <= tol:
            break
    return x, it, res


def project_permutahedron_euclidean(theta, w):
    """Projection onto the convex hull of all permutations of ``w``.

    Sort ``theta`` descending, fit a nonincreasing isotonic regression to
    ``theta_sorted - w`` and subtract it, then undo the sort.
    """
    theta = np.asarray(theta, dtype=float)
    w = np.asarray(w, dtype=float)
    order = np.argsort(-theta, kind="stable")
    s = theta[order]
    mu = np.empty_like(theta)
    mu[order] = s - isotonic_regression_decreasing(s - w)
    return mu


def project_permutahedron_kl(theta, w):
    """KL projection onto the permutahedron of a positive weight vector."""
    theta = np.asarray(theta, dtype=float)
    w = np.asarray(w, dtype=float)
    if np.any(w <= 0):
        raise DomainError("KL projection onto a permutahedron needs positive weights")
    order = np.argsort(-theta, kind="stable")
    s = theta[order]
    mu = np.empty_like(theta)
    mu[order] = np.exp(s - isotonic_logsumexp_decreasing(s, w))
    return mu


def project_order_simplex_euclidean(theta):
    """Nonincreasing isotonic regression clipped to [0, 1]."""
    return np.clip(isotonic_regression_decreasing(theta), 0.0, 1.0)


def project_order_simplex_kl(theta):
    """KL counterpart: pooled blocks take ``exp(mean(theta_B) - 1)``, capped at 1.

    Stationarity of ``sum_B (mu log mu - theta_i mu)`` gives the block value;
    exp is monotone, so pooling follows the same chain as the Euclidean case.
    """
    iso = isotonic_regression_decreasing(theta)
    return np.exp(np.minimum(iso - 1.0, 0.0))


def project_fw(spec, theta, tol=1e-8, max_iter=10**5, strict=True):
    """Euclidean projection by pairwise Frank-Wolfe using only the set's LMO.

    Stops when the Frank-Wolfe gap ``<theta - mu, s - mu>`` drops to ``tol``;
    the gap bounds the suboptimality of ``0.5 ||mu - theta||^2``.
    """
    if not spec.bounded:
        raise Unbounded("Frank-Wolfe needs a bounded set")
    theta = check_dim(spec, theta)
    start = lmo(spec, theta)
    active = {start.tobytes(): [start, 1.0]}
    mu = start.copy()
    gap = np.inf
    it = 0
    while it < max_iter:
        neg_grad = theta - mu
        s = lmo(spec, neg_grad)
        gap = float(neg_grad @ (s - mu))
        if gap <= tol:
            break
        it += 1
        # Away vertex: the active atom most aligned with the gradient.
        away_key = min(active, key=lambda key: float(neg_grad @ active[key][0]))
        a, alpha_a = active[away_key]
        d = s - a
        dd = float(d @ d)
        if dd == 0.0:
            break
        step = min(alpha_a, float(neg_grad @ d) / dd)
        mu = mu + step * d
        s_key = s.tobytes()
        if s_key in active:
            active[s_key][1] += step
        else:
            active[s_key] = [s, step]
        active[away_key][1] -= step
        if active[away_key][1] <= 1e-15:
            del active[away_key]
    if gap > tol and strict:
        raise NotConverged(f"Frank-Wolfe gap {gap:.3g} after {it} iterations",
                           best=mu, residual=gap, iterations=it)
    return ProjectionResult(mu, it, max(gap, 0.0))


def mirror_point(geometry, theta):
    """Unconstrained prediction ``grad_psi_star(theta)``."""
    return grad_psi_star(geometry, theta)
