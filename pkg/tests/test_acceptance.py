"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run on its own with ``pytest tests/test_acceptance.py`` (or as a script);
the summary lines appear at the end of the session.
"""

import itertools
import json
import os
import subprocess
import sys
import time

import numpy as np
import pytest
from scipy.special import softmax

from projloss.cli import calibration_suite, gradcheck, run_one
from projloss.datasets import iris_ranking, synthetic_ordinal
from projloss.losses import compositional_loss, fy_loss, unprojected_bound
from projloss.model import TrainConfig
from projloss.polytopes import Kind, Polytope, enumerate_vertices, smoothness_constant
from projloss.projections import (project, project_birkhoff, project_cube, project_knapsack,
                                  project_simplex_euclidean)
from projloss.verify import brute_force_projection, run_calibration

GEOMETRIES = ("euclidean", "kl")


def bounded_sets(k):
    return [
        Polytope.simplex(k),
        Polytope.cube(k),
        Polytope.knapsack(k, 1, 2),
        Polytope.birkhoff(k),
        Polytope.row_stochastic(k),
        Polytope.permutahedron(np.arange(k, 0, -1, dtype=float)),
        Polytope.order_simplex(k),
    ]


def random_vertices(spec, rng, n):
    verts = enumerate_vertices(spec)
    return verts[rng.integers(len(verts), size=n)]


@pytest.mark.criterion(1, "Euclidean projections match the brute-force oracle")
def test_oracle_equivalence(record_property):
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    worst = 0.0
    for k in (2, 3, 4):
        for spec in bounded_sets(k):
            if spec.kind is Kind.ORDER_SIMPLEX and k == 2:
                continue
            verts = enumerate_vertices(spec)
            theta = 3 * rng.normal(size=(100, spec.ambient_dim))
            mu = project(spec, "euclidean", theta, tol=1e-10).mu
            for t, m in zip(theta, mu):
                oracle = brute_force_projection(spec, "euclidean", t, vertices=verts)
                worst = max(worst, float(np.max(np.abs(m - oracle))))
    elapsed = time.perf_counter() - start
    record_property("max_err", f"{worst:.2e}")
    record_property("seconds", f"{elapsed:.1f}")
    assert worst <= 1e-4 and elapsed < 60


def kkt_residual(theta, mu):
    support = mu > 0
    tau = np.sum((theta - mu) * support, axis=1) / support.sum(axis=1)
    stationarity = np.where(support, np.abs(theta - mu - tau[:, None]), 0.0)
    slack = np.where(support, 0.0, np.maximum(theta - tau[:, None], 0.0))
    return max(float(np.max(np.abs(mu.sum(axis=1) - 1))), float(np.max(-mu)),
               float(np.max(stationarity)), float(np.max(slack)))


@pytest.mark.criterion(2, "softmax and sparsemax recovered on the simplex")
def test_special_cases(record_property):
    rng = np.random.default_rng(2)
    theta = 3 * rng.normal(size=(10**4, 6))
    soft_err = float(np.max(np.abs(project(Polytope.simplex(6), "kl", theta).mu
                                   - softmax(theta, axis=1))))
    kkt = kkt_residual(theta, project_simplex_euclidean(theta))
    record_property("softmax_err", f"{soft_err:.1e}")
    record_property("kkt", f"{kkt:.1e}")
    assert soft_err <= 1e-10 and kkt <= 1e-9


def nested_chains(k):
    for g in GEOMETRIES:
        yield g, [Polytope.simplex(k), Polytope.knapsack(k, 1, 2), Polytope.cube(k)]
    yield "euclidean", [Polytope.birkhoff(k), Polytope.row_stochastic(k),
                        Polytope.cube(k * k), Polytope.full_space(k * k)]
    # The full space has no KL projection, so the KL chain stops at the cube.
    yield "kl", [Polytope.birkhoff(k), Polytope.row_stochastic(k), Polytope.cube(k * k)]


@pytest.mark.criterion(3, "sandwich bound and set monotonicity")
def test_sandwich_and_monotonicity(record_property):
    rng = np.random.default_rng(3)
    n, slack = 10**3, 1e-9
    worst = -np.inf
    for spec in bounded_sets(3):
        for g in GEOMETRIES:
            theta = 2 * rng.normal(size=(n, spec.ambient_dim))
            target = random_vertices(spec, rng, n)
            comp = compositional_loss(spec, g, theta, target, tol=1e-12)
            fy = fy_loss(spec, g, theta, target, tol=1e-12).value
            bound = unprojected_bound(g, theta, target)
            worst = max(worst, float(np.max(comp - fy)), float(np.max(fy - bound)))
    for g, chain in nested_chains(3):
        theta = 2 * rng.normal(size=(n, chain[0].ambient_dim))
        target = random_vertices(chain[0], rng, n)
        values = [fy_loss(s, g, theta, target, tol=1e-12).value for s in chain]
        for small, large in zip(values, values[1:]):
            worst = max(worst, float(np.max(small - large)))
    record_property("worst_violation", f"{worst:.1e}")
    assert worst <= slack


@pytest.mark.criterion(4, "loss gradients match central differences")
def test_gradients(record_property):
    worst = {"closed-form": 0.0, "birkhoff": 0.0}
    configs = [(s, g) for s in bounded_sets(3) for g in GEOMETRIES]
    configs.append((Polytope.full_space(3), "euclidean"))
    failed = []
    for seed, (spec, g) in enumerate(configs):
        err, tol = gradcheck(spec, g, seed=seed, points=20)
        key = "birkhoff" if spec.kind is Kind.BIRKHOFF else "closed-form"
        worst[key] = max(worst[key], err)
        if err > tol:
            failed.append(f"{spec.describe()}/{g}")
    record_property("closed_form", f"{worst['closed-form']:.1e}")
    record_property("birkhoff", f"{worst['birkhoff']:.1e}")
    assert not failed, failed


def knapsack_branch(g, theta, lower, upper):
    total = project_cube(g, theta).sum()
    return "lower" if total < lower else "upper" if total > upper else "interior"


@pytest.mark.criterion(5, "knapsack projection covers all three cases")
def test_knapsack_cases(record_property):
    # Decimal literals such as 0.85 are not floats, so "exact" means equal up
    # to a few rounding errors.
    exact = 4 * np.finfo(float).eps
    np.testing.assert_allclose(
        project_knapsack("euclidean", np.array([2.0, 1.5, 0.8]), 0, 2), [1.0, 0.85, 0.15],
        rtol=0, atol=exact)
    np.testing.assert_allclose(
        project_knapsack("euclidean", np.array([-1.0, -2.0, -3.0]), 1, 2), [1.0, 0.0, 0.0],
        rtol=0, atol=exact)
    interior = {"euclidean": [0.3, 0.9, -0.5, 0.6], "kl": [0.5, 0.2, -0.5, -1.0]}
    spec = Polytope.knapsack(4, 1, 2)
    covered = []
    for g in GEOMETRIES:
        cases = {"interior": np.array(interior[g]),
                 "upper": np.array([3.0, 2.5, 2.0, 1.8]),
                 "lower": np.array([-3.0, -2.5, -4.0, -5.0])}
        for name, theta in cases.items():
            assert knapsack_branch(g, theta, 1, 2) == name
            mu = project_knapsack(g, theta, 1, 2)
            oracle = brute_force_projection(spec, g, theta, strict=False)
            np.testing.assert_allclose(mu, oracle, atol=1e-5)
            covered.append(f"{g}:{name}")
    record_property("covered", ",".join(covered))


@pytest.mark.criterion(6, "Birkhoff projections reach 1e-6 marginal violation")
def test_birkhoff_feasibility(record_property):
    rng = np.random.default_rng(6)
    theta = rng.normal(size=(100, 5, 5))
    for g in GEOMETRIES:
        res = project_birkhoff(g, theta, tol=1e-6, max_iter=10**4)
        record_property(g, f"residual {res.residual:.1e} in {res.iterations} iterations")
        assert res.residual <= 1e-6 and res.iterations <= 10**4


@pytest.mark.criterion(7, "calibration inequality holds on sampled probes")
def test_calibration(record_property):
    total = 0
    for spec, decomposition in calibration_suite(3):
        for g in GEOMETRIES:
            violations, _ = run_calibration(spec, g, decomposition, 10**4, seed=7)
            total += violations
    record_property("violations", f"{total}/60000")
    assert total == 0


def timed_run(dataset, seed=0, **cfg):
    start = time.perf_counter()
    _, metrics = run_one(dataset, TrainConfig(lambda_grid=TrainConfig().lambda_grid, **cfg),
                         seed)
    return metrics, time.perf_counter() - start


@pytest.mark.criterion(8, "desk-scale pipelines beat their baselines")
def test_experiments(record_property):
    iris = iris_ranking()
    ours, t1 = timed_run(iris, task="ranking", projection="birkhoff",
                         decoding="birkhoff", n_labels=3)
    base, t2 = timed_run(iris, task="ranking", projection="full", decoding="cube",
                         n_labels=3)
    ordinal = synthetic_ordinal(n=500, k=5)
    order, t3 = timed_run(ordinal, task="ordinal", projection="order_simplex",
                          decoding="order_simplex", n_labels=5)
    ridge, t4 = timed_run(ordinal, task="ordinal", n_labels=5, baseline="rounding_ridge")
    record_property("iris_hamming", f"{ours['hamming']:.2f} vs {base['hamming']:.2f}")
    record_property("ordinal_mae", f"{order['mae']:.2f} vs {ridge['mae']:.2f}")
    record_property("slowest_run_s", f"{max(t1, t2, t3, t4):.0f}")
    assert ours["hamming"] <= 10.0 and ours["hamming"] < base["hamming"]
    assert order["mae"] <= ridge["mae"]
    assert max(t1, t2, t3, t4) < 120


def all_small_sets():
    for k in range(1, 5):
        yield Polytope.simplex(k)
        yield Polytope.cube(k)
        yield Polytope.birkhoff(k)
        yield Polytope.row_stochastic(k)
        yield Polytope.permutahedron(np.sort(np.random.default_rng(k).uniform(0, 3, k))[::-1])
        if k >= 2:
            yield Polytope.order_simplex(k)
        for lower, upper in itertools.combinations_with_replacement(range(k + 1), 2):
            yield Polytope.knapsack(k, lower, upper)


@pytest.mark.criterion(9, "smoothness constants equal vertex suprema")
def test_smoothness_constants(record_property):
    checked = 0
    for spec in all_small_sets():
        l1 = float(np.max(np.sum(np.abs(enumerate_vertices(spec)), axis=1)))
        assert smoothness_constant(spec, "kl") == l1, spec.describe()
        assert smoothness_constant(spec, "euclidean") == 1
        checked += 1
    record_property("sets", checked)


def cli(*argv, env):
    return subprocess.run([sys.executable, "-m", "projloss", *argv], env=env,
                          capture_output=True, check=True)


@pytest.mark.criterion(10, "train and experiment reports are byte-identical")
def test_determinism(tmp_path, record_property):
    env = {**os.environ, "PROJLOSS_THREADS": "1"}
    runs = {
        "train": ["train", "--task", "ranking", "--data", "builtin:iris", "--n-labels",
                  "3", "--projection", "birkhoff", "--decoding", "birkhoff",
                  "--lambda-grid", "0.01", "1", "100", "--seed", "3"],
        "experiment": ["experiment", "--preset", "ordinal", "--seeds", "0", "1"],
    }
    for name, argv in runs.items():
        blobs = []
        for attempt in range(2):
            path = tmp_path / f"{name}{attempt}.json"
            cli(*argv, "--report", str(path), env=env)
            blobs.append(path.read_bytes())
        assert blobs[0] == blobs[1], name
        json.loads(blobs[0])
        record_property(name, f"{len(blobs[0])} bytes")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
