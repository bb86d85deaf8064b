import numpy as np
import pytest

from projloss.polytopes import Polytope


def small_specs():
    """One instance of every bounded set, small enough to enumerate."""
    return [
        Polytope.simplex(4),
        Polytope.cube(4),
        Polytope.knapsack(4, 1, 2),
        Polytope.knapsack(4, 0, 3),
        Polytope.birkhoff(3),
        Polytope.row_stochastic(3),
        Polytope.permutahedron([3.0, 2.0, 1.0, 0.5]),
        Polytope.order_simplex(4),
    ]


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")
    config._criteria = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call":
        return
    number, title = marker.args
    detail = "; ".join(f"{k} {v}" for k, v in item.user_properties)
    item.config._criteria[number] = (title, report.passed, detail)


def pytest_terminal_summary(terminalreporter, config):
    criteria = getattr(config, "_criteria", {})
    if not criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(criteria):
        title, passed, detail = criteria[number]
        line = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {title}"
        terminalreporter.write_line(f"{line}  ({detail})" if detail else line)
