"""Shared fixtures: gallery problems and cached solver runs.

Full solves take seconds each, so every run used by more than one test is
computed once per session.
"""

import time

import numpy as np
import pytest

import qostiefel as q

SEED = 7

# (problem, dimension, n, N) at the sizes used by the acceptance suite
GALLERY = {
    "laplacian1d": ("laplacian", 1, 63, 4),
    "harmonic1d": ("harmonic", 1, 63, 4),
    "laplacian3d": ("laplacian", 3, 15, 4),
    "hydrogen3d": ("hydrogen", 3, 15, 5),
}

_problems = {}
_runs = {}


def problem(key):
    """``(H_shifted, sigma, reference values (shifted), reference vectors, N)``."""
    if key not in _problems:
        name, dim, n, N = GALLERY[key]
        H, sigma = q.auto_shift(q.build_problem(name, dim, n))
        lam, V = q.reference_eigensolve(H, N)
        _problems[key] = (H, sigma, lam, V, N)
    return _problems[key]


def run(key, init, eta=0.1, **config):
    """Cached ``(result, U0, seconds)`` for a gallery problem and init mode."""
    tag = (key, init, eta, tuple(sorted(config.items())))
    if tag not in _runs:
        H, _, _, V, N = problem(key)
        if init == "near_solution":
            U0 = q.random_block(H.dim, N, init, seed=SEED, eta=eta, V_ref=V)
        else:
            U0 = q.random_block(H.dim, N, init, seed=SEED)
        t0 = time.perf_counter()
        res = q.solve(H, U0, q.SolverConfig(seed=SEED, **config))
        _runs[tag] = (res, U0, time.perf_counter() - t0)
    return _runs[tag]


@pytest.fixture(scope="session")
def lap1d():
    return problem("laplacian1d")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_symmetric(rng, n, scale=1.0):
    A = rng.standard_normal((n, n))
    return scale * 0.5 * (A + A.T)


def random_orthogonal(rng, n):
    Q, R = np.linalg.qr(rng.standard_normal((n, n)))
    return Q * np.sign(np.diag(R))


# ---------------------------------------------------------------- reporting

_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(k): acceptance criterion number k")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    k = getattr(report, "criterion", None)
    if k is None:
        return
    ok = report.outcome == "passed"
    _criteria[k] = _criteria.get(k, True) and ok


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        outcome.get_result().criterion = marker.args[0]


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_criteria):
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if _criteria[k] else 'FAIL'}")
