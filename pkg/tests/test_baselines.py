import math

import numpy as np
import pytest

import qostiefel as q
from qostiefel.baselines import dense_commutator
from qostiefel.errors import ParameterError, SizeError
from conftest import problem, run


def test_reference_on_diagonal():
    lam, V = q.reference_eigensolve(q.from_matrix(np.diag([-3.0, -2.0, -1.0])), 2)
    np.testing.assert_allclose(lam, [-3, -2])
    np.testing.assert_allclose(np.abs(V), np.eye(3)[:, :2])


def test_reference_laplacian_closed_form():
    n = 63
    h = math.pi / (n + 1)
    lam, V = q.reference_eigensolve(q.build_problem("laplacian", 1, n), 6)
    k = np.arange(1, 7)
    np.testing.assert_allclose(lam, 2 / h**2 * np.sin(k * h / 2) ** 2, atol=1e-9)
    np.testing.assert_allclose(V.T @ V, np.eye(6), atol=1e-12)


def test_reference_shift_identity():
    H = q.build_problem("harmonic", 1, 31)
    Hs, sigma = q.auto_shift(H)
    np.testing.assert_allclose(q.reference_eigensolve(Hs, 4)[0],
                               q.reference_eigensolve(H, 4)[0] - sigma, atol=1e-10)


@pytest.mark.parametrize("name,dim,n", [("laplacian", 2, 10), ("harmonic", 1, 63), ("hydrogen", 2, 11)])
def test_reference_residuals(name, dim, n):
    H = q.build_problem(name, dim, n)
    lam, V = q.reference_eigensolve(H, 5)
    A = H.dense()
    assert np.linalg.norm(A @ V - V * lam, axis=0).max() <= 1e-9 * np.linalg.norm(A, 2)


def test_reference_errors():
    H = q.build_problem("laplacian", 1, 5)
    with pytest.raises(ParameterError):
        q.reference_eigensolve(H, 6)
    with pytest.raises(SizeError):
        q.reference_eigensolve(q.from_matrix(np.eye(6), dense_cap=5), 1)


def test_dense_predictor_solve(rng):
    A = rng.standard_normal((9, 9))
    H = q.from_matrix(A + A.T)
    U, R = rng.standard_normal((9, 2)), rng.standard_normal((9, 2))
    np.testing.assert_array_equal(q.dense_predictor_solve(H, U, 0.0, R), R)
    X = q.dense_predictor_solve(H, U, 0.05, R)
    Acomm = dense_commutator(H, U)
    np.testing.assert_allclose(X + 0.025 * Acomm @ X, R, atol=1e-12)
    assert np.linalg.norm(Acomm + Acomm.T) <= 1e-12 * np.linalg.norm(Acomm)


def test_baseline_from_eigenvectors():
    H, _ = q.auto_shift(q.build_problem("harmonic", 1, 30))
    lam, V = q.reference_eigensolve(H, 3)
    res = q.baseline_projected_gradient(H, V)
    assert res.converged and res.iterations == 0


def test_baseline_orthonormal_every_step():
    H, _ = q.auto_shift(q.build_problem("harmonic", 1, 30))
    res = q.baseline_projected_gradient(H, q.random_block(H.dim, 3, "raw", seed=1),
                                        q.SolverConfig(max_outer=200))
    assert max(r.orth_err_post for r in res.trace) <= 1e-12
    assert res.trace[1].orth_err_pre > 0


@pytest.mark.slow
@pytest.mark.parametrize("key", ["laplacian1d", "harmonic1d", "laplacian3d", "hydrogen3d"])
def test_baseline_agrees_with_solver(key):
    H, sigma, lam, _, N = problem(key)
    ours, U0, _ = run(key, "near_solution")
    base = q.baseline_projected_gradient(H, U0)
    assert base.converged
    np.testing.assert_allclose(base.ritz_values, ours.ritz_values, rtol=1e-6)
    np.testing.assert_allclose(base.ritz_values, lam + sigma, rtol=1e-6)
