"""Dense reference solves and an explicitly re-orthogonalizing baseline."""

import math
import time

import numpy as np

from .errors import DivergenceError, ParameterError, ShapeError
from .gallery import estimate_spectral_bounds
from .linalg import orthonormalize, solve_dense, sym_eig
from .solver import (
    IterationRecord,
    SolverConfig,
    SpectralResult,
    _check_pair,
    _hess,
    _step_from,
    default_step_cap,
    rayleigh_ritz,
)
from .diagnostics import relative_iterate_error


def reference_eigensolve(H, N):
    """The ``N`` smallest eigenpairs of ``H`` from its dense view.

    Eigenvalues refer to ``H`` as given, shift included.
    """
    if not 1 <= N <= H.dim:
        raise ParameterError(f"need 1 <= N <= {H.dim}, got {N}")
    return sym_eig(H.dense(), subset=N, dense_cap=H.dense_cap)


def dense_commutator(H, U):
    """Materialize ``A_U = (HU) U^T - U (HU)^T`` as an ``N_g x N_g`` array."""
    U = _check_pair(H, U)
    HU = H.apply(U)
    return HU @ U.T - U @ HU.T


def dense_predictor_solve(H, U_mid, s, RHS):
    """Solve ``(I + s/2 A_{U_mid}) X = RHS`` with a dense LU factorization."""
    A = dense_commutator(H, U_mid)
    RHS = _check_pair(H, RHS, "RHS")
    if s == 0:
        return RHS.copy()
    M = np.eye(H.dim) + 0.5 * s * A
    return solve_dense(M, RHS)


def baseline_projected_gradient(H, U0, config=None):
    """Projected gradient descent with QR re-orthonormalization every step.

    ``U <- orthonormalize(U - s G)`` with the step rule and stopping test of
    :func:`qostiefel.solver.solve`.  ``orth_err_pre`` records the block
    before re-orthonormalization.
    """
    cfg = config or SolverConfig()
    U = _check_pair(H, U0, "U0")
    if U.shape[1] > U.shape[0]:
        raise ShapeError(f"block size {U.shape[1]} exceeds dimension {U.shape[0]}")
    cap = cfg.step_cap if cfg.step_cap is not None else default_step_cap(estimate_spectral_bounds(H))
    eye = np.eye(U.shape[1])
    t0 = time.perf_counter()
    U = orthonormalize(U)
    orth_pre = float(np.linalg.norm(eye - U.T @ U))
    HU = H.apply(U)
    trace, snap_idx, snaps = [], [], []
    n = 0
    while True:
        if n % cfg.snapshot_stride == 0:
            snap_idx.append(n)
            snaps.append(U.copy())
        UtHU = U.T @ HU
        G = HU - U @ UtHU
        g2 = float(np.sum(G * G))
        if cfg.step_mode == "adaptive":
            s = _step_from(g2, _hess(G, H.apply(G), UtHU), cap)
        else:
            s = min(cfg.fixed_step, cap)
        done = math.sqrt(g2) <= cfg.epsilon
        record = IterationRecord(n, 0.5 * float(np.trace(UtHU)), math.sqrt(g2), orth_pre,
                                 float(np.linalg.norm(eye - U.T @ U)), s, 0,
                                 time.perf_counter() - t0)
        trace.append(record)
        if done or n >= cfg.max_outer:
            break
        W = U - s * G
        n += 1
        if not np.all(np.isfinite(W)):
            raise DivergenceError(f"non-finite iterate at outer iteration {n}", iteration=n)
        orth_pre = float(np.linalg.norm(eye - W.T @ W))
        U = orthonormalize(W)
        HU = H.apply(U)
    if snap_idx[-1] != n:
        snap_idx.append(n)
        snaps.append(U.copy())
    theta, Y, X, res = rayleigh_ritz(H, U, HU)
    return SpectralResult(
        final_block=U,
        ritz_values=theta + H.shift,
        ritz_rotation=Y,
        ritz_vectors=X,
        residual_norms=res,
        trace=trace,
        converged=bool(done),
        shift=H.shift,
        step_cap=cap,
        snapshot_indices=snap_idx,
        snapshots=snaps,
        relative_errors=relative_iterate_error(snaps, U),
    )
