"""Dense linear-algebra kernels.

Blocks are plain ``numpy`` arrays of shape ``(N_g, N)``; small matrices are
``(N, N)`` arrays.  The heavy lifting is delegated to LAPACK through
numpy/scipy, and these wrappers add the shape checks, symmetry contracts and
singularity thresholds the solver relies on.
"""

import warnings

import numpy as np
import scipy.linalg

from .errors import (
    ContractError,
    NumericalError,
    RankDeficiencyError,
    ShapeError,
    SingularMatrixError,
    SizeError,
)

DENSE_CAP = 4096
SYMMETRY_RTOL = 1e-12
PIVOT_RTOL = 1e-13


def as_block(U, name="U"):
    """Return ``U`` as a 2-D float array, promoting 1-D input to one column."""
    U = np.asarray(U, dtype=float)
    if U.ndim == 1:
        U = U[:, None]
    if U.ndim != 2 or U.shape[0] < 1 or U.shape[1] < 1:
        raise ShapeError(f"{name} must be a non-empty 2-D block, got shape {U.shape}")
    return U


def gram(U, V):
    """Block inner product ``U^T V``; entry (i, j) is <u_i, v_j>."""
    U = as_block(U, "U")
    V = as_block(V, "V")
    if U.shape != V.shape:
        raise ShapeError(f"gram: shape mismatch {U.shape} vs {V.shape}")
    return U.T @ V


def is_symmetric(A, rtol=SYMMETRY_RTOL):
    A = np.asarray(A)
    scale = np.max(np.abs(A)) if A.size else 0.0
    return bool(np.max(np.abs(A - A.T), initial=0.0) <= rtol * scale)


def _check_square(A, name="A"):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
        raise ShapeError(f"{name} must be a non-empty square matrix, got shape {A.shape}")
    return A


def sym_eig(A, subset=None, dense_cap=DENSE_CAP):
    """Eigendecomposition of a symmetric matrix.

    Parameters
    ----------
    A : (n, n) array_like
        Symmetric matrix; asymmetry above ``1e-12 * max|A|`` is rejected.
    subset : int, optional
        If given, only the ``subset`` smallest eigenpairs are computed.
    dense_cap : int
        Largest admissible ``n``.

    Returns
    -------
    w : (k,) ndarray
        Eigenvalues in ascending order.
    V : (n, k) ndarray
        Orthonormal eigenvectors, ``A @ V[:, j] = w[j] * V[:, j]``.
    """
    A = _check_square(A)
    n = A.shape[0]
    if n > dense_cap:
        raise SizeError(f"sym_eig: size {n} exceeds dense cap {dense_cap}")
    if not is_symmetric(A):
        raise ContractError("sym_eig: matrix is not symmetric")
    # symmetrize away the sub-tolerance noise so LAPACK sees exact symmetry
    A = 0.5 * (A + A.T)
    try:
        if subset is not None and subset < n:
            w, V = scipy.linalg.eigh(A, subset_by_index=[0, int(subset) - 1])
        else:
            w, V = np.linalg.eigh(A)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise NumericalError(f"sym_eig: eigensolver did not converge ({exc})") from exc
    return w, V


def thin_svd(M):
    """Thin SVD ``M = W @ diag(sigma) @ Z.T`` with ``sigma`` descending."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or 0 in M.shape:
        raise ShapeError(f"thin_svd: expected a non-empty matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ContractError("thin_svd: matrix has non-finite entries")
    W, sigma, Zt = np.linalg.svd(M, full_matrices=False)
    return W, sigma, Zt.T


def solve_dense(A, B):
    """Solve ``A X = B`` by LU with partial pivoting.

    Raises :class:`SingularMatrixError` naming the elimination step whose
    pivot falls below ``1e-13 * ||A||_F``.
    """
    A = _check_square(A)
    B = np.asarray(B, dtype=float)
    vector_rhs = B.ndim == 1
    if vector_rhs:
        B = B[:, None]
    if B.ndim != 2 or B.shape[0] != A.shape[0]:
        raise ShapeError(f"solve_dense: rhs shape {B.shape} incompatible with {A.shape}")
    norm = np.linalg.norm(A)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(A, check_finite=True)
    pivots = np.abs(np.diag(lu))
    small = np.nonzero(pivots < PIVOT_RTOL * norm)[0]
    if norm == 0.0 or small.size:
        step = int(small[0]) if small.size else 0
        raise SingularMatrixError(
            f"solve_dense: pivot {pivots[step]:.3e} at elimination step {step} "
            f"below threshold {PIVOT_RTOL:.0e}*||A|| = {PIVOT_RTOL * norm:.3e}",
            step=step,
            pivot=float(pivots[step]),
        )
    X = scipy.linalg.lu_solve((lu, piv), B)
    return X[:, 0] if vector_rhs else X


def orthonormalize(U):
    """Orthonormal basis of ``span(U)`` with the same column ordering.

    Householder QR with the signs fixed so that ``diag(R) > 0``; an input
    that is already orthonormal is returned unchanged up to rounding.
    """
    U = as_block(U)
    n, k = U.shape
    if k > n:
        raise RankDeficiencyError(f"orthonormalize: {k} columns in dimension {n}", column=n)
    Q, R = np.linalg.qr(U)
    d = np.diag(R)
    # R_jj^2 is the j-th Cholesky pivot of gram(U, U)
    threshold = PIVOT_RTOL * np.linalg.norm(U.T @ U)
    bad = np.nonzero(d * d <= threshold)[0]
    if bad.size:
        j = int(bad[0])
        what = "is numerically zero" if j == 0 else f"depends on columns 0..{j - 1}"
        raise RankDeficiencyError(f"orthonormalize: column {j} {what}", column=j)
    return Q * np.sign(d)
