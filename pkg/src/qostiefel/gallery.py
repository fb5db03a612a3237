"""Finite-difference model Hamiltonians and the :class:`Operator` wrapper.

Every gallery problem is ``-1/2 Laplacian + V(x)`` on a uniform tensor grid
with homogeneous Dirichlet boundary conditions.  Interior points are
ordered C-style (last axis fastest).
"""

from dataclasses import dataclass, field
from functools import cached_property
import math

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator

from .errors import ContractError, ParameterError, ShapeError, SizeError
from .linalg import DENSE_CAP, as_block
from .rng import SplitMix64

DEFAULT_DOMAINS = {
    "laplacian": (0.0, math.pi),
    "harmonic": (-5.5, 5.5),
    "hydrogen": (-20.0, 20.0),
}


@dataclass(frozen=True)
class GridSpec:
    """Uniform interior grid with ``n`` points per axis.

    ``domain`` is either a single ``(a, b)`` pair shared by all axes or one
    pair per axis.  Spacing along an axis is ``(b - a) / (n + 1)``.
    """

    dimension: int
    n: int
    domain: tuple = DEFAULT_DOMAINS["laplacian"]

    def __post_init__(self):
        if self.dimension not in (1, 2, 3):
            raise ParameterError(f"grid dimension must be 1, 2 or 3, got {self.dimension}")
        if int(self.n) != self.n or self.n < 2:
            raise ParameterError(f"points per axis must be an integer >= 2, got {self.n}")
        dom = tuple(self.domain)
        if len(dom) == 2 and np.isscalar(dom[0]):
            dom = (dom,) * self.dimension
        dom = tuple((float(a), float(b)) for a, b in dom)
        if len(dom) != self.dimension:
            raise ParameterError(f"need {self.dimension} domain intervals, got {len(dom)}")
        for a, b in dom:
            if not a < b:
                raise ParameterError(f"empty interval ({a}, {b})")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "domain", dom)

    @property
    def size(self):
        return self.n**self.dimension

    @property
    def spacing(self):
        return tuple((b - a) / (self.n + 1) for a, b in self.domain)

    @property
    def h(self):
        """Smallest spacing over the axes."""
        return min(self.spacing)

    def axes(self):
        return [a + h * np.arange(1, self.n + 1) for (a, _), h in zip(self.domain, self.spacing)]

    def points(self):
        """Interior coordinates, shape ``(size, dimension)``."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def is_symmetric_about_origin(self):
        return all(math.isclose(a, -b, rel_tol=0.0, abs_tol=1e-12 * max(1.0, abs(b)))
                   for a, b in self.domain)


@dataclass(frozen=True)
class SpectralBounds:
    lambda_min_est: float
    lambda_max_est: float

    def __post_init__(self):
        lo, hi = self.lambda_min_est, self.lambda_max_est
        if not (np.isfinite(lo) and np.isfinite(hi)) or lo > hi:
            raise ContractError(f"invalid spectral bounds [{lo}, {hi}]")

    def shifted(self, sigma):
        return SpectralBounds(self.lambda_min_est - sigma, self.lambda_max_est - sigma)


@dataclass(frozen=True, eq=False)
class Operator:
    """Symmetric linear map ``H - shift * I``.

    Parameters
    ----------
    base : sparse matrix, ndarray or LinearOperator
        The unshifted action.  Entry-backed bases allow Gershgorin bounds;
        a ``LinearOperator`` base must come with ``bounds_hint``.
    shift : float
        Spectral shift already folded into :meth:`apply`.
    bounds_hint : (float, float), optional
        Eigenvalue enclosure of ``base`` for matrix-free operators.
    """

    base: object
    shift: float = 0.0
    name: str = "operator"
    bounds_hint: tuple = None
    dense_cap: int = DENSE_CAP
    grid: GridSpec = None
    info: dict = field(default_factory=dict)
    symmetric: bool = True

    @property
    def dim(self):
        return self.base.shape[0]

    @property
    def matrix_free(self):
        return isinstance(self.base, LinearOperator)

    def apply(self, X):
        """Apply the (shifted) operator to a block or a single vector."""
        X = np.asarray(X, dtype=float)
        vec = X.ndim == 1
        Xb = as_block(X, "X")
        if Xb.shape[0] != self.dim:
            raise ShapeError(f"operator of dimension {self.dim} applied to block {Xb.shape}")
        Y = np.asarray(self.base @ Xb)
        if self.shift:
            Y = Y - self.shift * Xb
        return Y[:, 0] if vec else Y

    __matmul__ = apply

    def dense(self):
        """Dense ``N_g x N_g`` view; cached after the first call."""
        return self._dense

    @cached_property
    def _dense(self):
        if self.dim > self.dense_cap:
            raise SizeError(f"{self.name}: dimension {self.dim} exceeds dense cap {self.dense_cap}")
        if sp.issparse(self.base):
            A = self.base.toarray()
        elif isinstance(self.base, np.ndarray):
            A = np.array(self.base, dtype=float)
        else:
            A = np.asarray(self.base @ np.eye(self.dim))
        if self.shift:
            A[np.diag_indices_from(A)] -= self.shift
        return A


def _tridiag(n, h):
    off = -np.ones(n - 1) / (2 * h * h)
    return sp.diags([off, np.full(n, 1.0 / (h * h)), off], [-1, 0, 1], format="csr")


def _laplacian_matrix(grid):
    n, d = grid.n, grid.dimension
    eye = sp.identity(n, format="csr")
    total = None
    for axis, h in enumerate(grid.spacing):
        factors = [eye] * d
        factors[axis] = _tridiag(n, h)
        term = factors[0]
        for f in factors[1:]:
            term = sp.kron(term, f, format="csr")
        total = term if total is None else total + term
    return total.tocsr()


def _stencil_operator(grid, potential):
    n, d = grid.n, grid.dimension
    inv_h2 = [1.0 / (h * h) for h in grid.spacing]
    N = grid.size

    def matmat(X):
        X = np.asarray(X, dtype=float)
        vec = X.ndim == 1
        X = X.reshape(N, -1)
        k = X.shape[1]
        T = X.reshape((n,) * d + (k,))
        Y = np.zeros_like(T)
        for axis in range(d):
            c = 0.5 * inv_h2[axis]
            Y += 2.0 * c * T
            lo = [slice(None)] * (d + 1)
            hi = [slice(None)] * (d + 1)
            lo[axis] = slice(0, n - 1)
            hi[axis] = slice(1, n)
            Y[tuple(lo)] -= c * T[tuple(hi)]
            Y[tuple(hi)] -= c * T[tuple(lo)]
        Y = Y.reshape(N, k)
        if potential is not None:
            Y += potential[:, None] * X
        return Y[:, 0] if vec else Y

    return LinearOperator((N, N), matvec=matmat, matmat=matmat, rmatvec=matmat,
                          rmatmat=matmat, dtype=float)


def _build(grid, potential, name, matrix_free):
    if matrix_free:
        base = _stencil_operator(grid, potential)
        top = 2.0 * sum(1.0 / (h * h) for h in grid.spacing)
        vlo, vhi = (0.0, 0.0) if potential is None else (potential.min(), potential.max())
        return Operator(base, name=name, bounds_hint=(vlo, top + vhi), grid=grid)
    A = _laplacian_matrix(grid)
    if potential is not None:
        A = (A + sp.diags(potential, format="csr")).tocsr()
    return Operator(A, name=name, grid=grid)


def build_laplacian(grid, matrix_free=False):
    """``-1/2 Laplacian`` with the (2d+1)-point stencil."""
    return _build(grid, None, "laplacian", matrix_free)


def build_harmonic(grid, matrix_free=False):
    """Harmonic oscillator ``-1/2 Laplacian + |x|^2 / 2``."""
    if not grid.is_symmetric_about_origin():
        raise ContractError(f"harmonic oscillator needs a domain symmetric about 0, got {grid.domain}")
    x = grid.points()
    potential = 0.5 * np.sum(x * x, axis=1)
    op = _build(grid, potential, "harmonic", matrix_free)
    op.info["potential"] = potential
    return op


def build_hydrogen(grid, softening=None, matrix_free=False):
    """Hydrogen-like ``-1/2 Laplacian - 1 / max(|x|, r0)``.

    ``softening`` defaults to half the grid spacing.
    """
    r0 = 0.5 * grid.h if softening is None else float(softening)
    if not r0 > 0.0:
        raise ParameterError(f"softening radius must be positive, got {r0}")
    if not grid.is_symmetric_about_origin():
        raise ContractError(f"hydrogen needs a domain symmetric about 0, got {grid.domain}")
    x = grid.points()
    potential = -1.0 / np.maximum(np.linalg.norm(x, axis=1), r0)
    op = _build(grid, potential, "hydrogen", matrix_free)
    op.info["potential"] = potential
    op.info["softening"] = r0
    return op


def from_matrix(A, name="matrix", dense_cap=DENSE_CAP):
    """Wrap an explicit symmetric matrix (dense or sparse)."""
    base = A.tocsr() if sp.issparse(A) else np.asarray(A, dtype=float)
    if base.ndim != 2 or base.shape[0] != base.shape[1]:
        raise ShapeError(f"operator matrix must be square, got shape {base.shape}")
    return Operator(base, name=name, dense_cap=dense_cap)


def shift_operator(H, sigma):
    """Operator with action ``H - sigma * I``; shifts accumulate."""
    return Operator(H.base, shift=H.shift + float(sigma), name=H.name,
                    bounds_hint=H.bounds_hint, dense_cap=H.dense_cap, grid=H.grid,
                    info=H.info, symmetric=H.symmetric)


def _gershgorin(base):
    if sp.issparse(base):
        A = base.tocsr()
        diag = A.diagonal()
        radius = np.asarray(abs(A).sum(axis=1)).ravel() - np.abs(diag)
    else:
        A = np.asarray(base)
        diag = np.diag(A)
        radius = np.abs(A).sum(axis=1) - np.abs(diag)
    return float(np.min(diag - radius)), float(np.max(diag + radius))


def _certify_lower(H, c):
    """True if ``H - c I`` is positive definite (so ``c < lambda_1``)."""
    A = H.dense().copy()
    A[np.diag_indices_from(A)] -= c
    try:
        np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        return False
    return True


def estimate_spectral_bounds(H, probes=0):
    """Guaranteed enclosure ``[lambda_min_est, lambda_max_est]`` of the spectrum.

    Gershgorin discs of the unshifted matrix (or the stencil bound for
    matrix-free operators), translated by the shift.  With ``probes > 0`` and
    a dense view available, ``probes`` power-iteration steps on
    ``lambda_max_est * I - H`` propose a tighter lower bound, which is kept
    only if a Cholesky factorization certifies it.
    """
    if H.bounds_hint is not None and not (sp.issparse(H.base) or isinstance(H.base, np.ndarray)):
        lo, hi = H.bounds_hint
    else:
        lo, hi = _gershgorin(H.base)
    bounds = SpectralBounds(lo, hi).shifted(H.shift)
    if probes <= 0 or H.dim > H.dense_cap:
        return bounds
    lo, hi = bounds.lambda_min_est, bounds.lambda_max_est
    x = SplitMix64(0x5EED).uniform(-1.0, 1.0, H.dim)
    for _ in range(int(probes)):
        y = hi * x - H.apply(x)
        nrm = np.linalg.norm(y)
        if nrm == 0.0:
            break
        x = y / nrm
    Hx = H.apply(x)
    rho = float(x @ Hx)
    candidate = rho - float(np.linalg.norm(Hx - rho * x))
    candidate -= 1e-12 * max(abs(lo), abs(hi), 1.0)
    if candidate > lo and _certify_lower(H, candidate):
        lo = candidate
    return SpectralBounds(lo, hi)


def auto_shift(H, bounds=None):
    """Shift by ``lambda_max_est + 1`` so every eigenvalue becomes negative.

    Returns the shifted operator and the applied shift.
    """
    if bounds is None:
        bounds = estimate_spectral_bounds(H)
    sigma = bounds.lambda_max_est + 1.0
    return shift_operator(H, sigma), sigma


def symmetry_defect(H, probes=10, seed=1):
    """Largest normalized ``|<Hx, y> - <x, Hy>| / (|x| |y| |H|)`` over random probes."""
    rng = SplitMix64(seed)
    b = estimate_spectral_bounds(H)
    scale = max(abs(b.lambda_min_est), abs(b.lambda_max_est), np.finfo(float).tiny)
    worst = 0.0
    for _ in range(probes):
        x = rng.uniform(-1.0, 1.0, H.dim)
        y = rng.uniform(-1.0, 1.0, H.dim)
        gap = abs(H.apply(x) @ y - x @ H.apply(y))
        worst = max(worst, gap / (np.linalg.norm(x) * np.linalg.norm(y) * scale))
    return worst


def build_problem(problem, dimension, n, domain=None, softening=None, matrix_free=False):
    """Build a gallery operator by name (``laplacian``, ``harmonic``, ``hydrogen``)."""
    try:
        default = DEFAULT_DOMAINS[problem]
    except KeyError:
        raise ParameterError(f"unknown gallery problem {problem!r}") from None
    grid = GridSpec(dimension, n, default if domain is None else domain)
    if problem == "laplacian":
        return build_laplacian(grid, matrix_free=matrix_free)
    if problem == "harmonic":
        return build_harmonic(grid, matrix_free=matrix_free)
    return build_hydrogen(grid, softening=softening, matrix_free=matrix_free)
