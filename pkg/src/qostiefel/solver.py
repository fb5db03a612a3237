"""Quasi-orthogonal predictor-corrector iteration.

For an operator ``H`` whose wanted eigenvalues are negative, each outer step
maps ``U_n`` to ``U_{n+1}`` by

1. an implicit-midpoint *predictor* driven by the skew commutator
   ``A_U = (HU) U^T - U (HU)^T``, solved by fixed-point sweeps
   ``Ut <- (I + s/2 A_Ut)^{-1} U_n`` evaluated with a Woodbury identity, then
   ``Uhat = 2 Ut - U_n``;
2. an explicit *corrector* ``U_{n+1} = Uhat - s H Uhat (I - U_n^T U_n)``.

No step ever orthogonalizes explicitly, yet ``||I - U_n^T U_n||`` decays
geometrically when ``U_0`` lies in the quasi-Stiefel set.
"""

from dataclasses import dataclass, field
import math
import re
import time

import numpy as np

from .errors import (
    ContractError,
    DegeneracyError,
    DivergenceError,
    ParameterError,
    ShapeError,
    SingularMatrixError,
    StepSizeError,
)
from .diagnostics import relative_iterate_error
from .gallery import estimate_spectral_bounds
from .linalg import as_block, gram, orthonormalize, solve_dense, sym_eig
from .rng import SplitMix64

GRAM_FLOOR = 1e-13
HESS_RTOL = 1e-14
PROJECTORS = ("previous-iterate", "predictor")
INIT_MODES = ("raw", "quasi_stiefel", "orthonormal", "near_solution")


@dataclass(frozen=True)
class InnerPolicy:
    """How many fixed-point sweeps the predictor performs.

    ``tol=None`` means exactly ``max_iter`` sweeps; otherwise sweeps stop once
    successive midpoints differ by at most ``tol`` in Frobenius norm, or after
    ``max_iter`` sweeps.
    """

    tol: float = 1e-12
    max_iter: int = 8

    def __post_init__(self):
        if self.max_iter < 1:
            raise ParameterError(f"inner iteration count must be >= 1, got {self.max_iter}")
        if self.tol is not None and not self.tol > 0:
            raise ParameterError(f"inner tolerance must be positive, got {self.tol}")

    @classmethod
    def fixed(cls, p):
        return cls(tol=None, max_iter=int(p))

    @classmethod
    def tolerance(cls, tau, p_max=8):
        return cls(tol=float(tau), max_iter=int(p_max))

    @classmethod
    def parse(cls, text):
        """Parse ``fixed(p)`` or ``tolerance(tau, p_max)``."""
        m = re.fullmatch(r"\s*(fixed|tolerance)\s*\(([^)]*)\)\s*", str(text))
        if not m:
            raise ParameterError(f"inner_policy must be 'fixed(p)' or 'tolerance(tau, p_max)', got {text!r}")
        args = [a.strip() for a in m.group(2).split(",") if a.strip()]
        try:
            if m.group(1) == "fixed":
                (p,) = args
                return cls.fixed(int(p))
            return cls.tolerance(float(args[0]), int(args[1]) if len(args) > 1 else 8)
        except (ValueError, IndexError):
            raise ParameterError(f"bad inner_policy arguments in {text!r}") from None

    def __str__(self):
        if self.tol is None:
            return f"fixed({self.max_iter})"
        return f"tolerance({self.tol!r}, {self.max_iter})"


@dataclass
class SolverConfig:
    """Parameters of :func:`solve`.

    ``step_cap=None`` selects the default cap computed from Gershgorin bounds
    (see :func:`default_step_cap`).  ``step_mode`` is ``"adaptive"`` or
    ``"fixed"``; in fixed mode every step is ``min(fixed_step, step_cap)``.
    """

    epsilon: float = 1e-5
    step_cap: float = None
    step_mode: str = "adaptive"
    fixed_step: float = None
    inner_policy: InnerPolicy = field(default_factory=InnerPolicy)
    max_outer: int = 50000
    corrector_projector: str = "previous-iterate"
    seed: int = 0
    snapshot_stride: int = 10

    def __post_init__(self):
        if isinstance(self.inner_policy, str):
            self.inner_policy = InnerPolicy.parse(self.inner_policy)
        if not self.epsilon > 0:
            raise ParameterError(f"epsilon must be positive, got {self.epsilon}")
        if self.step_cap is not None and not self.step_cap > 0:
            raise ParameterError(f"step_cap must be positive, got {self.step_cap}")
        if self.step_mode not in ("adaptive", "fixed"):
            raise ParameterError(f"step_mode must be 'adaptive' or 'fixed', got {self.step_mode!r}")
        if self.step_mode == "fixed" and not (self.fixed_step and self.fixed_step > 0):
            raise ParameterError("fixed step mode needs a positive fixed_step")
        if self.max_outer < 1:
            raise ParameterError(f"max_outer must be >= 1, got {self.max_outer}")
        if self.corrector_projector not in PROJECTORS:
            raise ParameterError(f"corrector_projector must be one of {PROJECTORS}")
        if self.snapshot_stride < 1:
            raise ParameterError(f"snapshot_stride must be >= 1, got {self.snapshot_stride}")


@dataclass
class IterationRecord:
    """State of iterate ``n`` and the step taken from it.

    ``orth_err_pre`` measures the predictor output that produced ``U_n``
    (for ``n = 0`` it equals ``orth_err_post``).  For the terminal record
    ``step`` is the step the rule would choose and ``inner_count`` is 0.
    ``commutator_norm`` is ``||A_Ut Ut||_F`` at the final midpoint of the
    step; it is kept in memory only and not serialized.
    """

    n: int
    energy: float
    grad_norm: float
    orth_err_pre: float
    orth_err_post: float
    step: float
    inner_count: int
    wall_time_s: float
    commutator_norm: float = 0.0


@dataclass
class SpectralResult:
    final_block: np.ndarray
    ritz_values: np.ndarray
    ritz_rotation: np.ndarray
    ritz_vectors: np.ndarray
    residual_norms: np.ndarray
    trace: list
    converged: bool
    shift: float = 0.0
    step_cap: float = None
    snapshot_indices: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    relative_errors: list = field(default_factory=list)

    @property
    def iterations(self):
        """Number of outer steps taken."""
        return len(self.trace) - 1

    @property
    def final_orth_error(self):
        return self.trace[-1].orth_err_post


def _check_pair(H, U, name="U"):
    U = as_block(U, name)
    if U.shape[0] != H.dim:
        raise ShapeError(f"{name} has {U.shape[0]} rows, operator dimension is {H.dim}")
    return U


def energy(H, U):
    """``E(U) = tr(U^T H U) / 2``."""
    U = _check_pair(H, U)
    return 0.5 * float(np.trace(gram(U, H.apply(U))))


def grassmann_grad(H, U):
    """Grassmannian gradient ``HU - U (U^T H U)``."""
    U = _check_pair(H, U)
    HU = H.apply(U)
    return HU - U @ gram(U, HU)


def commutator_apply(H, U, X):
    """Apply ``A_U = (HU) U^T - U (HU)^T`` to ``X`` without forming it."""
    U = _check_pair(H, U)
    X = _check_pair(H, X, "X")
    if X.shape[1] != U.shape[1]:
        raise ShapeError(f"block widths differ: {U.shape[1]} vs {X.shape[1]}")
    return _commutator(U, H.apply(U), X)


def _commutator(U, HU, X):
    return HU @ (U.T @ X) - U @ (HU.T @ X)


def _woodbury(U, HU, s, R):
    if s == 0.0:
        return R.copy()
    k = U.shape[1]
    half = 0.5 * s
    core = np.eye(2 * k)
    core[:k, :k] += half * (U.T @ HU)
    core[:k, k:] += half * (U.T @ U)
    core[k:, :k] -= half * (HU.T @ HU)
    core[k:, k:] -= half * (HU.T @ U)
    small = np.vstack([U.T @ R, -(HU.T @ R)])
    try:
        Y = solve_dense(core, small)
    except SingularMatrixError as exc:
        raise StepSizeError(f"Woodbury core matrix singular at step size {s:.3e}; "
                            f"retry with a smaller step ({exc})") from exc
    return R - half * (HU @ Y[:k] + U @ Y[k:])


def woodbury_apply(H, U_mid, s, RHS):
    """``(I + s/2 A_{U_mid})^{-1} RHS`` via one ``2N x 2N`` solve.

    Raises
    ------
    StepSizeError
        If the ``2N x 2N`` core matrix is numerically singular.
    """
    if s < 0:
        raise ParameterError(f"step size must be non-negative, got {s}")
    U_mid = _check_pair(H, U_mid, "U_mid")
    RHS = _check_pair(H, RHS, "RHS")
    if RHS.shape[1] != U_mid.shape[1]:
        raise ShapeError(f"block widths differ: {U_mid.shape[1]} vs {RHS.shape[1]}")
    return _woodbury(U_mid, H.apply(U_mid), float(s), RHS)


def _predict(H, U, HU, s, policy):
    mid, H_mid = U, HU
    p = 0
    while True:
        new = _woodbury(mid, H_mid, s, U)
        p += 1
        delta = np.linalg.norm(new - mid)
        mid = new
        if p >= policy.max_iter or (policy.tol is not None and delta <= policy.tol):
            break
        H_mid = H.apply(mid)
    return 2.0 * mid - U, mid, p


def predictor(H, U_n, s, policy=None):
    """Implicit-midpoint predictor by fixed-point sweeps.

    Returns
    -------
    U_hat : ndarray
        ``2 * U_mid - U_n``.
    U_mid : ndarray
        Last midpoint iterate.
    p_used : int
        Number of Woodbury sweeps performed.
    """
    if s < 0:
        raise ParameterError(f"step size must be non-negative, got {s}")
    policy = policy or InnerPolicy()
    U_n = _check_pair(H, U_n, "U_n")
    return _predict(H, U_n, H.apply(U_n), float(s), policy)


def _correct(U_hat, H_hat, U_n, s, mode):
    basis = U_n if mode == "previous-iterate" else U_hat
    P = np.eye(U_n.shape[1]) - basis.T @ basis
    return U_hat - s * (H_hat @ P)


def corrector(H, U_hat, U_n, s, projector_mode="previous-iterate"):
    """Explicit corrector ``U_hat - s H U_hat (I - B^T B)``.

    ``B`` is ``U_n`` in ``"previous-iterate"`` mode and ``U_hat`` in
    ``"predictor"`` mode.
    """
    if projector_mode not in PROJECTORS:
        raise ParameterError(f"projector mode must be one of {PROJECTORS}")
    U_hat = _check_pair(H, U_hat, "U_hat")
    U_n = _check_pair(H, U_n, "U_n")
    if U_hat.shape != U_n.shape:
        raise ShapeError(f"shape mismatch {U_hat.shape} vs {U_n.shape}")
    return _correct(U_hat, H.apply(U_hat), U_n, float(s), projector_mode)


def hess_form(H, U, G):
    """``<HG - G U^T H U, G>``, the extended Hessian evaluated on ``(G, G)``."""
    U = _check_pair(H, U)
    G = _check_pair(H, G, "G")
    if G.shape != U.shape:
        raise ShapeError(f"shape mismatch {U.shape} vs {G.shape}")
    return _hess(G, H.apply(G), gram(U, H.apply(U)))


def _hess(G, HG, UtHU):
    return float(np.sum(G * (HG - G @ UtHU)))


def _step_from(g2, hess, cap):
    if hess <= HESS_RTOL * g2:
        return cap
    return min(g2 / hess, cap)


def adaptive_step(H, U, step_cap):
    """``min(||G||^2 / Hess[G, G], step_cap)`` with ``G`` the Grassmann gradient.

    A non-positive or negligible curvature returns ``step_cap``.
    """
    if not step_cap > 0:
        raise ParameterError(f"step cap must be positive, got {step_cap}")
    U = _check_pair(H, U)
    HU = H.apply(U)
    UtHU = U.T @ HU
    G = HU - U @ UtHU
    g2 = float(np.sum(G * G))
    return _step_from(g2, _hess(G, H.apply(G), UtHU), float(step_cap))


def default_step_cap(bounds):
    """Step cap ``min(0.95 / (sqrt(2l + 4l^2) + 2l), 1.9 / span)``.

    ``l`` is ``|lambda_min_est|`` and ``span`` the width of the spectral
    enclosure; both over-estimate the quantities they stand for, so the cap
    only gets more conservative.
    """
    l1 = abs(bounds.lambda_min_est)
    span = bounds.lambda_max_est - bounds.lambda_min_est
    caps = []
    if l1 > 0:
        caps.append(0.95 / (math.sqrt(2 * l1 + 4 * l1 * l1) + 2 * l1))
    if span > 0:
        caps.append(1.9 / span)
    if not caps:
        raise ContractError("cannot derive a step cap from a zero operator")
    return min(caps)


def rayleigh_ritz(H, U, HU=None):
    """Ritz pairs of ``H`` on ``span(U)``.

    The small pencil ``(U^T H U, U^T U)`` is reduced with the symmetric
    inverse square root of ``U^T U``.  Returns ``(theta, Y, X, residuals)``
    where ``Y`` is orthogonal and ``X = U (U^T U)^{-1/2} Y`` are the Ritz
    vectors; ``theta`` refers to ``H`` as given (shift included).
    """
    U = _check_pair(H, U)
    if HU is None:
        HU = H.apply(U)
    S = U.T @ U
    ws, Vs = sym_eig(0.5 * (S + S.T))
    if ws[0] <= 0:
        raise DegeneracyError("Gram matrix is not positive definite")
    S_mhalf = (Vs / np.sqrt(ws)) @ Vs.T
    A = U.T @ HU
    C = S_mhalf @ (0.5 * (A + A.T)) @ S_mhalf
    theta, Y = sym_eig(0.5 * (C + C.T))
    T = S_mhalf @ Y
    X = U @ T
    R = HU @ T - X * theta
    return theta, Y, X, np.linalg.norm(R, axis=0)


def _min_gram_eig(S):
    return float(np.linalg.eigvalsh(0.5 * (S + S.T))[0])


def solve(H, U0, config=None):
    """Run the quasi-orthogonal iteration from ``U0``.

    ``H`` must already be shifted so that the wanted eigenvalues are
    negative (see :func:`qostiefel.gallery.auto_shift`).  Ritz values in the
    result have the operator's shift added back.

    Raises
    ------
    DivergenceError
        A non-finite entry appeared; carries the iteration index.
    DegeneracyError
        ``U_n^T U_n`` lost positive definiteness (min eigenvalue < 1e-13).
    StepSizeError
        The Woodbury core became singular.
    """
    cfg = config or SolverConfig()
    U = _check_pair(H, U0, "U0").copy()
    if U.shape[1] > U.shape[0]:
        raise ShapeError(f"block size {U.shape[1]} exceeds dimension {U.shape[0]}")
    if not np.all(np.isfinite(U)):
        raise DivergenceError("initial block has non-finite entries", iteration=0)
    cap = cfg.step_cap if cfg.step_cap is not None else default_step_cap(estimate_spectral_bounds(H))
    policy = cfg.inner_policy
    eye = np.eye(U.shape[1])

    S = U.T @ U
    if _min_gram_eig(S) < GRAM_FLOOR:
        raise DegeneracyError("initial block has linearly dependent columns", iteration=0)
    t0 = time.perf_counter()
    HU = H.apply(U)
    orth_pre = float(np.linalg.norm(eye - S))
    trace = []
    snap_idx, snaps = [], []
    n = 0
    while True:
        if n % cfg.snapshot_stride == 0:
            snap_idx.append(n)
            snaps.append(U.copy())
        UtHU = U.T @ HU
        G = HU - U @ UtHU
        g2 = float(np.sum(G * G))
        grad_norm = math.sqrt(g2)
        E = 0.5 * float(np.trace(UtHU))
        orth_post = float(np.linalg.norm(eye - S))
        if not (math.isfinite(E) and math.isfinite(g2)):
            raise DivergenceError(f"non-finite energy or gradient at outer iteration {n}", iteration=n)
        if cfg.step_mode == "adaptive":
            s = _step_from(g2, _hess(G, H.apply(G), UtHU), cap)
        else:
            s = min(cfg.fixed_step, cap)
        done = grad_norm <= cfg.epsilon
        if done or n >= cfg.max_outer:
            trace.append(IterationRecord(n, E, grad_norm, orth_pre, orth_post, s, 0,
                                         time.perf_counter() - t0))
            break

        U_hat, U_mid, p = _predict(H, U, HU, s, policy)
        H_hat = H.apply(U_hat)
        U_new = _correct(U_hat, H_hat, U, s, cfg.corrector_projector)
        H_mid = 0.5 * (HU + H_hat)
        comm = float(np.linalg.norm(_commutator(U_mid, H_mid, U_mid)))
        trace.append(IterationRecord(n, E, grad_norm, orth_pre, orth_post, s, p,
                                     time.perf_counter() - t0, comm))
        n += 1
        if not np.all(np.isfinite(U_new)):
            raise DivergenceError(f"non-finite iterate at outer iteration {n}", iteration=n)
        U = U_new
        HU = H.apply(U)
        S = U.T @ U
        if _min_gram_eig(S) < GRAM_FLOOR:
            raise DegeneracyError(f"Gram matrix lost rank at outer iteration {n}", iteration=n)
        orth_pre = float(np.linalg.norm(eye - U_hat.T @ U_hat))

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


def random_block(dim, N, mode="raw", seed=0, eta=None, V_ref=None, rescale=True):
    """Deterministic initial block.

    Modes
    -----
    raw
        Entries uniform on (-1, 1) from :class:`~qostiefel.rng.SplitMix64`.
    quasi_stiefel
        ``raw / sigma_max(raw)`` so that ``U^T U <= I``.
    orthonormal
        ``orthonormalize(raw)``.
    near_solution
        ``V_ref + eta * raw / ||raw||_F``; divided by its largest singular
        value when that exceeds one and ``rescale`` is set.
    """
    if not (1 <= N <= dim):
        raise ParameterError(f"need 1 <= N <= dim, got N={N}, dim={dim}")
    if mode not in INIT_MODES:
        raise ParameterError(f"unknown init mode {mode!r}; expected one of {INIT_MODES}")
    R = SplitMix64(seed).block(dim, N)
    if mode == "raw":
        return R
    if mode == "quasi_stiefel":
        return R / np.linalg.norm(R, 2)
    if mode == "orthonormal":
        return orthonormalize(R)
    if eta is None or not eta > 0:
        raise ParameterError(f"near_solution needs eta > 0, got {eta}")
    if V_ref is None:
        raise ParameterError("near_solution needs reference vectors V_ref")
    V_ref = as_block(V_ref, "V_ref")
    if V_ref.shape != (dim, N):
        raise ShapeError(f"V_ref has shape {V_ref.shape}, expected {(dim, N)}")
    U = V_ref + (eta / np.linalg.norm(R)) * R
    smax = np.linalg.norm(U, 2)
    if rescale and smax > 1.0:
        U = U / smax
    return U
