"""Orthogonalization-free block eigensolver with quasi-orthogonal iterates."""

from .errors import *  # noqa: F401,F403
from .linalg import gram, orthonormalize, solve_dense, sym_eig, thin_svd
from .gallery import (
    GridSpec,
    Operator,
    SpectralBounds,
    auto_shift,
    build_harmonic,
    build_hydrogen,
    build_laplacian,
    build_problem,
    estimate_spectral_bounds,
    from_matrix,
    shift_operator,
)
from .mmio import load_matrix_market, write_matrix_market
from .solver import (
    InnerPolicy,
    IterationRecord,
    SolverConfig,
    SpectralResult,
    adaptive_step,
    commutator_apply,
    corrector,
    default_step_cap,
    energy,
    grassmann_grad,
    hess_form,
    predictor,
    random_block,
    solve,
    woodbury_apply,
)
from .diagnostics import (
    DecayFit,
    fit_decay_ratio,
    grassmann_distance,
    orthogonality_error,
    read_trace,
    relative_iterate_error,
    write_trace,
)
from .baselines import baseline_projected_gradient, dense_predictor_solve, reference_eigensolve

__version__ = "0.1.0"
