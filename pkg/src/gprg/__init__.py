"""Ground-state solver for the rotating Gross-Pitaevskii energy functional.

Pieces: a staggered polar discretization of the disk, the energy and its
first/second variations, a family of metric (preconditioner) operators with
certified inverses, the preconditioned Riemannian gradient iteration on the
unit L2 sphere, and a spectral toolkit that measures the condition numbers
governing the local linear convergence rate.
"""

from .errors import (ConfigurationError, DivergenceError, EigensolverError,
                     GridMismatchError, LineSearchError, NotCoerciveError,
                     SolveError)
from .grids import (Field, PolarGrid, build_polar_grid, export_field_csv,
                    inner_l2, load_field, norm_h1_discrete, norm_l2,
                    normalized, rotate_by_index, save_field)
from .operators import (OperatorSet, ProblemParams, apply_h0, apply_h_phi,
                        apply_hessian, apply_laplacian, apply_lz,
                        build_operators, energy, euclidean_gradient,
                        lambda_tilde, residual_inf)
from .precond import PreconditionerHandle, PreconditionerSpec, assemble
from .riemannian import (StepPolicy, project_tangent, retract,
                         riemannian_gradient, select_step)
from .solver import (ConvergenceRecord, IterationRow, StageSpec,
                     export_history, fit_tail_rate, initial_guess,
                     perturb_state, run, step)
from .spectral import (MorseBottVerdict, PencilExtremes, SpectrumReport,
                       compute_spectrum_report, hessian_tangent_eigs,
                       morse_bott_check, pencil_extremes, principal_angles,
                       theoretical_rate)
from .oracle import DenseSystem, assemble_dense, fd_directional

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError", "DivergenceError", "EigensolverError",
    "GridMismatchError", "LineSearchError", "NotCoerciveError", "SolveError",
    "Field", "PolarGrid", "build_polar_grid", "export_field_csv", "inner_l2",
    "load_field", "norm_h1_discrete", "norm_l2", "normalized",
    "rotate_by_index", "save_field",
    "OperatorSet", "ProblemParams", "apply_h0", "apply_h_phi", "apply_hessian",
    "apply_laplacian", "apply_lz", "build_operators", "energy",
    "euclidean_gradient", "lambda_tilde", "residual_inf",
    "PreconditionerHandle", "PreconditionerSpec", "assemble",
    "StepPolicy", "project_tangent", "retract", "riemannian_gradient",
    "select_step",
    "ConvergenceRecord", "IterationRow", "StageSpec", "export_history",
    "fit_tail_rate", "initial_guess", "perturb_state", "run", "step",
    "MorseBottVerdict", "PencilExtremes", "SpectrumReport",
    "compute_spectrum_report", "hessian_tangent_eigs", "morse_bott_check",
    "pencil_extremes", "principal_angles", "theoretical_rate",
    "DenseSystem", "assemble_dense", "fd_directional",
]
