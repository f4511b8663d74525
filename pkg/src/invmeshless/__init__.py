"""Symmetry-preserving meshless finite differences for u_t = (u^(-4/3) u_x)_x."""

from .diffusion_schemes import (
    MeshlessScheme,
    SchemeConfig,
    SchemeState,
    integrate,
    integrate_many,
)
from .errors import (
    DegenerateGrid,
    FrameUndefined,
    InsufficientStencil,
    MeshlessError,
    NoAdmissibleRoot,
    NonPositiveU,
    OutOfDomain,
    PoleHit,
    SingularStencil,
)
from .exact_solutions import PRESETS, ExactSolution, eval_solution, preset, verify_pde_residual
from .geometry import NodeSet, build_perturbed_grid, find_neighbors, nearest_flanking, stencil_plan
from .lie_symmetry import GroupElement, apply_group, continuous_frame, discrete_frame, solve_cubic
from .lsq_stencil import DerivativeEstimate, assemble, derivative_field, solve_weighted_lsq

__version__ = "0.1.0"

__all__ = [
    "DegenerateGrid", "DerivativeEstimate", "ExactSolution", "FrameUndefined", "GroupElement",
    "InsufficientStencil", "MeshlessError", "MeshlessScheme", "NoAdmissibleRoot", "NodeSet",
    "NonPositiveU", "OutOfDomain", "PRESETS", "PoleHit", "SchemeConfig", "SchemeState",
    "SingularStencil", "apply_group", "assemble", "build_perturbed_grid", "continuous_frame",
    "derivative_field", "discrete_frame", "eval_solution", "find_neighbors", "integrate",
    "integrate_many", "nearest_flanking", "preset", "solve_cubic", "solve_weighted_lsq",
    "stencil_plan", "verify_pde_residual",
]
