"""FEM-Crank-Nicolson solver for the 1D Schrodinger equation with discrete
transparent boundary conditions and Richardson extrapolation in time."""

from .assembly import BandedHermitianPair, assemble, energy_norm, rho_norm
from .cases import (
    PRESETS,
    ExperimentPreset,
    GaussianParams,
    Recipe,
    gaussian_initial,
    gaussian_psi,
    potential_eval,
    preset,
)
from .dtbc import (
    BoundaryHistory,
    DtbcKernel,
    ExteriorParams,
    KernelAccuracyWarning,
    boundary_kernel,
    condensed_exterior_element,
    convolve,
    exterior_dtn_symbol,
    initial_kernel,
    kernel_from_symbol,
)
from .error_analysis import (
    ErrorReport,
    ReferenceSolution,
    ResourceCap,
    ResourceCapExceeded,
    ch_norm,
    error_series,
    error_study,
    l2h_norm,
    observed_orders,
    pseudo_exact,
    pseudo_exact_many,
    ratio_table,
)
from .mesh import Coefficients, Mesh1D, ReferenceBasis, build_mesh, interpolate, reference_basis
from .richardson import CostModel, ExtrapolationPlan, cost_overhead, extrapolate, plan, run_extrapolated
from .stepper import DIRICHLET, DTBC, InvariantViolation, RunResult, SchemeConfig, Stepper, prepare, run, step

__version__ = "0.1.0"
