"""Approximate kernel k-means and its baselines, MCLA ensembles, metrics and error-bound checks."""
from .clustering import (
    CenterCoefficients,
    ClusterResult,
    SolverConfig,
    approx_kkm,
    clustering_objective,
    kernel_kmeans,
    kmeans,
    nystrom_spectral,
    solve_alpha_direct,
    solve_alpha_gd,
    two_step_kkm,
)
from .core import DataMatrix, Membership, NormalizedMembership, l1_normalize, l2_normalize, make_rng
from .ensemble import mcla
from .kernels import FullKernel, KernelSpec, RectKernel, full_kernel, kernel_eval, rect_kernel
from .metrics import anmi, ari, error_reduction, nmi

__version__ = "0.1.0"
