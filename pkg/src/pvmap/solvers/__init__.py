"""Estimation algorithms for spatially regularized spectral unmixing."""

from .admm import solve_admm
from .cg import block_cg
from .ladmm import f_update, resolve_xi_p, solve_ladmm, z_update
from .nnls import kkt_residuals, lawson_hanson, solve_nnls_voxelwise
from .problem import (ConvergenceError, Problem, SolveResult, SolverConfig, Termination,
                      TraceRecord, write_trace_csv)
from .tuning import patch_voxels, tune_beta

__all__ = [
    "Problem", "SolverConfig", "SolveResult", "TraceRecord", "Termination",
    "ConvergenceError", "write_trace_csv", "f_update", "z_update", "solve_ladmm",
    "resolve_xi_p", "solve_admm", "block_cg", "lawson_hanson", "solve_nnls_voxelwise",
    "kkt_residuals", "tune_beta", "patch_voxels",
]
