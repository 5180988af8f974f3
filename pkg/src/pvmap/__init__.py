"""Spatially regularized, nonnegative spectral unmixing of contrast-encoded image stacks."""

from .arrayio import ArrayFormatError, read_array, write_array, write_pgm
from .dictionary import (AcquisitionSchedule, AxisSpec, DenseRegularizedInverse, Dictionary,
                         Kernel, LowRankDictionary, Spacing, SpectralGrid,
                         apply_regularized_inverse, build_dictionary, build_grid,
                         load_dictionary, save_dictionary, truncate_dictionary)
from .metrics import CostBreakdown, cost, dfcs, roughness
from .phantom import (Compartment, MeasuredStack, PhantomSpec, SpectroscopicImage,
                      generate_phantom, integrate_components)
from .solvers import (Problem, SolveResult, SolverConfig, Termination, f_update,
                      solve_admm, solve_ladmm, solve_nnls_voxelwise, tune_beta, z_update)
from .spatial import (SpatialGraph, apply_dtd, build_spatial_graph, compute_xi_p,
                      operator_norm_dtd)

__version__ = "0.1.0"
