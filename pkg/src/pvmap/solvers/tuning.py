"""Choosing the penalty parameter on a small image patch."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .ladmm import solve_ladmm
from .problem import Problem, SolverConfig

__all__ = ["tune_beta", "patch_voxels"]


def patch_voxels(graph, origin: Sequence[int], shape: Sequence[int]) -> np.ndarray:
    """Indices of the voxels in the box ``origin + [0, shape)``; every lattice
    position of the box must be a voxel of the graph."""
    if graph.voxel_coords is None:
        raise ValueError("graph carries no lattice coordinates")
    origin = np.asarray(origin, dtype=np.int64)
    shape = np.asarray(shape, dtype=np.int64)
    coords = graph.voxel_coords
    if origin.size != coords.shape[1] or shape.size != coords.shape[1]:
        raise ValueError("patch origin/shape rank differs from the lattice rank")
    if np.any(shape < 1):
        raise ValueError("patch shape must be positive")
    inside = np.all((coords >= origin) & (coords < origin + shape), axis=1)
    idx = np.flatnonzero(inside)
    if idx.size != int(np.prod(shape)):
        raise ValueError(f"patch at {origin.tolist()} of shape {shape.tolist()} "
                         "does not fit inside the mask")
    return idx


def tune_beta(problem: Problem, patch_origin: Sequence[int], patch_shape: Sequence[int] = (3, 3),
              candidates: Sequence[float] = tuple(10.0 ** np.arange(-3, 4)),
              probe_iters: int = 200, config: SolverConfig | None = None) -> float:
    """Pick the penalty parameter that makes LADMM progress fastest on a patch.

    LADMM runs for ``probe_iters`` iterations on the sub-problem restricted to
    the patch for each candidate; the candidate with the lowest final cost
    wins, ties going to the smallest value.
    """
    candidates = [float(c) for c in candidates]
    if not candidates:
        raise ValueError("no beta candidates given")
    if any(c <= 0 for c in candidates):
        raise ValueError("beta candidates must be positive")
    sub = problem.restrict(patch_voxels(problem.graph, patch_origin, patch_shape))
    base = (config or SolverConfig()).with_(max_iters=probe_iters, trace_every=probe_iters,
                                            xi_p=None, rel_change_tol=0.0,
                                            split_residual_tol=0.0)
    scored = []
    for beta in candidates:
        result = solve_ladmm(sub, base.with_(beta=beta))
        scored.append((result.final_cost, beta))
    return min(scored)[1]
