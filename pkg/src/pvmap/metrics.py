"""Objective value and convergence diagnostics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["CostBreakdown", "cost", "roughness", "dfcs"]


@dataclass(frozen=True)
class CostBreakdown:
    data_term: float
    penalty_term: float

    @property
    def total(self) -> float:
        return self.data_term + self.penalty_term


def roughness(graph, f) -> float:
    """``1/2 ||D f||^2``: half the squared spectral difference over ordered
    neighbour pairs, i.e. the full squared difference over each unordered edge."""
    f = np.asarray(f, dtype=float)
    if f.shape[-1] != graph.n_voxels:
        raise ValueError("image and graph disagree on the number of voxels")
    if graph.n_edges == 0:
        return 0.0
    f = np.atleast_2d(f)
    diff = f[:, graph.edges[:, 0]] - f[:, graph.edges[:, 1]]
    return float(np.sum(diff * diff))


def cost(problem, f) -> CostBreakdown:
    """Evaluate ``1/2 ||m - (I kron K) f||^2 + lam/2 ||D f||^2`` at a ``Q x N`` image.

    The data term always uses the exact dictionary, never its truncation.
    """
    f = np.asarray(f, dtype=float)
    k = problem.dictionary.entries
    m = problem.data.values
    if f.shape != (k.shape[1], m.shape[1]):
        raise ValueError(f"expected image of shape {(k.shape[1], m.shape[1])}, got {f.shape}")
    resid = m - k @ f
    return CostBreakdown(0.5 * float(np.sum(resid * resid)),
                         problem.lam * roughness(problem.graph, f))


def dfcs(f_k, f_star) -> float:
    """Distance from the converged solution, ``||f_k - f*|| / ||f*||``."""
    f_k = np.asarray(f_k, dtype=float)
    f_star = np.asarray(f_star, dtype=float)
    if f_k.shape != f_star.shape:
        raise ValueError("estimate and reference differ in shape")
    ref = np.linalg.norm(f_star.ravel())
    if ref == 0:
        raise ValueError("reference solution is identically zero")
    return float(np.linalg.norm((f_k - f_star).ravel()) / ref)
