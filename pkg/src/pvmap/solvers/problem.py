"""Problem definition, solver configuration and results shared by all solvers."""

from __future__ import annotations

import csv
import enum
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable

import numpy as np

from ..dictionary import (DEFAULT_RANK_TOL, DenseRegularizedInverse, Dictionary,
                          LowRankDictionary, truncate_dictionary)
from ..metrics import cost, dfcs
from ..phantom import MeasuredStack, SpectroscopicImage
from ..spatial import SpatialGraph

__all__ = ["Problem", "SolverConfig", "SolveResult", "TraceRecord", "Termination",
           "ConvergenceError", "write_trace_csv", "TRACE_COLUMNS"]

TRACE_COLUMNS = ("iteration", "wall_seconds", "cost", "split_residual", "dual_residual")

# voxel/bin block width for the parallel sweeps; fixed so results do not depend
# on the worker count
BLOCK = 256


class ConvergenceError(RuntimeError):
    pass


class Termination(str, enum.Enum):
    MAX_ITERS = "max_iters"
    REL_CHANGE = "rel_change"
    SPLIT_RESIDUAL = "split_residual"
    CALLBACK = "callback"


@dataclass(frozen=True, eq=False)
class Problem:
    """Data, forward model, spatial structure and weight of one estimation problem.

    ``lrd`` is the truncated dictionary used inside the solvers; when it is
    ``None`` the solvers use the exact dictionary through a dense inverse.
    """

    data: MeasuredStack
    dictionary: Dictionary
    graph: SpatialGraph
    lam: float
    lrd: LowRankDictionary | None = None

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if self.data.P != self.dictionary.shape[0]:
            raise ValueError(f"data has P={self.data.P}, dictionary has P={self.dictionary.shape[0]}")
        if self.data.N != self.graph.n_voxels:
            raise ValueError(f"data has N={self.data.N}, graph has N={self.graph.n_voxels}")
        if self.lrd is not None and self.lrd.shape != self.dictionary.shape:
            raise ValueError("truncated dictionary shape differs from the dictionary")

    @classmethod
    def build(cls, data, dictionary: Dictionary, graph: SpatialGraph, lam: float,
              rank_tol: float = DEFAULT_RANK_TOL, exact: bool = False) -> "Problem":
        if not isinstance(data, MeasuredStack):
            data = MeasuredStack(data)
        lrd = None if exact else truncate_dictionary(dictionary, rank_tol)
        return cls(data, dictionary, graph, float(lam), lrd)

    @property
    def exact(self) -> bool:
        return self.lrd is None

    @property
    def shape(self) -> tuple[int, int]:
        """``(Q, N)`` of the unknown image."""
        return self.dictionary.shape[1], self.data.N

    def operator(self):
        """The object providing ``adjoint_apply`` and ``inverse(beta)`` for f-updates."""
        if self.lrd is None:
            return DenseRegularizedInverse(self.dictionary)
        return self.lrd

    def default_beta(self) -> float:
        """``sigma_1^2 / 10`` of the dictionary."""
        s = self.dictionary.svd[1]
        return float(s[0] ** 2 / 10.0) if s.size and s[0] > 0 else 1.0

    def restrict(self, voxels) -> "Problem":
        """Sub-problem on a subset of voxels (induced subgraph, same dictionary)."""
        sub, kept = self.graph.subgraph(voxels)
        return Problem(MeasuredStack(self.data.values[:, kept]), self.dictionary, sub,
                       self.lam, self.lrd)


@dataclass(frozen=True)
class SolverConfig:
    """Solver parameters.

    ``beta`` and ``xi_p`` default (``None``) to ``sigma_1^2 / 10`` and to
    ``0.75 * lam * ||D^T D|| + 1e-10``.  A run stops after ``max_iters`` or when
    both the relative change of the feasible iterate is below
    ``rel_change_tol`` and the split residual is below ``split_residual_tol``.
    """

    beta: float | None = None
    xi_p: float | None = None
    max_iters: int = 20000
    rel_change_tol: float = 1e-7
    split_residual_tol: float = 1e-6
    trace_every: int = 10
    threads: int = 1
    cg_tol: float = 1e-10
    cg_max_iter: int = 1000

    def __post_init__(self):
        if self.beta is not None and not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.xi_p is not None and not self.xi_p > 0:
            raise ValueError("xi_p must be positive")
        if self.max_iters < 1 or self.trace_every < 1 or self.threads < 1:
            raise ValueError("max_iters, trace_every and threads must be at least 1")
        if self.rel_change_tol < 0 or self.split_residual_tol < 0:
            raise ValueError("tolerances must be nonnegative")

    def with_(self, **changes) -> "SolverConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    wall_seconds: float
    cost: float
    split_residual: float
    dual_residual: float
    dfcs: float = math.nan


@dataclass(eq=False)
class SolveResult:
    f: SpectroscopicImage
    iterations: int
    trace: list[TraceRecord]
    state_vector_count: int
    termination: Termination
    algorithm: str = ""
    beta: float = math.nan
    xi_p: float = math.nan
    wall_seconds: float = 0.0
    final_split_residual: float = math.nan
    rank: int | None = None
    # total time in the step that applies (K^T K + beta I)^{-1}
    f_update_seconds: float = 0.0

    @property
    def estimate(self) -> np.ndarray:
        return self.f.values

    @property
    def final_cost(self) -> float:
        return self.trace[-1].cost if self.trace else math.nan

    def write_trace(self, path, include_dfcs: bool = False) -> None:
        write_trace_csv(path, self.trace, include_dfcs)


def write_trace_csv(path, trace, include_dfcs: bool = False) -> None:
    columns = TRACE_COLUMNS + (("dfcs",) if include_dfcs else ())
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for rec in trace:
            w.writerow([rec.iteration] + [repr(float(getattr(rec, c))) for c in columns[1:]])


class _Sweeper:
    """Runs per-block work items over a fixed partition, optionally threaded."""

    def __init__(self, threads: int):
        self.pool = ThreadPoolExecutor(threads) if threads > 1 else None

    def run(self, fn: Callable[[slice], None], length: int) -> None:
        blocks = [slice(i, min(i + BLOCK, length)) for i in range(0, length, BLOCK)]
        if self.pool is None or len(blocks) == 1:
            for b in blocks:
                fn(b)
        else:
            for _ in self.pool.map(fn, blocks):
                pass

    def close(self):
        if self.pool is not None:
            self.pool.shutdown()


class _Tracer:
    """Collects trace samples; time spent on diagnostics is excluded from wall time."""

    def __init__(self, problem: Problem, config: SolverConfig, reference, callback):
        self.problem = problem
        self.every = config.trace_every
        self.reference = None if reference is None else np.asarray(reference, dtype=float)
        self.callback = callback
        self.records: list[TraceRecord] = []
        self.start = time.perf_counter()
        self.excluded = 0.0

    def elapsed(self) -> float:
        return time.perf_counter() - self.start - self.excluded

    def due(self, k: int) -> bool:
        return k % self.every == 0

    def sample(self, k: int, estimate, split: float, dual: float, state=None) -> bool:
        """Record one trace sample; returns True when the callback asks to stop."""
        wall = self.elapsed()
        t0 = time.perf_counter()
        c = cost(self.problem, estimate).total
        dist = math.nan if self.reference is None else dfcs(estimate, self.reference)
        self.records.append(TraceRecord(k, wall, c, split, dual, dist))
        stop = False
        if self.callback is not None:
            stop = bool(self.callback(k, state if state is not None else {"estimate": estimate}))
        self.excluded += time.perf_counter() - t0
        return stop


def _norm(a: np.ndarray) -> float:
    return float(np.linalg.norm(a.ravel()))


def _relative(num: float, den: float) -> float:
    if num == 0.0:
        return 0.0
    return num / den if den > 0 else math.inf
