"""Linearized ADMM with a single nonnegativity split.

The problem ``min_{f >= 0} 1/2 ||m - (I kron K) f||^2 + lam/2 ||D f||^2`` is split
as ``f = z`` with the data term on ``f`` and the constraint plus roughness on
``z``.  The ``f`` step is an unconstrained per-voxel ridge solve through the
truncated SVD of ``K``.  The ``z`` step carries a proximal term with matrix
``xi_p I - lam D^T D`` that cancels the spatial coupling, so it reduces to one
application of ``D^T D`` followed by clipping at zero.
"""

from __future__ import annotations

import math
import time

import numpy as np

from ..phantom import SpectroscopicImage
from ..spatial import apply_dtd, compute_xi_p, operator_norm_dtd
from .problem import (BLOCK, Problem, SolveResult, SolverConfig, Termination, _norm, _relative,
                      _Sweeper, _Tracer)

__all__ = ["f_update", "z_update", "solve_ladmm", "resolve_xi_p", "STATE_VECTORS"]

# f, z, d and the precomputed K^T m; z is updated in place
STATE_VECTORS = 4


def f_update(lrd, g_n, z_n, d_n, beta: float) -> np.ndarray:
    """``(K_r^T K_r + beta I)^{-1} (g_n + beta z_n - d_n)`` for one voxel or a block.

    ``lrd`` is a :class:`~pvmap.dictionary.LowRankDictionary` or a
    :class:`~pvmap.dictionary.DenseRegularizedInverse`.
    """
    g_n, z_n, d_n = (np.asarray(a, dtype=float) for a in (g_n, z_n, d_n))
    if not g_n.shape == z_n.shape == d_n.shape:
        raise ValueError("g, z and d must have the same shape")
    q = lrd.shape[1]
    if g_n.shape[0] != q:
        raise ValueError(f"expected length {q}, got {g_n.shape[0]}")
    return lrd.inverse(beta)(g_n + beta * z_n - d_n)


def z_update(graph, z_prev, f_new, d, beta: float, xi_p: float, lam: float) -> np.ndarray:
    """``max(0, (xi_p z - lam D^T D z + beta f + d) / (xi_p + beta))`` elementwise."""
    if not xi_p > 0:
        raise ValueError("xi_p must be positive")
    z_prev, f_new, d = (np.asarray(a, dtype=float) for a in (z_prev, f_new, d))
    if not z_prev.shape == f_new.shape == d.shape:
        raise ValueError("z, f and d must have the same shape")
    num = xi_p * z_prev - lam * apply_dtd(graph, z_prev) + beta * f_new + d
    return np.maximum(num / (xi_p + beta), 0.0)


def resolve_xi_p(problem: Problem, config: SolverConfig) -> float:
    """The configured ``xi_p``, or the default rule; rejects values below the rule."""
    rule = compute_xi_p(problem.lam, operator_norm_dtd(problem.graph))
    if config.xi_p is None:
        return rule
    if config.xi_p < rule:
        raise ValueError(f"xi_p={config.xi_p} is below the convergence bound {rule}")
    return float(config.xi_p)


def solve_ladmm(problem: Problem, config: SolverConfig | None = None, *,
                reference=None, callback=None) -> SolveResult:
    """Estimate the spectroscopic image with linearized ADMM.

    Parameters
    ----------
    problem : Problem
    config : SolverConfig, optional
    reference : (Q, N) array, optional
        Converged solution; when given, trace records carry the DFCS.
    callback : callable, optional
        ``callback(k, state)`` at every traced iteration, with ``state`` a dict
        of read-only views of ``f``, ``z`` and ``d``.  A true return value
        stops the run (termination ``CALLBACK``).

    Returns
    -------
    SolveResult
        Its image is the nonnegative iterate ``z``.
    """
    config = config or SolverConfig()
    beta = config.beta if config.beta is not None else problem.default_beta()
    xi_p = resolve_xi_p(problem, config)
    lam = problem.lam
    graph = problem.graph
    op = problem.operator()
    minv = op.inverse(beta)
    dtd = graph.dtd_matrix
    q, n = problem.shape
    sweep = _Sweeper(config.threads)
    tracer = _Tracer(problem, config, reference, callback)

    # state is held voxel-major (N x Q): spectra are contiguous for the f step
    # and spectral bins are contiguous columns for the sparse D^T D product
    g = np.ascontiguousarray(op.adjoint_apply(problem.data.values).T)
    f = np.zeros((n, q))
    z = np.zeros((n, q))
    d = np.zeros((n, q))
    # squared norms of each bin block's change and previous value, summed in
    # block order so the result does not depend on the thread count
    n_blocks = -(-q // BLOCK)
    sq_change, sq_prev = np.zeros(n_blocks), np.zeros(n_blocks)
    scale = 1.0 / (xi_p + beta)

    def _f(b):
        x = beta * z[b]
        x += g[b]
        x -= d[b]
        f[b] = minv.rows(x)

    def _z(b):
        # a bin block only couples voxels within its own columns, so z is
        # updated in place
        zb = np.array(z[:, b])
        out = xi_p * zb
        out -= lam * (dtd @ zb)
        out += beta * f[:, b]
        out += d[:, b]
        out *= scale
        np.maximum(out, 0.0, out=out)
        i = b.start // BLOCK
        zb = zb.ravel()
        sq_prev[i] = zb @ zb
        zb -= out.ravel()
        sq_change[i] = zb @ zb
        z[:, b] = out

    termination = Termination.MAX_ITERS
    split = np.inf
    split_ok_before = change_ok_before = False
    k = 0
    t_f = 0.0
    try:
        for k in range(1, config.max_iters + 1):
            t0 = time.perf_counter()
            sweep.run(_f, n)
            t_f += time.perf_counter() - t0
            sweep.run(_z, q)
            dz = math.sqrt(sq_change.sum())
            change = _relative(dz, math.sqrt(sq_prev.sum()))
            r = z - f
            split = _relative(_norm(r), _norm(f))
            r *= beta
            d -= r
            change_ok = change < config.rel_change_tol
            split_ok = split < config.split_residual_tol
            done = change_ok and split_ok
            stop = False
            if tracer.due(k) or done or k == config.max_iters:
                stop = tracer.sample(k, z.T, split, beta * dz,
                              {"f": f.T, "z": z.T, "d": d.T} if callback else None)
            if stop and not done:
                termination = Termination.CALLBACK
                break
            if done:
                # name the criterion that was met last
                termination = (Termination.SPLIT_RESIDUAL if change_ok_before and not split_ok_before
                               else Termination.REL_CHANGE)
                break
            change_ok_before, split_ok_before = change_ok, split_ok
    finally:
        sweep.close()
    return SolveResult(SpectroscopicImage(z.T, problem.dictionary.grid, graph, feasible=True),
                       k, tracer.records, STATE_VECTORS, termination, "ladmm", beta, xi_p,
                       tracer.elapsed(), split,
                       None if problem.lrd is None else problem.lrd.rank, t_f)
