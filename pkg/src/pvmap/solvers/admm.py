"""Three-split ADMM baseline.

``f`` is split into ``x`` (data term), ``y`` (nonnegativity) and ``z``
(roughness), each with its own scaled dual.  The ``z`` step solves the coupled
system ``(lam D^T D + beta I) z = beta f - d_z`` by warm-started conjugate
gradients, one independent run per spectral bin.
"""

from __future__ import annotations

import time

import numpy as np

from ..phantom import SpectroscopicImage
from .cg import block_cg
from .problem import (ConvergenceError, Problem, SolveResult, SolverConfig, Termination,
                      _norm, _relative, _Sweeper, _Tracer)

__all__ = ["solve_admm", "STATE_VECTORS"]

# f, x, y, z, d_x, d_y, d_z and the precomputed K^T m
STATE_VECTORS = 8


def solve_admm(problem: Problem, config: SolverConfig | None = None, *,
               reference=None, callback=None) -> SolveResult:
    """Estimate the spectroscopic image with the three-split ADMM.

    The returned image is the nonnegative iterate ``y``.  The split residual
    reported in the trace is ``sqrt(||f-x||^2 + ||f-y||^2 + ||f-z||^2) / ||f||``.
    Raises :class:`ConvergenceError` if a z-step CG run exceeds
    ``config.cg_max_iter`` iterations.  ``reference`` and ``callback`` behave
    as in :func:`solve_ladmm`; the callback state holds ``f, x, y, z`` and the
    three scaled duals.
    """
    config = config or SolverConfig()
    beta = config.beta if config.beta is not None else problem.default_beta()
    lam = problem.lam
    graph = problem.graph
    op = problem.operator()
    minv = op.inverse(beta)
    dtd = graph.dtd_matrix
    q, n = problem.shape
    sweep = _Sweeper(config.threads)
    tracer = _Tracer(problem, config, reference, callback)

    # voxel-major (N x Q) state, as in the LADMM solver
    g = np.ascontiguousarray(op.adjoint_apply(problem.data.values).T)
    f, x, y, z, dx, dy, dz = (np.zeros((n, q)) for _ in range(7))

    def _x(b):
        v = beta * f[b]
        v += g[b]
        v -= dx[b]
        x[b] = minv.rows(v)

    def apply_a(v):
        out = dtd @ v
        out *= lam
        out += beta * v
        return out

    def _z(b):
        rhs = beta * f[:, b] - dz[:, b]
        sol, _, ok = block_cg(apply_a, rhs, z[:, b], config.cg_tol, config.cg_max_iter)
        if not ok:
            raise ConvergenceError("z-step conjugate gradients did not converge")
        z[:, b] = sol

    termination = Termination.MAX_ITERS
    split = np.inf
    split_ok_before = change_ok_before = False
    k = 0
    t_f = 0.0
    try:
        for k in range(1, config.max_iters + 1):
            f[...] = (beta * x + dx + beta * y + dy + beta * z + dz) / (3.0 * beta)
            t0 = time.perf_counter()
            sweep.run(_x, n)
            t_f += time.perf_counter() - t0
            y_prev_norm = _norm(y)
            y_new = np.maximum(f - dy / beta, 0.0)
            dy_change = _norm(y_new - y)
            y[...] = y_new
            sweep.run(_z, q)
            rx, ry, rz = f - x, f - y, f - z
            dx -= beta * rx
            dy -= beta * ry
            dz -= beta * rz
            primal = np.sqrt(_norm(rx) ** 2 + _norm(ry) ** 2 + _norm(rz) ** 2)
            split = _relative(primal, _norm(f))
            change = _relative(dy_change, y_prev_norm)
            change_ok = change < config.rel_change_tol
            split_ok = split < config.split_residual_tol
            done = change_ok and split_ok
            stop = False
            if tracer.due(k) or done or k == config.max_iters:
                stop = tracer.sample(k, y.T, split, beta * dy_change,
                              {"f": f.T, "x": x.T, "y": y.T, "z": z.T, "dx": dx.T, "dy": dy.T,
                               "dz": dz.T} if callback else None)
            if stop and not done:
                termination = Termination.CALLBACK
                break
            if done:
                termination = (Termination.SPLIT_RESIDUAL if change_ok_before and not split_ok_before
                               else Termination.REL_CHANGE)
                break
            change_ok_before, split_ok_before = change_ok, split_ok
    finally:
        sweep.close()
    return SolveResult(SpectroscopicImage(y.T, problem.dictionary.grid, graph, feasible=True),
                       k, tracer.records, STATE_VECTORS, termination, "admm", beta, np.nan,
                       tracer.elapsed(), split,
                       None if problem.lrd is None else problem.lrd.rank, t_f)
