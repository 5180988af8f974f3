"""Voxel-by-voxel nonnegative least squares (Lawson-Hanson active set)."""

from __future__ import annotations

import numpy as np

from ..phantom import MeasuredStack, SpectroscopicImage

__all__ = ["lawson_hanson", "solve_nnls_voxelwise", "kkt_residuals"]


def lawson_hanson(a, b, tol: float | None = None, max_iter: int | None = None) -> np.ndarray:
    """Solve ``min ||a x - b||`` subject to ``x >= 0``.

    The classical active-set method: repeatedly free the constrained variable
    with the largest positive dual ``w = a^T (b - a x)``, solve the unconstrained
    least-squares problem on the free set, and step back toward feasibility
    whenever that solution has nonpositive entries.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    m, n = a.shape
    if b.shape != (m,):
        raise ValueError("right-hand side length differs from the number of rows")
    if max_iter is None:
        max_iter = 5 * n + 20
    if tol is None:
        tol = 10 * np.finfo(float).eps * max(m, n) * max(1.0, np.abs(a).max(initial=0.0)
                                                          * np.abs(b).max(initial=0.0))
    x = np.zeros(n)
    free = np.zeros(n, dtype=bool)
    # variables whose release failed at the current x; cleared once x moves
    stuck = np.zeros(n, dtype=bool)
    w = a.T @ b
    for _ in range(max_iter):
        candidates = np.where(free | stuck, -np.inf, w)
        j = int(np.argmax(candidates))
        if candidates[j] <= tol:
            break
        free[j] = True
        s = np.zeros(n)
        s[free] = np.linalg.lstsq(a[:, free], b, rcond=None)[0]
        if s[j] <= 0:
            # roundoff: the released variable would not move off its bound
            free[j] = False
            stuck[j] = True
            continue
        while np.any(s[free] <= 0):
            blocking = np.flatnonzero(free & (s <= 0))
            ratios = x[blocking] / (x[blocking] - s[blocking])
            alpha = ratios.min()
            x = x + alpha * (s - x)
            free[blocking[ratios == alpha]] = False
            free &= x > 0
            x[~free] = 0.0
            s = np.zeros(n)
            if free.any():
                s[free] = np.linalg.lstsq(a[:, free], b, rcond=None)[0]
        x = s
        stuck[:] = False
        w = a.T @ (b - a @ x)
    return x


def kkt_residuals(a, b, x, tikhonov: float = 0.0) -> tuple[float, float]:
    """Worst violations of the optimality conditions of the (ridge) NNLS problem.

    Returns ``(lower, stationarity)`` where ``lower`` is ``max(0, -min grad)``
    over zero entries and ``stationarity`` is ``max |grad|`` over positive
    entries, with ``grad = a^T (a x - b) + tikhonov x``.
    """
    a = np.asarray(a, dtype=float)
    x = np.asarray(x, dtype=float)
    grad = a.T @ (a @ x - b) + tikhonov * x
    zero = x <= 0
    lower = float(max(0.0, -grad[zero].min(initial=0.0)))
    stat = float(np.abs(grad[~zero]).max(initial=0.0))
    return lower, stat


def solve_nnls_voxelwise(dictionary, data, tikhonov: float = 0.0) -> SpectroscopicImage:
    """Independent NNLS fit at every voxel.

    With ``tikhonov > 0`` each voxel minimizes
    ``1/2 ||m_n - K f_n||^2 + tikhonov/2 ||f_n||^2`` instead, solved as an NNLS
    problem on the stacked system ``[K; sqrt(tikhonov) I]``.
    """
    if tikhonov < 0:
        raise ValueError("tikhonov weight must be nonnegative")
    k = dictionary.entries if hasattr(dictionary, "entries") else np.asarray(dictionary, float)
    m = data.values if isinstance(data, MeasuredStack) else np.atleast_2d(np.asarray(data, float))
    if m.shape[0] != k.shape[0]:
        raise ValueError(f"data has P={m.shape[0]}, dictionary has P={k.shape[0]}")
    q = k.shape[1]
    if tikhonov > 0:
        a = np.vstack([k, np.sqrt(tikhonov) * np.eye(q)])
        rhs = np.vstack([m, np.zeros((q, m.shape[1]))])
    else:
        a, rhs = k, m
    f = np.empty((q, m.shape[1]))
    for col in range(m.shape[1]):
        f[:, col] = lawson_hanson(a, rhs[:, col])
    grid = getattr(dictionary, "grid", None)
    return SpectroscopicImage(f, grid, None, feasible=True)
