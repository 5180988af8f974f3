"""Conjugate gradients for SPD systems with many right-hand sides."""

from __future__ import annotations

import numpy as np

__all__ = ["block_cg"]


def block_cg(apply_a, b: np.ndarray, x0: np.ndarray | None = None, rtol: float = 1e-10,
             max_iter: int = 1000) -> tuple[np.ndarray, int, bool]:
    """Solve ``A x_j = b_j`` for every column ``j`` of ``b`` by independent CG runs.

    The runs advance in lockstep so ``apply_a`` is called once per iteration
    on the whole ``n x k`` block; a column stops updating once
    ``||b_j - A x_j|| <= rtol * ||b_j||``.  Returns ``(x, iterations, converged)``.
    """
    b = np.asarray(b, dtype=float)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - apply_a(x)
    bnorm = np.linalg.norm(b, axis=0)
    target = rtol * bnorm
    rr = np.einsum("ij,ij->j", r, r)
    active = np.sqrt(rr) > target
    p = r.copy()
    it = 0
    while active.any() and it < max_iter:
        ap = apply_a(p)
        pap = np.einsum("ij,ij->j", p, ap)
        alpha = np.where(active, rr / np.where(pap > 0, pap, 1.0), 0.0)
        x += alpha * p
        r -= alpha * ap
        rr_new = np.einsum("ij,ij->j", r, r)
        active &= np.sqrt(rr_new) > target
        beta = np.where(active, rr_new / np.where(rr > 0, rr, 1.0), 0.0)
        p = r + beta * p
        rr = rr_new
        it += 1
    return x, it, not active.any()
