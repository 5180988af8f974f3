"""Forward-model dictionaries and their low-rank compression.

A dictionary ``K`` maps a discretized spectrum ``f_n`` (length ``Q``) at one
voxel to the ``P`` measured contrast-weighted signals at that voxel,
``m_n = K f_n``.  Column ``q`` of ``K`` is the ideal signal of a pure
compartment with tissue parameters ``gamma_q``, scaled by the quadrature
weight ``w_q`` of the spectral grid.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from .arrayio import read_array, write_array

__all__ = [
    "Spacing",
    "Kernel",
    "AxisSpec",
    "SpectralGrid",
    "AcquisitionSchedule",
    "Dictionary",
    "LowRankDictionary",
    "DenseRegularizedInverse",
    "build_grid",
    "build_dictionary",
    "truncate_dictionary",
    "apply_regularized_inverse",
    "save_dictionary",
    "load_dictionary",
    "DEFAULT_RANK_TOL",
]

DEFAULT_RANK_TOL = 5e-5


class Spacing(str, enum.Enum):
    LINEAR = "linear"
    LOGARITHMIC = "logarithmic"


class Kernel(str, enum.Enum):
    """Signal models ``b(theta, gamma)``.

    ``T2Exp``
        theta = (TE,), gamma = (T2,)
    ``InversionRecoveryMSE``
        theta = (TI, TE), gamma = (T1, T2)
    ``DiffusionT2``
        theta = (b, TE), gamma = (D, T2)

    Only the products ``TE/T2``, ``TI/T1`` and ``b D`` enter, so any consistent
    units work (the bundled presets use milliseconds and um^2/ms).
    """

    T2_EXP = "T2Exp"
    INVERSION_RECOVERY_MSE = "InversionRecoveryMSE"
    DIFFUSION_T2 = "DiffusionT2"

    @property
    def arity(self) -> int:
        return 1 if self is Kernel.T2_EXP else 2

    def evaluate(self, theta: np.ndarray, gamma: np.ndarray) -> np.ndarray:
        """Evaluate ``b(theta_p, gamma_q)`` for all pairs, returning a P x Q array."""
        if self is Kernel.T2_EXP:
            te = theta[:, 0:1]
            t2 = gamma[None, :, 0]
            return np.exp(-te / t2)
        if self is Kernel.INVERSION_RECOVERY_MSE:
            ti, te = theta[:, 0:1], theta[:, 1:2]
            t1, t2 = gamma[None, :, 0], gamma[None, :, 1]
            return (1.0 - 2.0 * np.exp(-ti / t1)) * np.exp(-te / t2)
        bval, te = theta[:, 0:1], theta[:, 1:2]
        diff, t2 = gamma[None, :, 0], gamma[None, :, 1]
        return np.exp(-bval * diff) * np.exp(-te / t2)


@dataclass(frozen=True)
class AxisSpec:
    min: float
    max: float
    count: int
    spacing: Spacing = Spacing.LINEAR

    @classmethod
    def from_dict(cls, d: dict) -> "AxisSpec":
        return cls(float(d["min"]), float(d["max"]), int(d["count"]),
                   Spacing(d.get("spacing", "linear")))

    def to_dict(self) -> dict:
        return {"min": self.min, "max": self.max, "count": self.count,
                "spacing": self.spacing.value}


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, order="C")
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SpectralGrid:
    """Tensor-product grid of tissue parameters with quadrature weights.

    ``points`` is a ``(Q, n_axes)`` array, ordered with the first axis
    varying slowest, and ``weights`` has length ``Q``.
    """

    points: np.ndarray
    weights: np.ndarray
    spacing: tuple[Spacing, ...]
    axis_shape: tuple[int, ...]
    axes: tuple[AxisSpec, ...] = ()

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        object.__setattr__(self, "points", _readonly(points))
        object.__setattr__(self, "weights", _readonly(np.ravel(self.weights)))
        object.__setattr__(self, "axis_shape", tuple(int(c) for c in self.axis_shape))
        object.__setattr__(self, "spacing", tuple(Spacing(s) for s in self.spacing))
        q = self.points.shape[0]
        if int(np.prod(self.axis_shape)) != q or self.weights.shape != (q,):
            raise ValueError("axis_shape, points and weights disagree on Q")
        if len(self.axis_shape) != self.points.shape[1]:
            raise ValueError("one axis count is required per point coordinate")
        if not np.all(self.weights > 0):
            raise ValueError("quadrature weights must be strictly positive")
        for a, coords in enumerate(self.axis_values()):
            if np.any(np.diff(coords) <= 0):
                raise ValueError(f"grid axis {a} is not strictly increasing")

    @property
    def size(self) -> int:
        return self.points.shape[0]

    def axis_values(self) -> list[np.ndarray]:
        """The distinct coordinates along each axis."""
        grid = self.points.reshape(*self.axis_shape, len(self.axis_shape))
        out = []
        for a in range(len(self.axis_shape)):
            index = [0] * len(self.axis_shape)
            index[a] = slice(None)
            out.append(grid[tuple(index) + (a,)])
        return out

    def to_dict(self) -> dict:
        return {
            "axis_shape": list(self.axis_shape),
            "spacing": [s.value for s in self.spacing],
            "axes": [a.to_dict() for a in self.axes],
            "points": self.points.tolist(),
            "weights": self.weights.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SpectralGrid":
        return cls(np.array(d["points"], dtype=float), np.array(d["weights"], dtype=float),
                   tuple(d["spacing"]), tuple(d["axis_shape"]),
                   tuple(AxisSpec.from_dict(a) for a in d.get("axes", [])))


@dataclass(frozen=True, eq=False)
class AcquisitionSchedule:
    """Contrast-encoding parameters ``theta_p`` of the ``P`` measured images."""

    entries: np.ndarray
    kernel: Kernel

    def __post_init__(self):
        kernel = Kernel(self.kernel)
        entries = np.asarray(self.entries, dtype=float)
        if entries.ndim == 1:
            entries = entries[:, None]
        if entries.ndim != 2 or entries.shape[0] < 1:
            raise ValueError("an acquisition schedule needs at least one entry")
        if entries.shape[1] != kernel.arity:
            raise ValueError(f"{kernel.value} expects {kernel.arity} parameters per "
                             f"acquisition, got {entries.shape[1]}")
        if not np.all(np.isfinite(entries)) or np.any(entries < 0):
            raise ValueError("acquisition timing parameters must be finite and nonnegative")
        object.__setattr__(self, "kernel", kernel)
        object.__setattr__(self, "entries", _readonly(entries))

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    def to_dict(self) -> dict:
        return {"kernel": self.kernel.value, "entries": self.entries.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "AcquisitionSchedule":
        return cls(np.array(d["entries"], dtype=float), Kernel(d["kernel"]))


@dataclass(frozen=True, eq=False)
class Dictionary:
    """The ``P x Q`` matrix ``K`` with the grid and schedule that produced it."""

    entries: np.ndarray
    grid: SpectralGrid
    schedule: AcquisitionSchedule

    def __post_init__(self):
        entries = _readonly(self.entries)
        if entries.shape != (self.schedule.size, self.grid.size):
            raise ValueError(f"dictionary shape {entries.shape} does not match "
                             f"P={self.schedule.size}, Q={self.grid.size}")
        if not np.all(np.isfinite(entries)):
            raise ValueError("dictionary entries must be finite")
        object.__setattr__(self, "entries", entries)

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape

    @cached_property
    def svd(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Thin SVD ``(U, s, Vt)`` of the entries, computed once."""
        u, s, vt = np.linalg.svd(self.entries, full_matrices=False)
        for a in (u, s, vt):
            a.setflags(write=False)
        return u, s, vt

    @classmethod
    def from_matrix(cls, matrix) -> "Dictionary":
        """Wrap a bare matrix with placeholder unit-weight metadata.

        Useful for tests and for dictionaries produced by external simulators.
        """
        matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
        p, q = matrix.shape
        grid = SpectralGrid(np.arange(1, q + 1, dtype=float), np.ones(q),
                            (Spacing.LINEAR,), (q,))
        schedule = AcquisitionSchedule(np.arange(p, dtype=float), Kernel.T2_EXP)
        return cls(matrix, grid, schedule)


def _trapezoid_weights(coords: np.ndarray) -> np.ndarray:
    if coords.size == 1:
        return np.ones(1)
    h = np.diff(coords)
    w = np.zeros(coords.size)
    w[:-1] += h / 2
    w[1:] += h / 2
    return w


def build_grid(axis_specs: Sequence[AxisSpec | dict]) -> SpectralGrid:
    """Build a tensor-product spectral grid.

    Each axis is sampled uniformly in its native coordinate (``log10`` of the
    parameter for logarithmic axes) and receives trapezoidal quadrature weights
    in that coordinate; the weight of a grid point is the product of its
    per-axis weights.  Single-point axes get weight 1.

    Examples
    --------
    >>> g = build_grid([AxisSpec(0, 4, 5)])
    >>> g.weights.tolist()
    [0.5, 1.0, 1.0, 1.0, 0.5]
    """
    specs = [a if isinstance(a, AxisSpec) else AxisSpec.from_dict(a) for a in axis_specs]
    if not specs:
        raise ValueError("at least one grid axis is required")
    coords, weights = [], []
    for spec in specs:
        if spec.count < 1:
            raise ValueError("grid axis count must be at least 1")
        if spec.count > 1 and not spec.min < spec.max:
            raise ValueError("grid axis requires min < max")
        if spec.spacing is Spacing.LOGARITHMIC:
            if spec.min <= 0 or spec.max <= 0:
                raise ValueError("logarithmic axes need positive bounds")
            native = np.linspace(np.log10(spec.min), np.log10(spec.max), spec.count)
            values = 10.0 ** native
            # pin endpoints so e.g. {1, 100, 3} gives exactly [1, 10, 100]
            values[0] = spec.min
            values[-1] = spec.max if spec.count > 1 else spec.min
        else:
            native = np.linspace(spec.min, spec.max, spec.count)
            values = native
        coords.append(values)
        weights.append(_trapezoid_weights(native))
    mesh = np.meshgrid(*coords, indexing="ij")
    points = np.stack([m.ravel() for m in mesh], axis=1)
    wmesh = np.meshgrid(*weights, indexing="ij")
    w = np.prod(np.stack([m.ravel() for m in wmesh], axis=1), axis=1)
    return SpectralGrid(points, w, tuple(s.spacing for s in specs),
                        tuple(s.count for s in specs), tuple(specs))


def build_dictionary(schedule: AcquisitionSchedule, grid: SpectralGrid) -> Dictionary:
    """Evaluate ``K[p, q] = w_q * b(theta_p, gamma_q)`` for the schedule's kernel."""
    kernel = schedule.kernel
    gamma = grid.points
    if gamma.shape[1] != kernel.arity:
        raise ValueError(f"{kernel.value} expects {kernel.arity} tissue parameters per "
                         f"grid point, got {gamma.shape[1]}")
    if np.any(gamma < 0):
        raise ValueError("relaxation constants and diffusivities must be nonnegative")
    # relaxation times sit in the last column for every kernel, plus T1 for IR
    relax = gamma[:, -1:] if kernel is not Kernel.INVERSION_RECOVERY_MSE else gamma
    if np.any(relax <= 0):
        raise ValueError("relaxation time constants must be positive")
    with np.errstate(over="ignore"):
        b = kernel.evaluate(schedule.entries, gamma)
    return Dictionary(b * grid.weights[None, :], grid, schedule)


@dataclass(frozen=True, eq=False)
class LowRankDictionary:
    """Rank-``r`` truncated SVD ``K_r = sum_i s_i u_i v_i^T`` of a dictionary.

    ``left_vectors`` is ``P x r`` and ``right_vectors`` is ``Q x r``; column
    ``i`` of each holds ``u_i`` and ``v_i``.
    """

    singular_values: np.ndarray
    left_vectors: np.ndarray
    right_vectors: np.ndarray
    frobenius_error: float = 0.0

    def __post_init__(self):
        s = _readonly(np.ravel(self.singular_values))
        u = np.asarray(self.left_vectors, dtype=float)
        v = np.asarray(self.right_vectors, dtype=float)
        if u.ndim != 2 or v.ndim != 2 or u.shape[1] != s.size or v.shape[1] != s.size:
            raise ValueError("singular vectors must be given as P x r and Q x r arrays")
        u, v = _readonly(u), _readonly(v)
        if np.any(s <= 0) or np.any(np.diff(s) > 0):
            raise ValueError("singular values must be positive and non-increasing")
        object.__setattr__(self, "singular_values", s)
        object.__setattr__(self, "left_vectors", u)
        object.__setattr__(self, "right_vectors", v)

    @property
    def rank(self) -> int:
        return self.singular_values.size

    @property
    def shape(self) -> tuple[int, int]:
        return self.left_vectors.shape[0], self.right_vectors.shape[0]

    def matrix(self) -> np.ndarray:
        """Dense ``K_r``."""
        return (self.left_vectors * self.singular_values) @ self.right_vectors.T

    def adjoint_apply(self, m: np.ndarray) -> np.ndarray:
        """``K_r^T m`` for a length-P vector or a P x N stack."""
        proj = self.left_vectors.T @ m
        s = self.singular_values[:, None] if proj.ndim == 2 else self.singular_values
        return self.right_vectors @ (s * proj)

    def inverse(self, beta: float) -> "_LowRankInverse":
        return _LowRankInverse(self, beta)


class _LowRankInverse:
    """``(K_r^T K_r + beta I)^{-1}`` held as ``O(rQ)`` factors."""

    def __init__(self, lrd: LowRankDictionary, beta: float):
        if not beta > 0:
            raise ValueError("beta must be positive")
        s2 = lrd.singular_values ** 2
        self.beta = float(beta)
        self.v = lrd.right_vectors
        self.coef = s2 / (beta * beta + beta * s2)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        proj = self.v.T @ x
        if x.ndim == 2:
            return x / self.beta - self.v @ (self.coef[:, None] * proj)
        return x / self.beta - self.v @ (self.coef * proj)

    def rows(self, x: np.ndarray) -> np.ndarray:
        """Apply to every row of a ``k x Q`` array (voxel-major layout)."""
        out = (x @ self.v) * self.coef
        out = out @ self.v.T
        np.subtract(x * (1.0 / self.beta), out, out=out)
        return out


def apply_regularized_inverse(lrd: LowRankDictionary, beta: float, x) -> np.ndarray:
    """Apply ``(K_r^T K_r + beta I)^{-1}`` to ``x`` using the truncated SVD.

    Evaluates ``x / beta - sum_i s_i^2 / (beta^2 + beta s_i^2) v_i (v_i^T x)``
    in ``O(rQ)`` work per column.  ``x`` may be a length-Q vector or a
    ``Q x N`` array of columns.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[0] != lrd.right_vectors.shape[0]:
        raise ValueError(f"expected leading dimension {lrd.right_vectors.shape[0]}, got {x.shape[0]}")
    return lrd.inverse(beta)(x)


class DenseRegularizedInverse:
    """Exact ``(K^T K + beta I)^{-1}`` stored as a dense ``Q x Q`` matrix.

    This is the unapproximated reference path; it costs ``O(Q^2)`` memory and
    work per voxel, against ``O(rQ)`` for :class:`LowRankDictionary`.
    """

    def __init__(self, dictionary: Dictionary):
        self.entries = dictionary.entries
        self.shape = dictionary.shape
        self._gram = self.entries.T @ self.entries

    def adjoint_apply(self, m: np.ndarray) -> np.ndarray:
        return self.entries.T @ m

    def inverse(self, beta: float):
        if not beta > 0:
            raise ValueError("beta must be positive")
        q = self._gram.shape[0]
        chol = np.linalg.cholesky(self._gram + beta * np.eye(q))
        eye = np.eye(q)
        linv = np.linalg.solve(chol, eye)
        m = linv.T @ linv
        return _DenseInverse(0.5 * (m + m.T))


class _DenseInverse:
    def __init__(self, matrix: np.ndarray):
        self.matrix = matrix

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ x

    def rows(self, x: np.ndarray) -> np.ndarray:
        # the matrix is symmetric, so x M applies it to each row
        return x @ self.matrix


def truncate_dictionary(dictionary: Dictionary, tolerance: float = DEFAULT_RANK_TOL
                        ) -> LowRankDictionary:
    """Truncate the SVD of ``K`` to the smallest rank meeting a Frobenius tolerance.

    The selected rank ``r`` is the smallest with
    ``sqrt(sum_{i>r} s_i^2) / sqrt(sum_i s_i^2) < tolerance``.
    """
    if not 0 < tolerance < 1:
        raise ValueError("tolerance must lie in (0, 1)")
    u, s, vt = dictionary.svd
    total = float(np.sum(s ** 2))
    if total == 0.0:
        raise ValueError("cannot truncate an all-zero dictionary")
    # tail[r] = energy discarded when keeping the first r triplets
    tail = np.concatenate([np.cumsum((s ** 2)[::-1])[::-1], [0.0]])
    rel = np.sqrt(tail / total)
    r = int(np.argmax(rel < tolerance))
    return LowRankDictionary(s[:r].copy(), u[:, :r].copy(), vt[:r].T.copy(), float(rel[r]))


def save_dictionary(path, dictionary: Dictionary) -> Path:
    """Write entries as an SSPM1 array and grid/schedule metadata as a JSON sidecar.

    Returns the sidecar path (``<path>.json``).
    """
    path = Path(path)
    write_array(path, dictionary.entries)
    sidecar = path.with_name(path.name + ".json")
    meta = {"kind": "dictionary", "shape": list(dictionary.shape),
            "grid": dictionary.grid.to_dict(), "schedule": dictionary.schedule.to_dict()}
    sidecar.write_text(json.dumps(meta, indent=1))
    return sidecar


def load_dictionary(path) -> Dictionary:
    path = Path(path)
    entries = read_array(path)
    sidecar = path.with_name(path.name + ".json")
    if not sidecar.exists():
        return Dictionary.from_matrix(entries)
    meta = json.loads(sidecar.read_text())
    return Dictionary(entries, SpectralGrid.from_dict(meta["grid"]),
                      AcquisitionSchedule.from_dict(meta["schedule"]))
