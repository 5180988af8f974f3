"""Synthetic spectroscopic phantoms, measured stacks and component maps."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .arrayio import write_array, write_pgm
from .dictionary import Dictionary, SpectralGrid, Spacing
from .spatial import SpatialGraph

__all__ = [
    "MeasuredStack",
    "SpectroscopicImage",
    "Compartment",
    "PhantomSpec",
    "RNG_ALGORITHM",
    "make_rng",
    "generate_phantom",
    "integrate_components",
    "save_maps",
]

RNG_ALGORITHM = "numpy.random.PCG64"


def make_rng(seed: int) -> np.random.Generator:
    """The seeded generator used for every synthetic draw (PCG64 bit stream)."""
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True, eq=False)
class MeasuredStack:
    """Measured signals ``m``, one column of ``P`` values per voxel."""

    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2:
            raise ValueError("measured stack must be a P x N array")
        if not np.all(np.isfinite(values)):
            raise ValueError("measured stack contains non-finite values")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def P(self) -> int:
        return self.values.shape[0]

    @property
    def N(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True, eq=False)
class SpectroscopicImage:
    """A ``Q x N`` spectral-spatial image; ``feasible`` marks a nonnegative estimate."""

    values: np.ndarray
    grid: SpectralGrid | None = None
    graph: SpatialGraph | None = None
    feasible: bool = False

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2:
            raise ValueError("spectroscopic image must be a Q x N array")
        if self.feasible and np.any(values < 0):
            raise ValueError("image flagged feasible has negative entries")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def Q(self) -> int:
        return self.values.shape[0]

    @property
    def N(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class Compartment:
    """A Gaussian spectral bump placed over a box of voxels.

    ``center`` is in tissue-parameter units, one entry per grid axis.  ``width``
    is the standard deviation in each axis's native coordinate, i.e. in decades
    for logarithmic axes.  ``region`` gives ``(start, stop)`` per image axis.
    """

    center: tuple[float, ...]
    width: float | tuple[float, ...]
    region: tuple[tuple[int, int], ...]
    amplitude: float = 1.0

    def to_dict(self) -> dict:
        return {"center": list(self.center),
                "width": list(self.width) if isinstance(self.width, tuple) else self.width,
                "region": [list(r) for r in self.region], "amplitude": self.amplitude}

    @classmethod
    def from_dict(cls, d: dict) -> "Compartment":
        width = d["width"]
        return cls(tuple(d["center"]), tuple(width) if isinstance(width, list) else float(width),
                   tuple(tuple(r) for r in d["region"]), float(d.get("amplitude", 1.0)))


@dataclass(frozen=True)
class PhantomSpec:
    image_shape: tuple[int, ...]
    compartments: tuple[Compartment, ...] = ()
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")
        for c in self.compartments:
            if c.amplitude < 0:
                raise ValueError("compartment amplitudes must be nonnegative")
            if len(c.region) != len(self.image_shape):
                raise ValueError("region rank differs from image rank")
            for (start, stop), size in zip(c.region, self.image_shape):
                if not 0 <= start < stop <= size:
                    raise ValueError(f"region {c.region} lies outside image {self.image_shape}")

    def to_dict(self) -> dict:
        return {"image_shape": list(self.image_shape),
                "compartments": [c.to_dict() for c in self.compartments],
                "noise_sigma": self.noise_sigma, "seed": self.seed,
                "rng": RNG_ALGORITHM}

    @classmethod
    def from_dict(cls, d: dict) -> "PhantomSpec":
        return cls(tuple(d["image_shape"]),
                   tuple(Compartment.from_dict(c) for c in d.get("compartments", [])),
                   float(d.get("noise_sigma", 0.0)), int(d.get("seed", 0)))


def _native(values: np.ndarray, spacing: Spacing) -> np.ndarray:
    return np.log10(values) if spacing is Spacing.LOGARITHMIC else values


def _spectral_bump(grid: SpectralGrid, comp: Compartment) -> np.ndarray:
    n_axes = grid.points.shape[1]
    if len(comp.center) != n_axes:
        raise ValueError("compartment center needs one coordinate per grid axis")
    widths = np.broadcast_to(np.asarray(comp.width, dtype=float), (n_axes,))
    if np.any(widths <= 0):
        raise ValueError("spectral widths must be positive")
    expo = np.zeros(grid.size)
    for a in range(n_axes):
        spacing = grid.spacing[a]
        x = _native(grid.points[:, a], spacing)
        c = _native(np.float64(comp.center[a]), spacing)
        expo += ((x - c) / widths[a]) ** 2
    return np.exp(-0.5 * expo)


def generate_phantom(spec: PhantomSpec, dictionary: Dictionary, graph: SpatialGraph
                     ) -> tuple[SpectroscopicImage, MeasuredStack]:
    """Draw a ground-truth image and its noisy measurements.

    Each compartment contributes ``amplitude * bump`` to every masked voxel of
    its region; the data are ``K f + sigma * e`` with ``e`` standard normal from
    a PCG64 stream seeded with ``spec.seed``.
    """
    if graph.voxel_coords is None or tuple(graph.image_shape) != tuple(spec.image_shape):
        raise ValueError("graph lattice does not match the phantom image shape")
    coords = graph.voxel_coords
    f = np.zeros((dictionary.grid.size, graph.n_voxels))
    for comp in spec.compartments:
        inside = np.ones(graph.n_voxels, dtype=bool)
        for axis, (start, stop) in enumerate(comp.region):
            inside &= (coords[:, axis] >= start) & (coords[:, axis] < stop)
        if not inside.any():
            raise ValueError(f"region {comp.region} contains no masked voxels")
        f[:, inside] += comp.amplitude * _spectral_bump(dictionary.grid, comp)[:, None]
    rng = make_rng(spec.seed)
    noise = rng.standard_normal((dictionary.shape[0], graph.n_voxels))
    m = dictionary.entries @ f + spec.noise_sigma * noise
    return (SpectroscopicImage(f, dictionary.grid, graph, feasible=True),
            MeasuredStack(m))


def integrate_components(f, regions: Sequence[tuple[int, int] | Sequence[int]]) -> list[np.ndarray]:
    """Sum the spectrum over each region of spectral indices, one map per region.

    A region is either a half-open ``(start, stop)`` pair or, when given as a
    list longer than two, an explicit list of indices.
    """
    values = f.values if isinstance(f, SpectroscopicImage) else np.asarray(f, dtype=float)
    q = values.shape[0]
    maps = []
    for region in regions:
        region = list(region)
        if len(region) == 2:
            start, stop = int(region[0]), int(region[1])
            if not 0 <= start < stop <= q:
                raise ValueError(f"spectral region {region} outside [0, {q})")
            idx = np.arange(start, stop)
        else:
            idx = np.asarray(region, dtype=np.int64)
            if idx.size == 0 or idx.min() < 0 or idx.max() >= q:
                raise ValueError(f"spectral region {region} outside [0, {q})")
        maps.append(values[idx].sum(axis=0))
    return maps


def save_maps(directory, maps: Sequence[np.ndarray], graph: SpatialGraph,
              prefix: str = "map") -> list[Path]:
    """Write each map losslessly (SSPM1, length N) and as an 8-bit PGM image.

    3-D lattices are written to PGM as their slices stacked vertically.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for j, values in enumerate(maps):
        base = directory / f"{prefix}{j:02d}"
        write_array(base.with_suffix(".sspm"), values)
        written.append(base.with_suffix(".sspm"))
        if graph.voxel_coords is not None:
            image = graph.to_image(values)
            if image.ndim == 3:
                image = image.transpose(2, 0, 1).reshape(-1, image.shape[1])
            elif image.ndim == 1:
                image = image[None, :]
            write_pgm(base.with_suffix(".pgm"), image)
            written.append(base.with_suffix(".pgm"))
    return written


def save_phantom_sidecar(path, spec: PhantomSpec, extra: dict | None = None) -> Path:
    path = Path(path)
    sidecar = path.with_name(path.name + ".json")
    meta = {"kind": "phantom", **spec.to_dict(), **(extra or {})}
    sidecar.write_text(json.dumps(meta, indent=1))
    return sidecar
