"""Reference phantoms used by the demos, the command line and the test suite.

Both designs use linear spectral grids in physical units (milliseconds,
square micrometres per millisecond), so the quadrature weights put the data
term well above the unit roughness weight and the optimum is sharply defined.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dictionary import (AcquisitionSchedule, AxisSpec, Dictionary, Kernel, Spacing,
                         build_dictionary, build_grid)
from .phantom import Compartment, MeasuredStack, PhantomSpec, SpectroscopicImage, generate_phantom
from .spatial import SpatialGraph, build_spatial_graph

__all__ = ["Preset", "standard_preset", "speed_preset", "PRESETS", "STANDARD_BETA"]

# penalty parameter that converges the standard phantom in a few thousand iterations
STANDARD_BETA = 10.0


@dataclass(frozen=True)
class Preset:
    """A dictionary, a full rectangular mask and a phantom specification."""

    name: str
    dictionary: Dictionary
    mask: np.ndarray
    spec: PhantomSpec
    lam: float = 1.0
    beta: float = STANDARD_BETA

    @property
    def graph(self) -> SpatialGraph:
        return build_spatial_graph(self.mask)

    def generate(self, seed: int | None = None, noise_sigma: float | None = None
                 ) -> tuple[SpectroscopicImage, MeasuredStack, SpatialGraph]:
        spec = self.spec
        if seed is not None or noise_sigma is not None:
            spec = PhantomSpec(spec.image_shape, spec.compartments,
                               spec.noise_sigma if noise_sigma is None else noise_sigma,
                               spec.seed if seed is None else seed)
        graph = self.graph
        f, m = generate_phantom(spec, self.dictionary, graph)
        return f, m, graph


def standard_preset(seed: int = 1, noise_sigma: float = 0.5) -> Preset:
    """8x8 image, 16 echoes at 10..160 ms, 32 T2 bins on 10..320 ms.

    Two overlapping compartments: a short-T2 one (40 ms) in columns 0-4 and a
    long-T2 one (150 ms) in columns 3-7.
    """
    grid = build_grid([AxisSpec(10.0, 320.0, 32, Spacing.LINEAR)])
    schedule = AcquisitionSchedule(10.0 * np.arange(1, 17), Kernel.T2_EXP)
    spec = PhantomSpec((8, 8), (
        Compartment((40.0,), 15.0, ((0, 8), (0, 5)), 1.0),
        Compartment((150.0,), 30.0, ((0, 8), (3, 8)), 1.0),
    ), noise_sigma, seed)
    return Preset("standard", build_dictionary(schedule, grid), np.ones((8, 8), dtype=bool), spec)


def speed_preset(seed: int = 7, noise_sigma: float = 0.5) -> Preset:
    """32x32 image, 12 b-values x 12 echo times, 20 x 20 (D, T2) grid (Q = 400).

    The truncated dictionary has rank 26 at the default tolerance, well under a
    quarter of the 144 measurements.
    """
    grid = build_grid([AxisSpec(0.1, 3.0, 20, Spacing.LINEAR),
                       AxisSpec(10.0, 200.0, 20, Spacing.LINEAR)])
    b = np.linspace(0.0, 3.0, 12)
    te = np.linspace(10.0, 200.0, 12)
    theta = np.stack(np.meshgrid(b, te, indexing="ij"), axis=-1).reshape(-1, 2)
    schedule = AcquisitionSchedule(theta, Kernel.DIFFUSION_T2)
    spec = PhantomSpec((32, 32), (
        Compartment((0.7, 40.0), (0.2, 10.0), ((0, 32), (0, 20)), 1.0),
        Compartment((2.0, 120.0), (0.3, 20.0), ((8, 32), (12, 32)), 1.0),
    ), noise_sigma, seed)
    return Preset("speed", build_dictionary(schedule, grid), np.ones((32, 32), dtype=bool), spec)


PRESETS = {"standard": standard_preset, "speed": speed_preset}
