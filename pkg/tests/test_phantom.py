import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pvmap import (AcquisitionSchedule, AxisSpec, Compartment, Kernel, PhantomSpec, Spacing,
                   build_dictionary, build_grid, build_spatial_graph, generate_phantom,
                   integrate_components)
from pvmap.phantom import SpectroscopicImage


@pytest.fixture
def setup():
    grid = build_grid([AxisSpec(0.01, 1.0, 16, Spacing.LOGARITHMIC)])
    k = build_dictionary(AcquisitionSchedule(np.linspace(0.01, 0.2, 12), Kernel.T2_EXP), grid)
    graph = build_spatial_graph(np.ones((6, 5), dtype=bool))
    return k, graph


def test_noiseless_model_identity(setup):
    k, graph = setup
    spec = PhantomSpec((6, 5), (Compartment((0.05,), 0.15, ((0, 6), (0, 3)), 2.0),), 0.0, 3)
    f, m = generate_phantom(spec, k, graph)
    assert np.linalg.norm(m.values - k.entries @ f.values) == 0.0
    assert f.feasible and np.all(f.values >= 0)
    assert np.all(f.values[:, graph.voxel_coords[:, 1] >= 3] == 0)
    # bump peaks at the grid point nearest the requested center
    peak = np.argmax(f.values[:, 0])
    assert peak == np.argmin(np.abs(np.log10(k.grid.points[:, 0] / 0.05)))


def test_pure_noise_std():
    grid = build_grid([AxisSpec(0.01, 1.0, 4, Spacing.LOGARITHMIC)])
    k = build_dictionary(AcquisitionSchedule(np.linspace(0.0, 0.1, 20), Kernel.T2_EXP), grid)
    graph = build_spatial_graph(np.ones((25, 25), dtype=bool))
    spec = PhantomSpec((25, 25), (Compartment((0.1,), 0.2, ((0, 25), (0, 25)), 0.0),), 0.3, 11)
    _, m = generate_phantom(spec, k, graph)
    assert m.values.size >= 10_000
    assert abs(m.values.std() / 0.3 - 1) < 0.05


def test_same_seed_bit_identical(setup):
    k, graph = setup
    spec = PhantomSpec((6, 5), (Compartment((0.2,), 0.1, ((1, 4), (1, 4)), 1.0),), 0.05, 42)
    a = generate_phantom(spec, k, graph)
    b = generate_phantom(spec, k, graph)
    assert a[0].values.tobytes() == b[0].values.tobytes()
    assert a[1].values.tobytes() == b[1].values.tobytes()
    c = generate_phantom(PhantomSpec(spec.image_shape, spec.compartments, 0.05, 43), k, graph)
    assert c[1].values.tobytes() != a[1].values.tobytes()


def test_region_errors(setup):
    k, graph = setup
    with pytest.raises(ValueError):
        PhantomSpec((6, 5), (Compartment((0.1,), 0.1, ((0, 7), (0, 5))),))
    with pytest.raises(ValueError):
        PhantomSpec((6, 5), (Compartment((0.1,), 0.1, ((0, 6), (0, 5)), -1.0),))
    masked = build_spatial_graph(np.pad(np.ones((3, 5), dtype=bool), ((0, 3), (0, 0))))
    spec = PhantomSpec((6, 5), (Compartment((0.1,), 0.1, ((4, 6), (0, 5))),))
    with pytest.raises(ValueError):
        generate_phantom(spec, k, masked)


def test_two_axis_bump():
    grid = build_grid([AxisSpec(1e-4, 1e-2, 5, Spacing.LOGARITHMIC),
                       AxisSpec(0.01, 0.1, 4, Spacing.LOGARITHMIC)])
    sched = AcquisitionSchedule([[0, 0.01], [1000, 0.05]], Kernel.DIFFUSION_T2)
    k = build_dictionary(sched, grid)
    graph = build_spatial_graph(np.ones((2, 2), dtype=bool))
    spec = PhantomSpec((2, 2), (Compartment((1e-3, 0.1), (0.2, 0.1), ((0, 2), (0, 2))),))
    f, _ = generate_phantom(spec, k, graph)
    peak = np.unravel_index(np.argmax(f.values[:, 0]), grid.axis_shape)
    assert peak == (2, 3)


def test_integrate_full_region():
    f = np.arange(12.0).reshape(4, 3)
    (total,) = integrate_components(f, [(0, 4)])
    np.testing.assert_array_equal(total, f.sum(axis=0))


def test_integrate_partition_and_indicator():
    f = np.random.default_rng(0).random((6, 5))
    maps = integrate_components(SpectroscopicImage(f), [(0, 2), (2, 5), (5, 6)])
    np.testing.assert_allclose(maps[0] + maps[1] + maps[2],
                               integrate_components(f, [(0, 6)])[0], rtol=1e-14)
    one = np.zeros((6, 5))
    one[3] = 1.0
    maps = integrate_components(one, [(0, 2), (2, 5), (3, 4), [0, 1, 5]])
    assert [bool(np.any(mp)) for mp in maps] == [False, True, True, False]


def test_integrate_out_of_range():
    with pytest.raises(ValueError):
        integrate_components(np.zeros((4, 2)), [(2, 5)])
    with pytest.raises(ValueError):
        integrate_components(np.zeros((4, 2)), [[0, 1, 9]])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_integrate_linear(seed):
    rng = np.random.default_rng(seed)
    f, g = rng.standard_normal((2, 7, 3))
    a = rng.standard_normal()
    regions = [(0, 3), (3, 7), (1, 6)]
    lhs = integrate_components(a * f + g, regions)
    rhs = [a * x + y for x, y in zip(integrate_components(f, regions),
                                     integrate_components(g, regions))]
    for x, y in zip(lhs, rhs):
        np.testing.assert_allclose(x, y, rtol=1e-12, atol=1e-12)
