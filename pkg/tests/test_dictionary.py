import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pvmap.dictionary import (AcquisitionSchedule, AxisSpec, DenseRegularizedInverse,
                              Dictionary, Kernel, LowRankDictionary, Spacing, build_dictionary,
                              build_grid, load_dictionary, save_dictionary,
                              truncate_dictionary, apply_regularized_inverse)


def test_log_axis_points():
    g = build_grid([AxisSpec(1, 100, 3, Spacing.LOGARITHMIC)])
    np.testing.assert_array_equal(g.points[:, 0], [1.0, 10.0, 100.0])


def test_single_point_axis_weight():
    g = build_grid([{"min": 0, "max": 1, "count": 1, "spacing": "linear"}])
    assert g.size == 1
    assert g.weights.tolist() == [1.0]


def test_trapezoid_weights_by_hand():
    g = build_grid([AxisSpec(0, 4, 5)])
    np.testing.assert_allclose(g.weights, [0.5, 1, 1, 1, 0.5])


def test_log_axis_weights_in_log_coordinate():
    g = build_grid([AxisSpec(1, 1000, 4, Spacing.LOGARITHMIC)])
    # unit spacing in log10
    np.testing.assert_allclose(g.weights, [0.5, 1, 1, 0.5])


def test_tensor_product_grid():
    g = build_grid([AxisSpec(0, 1, 2), AxisSpec(0, 2, 3)])
    assert g.axis_shape == (2, 3)
    assert g.size == 6
    # first axis slowest
    np.testing.assert_array_equal(g.points[:3, 0], 0)
    np.testing.assert_array_equal(g.points[:3, 1], [0, 1, 2])
    np.testing.assert_allclose(g.weights, np.outer([0.5, 0.5], [0.5, 1, 0.5]).ravel())
    for axis, expected in zip(g.axis_values(), ([0, 1], [0, 1, 2])):
        np.testing.assert_array_equal(axis, expected)


@pytest.mark.parametrize("spec", [
    AxisSpec(0, 1, 0),
    AxisSpec(-1, 10, 5, Spacing.LOGARITHMIC),
    AxisSpec(0, 10, 5, Spacing.LOGARITHMIC),
    AxisSpec(5, 1, 3),
])
def test_bad_axes(spec):
    with pytest.raises(ValueError):
        build_grid([spec])


def _t2_dict(te, t2, log=True):
    grid = build_grid([AxisSpec(min(t2), max(t2), len(t2),
                                Spacing.LOGARITHMIC if log else Spacing.LINEAR)])
    return build_dictionary(AcquisitionSchedule(te, Kernel.T2_EXP), grid)


def test_t2_kernel_values():
    grid = build_grid([AxisSpec(0.05, 0.05, 1)])
    k = build_dictionary(AcquisitionSchedule([0.0, 0.05], Kernel.T2_EXP), grid)
    assert k.entries[0, 0] == 1.0
    assert k.entries[1, 0] == pytest.approx(np.exp(-1), abs=1e-15)
    assert k.entries[1, 0] == pytest.approx(0.367879, abs=1e-6)


def test_ir_and_diffusion_kernels():
    grid = build_grid([AxisSpec(1.0, 1.0, 1), AxisSpec(0.1, 0.1, 1)])
    ir = build_dictionary(AcquisitionSchedule([[0.0, 0.0], [np.log(2), 0.1]],
                                              Kernel.INVERSION_RECOVERY_MSE), grid)
    # TI = 0 gives full inversion; TI = ln2 * T1 is the null point
    np.testing.assert_allclose(ir.entries[:, 0], [-1.0, 0.0], atol=1e-15)
    dgrid = build_grid([AxisSpec(1e-3, 1e-3, 1), AxisSpec(0.1, 0.1, 1)])
    dt2 = build_dictionary(AcquisitionSchedule([[1000.0, 0.1]], Kernel.DIFFUSION_T2), dgrid)
    assert dt2.entries[0, 0] == pytest.approx(np.exp(-1) * np.exp(-1))


def test_dictionary_dimension_errors():
    grid1 = build_grid([AxisSpec(0.01, 1, 4, Spacing.LOGARITHMIC)])
    with pytest.raises(ValueError):
        build_dictionary(AcquisitionSchedule([[0.0, 0.1]], Kernel.DIFFUSION_T2), grid1)
    with pytest.raises(ValueError):
        AcquisitionSchedule([[0.1, 0.1]], Kernel.T2_EXP)
    with pytest.raises(ValueError):
        AcquisitionSchedule([-0.1], Kernel.T2_EXP)
    neg = build_grid([AxisSpec(-1, 1, 3)])
    with pytest.raises(ValueError):
        build_dictionary(AcquisitionSchedule([0.1], Kernel.T2_EXP), neg)


def test_drcsi_scale_shape():
    grid = build_grid([AxisSpec(1e-4, 1e-2, 70, Spacing.LOGARITHMIC),
                       AxisSpec(0.01, 0.5, 70, Spacing.LOGARITHMIC)])
    b = np.repeat([0, 500, 1000, 2000], 7)
    te = np.tile(np.linspace(0.04, 0.2, 7), 4)
    k = build_dictionary(AcquisitionSchedule(np.stack([b, te], 1), Kernel.DIFFUSION_T2), grid)
    assert k.shape == (28, 4900)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=2, max_size=10, unique=True))
def test_t2_entries_bounded_and_monotone(tes):
    te = np.sort(np.array(tes))
    k = _t2_dict(te, np.geomspace(0.01, 1, 6))
    w = k.grid.weights
    assert np.all(k.entries > 0)
    assert np.all(k.entries <= w[None, :] * (1 + 1e-15))
    assert np.all(np.diff(k.entries, axis=0) <= 0)


def test_truncate_rank_one():
    u = np.array([1.0, 2.0, 3.0])
    v = np.array([1.0, -1.0, 0.5, 2.0])
    for tol in (1e-12, 1e-4, 0.5):
        lrd = truncate_dictionary(Dictionary.from_matrix(np.outer(u, v)), tol)
        assert lrd.rank == 1


def test_truncate_identity_full_rank():
    lrd = truncate_dictionary(Dictionary.from_matrix(np.eye(7)), 1e-12)
    assert lrd.rank == 7
    assert lrd.frobenius_error == 0.0


def _matrix_with_spectrum(s, p, q, seed):
    rng = np.random.default_rng(seed)
    u, _ = np.linalg.qr(rng.standard_normal((p, len(s))))
    v, _ = np.linalg.qr(rng.standard_normal((q, len(s))))
    return (u * s) @ v.T


def test_truncate_against_full_svd():
    s = np.array([10, 1, 1e-9, 1e-10, 1e-11, 1e-12, 1e-13, 1e-14])
    k = _matrix_with_spectrum(s, 8, 12, 0)
    lrd = truncate_dictionary(Dictionary.from_matrix(k), 1e-4)
    assert lrd.rank == 2
    # oracle: brute-force smallest r from the full SVD
    full = np.linalg.svd(k, compute_uv=False)
    errs = [np.sqrt(np.sum(full[r:] ** 2) / np.sum(full ** 2)) for r in range(len(full) + 1)]
    assert lrd.rank == min(r for r, e in enumerate(errs) if e < 1e-4)


def test_truncate_zero_dictionary():
    with pytest.raises(ValueError):
        truncate_dictionary(Dictionary.from_matrix(np.zeros((3, 4))))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([1e-1, 1e-2, 1e-4, 5e-5, 1e-8]))
def test_truncation_invariants(seed, tol):
    rng = np.random.default_rng(seed)
    s = np.sort(10.0 ** rng.uniform(-10, 1, 6))[::-1]
    k = _matrix_with_spectrum(s, 6, 9, seed)
    d = Dictionary.from_matrix(k)
    lrd = truncate_dictionary(d, tol)
    assert np.all(np.diff(lrd.singular_values) <= 0) and np.all(lrd.singular_values > 0)
    np.testing.assert_allclose(lrd.right_vectors.T @ lrd.right_vectors, np.eye(lrd.rank), atol=1e-10)
    np.testing.assert_allclose(lrd.left_vectors.T @ lrd.left_vectors, np.eye(lrd.rank), atol=1e-10)
    err = np.linalg.norm(k - lrd.matrix()) / np.linalg.norm(k)
    assert err < tol
    assert lrd.frobenius_error < tol
    # looser tolerance never needs more rank
    assert truncate_dictionary(d, min(0.9, tol * 10)).rank <= lrd.rank


def test_inverse_empty_truncation():
    lrd = LowRankDictionary(np.zeros(0), np.zeros((3, 0)), np.zeros((4, 0)))
    x = np.array([1.0, -2.0, 3.0, 4.0])
    np.testing.assert_array_equal(apply_regularized_inverse(lrd, 2.0, x), x / 2)


def test_inverse_scalar_case():
    lrd = truncate_dictionary(Dictionary.from_matrix([[1.0]]))
    np.testing.assert_allclose(apply_regularized_inverse(lrd, 1.0, [1.0]), [0.5])


def test_inverse_matches_dense_solve():
    rng = np.random.default_rng(1)
    k = rng.standard_normal((4, 3))
    x = rng.standard_normal(3)
    lrd = truncate_dictionary(Dictionary.from_matrix(k), 1e-12)
    assert lrd.rank == 3
    want = np.linalg.solve(k.T @ k + 0.7 * np.eye(3), x)
    got = apply_regularized_inverse(lrd, 0.7, x)
    assert np.linalg.norm(got - want) <= 1e-10 * np.linalg.norm(want)


def test_inverse_rejects_bad_beta():
    lrd = truncate_dictionary(Dictionary.from_matrix(np.eye(2)))
    for beta in (0.0, -1.0):
        with pytest.raises(ValueError):
            apply_regularized_inverse(lrd, beta, np.ones(2))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(1e-3, 1e3))
def test_inverse_linear_and_block(seed, beta):
    rng = np.random.default_rng(seed)
    k = rng.standard_normal((5, 8))
    lrd = truncate_dictionary(Dictionary.from_matrix(k), 1e-12)
    x, y = rng.standard_normal((2, 8))
    a = rng.standard_normal()
    lhs = apply_regularized_inverse(lrd, beta, a * x + y)
    rhs = a * apply_regularized_inverse(lrd, beta, x) + apply_regularized_inverse(lrd, beta, y)
    assert np.linalg.norm(lhs - rhs) <= 1e-12 * max(1.0, np.linalg.norm(lhs))
    block = apply_regularized_inverse(lrd, beta, np.stack([x, y], axis=1))
    np.testing.assert_allclose(block[:, 0], apply_regularized_inverse(lrd, beta, x), rtol=1e-13)


def test_dense_inverse_matches_low_rank_at_full_rank():
    rng = np.random.default_rng(3)
    d = Dictionary.from_matrix(rng.standard_normal((6, 4)))
    x = rng.standard_normal((4, 5))
    dense = DenseRegularizedInverse(d).inverse(0.3)(x)
    low = apply_regularized_inverse(truncate_dictionary(d, 1e-12), 0.3, x)
    np.testing.assert_allclose(dense, low, rtol=1e-10)


def test_dictionary_roundtrip(tmp_path):
    grid = build_grid([AxisSpec(0.01, 1.0, 5, Spacing.LOGARITHMIC), AxisSpec(0.5, 2.0, 2)])
    sched = AcquisitionSchedule([[0.0, 0.01], [0.2, 0.03]], Kernel.INVERSION_RECOVERY_MSE)
    k = build_dictionary(sched, grid)
    sidecar = save_dictionary(tmp_path / "k.sspm", k)
    meta = json.loads(sidecar.read_text())
    assert meta["schedule"]["kernel"] == "InversionRecoveryMSE"
    back = load_dictionary(tmp_path / "k.sspm")
    np.testing.assert_array_equal(back.entries, k.entries)
    np.testing.assert_array_equal(back.grid.weights, k.grid.weights)
    assert back.grid.axis_shape == (5, 2)
    assert back.schedule.kernel is Kernel.INVERSION_RECOVERY_MSE


def test_types_are_immutable():
    k = Dictionary.from_matrix(np.eye(2))
    with pytest.raises(ValueError):
        k.entries[0, 0] = 5.0
