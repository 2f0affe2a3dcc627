import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from skelcloud.rotation import (
    IDENTITY,
    RollQuat,
    align_max_real,
    align_max_real_raw,
    euler_to_quat,
    foq_decode,
    foq_encode,
    hemisphere_align,
    quat_angle,
    quat_conjugate,
    quat_from_axis_angle,
    quat_mul,
    quat_rotate,
    roll_quat,
    slerp,
)

from conftest import random_unit_quats, rodrigues


def scipy_rot(q):
    q = np.atleast_2d(q)
    return Rotation.from_quat(q[:, [1, 2, 3, 0]])


finite = st.floats(-10, 10, allow_nan=False)
quat_st = st.tuples(finite, finite, finite, finite).filter(lambda q: sum(x * x for x in q) > 1e-3)


def unit(q):
    q = np.asarray(q, float)
    return q / np.linalg.norm(q)


def test_mul_identity():
    q = unit([0.3, -0.2, 0.5, 0.1])
    np.testing.assert_array_equal(quat_mul(IDENTITY, q), q)


def test_mul_worked_example():
    np.testing.assert_allclose(quat_mul([0, 0.5, 0.5, 0], [0, 1, 0, 0]), [-0.5, 0, 0, -0.5], atol=1e-15)
    # same product as matrix composition: both rotate x the same way (after normalizing)
    a, b = unit([0, 0.5, 0.5, 0]), np.array([0.0, 1, 0, 0])
    m = scipy_rot(a).as_matrix()[0] @ scipy_rot(b).as_matrix()[0]
    np.testing.assert_allclose(quat_rotate([1.0, 2.0, 3.0], quat_mul(a, b)), m @ [1.0, 2.0, 3.0], atol=1e-12)


def test_mul_matches_matrix_composition(rng):
    a = random_unit_quats(rng, 10_000)
    b = random_unit_quats(rng, 10_000)
    v = rng.normal(size=(10_000, 3))
    expected = np.einsum("nij,nj->ni", scipy_rot(a).as_matrix() @ scipy_rot(b).as_matrix(), v)
    np.testing.assert_allclose(quat_rotate(v, quat_mul(a, b)), expected, atol=1e-9)
    np.testing.assert_allclose(np.linalg.norm(quat_mul(a, b), axis=-1), 1.0, atol=1e-9)


@given(quat_st, quat_st)
def test_mul_norm_multiplicative(a, b):
    assert math.isclose(np.linalg.norm(quat_mul(a, b)), np.linalg.norm(a) * np.linalg.norm(b), rel_tol=1e-9)


def test_conjugate():
    np.testing.assert_array_equal(quat_conjugate(IDENTITY), IDENTITY)
    np.testing.assert_array_equal(quat_conjugate([0.0, 1, 0, 0]), [0.0, -1, 0, 0])


def test_conjugate_inverts(rng):
    q = random_unit_quats(rng, 1000)
    np.testing.assert_allclose(quat_mul(q, quat_conjugate(q)), np.tile(IDENTITY, (1000, 1)), atol=1e-9)


def test_rotate_cases():
    np.testing.assert_array_equal(quat_rotate([1.0, 2.0, 3.0], IDENTITY), [1.0, 2.0, 3.0])
    qz = quat_from_axis_angle([0, 0, 1], np.pi / 2)
    expected = rodrigues([0, 0, 1], np.pi / 2) @ [1, 0, 0]
    np.testing.assert_allclose(quat_rotate([1.0, 0, 0], qz), expected, atol=1e-15)
    np.testing.assert_allclose(expected, [0, 1, 0], atol=1e-15)


def test_rotate_preserves_norm(rng):
    q = random_unit_quats(rng, 10_000)
    v = rng.normal(size=(10_000, 3))
    np.testing.assert_allclose(np.linalg.norm(quat_rotate(v, q), axis=-1), np.linalg.norm(v, axis=-1), rtol=1e-9)


def test_rotate_normalizes_raw_input():
    q = quat_from_axis_angle([0, 1, 0], 0.7)
    np.testing.assert_allclose(quat_rotate([1.0, 0, 0], 3.0 * q), quat_rotate([1.0, 0, 0], q), atol=1e-15)


@given(quat_st, quat_st)
def test_hemisphere_align_property(q, ref):
    out = hemisphere_align(q, ref)
    assert np.dot(out, ref) >= 0
    assert np.array_equal(out, q) or np.array_equal(out, -np.asarray(q))


def test_hemisphere_align_cases():
    q = unit([0.2, 0.4, -0.1, 0.3])
    np.testing.assert_array_equal(hemisphere_align(q, q), q)
    np.testing.assert_array_equal(hemisphere_align(-q, q), q)


class TestSlerp:
    def test_same_endpoints(self):
        q = unit([0.2, 0.4, -0.1, 0.3])
        np.testing.assert_array_equal(slerp(q, q, 0.5), q)

    def test_midpoint_about_z(self):
        a = IDENTITY
        b = quat_from_axis_angle([0, 0, 1], np.pi / 2)
        mid = slerp(a, b, 0.5)
        np.testing.assert_allclose(mid, [np.cos(np.pi / 8), 0, 0, np.sin(np.pi / 8)], atol=1e-15)

    def test_endpoints_exact(self, rng):
        a, b = random_unit_quats(rng, 2)
        np.testing.assert_array_equal(slerp(a, b, 0.0), a)
        np.testing.assert_array_equal(slerp(a, b, 1.0), hemisphere_align(b, a))

    def test_constant_angular_speed(self, rng):
        a, b = random_unit_quats(rng, 2)
        total = quat_angle(a, b)
        ts = np.linspace(0, 1, 21)
        angles = quat_angle(a, slerp(a, b, ts))
        np.testing.assert_allclose(angles, ts * total, atol=1e-7)

    def test_degenerate_returns_first(self):
        a = IDENTITY
        b = quat_from_axis_angle([1, 0, 0], 1e-10)
        np.testing.assert_array_equal(slerp(a, b, 0.3), a)
        np.testing.assert_array_equal(slerp(a, -a, 0.3), a)


class TestFoq:
    def test_constant_sequence_is_identity(self):
        q = unit([0.3, 0.1, 0.7, -0.2])
        foq = foq_encode(np.tile(q, (5, 1)))
        np.testing.assert_allclose(hemisphere_align(foq.quats, IDENTITY), np.tile(IDENTITY, (5, 1)), atol=1e-15)

    def test_empty_raises(self):
        with pytest.raises(ValueError, match="empty motion"):
            foq_encode(np.zeros((0, 4)))

    def test_round_trip(self, rng):
        seq = random_unit_quats(rng, 30)
        foq = foq_encode(seq)
        np.testing.assert_array_equal(foq.quats[0], IDENTITY)
        for k in (0, 7, 29):
            out = foq_decode(foq, seq[k], k)
            np.testing.assert_allclose(hemisphere_align(out, seq), seq, atol=1e-9)
            np.testing.assert_allclose(foq_encode(out).quats, foq.quats, atol=1e-9)

    def test_decode_identity_track(self):
        q = unit([0.5, 0.5, -0.5, 0.1])
        out = foq_decode(foq_encode(np.tile(IDENTITY, (4, 1))), q, 2)
        np.testing.assert_allclose(out, np.tile(q, (4, 1)), atol=1e-15)

    def test_decode_out_of_range(self):
        with pytest.raises(IndexError):
            foq_decode(foq_encode(np.tile(IDENTITY, (3, 1))), IDENTITY, 3)

    def test_right_factor_cancels(self, rng):
        seq = random_unit_quats(rng, 16)
        c = random_unit_quats(rng, 1)[0]
        a = foq_encode(seq).quats
        b = foq_encode(quat_mul(seq, c)).quats
        np.testing.assert_allclose(hemisphere_align(b, a), a, atol=1e-9)

    def test_multi_bone_tracks(self, rng):
        seq = random_unit_quats(rng, 24).reshape(6, 4, 4)
        foq = foq_encode(seq)
        for n in range(4):
            np.testing.assert_allclose(foq.quats[:, n], foq_encode(seq[:, n]).quats, atol=1e-15)


class TestRoll:
    def test_beta_zero_is_identity(self):
        np.testing.assert_array_equal(roll_quat(RollQuat(np.array([0.0, 1, 0]), 2.0, 0.0)), IDENTITY)

    def test_quarter_turn(self):
        q = roll_quat(RollQuat(np.array([0.0, 0, 1]), 1.0, 1.0))
        np.testing.assert_allclose(q, quat_from_axis_angle([0, 0, 1], np.pi / 2), atol=1e-15)
        np.testing.assert_allclose(quat_rotate([1.0, 0, 0], q), rodrigues([0, 0, 1], np.pi / 2) @ [1, 0, 0], atol=1e-15)

    def test_axis_is_fixed(self, rng):
        for _ in range(100):
            axis = rng.normal(size=3)
            q = roll_quat(RollQuat(axis, *rng.normal(size=2)))
            np.testing.assert_allclose(quat_rotate(axis, q), axis, atol=1e-9)

    def test_errors(self):
        with pytest.raises(ValueError):
            roll_quat(RollQuat(np.zeros(3), 1.0, 1.0))
        with pytest.raises(ValueError):
            roll_quat(RollQuat(np.ones(3), 0.0, 0.0))


class TestAlignMaxReal:
    def test_parallel_gives_negative_identity(self):
        np.testing.assert_allclose(align_max_real_raw([0.0, 2, 0], [0.0, 0.5, 0]), [-1, 0, 0, 0], atol=1e-15)
        np.testing.assert_allclose(align_max_real([0.0, 2, 0], [0.0, 0.5, 0]), [-1, 0, 0, 0], atol=1e-15)

    def test_quarter_turn_hand_value(self):
        raw = align_max_real_raw([0.0, 1, 0], [1.0, 0, 0])
        np.testing.assert_allclose(raw, [-0.5, 0, 0, -0.5], atol=1e-15)
        np.testing.assert_allclose(np.linalg.norm(raw), np.sqrt(2) / 2)
        q = align_max_real([0.0, 1, 0], [1.0, 0, 0])
        np.testing.assert_allclose(scipy_rot(q).apply([1.0, 0, 0])[0], [0, 1, 0], atol=1e-15)

    def test_residual(self, rng):
        eta = rng.normal(size=(10_000, 3))
        omega = rng.normal(size=(10_000, 3))
        q = align_max_real(omega, eta)
        eu = eta / np.linalg.norm(eta, axis=-1, keepdims=True)
        ou = omega / np.linalg.norm(omega, axis=-1, keepdims=True)
        np.testing.assert_allclose(quat_rotate(eu, q), ou, atol=1e-9)

    def test_max_real_over_rolls(self, rng):
        for _ in range(20):
            eta, omega = rng.normal(size=(2, 3))
            q = align_max_real(omega, eta)
            phis = np.linspace(0, 2 * np.pi, 360, endpoint=False)
            alts = quat_mul(q, quat_from_axis_angle(eta, phis))
            assert np.all(np.abs(alts[:, 0]) <= abs(q[0]) + 1e-9)

    def test_antipodal(self):
        with pytest.raises(ValueError, match="antipodal IK target"):
            align_max_real([0.0, -1, 0], [0.0, 2, 0])


class TestEuler:
    @pytest.mark.parametrize("order", ["XYZ", "XZY", "YXZ", "YZX", "ZXY", "ZYX"])
    def test_zero_is_identity(self, order):
        np.testing.assert_array_equal(euler_to_quat([0.0, 0, 0], order), IDENTITY)

    def test_single_z(self):
        np.testing.assert_allclose(euler_to_quat([90.0, 0, 0], "ZXY"), [np.sqrt(2) / 2, 0, 0, np.sqrt(2) / 2])

    @pytest.mark.parametrize("order", ["XYZ", "XZY", "YXZ", "YZX", "ZXY", "ZYX"])
    def test_matches_intrinsic_oracle(self, order, rng):
        angles = rng.uniform(-180, 180, size=(50, 3))
        q = euler_to_quat(angles, order)
        expected = Rotation.from_euler(order.upper(), angles, degrees=True)  # upper-case = intrinsic
        np.testing.assert_allclose(scipy_rot(q).as_matrix(), expected.as_matrix(), atol=1e-12)

    def test_bad_order(self):
        with pytest.raises(ValueError):
            euler_to_quat([0.0, 0, 0], "XXY")
