"""Quaternion algebra on numpy arrays.

Quaternions are arrays whose last axis holds ``(w, x, y, z)``. Every function
broadcasts over leading axes and works in float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])

EULER_ORDERS = ("XYZ", "XZY", "YXZ", "YZX", "ZXY", "ZYX")

_AXES = {"X": np.array([1.0, 0.0, 0.0]), "Y": np.array([0.0, 1.0, 0.0]), "Z": np.array([0.0, 0.0, 1.0])}


def as_quat(q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    if q.shape[-1] != 4:
        raise ValueError(f"expected quaternion(s) with last axis 4, got shape {q.shape}")
    return q


def quat_mul(a, b) -> np.ndarray:
    """Hamilton product ``a * b`` (apply ``b`` first, then ``a``)."""
    a = as_quat(a)
    b = as_quat(b)
    aw, ax, ay, az = np.moveaxis(a, -1, 0)
    bw, bx, by, bz = np.moveaxis(b, -1, 0)
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def quat_conjugate(q) -> np.ndarray:
    q = as_quat(q)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def quat_norm(q) -> np.ndarray:
    return np.linalg.norm(as_quat(q), axis=-1)


def quat_normalize(q) -> np.ndarray:
    q = as_quat(q)
    n = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(n == 0.0):
        raise ValueError("cannot normalize a zero quaternion")
    return q / n


def quat_rotate(v, q) -> np.ndarray:
    """Rotate 3-vector(s) ``v`` by quaternion(s) ``q``, i.e. ``q v q^-1``.

    ``q`` is normalized internally, so raw (non-unit) quaternions are accepted.
    """
    v = np.asarray(v, dtype=np.float64)
    q = quat_normalize(q)
    w = q[..., :1]
    u = q[..., 1:]
    uv = np.cross(u, v)
    return v + 2.0 * (w * uv + np.cross(u, uv))


def quat_from_axis_angle(axis, angle) -> np.ndarray:
    """Quaternion for a rotation of ``angle`` radians about ``axis``."""
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis, axis=-1, keepdims=True)
    angle = np.asarray(angle, dtype=np.float64)
    shape = np.broadcast_shapes(axis.shape[:-1], angle.shape)
    axis = np.broadcast_to(axis, shape + (3,))
    half = 0.5 * np.broadcast_to(angle, shape)[..., None]
    return np.concatenate([np.cos(half), np.sin(half) * axis], axis=-1)


def quat_angle(a, b) -> np.ndarray:
    """Rotation angle (radians) between two rotations, sign-insensitive."""
    d = np.abs(np.sum(quat_normalize(a) * quat_normalize(b), axis=-1))
    return 2.0 * np.arccos(np.clip(d, -1.0, 1.0))


def quat_to_matrix(q) -> np.ndarray:
    q = quat_normalize(q)
    w, x, y, z = np.moveaxis(q, -1, 0)
    m = np.stack(
        [
            1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
            2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
            2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y),
        ],
        axis=-1,
    )
    return m.reshape(q.shape[:-1] + (3, 3))


def hemisphere_align(q, reference) -> np.ndarray:
    """Return ``q`` or ``-q``, whichever has a non-negative dot with ``reference``."""
    q = as_quat(q)
    d = np.sum(q * as_quat(reference), axis=-1, keepdims=True)
    return np.where(d < 0.0, -q, q)


def align_sequence(seq) -> np.ndarray:
    """Flip signs along axis 0 so consecutive quaternions have non-negative dot."""
    out = np.array(as_quat(seq), dtype=np.float64, copy=True)
    for t in range(1, out.shape[0]):
        out[t] = hemisphere_align(out[t], out[t - 1])
    return out


def slerp(a, b, t) -> np.ndarray:
    """Geodesic interpolation between unit quaternions ``a`` and ``b``.

    ``b`` is hemisphere-aligned to ``a`` first. When the two rotations are
    within 1e-8 rad of each other the first endpoint is returned.
    """
    a = as_quat(a)
    b = hemisphere_align(b, a)
    t = np.asarray(t, dtype=np.float64)[..., None]
    cos_half = np.clip(np.sum(a * b, axis=-1, keepdims=True), -1.0, 1.0)
    half = np.arccos(cos_half)
    sin_half = np.sin(half)
    degenerate = half < 0.5e-8
    safe = np.where(degenerate, 1.0, sin_half)
    wa = np.sin((1.0 - t) * half) / safe
    wb = np.sin(t * half) / safe
    out = wa * a + wb * b
    out = np.where(degenerate, np.broadcast_to(a, out.shape), out)
    # exact endpoints
    out = np.where(t == 0.0, np.broadcast_to(a, out.shape), out)
    out = np.where(t == 1.0, np.broadcast_to(b, out.shape), out)
    return out


@dataclass(frozen=True)
class FoqSequence:
    """A rotation track expressed relative to its first frame."""

    quats: np.ndarray  # (T, ..., 4)
    reference_frame_index: int = 0

    def __len__(self) -> int:
        return self.quats.shape[0]


def foq_encode(seq) -> FoqSequence:
    """First-frame offset transform: ``q_t * conj(q_0)`` for every frame.

    Works on any array of shape ``(T, ..., 4)``; the leading axis is time.
    """
    seq = as_quat(seq)
    if seq.ndim < 2 or seq.shape[0] == 0:
        raise ValueError("empty motion")
    rel = quat_mul(seq, quat_conjugate(seq[0]))
    rel[0] = np.broadcast_to(IDENTITY, rel[0].shape)
    return FoqSequence(rel, 0)


def foq_decode(foq: FoqSequence, q_ref, t_ref: int = 0) -> np.ndarray:
    """Recover absolute rotations from an FOQ track given the rotation at ``t_ref``."""
    quats = as_quat(foq.quats)
    n = quats.shape[0]
    if not 0 <= t_ref < n:
        raise IndexError(f"reference frame {t_ref} out of range for {n} frames")
    q0 = quat_mul(quat_conjugate(quats[t_ref]), as_quat(q_ref))
    return quat_mul(quats, q0)


@dataclass(frozen=True)
class RollQuat:
    """Rotation about a bone's own tail direction: ``alpha + beta * (x i + y j + z k)``."""

    axis: np.ndarray
    alpha: float
    beta: float


def roll_quat(spec: RollQuat) -> np.ndarray:
    axis = np.asarray(spec.axis, dtype=np.float64)
    n = np.linalg.norm(axis)
    if n == 0.0:
        raise ValueError("roll axis must be non-zero")
    if spec.alpha == 0.0 and spec.beta == 0.0:
        raise ValueError("alpha and beta cannot both be zero")
    q = np.concatenate([[spec.alpha], spec.beta * axis / n])
    return q / np.linalg.norm(q)


def align_max_real_raw(p_ik, tail) -> np.ndarray:
    """IK target alignment quaternion before normalization.

    ``eta`` is the unit tail direction and ``omega`` the unit target direction;
    the result is ``((0, eta + omega) / 2) * (0, eta)``.
    """
    p_ik = np.asarray(p_ik, dtype=np.float64)
    tail = np.asarray(tail, dtype=np.float64)
    tn = np.linalg.norm(tail, axis=-1, keepdims=True)
    pn = np.linalg.norm(p_ik, axis=-1, keepdims=True)
    if np.any(tn == 0.0) or np.any(pn == 0.0):
        raise ValueError("IK vectors must be non-zero")
    eta = tail / tn
    omega = p_ik / pn
    zero = np.zeros(eta.shape[:-1] + (1,))
    q_min = np.concatenate([zero, eta + omega], axis=-1) / 2.0
    return quat_mul(q_min, np.concatenate([zero, eta], axis=-1))


def align_max_real(p_ik, tail, *, antipodal_tol: float = 1e-12) -> np.ndarray:
    """Unit quaternion rotating the ``tail`` direction onto ``p_ik`` with maximal |w|.

    Raises ``ValueError("antipodal IK target")`` when the two directions are
    opposite, where the minimal rotation is not unique.
    """
    q = align_max_real_raw(p_ik, tail)
    n = np.linalg.norm(q, axis=-1, keepdims=True)
    # |q_raw| = sqrt(2 (1 + eta.omega)) / 2, which vanishes only when antipodal
    if np.any(n * n <= antipodal_tol):
        raise ValueError("antipodal IK target")
    return q / n


def euler_to_quat(angles_deg, order: str) -> np.ndarray:
    """Intrinsic Euler rotation; ``angles_deg[..., i]`` turns about axis ``order[i]``.

    The result is ``q(order[0]) * q(order[1]) * q(order[2])``, the usual BVH
    channel convention.
    """
    order = order.upper()
    if order not in EULER_ORDERS:
        raise ValueError(f"unsupported rotation order {order!r}")
    angles = np.radians(np.asarray(angles_deg, dtype=np.float64))
    q = None
    for i, axis in enumerate(order):
        qi = quat_from_axis_angle(_AXES[axis], angles[..., i])
        q = qi if q is None else quat_mul(q, qi)
    return q
