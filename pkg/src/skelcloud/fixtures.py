"""Synthetic humanoid skeletons and procedural motions for tests and demos.

Coordinates are y-up, character facing +z, left side on +x, meters. Rest
pose is a T-pose with identity global rotations.
"""

from __future__ import annotations

import numpy as np

from .rotation import IDENTITY, quat_from_axis_angle, quat_mul
from .skeleton import MotionSequence, Skeleton, make_skeleton

X = np.array([1.0, 0.0, 0.0])
Y = np.array([0.0, 1.0, 0.0])
Z = np.array([0.0, 0.0, 1.0])


def _arm(side: str, parent: str, sign: float, tag: str) -> list:
    g = f"{side.lower()}_arm"
    return [
        (f"{side}Shoulder", parent, (sign * 0.03, 0.12, 0.0), (sign * 0.15, 0.0, 0.0), g),
        (f"{side}Arm", f"{side}Shoulder", (sign * 0.15, 0.0, 0.0), (sign * 0.28, 0.0, 0.0), g),
        (f"{side}ForeArm", f"{side}Arm", (sign * 0.28, 0.0, 0.0), (sign * 0.25, 0.0, 0.0), g),
        (f"{side}Hand", f"{side}ForeArm", (sign * 0.25, 0.0, 0.0), (sign * 0.08, 0.0, 0.0), g, tag),
    ]


def _leg(side: str, parent: str, head, thigh: float, tag: str, toes: bool) -> list:
    g = f"{side.lower()}_leg"
    rows = [
        (f"{side}UpLeg", parent, head, (0.0, -thigh, 0.0), g),
        (f"{side}Leg", f"{side}UpLeg", (0.0, -thigh, 0.0), (0.0, -0.42, 0.0), g),
        (f"{side}Foot", f"{side}Leg", (0.0, -0.42, 0.0), (0.0, -0.05, 0.12), g, tag),
    ]
    if toes:
        rows.append((f"{side}Toe", f"{side}Foot", (0.0, -0.05, 0.12), (0.0, 0.0, 0.06), g))
    return rows


def humanoid(toes: bool = True, name: str | None = None) -> Skeleton:
    """Six spinal bones (hips to head); four bones per limb with ``toes``.

    ``toes=True`` gives 22 bones; ``toes=False`` drops the toe bones for a
    20-bone humanoid.
    """
    rows = [
        ("Hips", None, (0, 0, 0), (0.0, 0.10, 0.0), "spine"),
        ("Spine", "Hips", (0.0, 0.10, 0.0), (0.0, 0.12, 0.0), "spine"),
        ("Spine1", "Spine", (0.0, 0.12, 0.0), (0.0, 0.12, 0.0), "spine"),
        ("Spine2", "Spine1", (0.0, 0.12, 0.0), (0.0, 0.14, 0.0), "spine"),
        ("Neck", "Spine2", (0.0, 0.14, 0.0), (0.0, 0.10, 0.0), "spine"),
        ("Head", "Neck", (0.0, 0.10, 0.0), (0.0, 0.18, 0.0), "spine", "head"),
    ]
    rows += _arm("Left", "Spine2", 1.0, "hand_l") + _arm("Right", "Spine2", -1.0, "hand_r")
    rows += _leg("Left", "Hips", (0.09, 0.0, 0.0), 0.42, "foot_l", toes)
    rows += _leg("Right", "Hips", (-0.09, 0.0, 0.0), 0.42, "foot_r", toes)
    return make_skeleton(rows, name or ("humanoid22" if toes else "humanoid20"))


def humanoid_split_hips(name: str = "split_hips") -> Skeleton:
    """Five spinal bones above a zero-length root, with separate hip bones.

    The pelvis is a lower-back bone plus two symmetric hip bones; the root
    itself has no length and is never sampled.
    """
    rows = [
        ("Hips", None, (0, 0, 0), (0.0, 0.0, 0.0), "spine"),
        ("LowerBack", "Hips", (0.0, 0.0, 0.0), (0.0, 0.16, 0.0), "spine"),
        ("Spine", "LowerBack", (0.0, 0.16, 0.0), (0.0, 0.16, 0.0), "spine"),
        ("Spine1", "Spine", (0.0, 0.16, 0.0), (0.0, 0.16, 0.0), "spine"),
        ("Neck", "Spine1", (0.0, 0.16, 0.0), (0.0, 0.10, 0.0), "spine"),
        ("Head", "Neck", (0.0, 0.10, 0.0), (0.0, 0.18, 0.0), "spine", "head"),
    ]
    rows += _arm("Left", "Spine1", 1.0, "hand_l") + _arm("Right", "Spine1", -1.0, "hand_r")
    rows += [("LeftHip", "Hips", (0, 0, 0), (0.09, -0.02, 0.0), "left_leg")]
    rows += _leg("Left", "LeftHip", (0.09, -0.02, 0.0), 0.40, "foot_l", True)
    rows += [("RightHip", "Hips", (0, 0, 0), (-0.09, -0.02, 0.0), "right_leg")]
    rows += _leg("Right", "RightHip", (-0.09, -0.02, 0.0), 0.40, "foot_r", True)
    return make_skeleton(rows, name)


def chain(n_bones: int = 3, length: float = 0.3, name: str = "chain") -> Skeleton:
    """A straight chain along +y, alternating body groups so KNN has work to do."""
    rows = []
    for i in range(n_bones):
        parent = None if i == 0 else f"b{i - 1}"
        head = (0, 0, 0) if i == 0 else (0.0, length, 0.0)
        rows.append((f"b{i}", parent, head, (0.0, length, 0.0), "spine"))
    return make_skeleton(rows, name)


def _deg(x):
    return np.radians(x)


def _local_rotation(name: str, phase: np.ndarray, turn: np.ndarray) -> np.ndarray:
    """Local rotation track (T, 4) for a bone, keyed by its name."""
    s1 = np.sin(phase)
    s2 = np.sin(2 * phase)
    c1 = np.cos(phase)
    parts: list[tuple[np.ndarray, np.ndarray]] = []
    side = 1.0 if name.startswith("Left") else -1.0
    base = name.removeprefix("Left").removeprefix("Right")
    if name == "Hips":
        parts = [(Y, turn + _deg(25) * s1), (X, _deg(8) + _deg(4) * s2)]
    elif name in ("LowerBack", "Spine", "Spine1", "Spine2"):
        parts = [(X, _deg(6) + _deg(5) * s2), (Y, -_deg(8) * s1), (Z, _deg(4) * c1)]
    elif name == "Neck":
        parts = [(X, _deg(-6) + _deg(8) * s2)]
    elif name == "Head":
        parts = [(Y, _deg(15) * s1), (X, _deg(-5) * c1)]
    elif base == "Shoulder":
        parts = [(Z, side * _deg(-8)), (Y, side * _deg(6) * s1)]
    elif base == "Arm":
        parts = [(Z, side * _deg(-65) + _deg(6) * s2), (X, side * _deg(35) * s1)]
    elif base == "ForeArm":
        parts = [(Y, side * (_deg(30) + _deg(20) * (1 + s1)))]
    elif base == "Hand":
        parts = [(Z, side * _deg(-15) * c1)]
    elif base == "UpLeg":
        parts = [(X, -side * _deg(35) * s1), (Z, side * _deg(5))]
    elif base == "Leg":
        parts = [(X, _deg(30) * (1 + side * c1))]
    elif base == "Foot":
        parts = [(X, -_deg(12) * s1 * side)]
    elif base == "Toe":
        parts = [(X, -_deg(10) * (1 + s2))]
    q = np.tile(IDENTITY, (phase.shape[0], 1))
    for axis, angle in parts:
        q = quat_mul(q, quat_from_axis_angle(np.broadcast_to(axis, (phase.shape[0], 3)), angle))
    return q


def procedural_motion(
    s: Skeleton,
    frames: int = 60,
    frame_rate: float = 30.0,
    cycle_frames: float = 30.0,
    turn_degrees: float = 90.0,
    speed: float = 1.0,
    cartwheel_degrees: float = 0.0,
) -> MotionSequence:
    """A walk-like cycle with arm swing, knee bend and a steady turn.

    Local rotations are chosen by bone name and composed down the hierarchy
    into global rotations. With ``turn_degrees=0`` and ``speed=0`` the motion
    is exactly periodic with period ``cycle_frames``.
    """
    t = np.arange(frames, dtype=np.float64)
    phase = 2 * np.pi * t / cycle_frames
    turn = _deg(turn_degrees) * t / max(frames - 1, 1)
    wheel = quat_from_axis_angle(Z, _deg(cartwheel_degrees) * t / max(frames - 1, 1))
    glob = np.empty((frames, len(s), 4))
    for n, b in enumerate(s.bones):
        local = _local_rotation(b.name, phase, turn)
        glob[:, n] = quat_mul(wheel, local) if b.parent is None else quat_mul(glob[:, b.parent], local)
    root = np.stack(
        [0.05 * np.sin(phase), 0.95 + 0.03 * np.sin(2 * phase), speed * t / frame_rate],
        axis=-1,
    )
    return MotionSequence(root, glob, frame_rate)
