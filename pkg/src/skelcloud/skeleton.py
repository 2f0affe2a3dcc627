"""Skeleton hierarchy, motion container, forward kinematics and rest pose augmentation."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .rotation import IDENTITY, align_max_real, quat_mul, quat_norm, quat_rotate

END_EFFECTOR_TAGS = ("hand_l", "hand_r", "foot_l", "foot_r", "head")

# bones shorter than this are treated as zero-length and never sampled
MIN_BONE_LENGTH = 1e-9


class BodyGroup(enum.IntEnum):
    SPINE = 0
    LEFT_ARM = 1
    RIGHT_ARM = 2
    LEFT_LEG = 3
    RIGHT_LEG = 4

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, value) -> "BodyGroup":
        if isinstance(value, BodyGroup):
            return value
        try:
            return cls[str(value).upper()]
        except KeyError:
            names = ", ".join(g.label for g in cls)
            raise ValueError(f"unknown body group {value!r} (expected one of: {names})") from None

    def one_hot(self) -> np.ndarray:
        v = np.zeros(len(BodyGroup))
        v[int(self)] = 1.0
        return v


def one_hot_groups(groups) -> np.ndarray:
    return np.eye(len(BodyGroup))[np.asarray(groups, dtype=int)]


@dataclass(frozen=True)
class Bone:
    name: str
    parent: Optional[int]
    head: np.ndarray
    tail: np.ndarray
    group: BodyGroup
    end_effector: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "head", np.asarray(self.head, dtype=np.float64).reshape(3))
        object.__setattr__(self, "tail", np.asarray(self.tail, dtype=np.float64).reshape(3))
        object.__setattr__(self, "group", BodyGroup.parse(self.group))

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.tail))

    def __eq__(self, other):
        if not isinstance(other, Bone):
            return NotImplemented
        return (
            self.name == other.name
            and self.parent == other.parent
            and np.array_equal(self.head, other.head)
            and np.array_equal(self.tail, other.tail)
            and self.group == other.group
            and self.end_effector == other.end_effector
        )


@dataclass(frozen=True, eq=False)
class Skeleton:
    """Bones in topological order (parents before children), offsets in meters."""

    bones: tuple
    name: str = "skeleton"

    def __post_init__(self):
        object.__setattr__(self, "bones", tuple(self.bones))

    def __len__(self) -> int:
        return len(self.bones)

    def __eq__(self, other):
        if not isinstance(other, Skeleton):
            return NotImplemented
        return self.name == other.name and self.bones == other.bones

    @property
    def names(self) -> list[str]:
        return [b.name for b in self.bones]

    @property
    def parents(self) -> np.ndarray:
        return np.array([-1 if b.parent is None else b.parent for b in self.bones], dtype=int)

    @property
    def heads(self) -> np.ndarray:
        return np.stack([b.head for b in self.bones])

    @property
    def tails(self) -> np.ndarray:
        return np.stack([b.tail for b in self.bones])

    @property
    def groups(self) -> np.ndarray:
        return np.array([int(b.group) for b in self.bones], dtype=int)

    @property
    def lengths(self) -> np.ndarray:
        return np.linalg.norm(self.tails, axis=-1)

    @property
    def sampling_mask(self) -> np.ndarray:
        """True for bones long enough to carry sample points."""
        return self.lengths > MIN_BONE_LENGTH

    def index(self, name: str) -> int:
        for i, b in enumerate(self.bones):
            if b.name == name:
                return i
        raise KeyError(name)

    def children(self) -> list[list[int]]:
        kids: list[list[int]] = [[] for _ in self.bones]
        for i, b in enumerate(self.bones):
            if b.parent is not None:
                kids[b.parent].append(i)
        return kids

    def with_tails(self, tails) -> "Skeleton":
        bones = [
            Bone(b.name, b.parent, b.head, t, b.group, b.end_effector)
            for b, t in zip(self.bones, np.asarray(tails, dtype=np.float64))
        ]
        return Skeleton(tuple(bones), self.name)


@dataclass
class ValidationReport:
    errors: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    excluded: list = field(default_factory=list)  # zero-length bone indices

    @property
    def ok(self) -> bool:
        return not self.errors


def validate_skeleton(s: Skeleton) -> ValidationReport:
    report = ValidationReport()
    if len(s) == 0:
        report.errors.append("skeleton has no bones")
        return report
    roots = [i for i, b in enumerate(s.bones) if b.parent is None]
    if roots != [0]:
        report.errors.append(f"expected exactly one root at index 0, found roots at {roots}")
    seen_names = set()
    seen_tags: dict[str, str] = {}
    for i, b in enumerate(s.bones):
        if b.name in seen_names:
            report.errors.append(f"duplicate bone name {b.name!r}")
        seen_names.add(b.name)
        if b.parent is not None:
            if not 0 <= b.parent < len(s):
                report.errors.append(f"bone {b.name!r} has parent index {b.parent} outside the skeleton")
            elif b.parent >= i:
                report.errors.append(
                    f"bone {b.name!r} (index {i}) has parent index {b.parent}; parents must precede children"
                )
        if not isinstance(b.group, BodyGroup):
            report.errors.append(f"bone {b.name!r} has no body group")
        if b.end_effector is not None:
            if b.end_effector not in END_EFFECTOR_TAGS:
                report.errors.append(f"bone {b.name!r} has unknown end-effector tag {b.end_effector!r}")
            elif b.end_effector in seen_tags:
                report.errors.append(
                    f"end-effector tag {b.end_effector!r} used by both {seen_tags[b.end_effector]!r} and {b.name!r}"
                )
            else:
                seen_tags[b.end_effector] = b.name
        if not (np.all(np.isfinite(b.head)) and np.all(np.isfinite(b.tail))):
            report.errors.append(f"bone {b.name!r} has non-finite offsets")
        elif b.length <= MIN_BONE_LENGTH:
            report.warnings.append(f"bone {b.name!r} has zero length and is excluded from sampling")
            report.excluded.append(i)
    if not np.any(s.sampling_mask):
        report.errors.append("no bone has non-zero length")
    return report


@dataclass(eq=False)
class MotionSequence:
    """Root trajectory plus per-bone global rotations.

    ``root_positions`` has shape (T, 3) in meters; ``rotations`` has shape
    (T, N, 4) holding unit (w, x, y, z) world-frame quaternions.
    """

    root_positions: np.ndarray
    rotations: np.ndarray
    frame_rate: float = 30.0

    def __post_init__(self):
        self.root_positions = np.asarray(self.root_positions, dtype=np.float64)
        self.rotations = np.asarray(self.rotations, dtype=np.float64)
        if self.root_positions.ndim != 2 or self.root_positions.shape[1] != 3:
            raise ValueError(f"root_positions must be (T, 3), got {self.root_positions.shape}")
        if self.rotations.ndim != 3 or self.rotations.shape[2] != 4:
            raise ValueError(f"rotations must be (T, N, 4), got {self.rotations.shape}")
        if self.rotations.shape[0] != self.root_positions.shape[0]:
            raise ValueError("root_positions and rotations disagree on frame count")

    @property
    def frame_count(self) -> int:
        return self.root_positions.shape[0]

    @property
    def bone_count(self) -> int:
        return self.rotations.shape[1]

    def __len__(self) -> int:
        return self.frame_count

    def __eq__(self, other):
        if not isinstance(other, MotionSequence):
            return NotImplemented
        return (
            self.frame_rate == other.frame_rate
            and np.array_equal(self.root_positions, other.root_positions)
            and np.array_equal(self.rotations, other.rotations)
        )

    def check(self, s: Skeleton, tol: float = 1e-6) -> None:
        if self.bone_count != len(s):
            raise ValueError(f"motion has {self.bone_count} bones, skeleton {s.name!r} has {len(s)}")
        if not (np.all(np.isfinite(self.rotations)) and np.all(np.isfinite(self.root_positions))):
            raise ValueError("motion contains non-finite values")
        err = np.abs(quat_norm(self.rotations) - 1.0)
        if err.size and err.max() > tol:
            t, n = np.unravel_index(int(np.argmax(err)), err.shape)
            raise ValueError(f"rotation at frame {t}, bone {n} is not unit (|q|-1 = {err[t, n]:.3g})")

    def slice(self, frames) -> "MotionSequence":
        return MotionSequence(self.root_positions[frames], self.rotations[frames], self.frame_rate)


def rest_motion(s: Skeleton, frames: int, root_position=(0.0, 0.0, 0.0), frame_rate: float = 30.0) -> MotionSequence:
    root = np.tile(np.asarray(root_position, dtype=np.float64), (frames, 1))
    rot = np.tile(IDENTITY, (frames, len(s), 1))
    return MotionSequence(root, rot, frame_rate)


def forward_heads(s: Skeleton, root_positions, rotations) -> np.ndarray:
    """Global head positions for every frame, shape (T, N, 3).

    ``rotations`` may be raw (non-unit); they are normalized by the rotation.
    """
    root_positions = np.asarray(root_positions, dtype=np.float64)
    rotations = np.asarray(rotations, dtype=np.float64)
    heads = np.empty(rotations.shape[:-1] + (3,))
    heads[:, 0] = root_positions
    for n, b in enumerate(s.bones):
        if b.parent is None:
            continue
        heads[:, n] = heads[:, b.parent] + quat_rotate(b.head, rotations[:, b.parent])
    return heads


def forward_tails(s: Skeleton, root_positions, rotations, heads=None) -> np.ndarray:
    if heads is None:
        heads = forward_heads(s, root_positions, rotations)
    return heads + quat_rotate(s.tails[None], rotations)


def _frame(m: MotionSequence, t: int) -> None:
    if not 0 <= t < m.frame_count:
        raise IndexError(f"frame {t} out of range for {m.frame_count} frames")


def fk_heads(s: Skeleton, m: MotionSequence, t: int) -> np.ndarray:
    _frame(m, t)
    return forward_heads(s, m.root_positions[t : t + 1], m.rotations[t : t + 1])[0]


def fk_tails(s: Skeleton, m: MotionSequence, t: int) -> np.ndarray:
    _frame(m, t)
    return forward_tails(s, m.root_positions[t : t + 1], m.rotations[t : t + 1])[0]


def rpa_augment(
    s: Skeleton, m: MotionSequence, offset_scale: float = 0.05, seed: int = 0
) -> tuple[Skeleton, MotionSequence]:
    """Rest pose augmentation.

    Each sampled bone's tail gets an isotropic normal offset (std
    ``offset_scale``); the bone's rotations are then right-multiplied by the
    max-real-part quaternion that turns the new tail back onto the old tail
    direction, so the posed bone keeps pointing where it did.
    """
    if offset_scale < 0:
        raise ValueError("offset_scale must be non-negative")
    if offset_scale == 0:
        return s, m
    rng = np.random.default_rng(seed)
    tails = s.tails
    mask = s.sampling_mask
    noise = rng.normal(0.0, offset_scale, size=tails.shape)
    new_tails = np.where(mask[:, None], tails + noise, tails)
    delta = np.tile(IDENTITY, (len(s), 1))
    for n in np.flatnonzero(mask):
        delta[n] = align_max_real(tails[n], new_tails[n])
    rotations = quat_mul(m.rotations, delta[None])
    return s.with_tails(new_tails), MotionSequence(m.root_positions.copy(), rotations, m.frame_rate)


@dataclass(frozen=True)
class EndEffectorMap:
    pairs: tuple  # ((source index, target index), ...)
    tags: tuple = ()

    def __len__(self) -> int:
        return len(self.pairs)

    def flipped(self) -> "EndEffectorMap":
        return EndEffectorMap(tuple((b, a) for a, b in self.pairs), self.tags)

    @property
    def source(self) -> np.ndarray:
        return np.array([a for a, _ in self.pairs], dtype=int)

    @property
    def target(self) -> np.ndarray:
        return np.array([b for _, b in self.pairs], dtype=int)


def match_end_effectors(a: Skeleton, b: Skeleton) -> EndEffectorMap:
    tags_b = {bone.end_effector: i for i, bone in enumerate(b.bones) if bone.end_effector}
    pairs, tags = [], []
    for tag in END_EFFECTOR_TAGS:
        ia = next((i for i, bone in enumerate(a.bones) if bone.end_effector == tag), None)
        if ia is not None and tag in tags_b:
            pairs.append((ia, tags_b[tag]))
            tags.append(tag)
    return EndEffectorMap(tuple(pairs), tuple(tags))


def make_skeleton(rows: Sequence, name: str = "skeleton") -> Skeleton:
    """Build a skeleton from ``(name, parent_name, head, tail, group[, tag])`` rows."""
    index: dict[str, int] = {}
    bones = []
    for i, row in enumerate(rows):
        bname, parent, head, tail, group = row[:5]
        tag = row[5] if len(row) > 5 else None
        bones.append(Bone(bname, None if parent is None else index[parent], head, tail, group, tag))
        index[bname] = i
    return Skeleton(tuple(bones), name)
