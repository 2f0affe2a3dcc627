"""Temporally consistent point clouds sampled around skeleton bones."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .rotation import quat_rotate
from .skeleton import MotionSequence, Skeleton, forward_heads, one_hot_groups

DEFAULT_POINTS = 256
DEFAULT_SIGMA = 0.05


def make_rng(seed) -> np.random.Generator:
    """Counter-based generator (Philox) so streams are platform independent."""
    return np.random.Generator(np.random.Philox(seed))


class SeedPolicy(str, enum.Enum):
    FIXED = "fixed"  # one cloud per sequence
    PER_ITERATION = "per_iteration"  # fresh cloud every iteration


def policy_seed(seed: int, policy: SeedPolicy = SeedPolicy.FIXED, iteration: int = 0) -> int:
    if SeedPolicy(policy) is SeedPolicy.FIXED:
        return int(seed)
    return int(np.random.SeedSequence([int(seed), int(iteration)]).generate_state(1, np.uint64)[0])


def allocate_points(s: Skeleton, n: int) -> np.ndarray:
    """Split ``n`` points across bones proportionally to bone length.

    Largest-remainder rounding with at least one point per sampled bone;
    zero-length bones get zero. Ties go to the lower bone index.
    """
    lengths = np.where(s.sampling_mask, s.lengths, 0.0)
    eligible = np.flatnonzero(lengths > 0)
    if eligible.size == 0:
        raise ValueError("skeleton has no bones with non-zero length")
    if n < eligible.size:
        raise ValueError(f"{n} points cannot cover {eligible.size} sampled bones")
    quota = n * lengths[eligible] / lengths[eligible].sum()
    counts = np.maximum(np.floor(quota).astype(int), 1)
    diff = n - int(counts.sum())
    rem = quota - counts
    if diff > 0:
        order = np.argsort(-rem, kind="stable")
        counts[order[:diff]] += 1
    while diff < 0:
        # take back from the most over-allocated bone that can spare a point
        cand = np.flatnonzero(counts > 1)
        j = cand[np.argsort(rem[cand], kind="stable")[0]]
        counts[j] -= 1
        rem[j] += 1
        diff += 1
    out = np.zeros(len(s), dtype=int)
    out[eligible] = counts
    return out


@dataclass(frozen=True, eq=False)
class CloudSpec:
    """Frozen per-point bone attachments; realize against any motion of the skeleton."""

    bones: np.ndarray  # (P,) bone index per point
    local_offsets: np.ndarray  # (P, 3) bone-local offset from the bone head
    groups: np.ndarray  # (P,) BodyGroup value per point
    skeleton_id: str
    sigma: float
    seed: int

    @property
    def point_count(self) -> int:
        return int(self.bones.shape[0])

    @property
    def one_hot(self) -> np.ndarray:
        return one_hot_groups(self.groups)

    def __eq__(self, other):
        if not isinstance(other, CloudSpec):
            return NotImplemented
        return (
            self.skeleton_id == other.skeleton_id
            and self.sigma == other.sigma
            and self.seed == other.seed
            and np.array_equal(self.bones, other.bones)
            and np.array_equal(self.local_offsets, other.local_offsets)
            and np.array_equal(self.groups, other.groups)
        )


def sample_cloud_spec(
    s: Skeleton, n: int = DEFAULT_POINTS, sigma: float = DEFAULT_SIGMA, seed: int = 0
) -> CloudSpec:
    """Draw point offsets ``N(alpha * T_n, sigma)`` with ``alpha ~ U[0, 1]``.

    Stream order is bone-major: for each sampled bone, its ``alpha`` draws,
    then its normal draws point-major, axis-minor.
    """
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    counts = allocate_points(s, n)
    rng = make_rng(seed)
    tails = s.tails
    bones, offsets = [], []
    for b, c in enumerate(counts):
        if c == 0:
            continue
        alpha = rng.random(c)
        noise = rng.standard_normal((c, 3))
        bones.append(np.full(c, b))
        offsets.append(alpha[:, None] * tails[b] + sigma * noise)
    bones = np.concatenate(bones)
    return CloudSpec(
        bones=bones,
        local_offsets=np.concatenate(offsets),
        groups=s.groups[bones],
        skeleton_id=s.name,
        sigma=float(sigma),
        seed=int(seed),
    )


@dataclass(frozen=True, eq=False)
class CloudTrajectory:
    positions: np.ndarray  # (T, P, 3)
    groups: np.ndarray  # (P,)

    @property
    def frame_count(self) -> int:
        return self.positions.shape[0]

    @property
    def point_count(self) -> int:
        return self.positions.shape[1]

    @property
    def one_hot(self) -> np.ndarray:
        return one_hot_groups(self.groups)


def realize_positions(spec: CloudSpec, s: Skeleton, root_positions, rotations, heads=None) -> np.ndarray:
    if heads is None:
        heads = forward_heads(s, root_positions, rotations)
    q = np.asarray(rotations)[:, spec.bones]
    return heads[:, spec.bones] + quat_rotate(spec.local_offsets[None], q)


def realize_trajectory(spec: CloudSpec, s: Skeleton, m: MotionSequence) -> CloudTrajectory:
    if m.bone_count != len(s):
        raise ValueError(f"motion has {m.bone_count} bones but skeleton {s.name!r} has {len(s)}")
    if spec.point_count and spec.bones.max() >= len(s):
        raise ValueError("cloud spec references bones outside the skeleton")
    return CloudTrajectory(realize_positions(spec, s, m.root_positions, m.rotations), spec.groups.copy())
