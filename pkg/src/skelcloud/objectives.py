"""Temporal KNN loss, end-effector loss, unit-norm penalty and their gradients."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .cloud import CloudSpec, CloudTrajectory, realize_positions
from .skeleton import BodyGroup, EndEffectorMap, MotionSequence, Skeleton, forward_heads

DEFAULT_K = 8


@dataclass(frozen=True)
class KnnConfig:
    k: int = DEFAULT_K
    normalize: bool = True

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be at least 1")


@dataclass(frozen=True)
class ObjectiveWeights:
    knn: float = 1.0
    end: float = 1.0
    q: float = 0.01


@dataclass(frozen=True, eq=False)
class NeighborAssignment:
    """For each source point, its k nearest same-group target points."""

    indices: np.ndarray  # (P_a, k) target point indices
    distances: np.ndarray  # (P_a, k) summed-over-time distances, ascending

    @property
    def k(self) -> int:
        return self.indices.shape[1]

    def __eq__(self, other):
        if not isinstance(other, NeighborAssignment):
            return NotImplemented
        return np.array_equal(self.indices, other.indices) and np.array_equal(self.distances, other.distances)


@dataclass(frozen=True)
class KnnLoss:
    raw: float
    normalized: float
    assignment: NeighborAssignment = field(repr=False)


@dataclass(frozen=True)
class ObjectiveBreakdown:
    l_knn_raw: float
    l_knn: float  # mean-normalized
    l_end: float
    l_q: float
    total: float
    weights: ObjectiveWeights

    @property
    def l_knn_x100(self) -> float:
        return 100.0 * self.l_knn

    def as_dict(self) -> dict:
        return {
            "l_knn_raw": self.l_knn_raw,
            "l_knn": self.l_knn,
            "l_knn_x100": self.l_knn_x100,
            "l_end": self.l_end,
            "l_q": self.l_q,
            "total": self.total,
            "weights": {"knn": self.weights.knn, "end": self.weights.end, "q": self.weights.q},
        }


def sequence_distance(a, b, group_a, group_b) -> float:
    """Sum over frames of the Euclidean distance between two point trajectories.

    Returns ``math.inf`` when the body groups differ.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape[0] != b.shape[0]:
        raise ValueError(f"frame count mismatch: {a.shape[0]} vs {b.shape[0]}")
    if int(group_a) != int(group_b):
        return math.inf
    d = a - b
    return float(np.sum(np.sqrt(np.sum(d * d, axis=-1))))


def distance_matrix(a, b) -> np.ndarray:
    """Pairwise sequence distances, (T, Pa, 3) x (T, Pb, 3) -> (Pa, Pb).

    Accumulated frame by frame in ascending order so the result does not
    depend on chunking.
    """
    out = np.zeros((a.shape[1], b.shape[1]))
    for t in range(a.shape[0]):
        d = a[t][:, None, :] - b[t][None, :, :]
        out += np.sqrt(np.sum(d * d, axis=-1))
    return out


def _check_pair(x_a: CloudTrajectory, x_b: CloudTrajectory) -> None:
    if x_a.frame_count != x_b.frame_count:
        raise ValueError(f"frame count mismatch: {x_a.frame_count} vs {x_b.frame_count}")


def knn_assign(x_a: CloudTrajectory, x_b: CloudTrajectory, cfg: KnnConfig = KnnConfig()) -> NeighborAssignment:
    """Exact k-nearest same-group neighbors in ``x_b`` for every point of ``x_a``.

    Ties break toward the lower target index.
    """
    _check_pair(x_a, x_b)
    k = cfg.k
    pa = x_a.point_count
    indices = np.empty((pa, k), dtype=int)
    distances = np.empty((pa, k))
    for g in np.unique(x_a.groups):
        src = np.flatnonzero(x_a.groups == g)
        tgt = np.flatnonzero(x_b.groups == g)
        if tgt.size < k:
            raise ValueError(
                f"group {BodyGroup(int(g)).label!r} has {tgt.size} target points, need at least k={k}"
            )
        d = distance_matrix(x_a.positions[:, src], x_b.positions[:, tgt])
        order = np.argsort(d, axis=1, kind="stable")[:, :k]
        indices[src] = tgt[order]
        distances[src] = np.take_along_axis(d, order, axis=1)
    return NeighborAssignment(indices, distances)


def assignment_distances(x_a: CloudTrajectory, x_b: CloudTrajectory, assignment: NeighborAssignment) -> np.ndarray:
    """Sequence distances for a (possibly stale) assignment at the current positions."""
    pa = x_a.positions[:, :, None, :]
    pb = x_b.positions[:, assignment.indices]
    d = pa - pb
    return np.sum(np.sqrt(np.sum(d * d, axis=-1)), axis=0)


def knn_loss(
    x_a: CloudTrajectory,
    x_b: CloudTrajectory,
    cfg: KnnConfig = KnnConfig(),
    assignment: NeighborAssignment | None = None,
) -> KnnLoss:
    """Sum of sequence distances from each source point to its k neighbors.

    ``normalized`` divides by ``|X_A| * k * |M|``. With an explicit
    ``assignment`` the neighbor sets are held fixed.
    """
    if assignment is None:
        assignment = knn_assign(x_a, x_b, cfg)
        dist = assignment.distances
    else:
        _check_pair(x_a, x_b)
        dist = assignment_distances(x_a, x_b, assignment)
    raw = float(np.sum(dist))
    denom = x_a.point_count * assignment.k * x_a.frame_count
    return KnnLoss(raw, raw / denom, assignment)


def end_effector_distance(pos_a, pos_b) -> float:
    """Frame-averaged distance per pair, summed over pairs; inputs (T, E, 3)."""
    d = np.asarray(pos_a) - np.asarray(pos_b)
    return float(np.sum(np.mean(np.sqrt(np.sum(d * d, axis=-1)), axis=0)))


def end_effector_loss(
    a: tuple[Skeleton, MotionSequence], b: tuple[Skeleton, MotionSequence], mapping: EndEffectorMap
) -> float:
    sa, ma = a
    sb, mb = b
    if ma.frame_count != mb.frame_count:
        raise ValueError(f"frame count mismatch: {ma.frame_count} vs {mb.frame_count}")
    if len(mapping) == 0:
        warnings.warn("end-effector map is empty; end-effector loss is 0", RuntimeWarning, stacklevel=2)
        return 0.0
    ha = forward_heads(sa, ma.root_positions, ma.rotations)[:, mapping.source]
    hb = forward_heads(sb, mb.root_positions, mb.rotations)[:, mapping.target]
    return end_effector_distance(ha, hb)


def unit_norm_penalty(raw) -> float:
    """Mean squared deviation of quaternion norms from 1."""
    n = np.linalg.norm(np.asarray(raw, dtype=np.float64), axis=-1)
    if n.size == 0:
        return 0.0
    return float(np.mean((n - 1.0) ** 2))


@dataclass(eq=False)
class RetargetParams:
    """Optimization variables for a motion on the target skeleton."""

    root_positions: np.ndarray  # (T, 3)
    raw_rotations: np.ndarray  # (T, N, 4), normalized at FK time

    def copy(self) -> "RetargetParams":
        return RetargetParams(self.root_positions.copy(), self.raw_rotations.copy())

    def flat(self) -> np.ndarray:
        return np.concatenate([self.root_positions.ravel(), self.raw_rotations.ravel()])

    def with_flat(self, x) -> "RetargetParams":
        n = self.root_positions.size
        return RetargetParams(
            np.asarray(x[:n]).reshape(self.root_positions.shape).copy(),
            np.asarray(x[n:]).reshape(self.raw_rotations.shape).copy(),
        )


@dataclass(frozen=True, eq=False)
class RetargetProblem:
    """A source cloud to match with a motion on the target skeleton."""

    source: CloudTrajectory
    skeleton: Skeleton
    spec: CloudSpec  # frozen target cloud spec
    source_effectors: np.ndarray  # (T, E, 3) source end-effector head positions
    effector_bones: np.ndarray  # (E,) matching target bone indices
    weights: ObjectiveWeights = ObjectiveWeights()
    knn: KnnConfig = KnnConfig()

    @property
    def frame_count(self) -> int:
        return self.source.frame_count

    def target_cloud(self, params: RetargetParams, heads=None) -> CloudTrajectory:
        pos = realize_positions(self.spec, self.skeleton, params.root_positions, params.raw_rotations, heads)
        return CloudTrajectory(pos, self.spec.groups)


def build_problem(
    source_skeleton: Skeleton,
    source_motion: MotionSequence,
    source_spec: CloudSpec,
    target_skeleton: Skeleton,
    target_spec: CloudSpec,
    mapping: EndEffectorMap | None = None,
    weights: ObjectiveWeights = ObjectiveWeights(),
    knn: KnnConfig = KnnConfig(),
) -> RetargetProblem:
    from .cloud import realize_trajectory
    from .skeleton import match_end_effectors

    if mapping is None:
        mapping = match_end_effectors(source_skeleton, target_skeleton)
    source = realize_trajectory(source_spec, source_skeleton, source_motion)
    heads = forward_heads(source_skeleton, source_motion.root_positions, source_motion.rotations)
    return RetargetProblem(
        source=source,
        skeleton=target_skeleton,
        spec=target_spec,
        source_effectors=heads[:, mapping.source] if len(mapping) else np.zeros((source.frame_count, 0, 3)),
        effector_bones=mapping.target,
        weights=weights,
        knn=knn,
    )


def _rotation_vjp(q_raw, v, g) -> np.ndarray:
    """Gradient w.r.t. raw ``q`` of ``g . rotate(v, q / |q|)``."""
    norm = np.linalg.norm(q_raw, axis=-1, keepdims=True)
    q = q_raw / norm
    w = q[..., :1]
    u = q[..., 1:]
    v = np.broadcast_to(v, g.shape)
    gv = np.sum(g * v, axis=-1, keepdims=True)
    ug = np.sum(u * g, axis=-1, keepdims=True)
    uv = np.sum(u * v, axis=-1, keepdims=True)
    d_w = 2.0 * w * gv + 2.0 * np.sum(g * np.cross(u, v), axis=-1, keepdims=True)
    d_u = -2.0 * u * gv + 2.0 * v * ug + 2.0 * g * uv + 2.0 * w * np.cross(v, g)
    d = np.concatenate([d_w, d_u], axis=-1)
    return (d - q * np.sum(q * d, axis=-1, keepdims=True)) / norm


def _safe_unit(d) -> np.ndarray:
    n = np.sqrt(np.sum(d * d, axis=-1, keepdims=True))
    return np.divide(d, n, out=np.zeros_like(d), where=n > 0)


def _evaluate(problem: RetargetProblem, params: RetargetParams, assignment, want_grad: bool):
    s = problem.skeleton
    w = problem.weights
    rot = params.raw_rotations
    if np.any(np.linalg.norm(rot, axis=-1) == 0.0):
        raise ValueError("zero-norm raw quaternion in parameters")
    heads = forward_heads(s, params.root_positions, rot)
    x_b = problem.target_cloud(params, heads)
    x_a = problem.source
    if assignment is None:
        assignment = knn_assign(x_a, x_b, problem.knn)
    knn = knn_loss(x_a, x_b, problem.knn, assignment)
    t_count = problem.frame_count
    eff_b = heads[:, problem.effector_bones]
    l_end = end_effector_distance(problem.source_effectors, eff_b) if problem.effector_bones.size else 0.0
    l_q = unit_norm_penalty(rot)
    total = w.knn * knn.normalized + w.end * l_end + w.q * l_q
    breakdown = ObjectiveBreakdown(knn.raw, knn.normalized, l_end, l_q, total, w)
    if not want_grad:
        return breakdown, None

    n_bones = len(s)
    spec = problem.spec
    # d total / d target point positions
    pb = x_b.positions[:, assignment.indices]  # (T, Pa, k, 3)
    unit = _safe_unit(pb - x_a.positions[:, :, None, :])
    scale = w.knn / (x_a.point_count * assignment.k * t_count)
    g_points = np.zeros_like(x_b.positions)
    np.add.at(g_points, (slice(None), assignment.indices), scale * unit)

    g_heads = np.zeros_like(heads)
    g_rot = np.zeros_like(rot)
    np.add.at(g_heads, (slice(None), spec.bones), g_points)
    np.add.at(g_rot, (slice(None), spec.bones), _rotation_vjp(rot[:, spec.bones], spec.local_offsets[None], g_points))
    if problem.effector_bones.size:
        g_eff = (w.end / t_count) * _safe_unit(eff_b - problem.source_effectors)
        np.add.at(g_heads, (slice(None), problem.effector_bones), g_eff)

    offsets = s.heads
    for n in range(n_bones - 1, 0, -1):
        p = s.bones[n].parent
        g_rot[:, p] += _rotation_vjp(rot[:, p], offsets[n], g_heads[:, n])
        g_heads[:, p] += g_heads[:, n]

    norms = np.linalg.norm(rot, axis=-1, keepdims=True)
    g_rot += w.q * 2.0 * (norms - 1.0) * rot / norms / (rot.shape[0] * rot.shape[1])
    return breakdown, RetargetParams(g_heads[:, 0].copy(), g_rot)


def total_objective(
    problem: RetargetProblem, params: RetargetParams, assignment: NeighborAssignment | None = None
) -> ObjectiveBreakdown:
    """Weighted objective; recomputes the neighbor assignment unless one is given."""
    return _evaluate(problem, params, assignment, False)[0]


def objective_gradient(
    problem: RetargetProblem, params: RetargetParams, assignment: NeighborAssignment
) -> RetargetParams:
    """Exact gradient of the total objective with the neighbor assignment held fixed."""
    return _evaluate(problem, params, assignment, True)[1]


def objective_and_gradient(problem: RetargetProblem, params: RetargetParams, assignment: NeighborAssignment):
    return _evaluate(problem, params, assignment, True)
