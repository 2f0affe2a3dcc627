"""Retargeting by direct minimization of the point-cloud objective."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .cloud import CloudSpec, make_rng
from .objectives import (
    KnnConfig,
    NeighborAssignment,
    ObjectiveBreakdown,
    ObjectiveWeights,
    RetargetParams,
    RetargetProblem,
    build_problem,
    knn_assign,
    objective_and_gradient,
    total_objective,
)
from .rotation import IDENTITY, align_sequence
from .skeleton import MotionSequence, Skeleton

log = logging.getLogger(__name__)

__all__ = [
    "OptimizerConfig",
    "RetargetError",
    "RetargetParams",
    "RetargetTrace",
    "export_retargeted",
    "init_params",
    "optimize",
    "retarget",
]


class RetargetError(RuntimeError):
    def __init__(self, message: str, trace: "RetargetTrace"):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class OptimizerConfig:
    max_iterations: int = 2000
    step_size: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    reassign_interval: int = 10
    convergence_tol: float = 1e-6
    convergence_window: int = 50
    seed: int = 0
    init_noise: float = 1e-3
    weights: ObjectiveWeights = ObjectiveWeights()
    knn: KnnConfig = KnnConfig()

    def __post_init__(self):
        if self.max_iterations < 1 or self.step_size <= 0 or self.reassign_interval < 1:
            raise ValueError("max_iterations, step_size and reassign_interval must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("decay constants must lie in [0, 1)")

    @classmethod
    def from_dict(cls, d: dict) -> "OptimizerConfig":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown optimizer config keys: {sorted(unknown)}")
        if "weights" in d:
            d["weights"] = ObjectiveWeights(**d["weights"])
        if "knn" in d:
            d["knn"] = KnnConfig(**d["knn"])
        return cls(**d)


@dataclass
class RetargetTrace:
    history: list = field(default_factory=list)  # ObjectiveBreakdown per iteration
    best_totals: list = field(default_factory=list)
    reassignments: list = field(default_factory=list)  # iteration indices
    best_params: RetargetParams | None = None
    best_iteration: int = -1
    final: ObjectiveBreakdown | None = None  # best params with a fresh assignment
    stop_reason: str = ""

    def records(self):
        reassigned = set(self.reassignments)
        for i, (b, best) in enumerate(zip(self.history, self.best_totals)):
            yield {
                "iteration": i,
                "l_knn": b.l_knn,
                "l_knn_raw": b.l_knn_raw,
                "l_end": b.l_end,
                "l_q": b.l_q,
                "total": b.total,
                "best_total": best,
                "reassigned": i in reassigned,
            }

    def write_jsonl(self, path) -> None:
        with open(path, "w") as f:
            for rec in self.records():
                f.write(json.dumps(rec) + "\n")


def init_params(b: Skeleton, m_a: MotionSequence, seed: int = 0, noise: float = 1e-3) -> RetargetParams:
    """Target rest pose (identity rotations) with small seeded noise, source root trajectory."""
    frames = m_a.frame_count
    rot = np.tile(IDENTITY, (frames, len(b), 1))
    if noise:
        rot = rot + noise * make_rng(seed).standard_normal(rot.shape)
    return RetargetParams(m_a.root_positions.copy(), rot)


def export_retargeted(params: RetargetParams, b: Skeleton, frame_rate: float = 30.0) -> MotionSequence:
    raw = np.asarray(params.raw_rotations, dtype=np.float64)
    if raw.shape[1] != len(b):
        raise ValueError(f"parameters have {raw.shape[1]} bones, skeleton {b.name!r} has {len(b)}")
    if not (np.all(np.isfinite(raw)) and np.all(np.isfinite(params.root_positions))):
        raise ValueError("parameters contain non-finite values")
    norms = np.linalg.norm(raw, axis=-1)
    zero = np.argwhere(norms == 0.0)
    if zero.size:
        t, n = zero[0]
        raise ValueError(f"zero-norm quaternion at frame {t}, bone {b.bones[n].name!r}")
    rot = align_sequence(raw / norms[..., None])
    return MotionSequence(np.array(params.root_positions, dtype=np.float64), rot, frame_rate)


class _Adam:
    def __init__(self, cfg: OptimizerConfig):
        self.cfg = cfg
        self.m = None
        self.v = None
        self.t = 0

    def step(self, x: np.ndarray, g: np.ndarray) -> np.ndarray:
        c = self.cfg
        if self.m is None:
            self.m = np.zeros_like(x)
            self.v = np.zeros_like(x)
        self.t += 1
        self.m = c.beta1 * self.m + (1 - c.beta1) * g
        self.v = c.beta2 * self.v + (1 - c.beta2) * g * g
        m_hat = self.m / (1 - c.beta1**self.t)
        v_hat = self.v / (1 - c.beta2**self.t)
        return x - c.step_size * m_hat / (np.sqrt(v_hat) + c.eps)


def optimize(
    problem: RetargetProblem,
    init: RetargetParams,
    cfg: OptimizerConfig = OptimizerConfig(),
    frame_rate: float = 30.0,
) -> tuple[MotionSequence, RetargetTrace]:
    """Minimize the total objective over target root positions and raw rotations.

    The neighbor assignment is recomputed every ``reassign_interval``
    iterations and held fixed in between; steps use Adam scaling. The motion
    built from the best iterate (by total objective) is returned.
    """
    params = init.copy()
    trace = RetargetTrace()
    adam = _Adam(cfg)
    x = params.flat()
    assignment: NeighborAssignment | None = None
    best = math.inf
    window = cfg.convergence_window
    for it in range(cfg.max_iterations):
        params = params.with_flat(x)
        if it % cfg.reassign_interval == 0 or assignment is None:
            assignment = knn_assign(problem.source, problem.target_cloud(params), problem.knn)
            trace.reassignments.append(it)
        breakdown, grad = objective_and_gradient(problem, params, assignment)
        trace.history.append(breakdown)
        g = grad.flat()
        if not (math.isfinite(breakdown.total) and np.all(np.isfinite(g))):
            trace.stop_reason = "non-finite objective"
            trace.best_totals.append(best)
            raise RetargetError(f"non-finite objective at iteration {it}", trace)
        if breakdown.total < best:
            best = breakdown.total
            trace.best_params = params.copy()
            trace.best_iteration = it
        trace.best_totals.append(best)
        if it >= window:
            prev = trace.best_totals[it - window]
            if prev > 0 and (prev - best) / prev < cfg.convergence_tol:
                trace.stop_reason = "converged"
                break
        x = adam.step(x, g)
    else:
        trace.stop_reason = "max_iterations"
    trace.final = total_objective(problem, trace.best_params)
    log.info(
        "retarget stopped (%s) after %d iterations; best total %.6g at %d",
        trace.stop_reason,
        len(trace.history),
        best,
        trace.best_iteration,
    )
    return export_retargeted(trace.best_params, problem.skeleton, frame_rate), trace


def retarget(
    source_skeleton: Skeleton,
    source_motion: MotionSequence,
    target_skeleton: Skeleton,
    source_spec: CloudSpec,
    target_spec: CloudSpec,
    cfg: OptimizerConfig = OptimizerConfig(),
    mapping=None,
) -> tuple[MotionSequence, RetargetTrace]:
    problem = build_problem(
        source_skeleton, source_motion, source_spec, target_skeleton, target_spec, mapping, cfg.weights, cfg.knn
    )
    init = init_params(target_skeleton, source_motion, cfg.seed, cfg.init_noise)
    return optimize(problem, init, cfg, source_motion.frame_rate)
