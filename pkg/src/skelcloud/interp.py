"""Keyframe interpolation baseline, in-betweening metrics and training-sample emission."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .rotation import FoqSequence, foq_decode, foq_encode, hemisphere_align, slerp
from .skeleton import MotionSequence, Skeleton, forward_heads, rpa_augment

TABLE_INTERVALS = (5, 15, 30)


@dataclass(frozen=True, eq=False)
class KeyframeSet:
    frames: np.ndarray
    interval: int

    def mask(self, frame_count: int) -> np.ndarray:
        m = np.zeros(frame_count, dtype=bool)
        m[self.frames] = True
        return m

    def __eq__(self, other):
        if not isinstance(other, KeyframeSet):
            return NotImplemented
        return self.interval == other.interval and np.array_equal(self.frames, other.frames)


def keyframe_indices(frame_count: int, interval: int) -> KeyframeSet:
    if interval < 1:
        raise ValueError("interval must be at least 1")
    if frame_count < 2:
        raise ValueError("need at least 2 frames to place keyframes")
    frames = np.unique(np.append(np.arange(0, frame_count, interval), frame_count - 1))
    return KeyframeSet(frames, interval)


def extract_keyframes(m: MotionSequence, interval: int) -> KeyframeSet:
    return keyframe_indices(m.frame_count, interval)


def interpolate_baseline(m: MotionSequence, keys: KeyframeSet) -> MotionSequence:
    """Fill every non-keyframe from its surrounding keyframes.

    Root positions are lerped; global bone rotations are slerped. Only the
    keyframe values of ``m`` are read.
    """
    frames = keys.frames
    if frames[0] != 0 or frames[-1] != m.frame_count - 1 or np.any(np.diff(frames) <= 0):
        raise ValueError("keyframes must be ascending and include both endpoints")
    root = m.root_positions.copy()
    rot = m.rotations.copy()
    for a, b in zip(frames[:-1], frames[1:]):
        if b - a < 2:
            continue
        t = (np.arange(a + 1, b) - a) / (b - a)
        root[a + 1 : b] = (1 - t)[:, None] * m.root_positions[a] + t[:, None] * m.root_positions[b]
        rot[a + 1 : b] = slerp(m.rotations[a][None], m.rotations[b][None], t[:, None])
    return MotionSequence(root, rot, m.frame_rate)


def _eval_frames(gt: MotionSequence, pred: MotionSequence, keys: KeyframeSet | None) -> np.ndarray:
    if gt.rotations.shape != pred.rotations.shape:
        raise ValueError(f"shape mismatch: {gt.rotations.shape} vs {pred.rotations.shape}")
    if keys is None:
        return np.arange(gt.frame_count)
    frames = np.flatnonzero(~keys.mask(gt.frame_count))
    return frames if frames.size else np.arange(gt.frame_count)


def l2p(s: Skeleton, gt: MotionSequence, pred: MotionSequence, keys: KeyframeSet | None = None) -> float:
    """Mean global head-position error (meters) over non-keyframe frames and all bones."""
    if gt.bone_count != len(s):
        raise ValueError("motion does not match skeleton")
    frames = _eval_frames(gt, pred, keys)
    hg = forward_heads(s, gt.root_positions[frames], gt.rotations[frames])
    hp = forward_heads(s, pred.root_positions[frames], pred.rotations[frames])
    return float(np.mean(np.linalg.norm(hg - hp, axis=-1)))


def l2q(s: Skeleton, gt: MotionSequence, pred: MotionSequence, keys: KeyframeSet | None = None) -> float:
    """Mean quaternion distance after aligning each predicted quaternion to ground truth."""
    if gt.bone_count != len(s):
        raise ValueError("motion does not match skeleton")
    frames = _eval_frames(gt, pred, keys)
    qg = gt.rotations[frames]
    qp = hemisphere_align(pred.rotations[frames], qg)
    return float(np.mean(np.linalg.norm(qg - qp, axis=-1)))


def npss_features(gt, pred, power_floor: float = 1e-12) -> float:
    """Normalized power spectrum similarity for (T, D) feature matrices.

    Per dimension: squared-magnitude DFT over time, normalized to sum 1,
    earth mover's distance between cumulative spectra; averaged with weights
    equal to each dimension's share of ground-truth power.
    """
    gt = np.asarray(gt, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    if gt.shape != pred.shape:
        raise ValueError(f"shape mismatch: {gt.shape} vs {pred.shape}")
    if gt.shape[0] < 2:
        raise ValueError("need at least 2 frames")
    pg = np.abs(np.fft.rfft(gt, axis=0)) ** 2
    pp = np.abs(np.fft.rfft(pred, axis=0)) ** 2
    tg = pg.sum(axis=0)
    tp = pp.sum(axis=0)
    keep = tg >= power_floor
    if not np.any(keep):
        raise ValueError("degenerate spectrum")
    ng = pg[:, keep] / tg[keep]
    np_ = np.divide(pp[:, keep], tp[keep], out=np.zeros_like(pp[:, keep]), where=tp[keep] > 0)
    emd = np.sum(np.abs(np.cumsum(ng, axis=0) - np.cumsum(np_, axis=0)), axis=0)
    w = tg[keep] / tg[keep].sum()
    return float(np.sum(w * emd))


def npss(gt: MotionSequence, pred: MotionSequence) -> float:
    t = gt.frame_count
    return npss_features(gt.rotations.reshape(t, -1), pred.rotations.reshape(t, -1))


@dataclass(frozen=True)
class MetricReport:
    l2p: float
    l2q: float
    npss: float
    interval: int | None = None
    label: str = ""

    def as_dict(self) -> dict:
        return {"l2p": self.l2p, "l2q": self.l2q, "npss": self.npss, "interval": self.interval, "label": self.label}


def evaluate(
    s: Skeleton, gt: MotionSequence, pred: MotionSequence, keys: KeyframeSet | None = None, label: str = ""
) -> MetricReport:
    return MetricReport(
        l2p(s, gt, pred, keys),
        l2q(s, gt, pred, keys),
        npss(gt, pred),
        None if keys is None else keys.interval,
        label,
    )


@dataclass(eq=False)
class TrainingSample:
    """One interpolation training example with FOQ rotations."""

    interval: int
    keyframe_mask: np.ndarray  # (T,) bool
    foq: np.ndarray  # (T, N, 4), identity at frame 0
    reference_rotations: np.ndarray  # (N, 4) absolute rotations at frame 0
    root_positions: np.ndarray  # (T, 3)
    tails: np.ndarray  # (N, 3) rest tails after augmentation
    rpa_seed: int
    offset_scale: float
    frame_rate: float = 30.0
    meta: dict = field(default_factory=dict)

    def decode(self) -> MotionSequence:
        rot = foq_decode(FoqSequence(self.foq, 0), self.reference_rotations[None], 0)
        return MotionSequence(self.root_positions, rot, self.frame_rate)


def emit_training_samples(
    m: MotionSequence,
    s: Skeleton,
    intervals: Sequence[int] = TABLE_INTERVALS,
    offset_scale: float = 0.05,
    seed: int = 0,
    per_sample_seed: bool = False,
) -> Iterator[TrainingSample]:
    """Yield one sample per keyframe interval.

    By default one augmentation (seeded by ``seed``) is shared by every
    interval; with ``per_sample_seed`` each interval draws its own.
    """
    seeds = (
        [int(x) for x in np.random.SeedSequence(seed).generate_state(len(intervals))]
        if per_sample_seed
        else [int(seed)] * len(intervals)
    )
    cache: dict[int, tuple[Skeleton, MotionSequence]] = {}
    for interval, rpa_seed in zip(intervals, seeds):
        if rpa_seed not in cache:
            cache[rpa_seed] = rpa_augment(s, m, offset_scale, rpa_seed)
        s_aug, m_aug = cache[rpa_seed]
        keys = extract_keyframes(m_aug, interval)
        yield TrainingSample(
            interval=int(interval),
            keyframe_mask=keys.mask(m_aug.frame_count),
            foq=foq_encode(m_aug.rotations).quats,
            reference_rotations=m_aug.rotations[0].copy(),
            root_positions=m_aug.root_positions.copy(),
            tails=s_aug.tails,
            rpa_seed=rpa_seed,
            offset_scale=float(offset_scale),
            frame_rate=m_aug.frame_rate,
        )
