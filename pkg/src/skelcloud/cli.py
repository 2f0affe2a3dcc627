"""Command-line interface.

Exit status: 0 on success, 1 when validation fails, 2 on I/O or parse errors
(including bad command-line usage).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import fixtures
from .cloud import DEFAULT_POINTS, DEFAULT_SIGMA, realize_trajectory, sample_cloud_spec
from .interp import emit_training_samples, evaluate, extract_keyframes, interpolate_baseline
from .io import (
    FormatError,
    import_bvh,
    load_bvh,
    load_motion,
    load_skeleton,
    sample_to_record,
    save_cloud,
    save_motion,
    save_skeleton,
    write_jsonl,
)
from .objectives import DEFAULT_K, KnnConfig, ObjectiveWeights, RetargetParams, build_problem, total_objective
from .retarget import OptimizerConfig, init_params, optimize
from .rotation import FoqSequence, foq_decode, foq_encode
from .skeleton import MotionSequence, validate_skeleton

SEED_ENV = "SKELCLOUD_SEED"
FOQ_FORMAT = "skelcloud.foq"

log = logging.getLogger("skelcloud")


class ValidationFailed(Exception):
    pass


def _default_seed() -> int:
    return int(os.environ.get(SEED_ENV, "0"))


def _print(obj) -> None:
    print(json.dumps(obj, indent=2))


def _load_pair(skel_path, motion_path):
    s = load_skeleton(skel_path)
    report = validate_skeleton(s)
    if not report.ok:
        raise ValidationFailed(f"{skel_path}: " + "; ".join(report.errors))
    m = load_motion(motion_path)
    try:
        m.check(s)
    except ValueError as e:
        raise ValidationFailed(f"{motion_path}: {e}") from None
    return s, m


def cmd_validate(args) -> int:
    s = load_skeleton(args.skeleton)
    report = validate_skeleton(s)
    _print({"skeleton": s.name, "bones": len(s), "errors": report.errors, "warnings": report.warnings})
    return 0 if report.ok else 1


def cmd_sample(args) -> int:
    s = load_skeleton(args.skeleton)
    spec = sample_cloud_spec(s, args.points, args.sigma, args.seed)
    traj = None
    if args.motion:
        m = load_motion(args.motion)
        traj = realize_trajectory(spec, s, m)
    if args.out:
        save_cloud(spec, args.out, traj)
    _print({"skeleton": s.name, "points": spec.point_count, "sigma": spec.sigma, "seed": spec.seed})
    return 0


def _weights(args) -> ObjectiveWeights:
    return ObjectiveWeights(*args.weights) if args.weights else ObjectiveWeights()


def cmd_loss(args) -> int:
    sa, ma = _load_pair(args.source_skel, args.source_motion)
    sb, mb = _load_pair(args.target_skel, args.target_motion)
    spec_a = sample_cloud_spec(sa, args.points, args.sigma, args.seed)
    spec_b = sample_cloud_spec(sb, args.points, args.sigma, args.target_seed if args.target_seed is not None else args.seed + 1)
    problem = build_problem(sa, ma, spec_a, sb, spec_b, weights=_weights(args), knn=KnnConfig(args.k))
    b = total_objective(problem, RetargetParams(mb.root_positions, mb.rotations))
    _print(b.as_dict())
    return 0


def cmd_retarget(args) -> int:
    sa, ma = _load_pair(args.source_skel, args.source_motion)
    sb = load_skeleton(args.target_skel)
    report = validate_skeleton(sb)
    if not report.ok:
        raise ValidationFailed(f"{args.target_skel}: " + "; ".join(report.errors))
    cfg = OptimizerConfig()
    if args.config:
        with open(args.config) as f:
            try:
                cfg = OptimizerConfig.from_dict(json.load(f))
            except (json.JSONDecodeError, TypeError, ValueError) as e:
                raise FormatError(f"{args.config}: {e}") from None
    spec_a = sample_cloud_spec(sa, args.points, args.sigma, args.seed)
    if args.target_seed is None and sb == sa:
        spec_b = spec_a  # self-retargeting shares one cloud spec
    else:
        target_seed = args.target_seed if args.target_seed is not None else args.seed + 1
        spec_b = sample_cloud_spec(sb, args.points, args.sigma, target_seed)
    problem = build_problem(sa, ma, spec_a, sb, spec_b, weights=cfg.weights, knn=cfg.knn)
    init = init_params(sb, ma, cfg.seed, cfg.init_noise)
    start = total_objective(problem, init)
    motion, trace = optimize(problem, init, cfg, ma.frame_rate)
    save_motion(motion, args.out, sb.name)
    if args.trace:
        trace.write_jsonl(args.trace)
    _print(
        {
            "iterations": len(trace.history),
            "stop_reason": trace.stop_reason,
            "initial": start.as_dict(),
            "final": trace.final.as_dict(),
            "knn_reduction": 1.0 - trace.final.l_knn / start.l_knn if start.l_knn > 0 else 0.0,
        }
    )
    return 0


def cmd_interp(args) -> int:
    s, m = _load_pair(args.skeleton, args.motion)
    keys = extract_keyframes(m, args.interval)
    save_motion(interpolate_baseline(m, keys), args.out, s.name)
    _print({"interval": args.interval, "keyframes": keys.frames.tolist()})
    return 0


def cmd_eval(args) -> int:
    s, gt = _load_pair(args.skeleton, args.gt)
    pred = load_motion(args.pred)
    if pred.rotations.shape != gt.rotations.shape:
        raise ValidationFailed("prediction and ground truth differ in shape")
    keys = extract_keyframes(gt, args.interval) if args.interval else None
    _print(evaluate(s, gt, pred, keys).as_dict())
    return 0


def cmd_augment(args) -> int:
    s, m = _load_pair(args.skeleton, args.motion)
    samples = emit_training_samples(m, s, args.intervals, args.offset_scale, args.seed, args.per_sample_seed)
    n = write_jsonl((sample_to_record(x) for x in samples), args.out)
    _print({"samples": n, "out": args.out})
    return 0


def cmd_foq(args) -> int:
    if args.action == "encode":
        m = load_motion(args.input)
        foq = foq_encode(m.rotations)
        d = {
            "format": FOQ_FORMAT,
            "version": 1,
            "frame_rate": m.frame_rate,
            "reference_frame_index": 0,
            "reference_rotations": m.rotations[0].tolist(),
            "root_positions": m.root_positions.tolist(),
            "foq": foq.quats.tolist(),
        }
        with open(args.out, "w") as f:
            json.dump(d, f)
    else:
        with open(args.input) as f:
            try:
                d = json.load(f)
            except json.JSONDecodeError as e:
                raise FormatError(f"{args.input}: {e}") from None
        if d.get("format") != FOQ_FORMAT:
            raise FormatError(f"{args.input}: not an FOQ file")
        foq = FoqSequence(np.array(d["foq"], dtype=np.float64), 0)
        t_ref = int(d.get("reference_frame_index", 0))
        rot = foq_decode(foq, np.array(d["reference_rotations"])[None], t_ref)
        save_motion(MotionSequence(d["root_positions"], rot, d["frame_rate"]), args.out)
    return 0


def cmd_import_bvh(args) -> int:
    with open(args.groups) as f:
        groups = json.load(f)
    effectors = {}
    if args.end_effectors:
        with open(args.end_effectors) as f:
            effectors = json.load(f)
    doc = load_bvh(args.bvh)
    s, m = import_bvh(doc, groups, effectors, args.scale, name=args.name)
    save_skeleton(s, args.out_skel)
    save_motion(m, args.out_motion, s.name)
    report = validate_skeleton(s)
    _print({"bones": len(s), "frames": m.frame_count, "warnings": report.warnings, "errors": report.errors})
    return 0 if report.ok else 1


def cmd_fixture(args) -> int:
    builders = {
        "humanoid20": lambda: fixtures.humanoid(toes=False),
        "humanoid22": lambda: fixtures.humanoid(toes=True),
        "split_hips": fixtures.humanoid_split_hips,
    }
    s = builders[args.kind]()
    save_skeleton(s, args.out_skel)
    if args.out_motion:
        m = fixtures.procedural_motion(s, frames=args.frames, cartwheel_degrees=args.cartwheel)
        save_motion(m, args.out_motion, s.name)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="skelcloud", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--threads", type=int, default=1, help="accepted for batch use; results never depend on it")
    sub = p.add_subparsers(dest="command", required=True)
    seed = _default_seed()

    def cloud_opts(sp):
        sp.add_argument("--points", type=int, default=DEFAULT_POINTS)
        sp.add_argument("--sigma", type=float, default=DEFAULT_SIGMA)
        sp.add_argument("--seed", type=int, default=seed)

    sp = sub.add_parser("validate", help="check a skeleton file")
    sp.add_argument("skeleton")
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("sample", help="sample a point-cloud spec for a skeleton")
    sp.add_argument("skeleton")
    sp.add_argument("--motion")
    sp.add_argument("--out")
    cloud_opts(sp)
    sp.set_defaults(func=cmd_sample)

    sp = sub.add_parser("loss", help="objective breakdown between two motions")
    sp.add_argument("--source-skel", required=True)
    sp.add_argument("--source-motion", required=True)
    sp.add_argument("--target-skel", required=True)
    sp.add_argument("--target-motion", required=True)
    sp.add_argument("--k", type=int, default=DEFAULT_K)
    sp.add_argument("--target-seed", type=int)
    sp.add_argument("--weights", type=float, nargs=3, metavar=("KNN", "END", "Q"))
    cloud_opts(sp)
    sp.set_defaults(func=cmd_loss)

    sp = sub.add_parser("retarget", help="fit a motion on the target skeleton")
    sp.add_argument("--source-skel", required=True)
    sp.add_argument("--source-motion", required=True)
    sp.add_argument("--target-skel", required=True)
    sp.add_argument("--config", help="JSON optimizer config")
    sp.add_argument("--out", required=True)
    sp.add_argument("--trace", help="write per-iteration records (JSON lines)")
    sp.add_argument("--target-seed", type=int, help="target cloud seed (default: shared spec for identical skeletons, else seed+1)")
    cloud_opts(sp)
    sp.set_defaults(func=cmd_retarget)

    sp = sub.add_parser("interp", help="slerp/lerp keyframe baseline")
    sp.add_argument("--skeleton", required=True)
    sp.add_argument("--motion", required=True)
    sp.add_argument("--interval", type=int, choices=(5, 15, 30), required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_interp)

    sp = sub.add_parser("eval", help="L2P / L2Q / NPSS of a prediction")
    sp.add_argument("--skeleton", required=True)
    sp.add_argument("--gt", required=True)
    sp.add_argument("--pred", required=True)
    sp.add_argument("--interval", type=int, help="exclude this interval's keyframes from L2P/L2Q")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("augment", help="emit FOQ + rest-pose-augmented training samples")
    sp.add_argument("--skeleton", required=True)
    sp.add_argument("--motion", required=True)
    sp.add_argument("--offset-scale", type=float, default=0.05)
    sp.add_argument("--seed", type=int, default=seed)
    sp.add_argument("--intervals", type=int, nargs="+", default=[5, 15, 30])
    sp.add_argument("--per-sample-seed", action="store_true")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_augment)

    sp = sub.add_parser("foq", help="first-frame offset encode/decode")
    sp.add_argument("action", choices=("encode", "decode"))
    sp.add_argument("input")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_foq)

    sp = sub.add_parser("import-bvh", help="convert a BVH file")
    sp.add_argument("bvh")
    sp.add_argument("--groups", required=True, help="JSON object: joint name -> body group")
    sp.add_argument("--end-effectors", help="JSON object: joint name -> end-effector tag")
    sp.add_argument("--scale", type=float, default=1.0, help="file units to meters")
    sp.add_argument("--name", default="bvh")
    sp.add_argument("--out-skel", required=True)
    sp.add_argument("--out-motion", required=True)
    sp.set_defaults(func=cmd_import_bvh)

    sp = sub.add_parser("fixture", help="write a synthetic skeleton (and motion)")
    sp.add_argument("kind", choices=("humanoid20", "humanoid22", "split_hips"))
    sp.add_argument("--out-skel", required=True)
    sp.add_argument("--out-motion")
    sp.add_argument("--frames", type=int, default=60)
    sp.add_argument("--cartwheel", type=float, default=0.0, help="whole-body roll over the clip, degrees")
    sp.set_defaults(func=cmd_fixture)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ValidationFailed as e:
        print(f"validation failed: {e}", file=sys.stderr)
        return 1
    except (FormatError, OSError, json.JSONDecodeError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
