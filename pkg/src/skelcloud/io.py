"""File formats: skeleton/motion JSON, cloud specs, sample streams and a BVH subset."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cloud import CloudSpec, CloudTrajectory
from .interp import TrainingSample
from .rotation import EULER_ORDERS, euler_to_quat, quat_mul
from .skeleton import END_EFFECTOR_TAGS, BodyGroup, Bone, MotionSequence, Skeleton

SKELETON_FORMAT = "skelcloud.skeleton"
MOTION_FORMAT = "skelcloud.motion"
CLOUD_FORMAT = "skelcloud.cloud"
FORMAT_VERSION = 1


class FormatError(ValueError):
    """Malformed or unsupported input file."""


def _load_json(path) -> dict:
    try:
        with open(path) as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: line {e.lineno}, column {e.colno}: {e.msg}") from None


def _dump_json(obj, path) -> None:
    # json writes floats with repr(), the shortest string that round-trips exactly
    with open(path, "w") as f:
        json.dump(obj, f, indent=1)
        f.write("\n")


def _check_keys(d: dict, required: set, optional: set, where: str, strict: bool) -> None:
    missing = required - set(d)
    if missing:
        raise FormatError(f"{where}: missing field(s) {sorted(missing)}")
    extra = set(d) - required - optional
    if strict and extra:
        raise FormatError(f"{where}: unknown field(s) {sorted(extra)}")


def _vec3(value, where: str) -> np.ndarray:
    try:
        v = np.asarray(value, dtype=np.float64)
    except (TypeError, ValueError):
        raise FormatError(f"{where}: expected 3 numbers") from None
    if v.shape != (3,):
        raise FormatError(f"{where}: expected 3 numbers, got shape {v.shape}")
    return v


def _check_header(d: dict, fmt: str, path) -> None:
    if d.get("format") != fmt:
        raise FormatError(f"{path}: expected format {fmt!r}, got {d.get('format')!r}")
    if d.get("version") != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {d.get('version')!r}")


def skeleton_to_dict(s: Skeleton) -> dict:
    bones = []
    for b in s.bones:
        rec = {
            "name": b.name,
            "parent": None if b.parent is None else s.bones[b.parent].name,
            "head": b.head.tolist(),
            "tail": b.tail.tolist(),
            "group": b.group.label,
        }
        if b.end_effector:
            rec["end_effector"] = b.end_effector
        bones.append(rec)
    return {"format": SKELETON_FORMAT, "version": FORMAT_VERSION, "units": "m", "name": s.name, "bones": bones}


def skeleton_from_dict(d: dict, path="<skeleton>", strict: bool = True) -> Skeleton:
    _check_header(d, SKELETON_FORMAT, path)
    _check_keys(d, {"format", "version", "units", "bones"}, {"name"}, str(path), strict)
    if d["units"] != "m":
        raise FormatError(f"{path}: units must be 'm', got {d['units']!r}")
    index: dict[str, int] = {}
    bones = []
    for i, rec in enumerate(d["bones"]):
        where = f"{path}: bones[{i}]"
        _check_keys(rec, {"name", "parent", "head", "tail", "group"}, {"end_effector"}, where, strict)
        name = rec["name"]
        if name in index:
            raise FormatError(f"{where}: duplicate bone name {name!r}")
        parent = rec["parent"]
        if parent is not None and parent not in index:
            raise FormatError(f"{where}: parent {parent!r} of bone {name!r} is not defined before it")
        try:
            group = BodyGroup.parse(rec["group"])
        except ValueError as e:
            raise FormatError(f"{where}: {e}") from None
        tag = rec.get("end_effector")
        if tag is not None and tag not in END_EFFECTOR_TAGS:
            raise FormatError(f"{where}: unknown end-effector tag {tag!r}")
        bones.append(
            Bone(
                name,
                None if parent is None else index[parent],
                _vec3(rec["head"], f"{where}.head"),
                _vec3(rec["tail"], f"{where}.tail"),
                group,
                tag,
            )
        )
        index[name] = i
    return Skeleton(tuple(bones), d.get("name", Path(str(path)).stem))


def save_skeleton(s: Skeleton, path) -> None:
    _dump_json(skeleton_to_dict(s), path)


def load_skeleton(path, strict: bool = True) -> Skeleton:
    return skeleton_from_dict(_load_json(path), path, strict)


def motion_to_dict(m: MotionSequence, skeleton: str = "") -> dict:
    return {
        "format": MOTION_FORMAT,
        "version": FORMAT_VERSION,
        "skeleton": skeleton,
        "frame_rate": m.frame_rate,
        "root_positions": m.root_positions.tolist(),
        "rotations": m.rotations.tolist(),
    }


def motion_from_dict(d: dict, path="<motion>", strict: bool = True) -> MotionSequence:
    _check_header(d, MOTION_FORMAT, path)
    _check_keys(d, {"format", "version", "frame_rate", "root_positions", "rotations"}, {"skeleton"}, str(path), strict)
    try:
        return MotionSequence(d["root_positions"], d["rotations"], float(d["frame_rate"]))
    except (TypeError, ValueError) as e:
        raise FormatError(f"{path}: {e}") from None


def save_motion(m: MotionSequence, path, skeleton: str = "") -> None:
    _dump_json(motion_to_dict(m, skeleton), path)


def load_motion(path, strict: bool = True) -> MotionSequence:
    return motion_from_dict(_load_json(path), path, strict)


def save_cloud(spec: CloudSpec, path, trajectory: CloudTrajectory | None = None) -> None:
    d = {
        "format": CLOUD_FORMAT,
        "version": FORMAT_VERSION,
        "skeleton": spec.skeleton_id,
        "sigma": spec.sigma,
        "seed": spec.seed,
        "points": [
            {"bone": int(b), "offset": o.tolist(), "group": BodyGroup(int(g)).label}
            for b, o, g in zip(spec.bones, spec.local_offsets, spec.groups)
        ],
    }
    if trajectory is not None:
        d["positions"] = trajectory.positions.tolist()
    _dump_json(d, path)


def load_cloud(path) -> CloudSpec:
    d = _load_json(path)
    _check_header(d, CLOUD_FORMAT, path)
    pts = d["points"]
    return CloudSpec(
        bones=np.array([p["bone"] for p in pts], dtype=int),
        local_offsets=np.array([p["offset"] for p in pts], dtype=np.float64).reshape(-1, 3),
        groups=np.array([int(BodyGroup.parse(p["group"])) for p in pts], dtype=int),
        skeleton_id=d["skeleton"],
        sigma=float(d["sigma"]),
        seed=int(d["seed"]),
    )


def sample_to_record(sample: TrainingSample) -> dict:
    return {
        "interval": sample.interval,
        "keyframes": np.flatnonzero(sample.keyframe_mask).tolist(),
        "frame_count": int(sample.keyframe_mask.shape[0]),
        "foq": sample.foq.tolist(),
        "reference_rotations": sample.reference_rotations.tolist(),
        "root_positions": sample.root_positions.tolist(),
        "tails": sample.tails.tolist(),
        "rpa_seed": sample.rpa_seed,
        "offset_scale": sample.offset_scale,
        "frame_rate": sample.frame_rate,
    }


def sample_from_record(rec: dict) -> TrainingSample:
    mask = np.zeros(rec["frame_count"], dtype=bool)
    mask[rec["keyframes"]] = True
    return TrainingSample(
        interval=rec["interval"],
        keyframe_mask=mask,
        foq=np.array(rec["foq"], dtype=np.float64),
        reference_rotations=np.array(rec["reference_rotations"], dtype=np.float64),
        root_positions=np.array(rec["root_positions"], dtype=np.float64),
        tails=np.array(rec["tails"], dtype=np.float64),
        rpa_seed=rec["rpa_seed"],
        offset_scale=rec["offset_scale"],
        frame_rate=rec["frame_rate"],
    )


def write_jsonl(records, path) -> int:
    n = 0
    with open(path, "w") as f:
        for rec in records:
            f.write(json.dumps(rec) + "\n")
            n += 1
    return n


def read_jsonl(path) -> list:
    with open(path) as f:
        return [json.loads(line) for line in f if line.strip()]


# -- BVH ---------------------------------------------------------------------

_POS_CHANNELS = ("Xposition", "Yposition", "Zposition")
_ROT_CHANNELS = {"Xrotation": "X", "Yrotation": "Y", "Zrotation": "Z"}


@dataclass
class BvhJoint:
    name: str
    parent: int | None
    offset: np.ndarray
    channels: list
    end_site: np.ndarray | None = None
    children: list = field(default_factory=list)

    @property
    def rotation_order(self) -> str:
        return "".join(_ROT_CHANNELS[c] for c in self.channels if c in _ROT_CHANNELS)


@dataclass
class BvhDocument:
    joints: list
    frame_time: float
    values: np.ndarray  # (frames, channels)

    @property
    def frame_count(self) -> int:
        return self.values.shape[0]

    @property
    def channel_count(self) -> int:
        return sum(len(j.channels) for j in self.joints)


def _tokens(text: str):
    for lineno, line in enumerate(text.splitlines(), 1):
        for tok in line.split():
            yield lineno, tok


def parse_bvh(text: str) -> BvhDocument:
    """Parse the supported BVH subset: one HIERARCHY, 3 or 6 channels per joint."""
    toks = list(_tokens(text))
    pos = 0

    def take(expected=None):
        nonlocal pos
        if pos >= len(toks):
            raise FormatError(f"unexpected end of file (expected {expected or 'more tokens'})")
        lineno, tok = toks[pos]
        if expected is not None and tok != expected:
            raise FormatError(f"line {lineno}: expected {expected!r}, got {tok!r}")
        pos += 1
        return tok

    def take_float():
        lineno = toks[pos][0] if pos < len(toks) else -1
        tok = take()
        try:
            return float(tok)
        except ValueError:
            raise FormatError(f"line {lineno}: expected a number, got {tok!r}") from None

    joints: list[BvhJoint] = []

    def joint(parent: int | None):
        name = take()
        take("{")
        take("OFFSET")
        offset = np.array([take_float() for _ in range(3)])
        lineno = toks[pos][0] if pos < len(toks) else -1
        take("CHANNELS")
        n = int(take())
        if n not in (3, 6):
            raise FormatError(f"line {lineno}: joint {name!r} declares {n} channels (only 3 or 6 supported)")
        channels = [take() for _ in range(n)]
        for c in channels:
            if c not in _POS_CHANNELS and c not in _ROT_CHANNELS:
                raise FormatError(f"line {lineno}: unknown channel {c!r}")
        j = BvhJoint(name, parent, offset, channels)
        if len([c for c in channels if c in _ROT_CHANNELS]) != 3:
            raise FormatError(f"line {lineno}: joint {name!r} needs exactly three rotation channels")
        if j.rotation_order not in EULER_ORDERS:
            raise FormatError(f"line {lineno}: unsupported rotation order {j.rotation_order!r}")
        idx = len(joints)
        joints.append(j)
        if parent is not None:
            joints[parent].children.append(idx)
        while True:
            tok = take()
            if tok == "JOINT":
                joint(idx)
            elif tok == "End":
                take("Site")
                take("{")
                take("OFFSET")
                j.end_site = np.array([take_float() for _ in range(3)])
                take("}")
            elif tok == "}":
                break
            else:
                raise FormatError(f"line {toks[pos - 1][0]}: unexpected token {tok!r}")

    take("HIERARCHY")
    take("ROOT")
    joint(None)
    take("MOTION")
    take("Frames:")
    frames = int(take())
    take("Frame")
    take("Time:")
    frame_time = take_float()
    rest = [float(t) for _, t in toks[pos:]]
    nch = sum(len(j.channels) for j in joints)
    if len(rest) != frames * nch:
        raise FormatError(
            f"motion data has {len(rest)} values; expected {frames} frames x {nch} channels = {frames * nch}"
        )
    return BvhDocument(joints, frame_time, np.array(rest, dtype=np.float64).reshape(frames, nch))


def load_bvh(path) -> BvhDocument:
    return parse_bvh(Path(path).read_text())


def import_bvh(
    doc: BvhDocument,
    group_map: dict,
    end_effector_map: dict | None = None,
    scale: float = 1.0,
    name: str = "bvh",
) -> tuple[Skeleton, MotionSequence]:
    """Convert a BVH document to a skeleton with global-rotation motion.

    ``scale`` converts file units to meters. Each joint becomes a bone whose
    tail is its first child's offset (or its End Site).
    """
    end_effector_map = end_effector_map or {}
    bones = []
    for j in doc.joints:
        if j.children:
            tail = doc.joints[j.children[0]].offset
        elif j.end_site is not None:
            tail = j.end_site
        else:
            raise FormatError(f"leaf joint {j.name!r} has no End Site")
        if j.name not in group_map:
            raise FormatError(f"no body group given for joint {j.name!r}")
        head = np.zeros(3) if j.parent is None else j.offset * scale
        bones.append(Bone(j.name, j.parent, head, tail * scale, group_map[j.name], end_effector_map.get(j.name)))
    skeleton = Skeleton(tuple(bones), name)

    frames = doc.frame_count
    rotations = np.empty((frames, len(doc.joints), 4))
    root = np.tile(doc.joints[0].offset * scale, (frames, 1))
    col = 0
    for n, j in enumerate(doc.joints):
        vals = doc.values[:, col : col + len(j.channels)]
        col += len(j.channels)
        rot_cols = [i for i, c in enumerate(j.channels) if c in _ROT_CHANNELS]
        local = euler_to_quat(vals[:, rot_cols], j.rotation_order)
        rotations[:, n] = local if j.parent is None else quat_mul(rotations[:, j.parent], local)
        if j.parent is None:
            for axis, c in enumerate(_POS_CHANNELS):
                if c in j.channels:
                    root[:, axis] = (j.offset[axis] + vals[:, j.channels.index(c)]) * scale
    frame_rate = 1.0 / doc.frame_time if doc.frame_time > 0 else 30.0
    return skeleton, MotionSequence(root, rotations, frame_rate)
