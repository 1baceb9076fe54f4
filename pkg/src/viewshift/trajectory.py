"""Posed trajectory ingest, scale handling, and finetuning-triple export.

Pose convention: each frame stores cam_from_world (points in the world frame
map into that camera's frame). This matches COLMAP's images.txt, which
stores the world-to-camera rotation/translation per image; a flag on the
parser inverts at ingest for sources that log camera-to-world instead.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import IO, Iterable

import numpy as np

from .errors import (
    DegenerateTrajectory,
    DuplicateImageName,
    IndexOutOfRange,
    ParseError,
    VersionMismatch,
    ZeroAction,
)
from .geometry import WORLD, RigidTransform, Rotation, inverse, relative_pose, rotation_to_vector

log = logging.getLogger(__name__)

GRIPPER_STATES = ("open", "closed")

# Adjacent frames closer than this (reconstruction units) carry no usable
# direction and are dropped at ingest.
ZERO_DISPLACEMENT_EPS = 1e-8


def camera_frame_tag(trajectory_id: str, index: int) -> str:
    return f"{trajectory_id}/cam{index}"


def perturbed_frame_tag(trajectory_id: str, index: int, sample: int) -> str:
    return f"{trajectory_id}/cam{index}~{sample}"


@dataclass(frozen=True)
class Scale:
    """metric, or reconstruction units with s = max adjacent displacement."""

    kind: str
    s: float | None = None

    def __post_init__(self):
        if self.kind not in ("metric", "reconstruction"):
            raise ValueError(f"unknown scale kind {self.kind!r}")
        if self.kind == "reconstruction" and not (self.s is not None and self.s > 0):
            raise ValueError("reconstruction scale requires s > 0")

    @property
    def metric(self) -> bool:
        return self.kind == "metric"


@dataclass(frozen=True)
class Frame:
    index: int
    image_ref: str
    cam_from_world: RigidTransform
    timestamp: float | None = None
    gripper_state: str | None = None

    def __post_init__(self):
        if not self.image_ref:
            raise ValueError("image_ref must be non-empty")
        if self.gripper_state is not None and self.gripper_state not in GRIPPER_STATES:
            raise ValueError(f"bad gripper state {self.gripper_state!r}")


@dataclass(frozen=True)
class Trajectory:
    id: str
    frames: tuple[Frame, ...]
    scale: Scale
    kind: str = "task"

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        if len(self.frames) < 2:
            raise ValueError("trajectory needs at least 2 frames")
        if self.kind not in ("task", "play"):
            raise ValueError(f"bad trajectory kind {self.kind!r}")
        idx = [f.index for f in self.frames]
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError("frame indices must be strictly increasing")

    def __len__(self) -> int:
        return len(self.frames)


@dataclass(frozen=True)
class Action:
    """Camera-frame action: translation plus optional axis-angle rotation."""

    translation: np.ndarray
    rotation: np.ndarray | None = None

    def __post_init__(self):
        t = np.asarray(self.translation, dtype=float).reshape(3).copy()
        t.setflags(write=False)
        object.__setattr__(self, "translation", t)
        if self.rotation is not None:
            r = np.asarray(self.rotation, dtype=float).reshape(3).copy()
            r.setflags(write=False)
            object.__setattr__(self, "rotation", r)


@dataclass(frozen=True)
class FinetuneTriple:
    image_a_ref: str
    image_b_ref: str
    a_from_b: RigidTransform


# ---------------------------------------------------------------------------
# COLMAP images.txt
# ---------------------------------------------------------------------------


def parse_colmap_images(
    source: str | IO[str] | Iterable[str], *, world_from_camera: bool = False
) -> list[tuple[str, RigidTransform]]:
    """Parse a COLMAP images.txt stream into (image_name, cam_from_world).

    Layout: '#' comment lines, then two lines per image; the first is
    `IMAGE_ID QW QX QY QZ TX TY TZ CAMERA_ID NAME`, the second lists 2D
    points and is skipped (it may be empty). Set world_from_camera=True for
    sources that store camera-to-world poses; they are inverted at ingest so
    the result is always cam_from_world.
    """
    if isinstance(source, str):
        lines = source.splitlines()
    else:
        lines = [ln.rstrip("\n") for ln in source]

    records: list[tuple[str, RigidTransform]] = []
    seen: set[str] = set()
    expecting_points = False
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if expecting_points:
            expecting_points = False
            continue
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) < 10:
            raise ParseError(f"expected 10 fields in image record, got {len(fields)}", lineno)
        name = " ".join(fields[9:])
        try:
            int(fields[0])
            int(fields[8])
            qw, qx, qy, qz = (float(v) for v in fields[1:5])
            tx, ty, tz = (float(v) for v in fields[5:8])
        except ValueError as exc:
            raise ParseError(f"malformed numeric field ({exc})", lineno) from None
        if name in seen:
            raise DuplicateImageName(f"duplicate image name {name!r}", lineno)
        seen.add(name)
        try:
            rot = Rotation(qw, qx, qy, qz)
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
        pose = RigidTransform(rot, np.array([tx, ty, tz]), from_frame=WORLD, to_frame=name)
        if world_from_camera:
            pose = inverse(
                RigidTransform(rot, np.array([tx, ty, tz]), from_frame=name, to_frame=WORLD)
            )
        records.append((name, pose))
        expecting_points = True
    return records


def write_colmap_images(records: list[tuple[str, RigidTransform]], stream: IO[str]) -> None:
    """Inverse of parse_colmap_images (camera id fixed to 1, no 2D points)."""
    stream.write("# Image list with two lines of data per image:\n")
    stream.write("#   IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME\n")
    for i, (name, pose) in enumerate(records, start=1):
        q = pose.rotation
        tx, ty, tz = (float(v) for v in pose.translation)
        stream.write(
            f"{i} {q.w!r} {q.x!r} {q.y!r} {q.z!r} {tx!r} {ty!r} {tz!r} 1 {name}\n"
        )
        stream.write("\n")


# ---------------------------------------------------------------------------
# Native .traj.jsonl format
# ---------------------------------------------------------------------------

_FORMAT_VERSION = 1


def write_trajectory(traj: Trajectory, path) -> None:
    """One JSON header line, then one JSON object per frame."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [
        json.dumps(
            {
                "v": _FORMAT_VERSION,
                "id": traj.id,
                "scale": {"kind": traj.scale.kind, "s": traj.scale.s},
                "kind": traj.kind,
            },
            separators=(",", ":"),
        )
    ]
    for f in traj.frames:
        q = f.cam_from_world.rotation
        t = f.cam_from_world.translation
        lines.append(
            json.dumps(
                {
                    "i": f.index,
                    "img": f.image_ref,
                    "q": [q.w, q.x, q.y, q.z],
                    "t": [t[0], t[1], t[2]],
                    "ts": f.timestamp,
                    "grip": f.gripper_state,
                },
                separators=(",", ":"),
            )
        )
    path.write_text("\n".join(lines) + "\n")


def read_trajectory(path) -> Trajectory:
    """Parse a .traj.jsonl file, dropping zero-displacement frames."""
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines:
        raise ParseError("empty trajectory file", 1)
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ParseError(f"bad header JSON: {exc}", 1) from None
    if header.get("v") != _FORMAT_VERSION:
        raise VersionMismatch(f"unsupported format version {header.get('v')!r}", 1)
    try:
        scale = Scale(header["scale"]["kind"], header["scale"].get("s"))
        traj_id = header["id"]
        kind = header["kind"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad header: {exc}", 1) from None

    frames: list[Frame] = []
    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        try:
            rec = json.loads(raw)
            qw, qx, qy, qz = rec["q"]
            pose = RigidTransform(
                Rotation(qw, qx, qy, qz),
                np.array(rec["t"], dtype=float),
                from_frame=WORLD,
                to_frame=camera_frame_tag(traj_id, rec["i"]),
            )
            frame = Frame(
                index=rec["i"],
                image_ref=rec["img"],
                cam_from_world=pose,
                timestamp=rec.get("ts"),
                gripper_state=rec.get("grip"),
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad frame record: {exc}", lineno) from None
        frames.append(frame)

    kept = _drop_zero_displacement(frames, traj_id)
    return Trajectory(id=traj_id, frames=tuple(kept), scale=scale, kind=kind)


def _drop_zero_displacement(frames: list[Frame], traj_id: str) -> list[Frame]:
    kept: list[Frame] = []
    for f in frames:
        if kept:
            step = relative_pose(f.cam_from_world, kept[-1].cam_from_world)
            if float(np.linalg.norm(step.translation)) < ZERO_DISPLACEMENT_EPS:
                log.warning(
                    "%s: dropping frame %d (zero displacement from previous)", traj_id, f.index
                )
                continue
        kept.append(f)
    return kept


# ---------------------------------------------------------------------------
# Derived quantities
# ---------------------------------------------------------------------------


def compute_scale(traj: Trajectory) -> float:
    """Largest displacement between adjacent frames."""
    best = 0.0
    for a, b in zip(traj.frames, traj.frames[1:]):
        rel = relative_pose(a.cam_from_world, b.cam_from_world)
        best = max(best, float(np.linalg.norm(rel.translation)))
    if best <= ZERO_DISPLACEMENT_EPS:
        raise DegenerateTrajectory(f"{traj.id}: all frames coincide")
    return best


def with_reconstruction_scale(traj: Trajectory) -> Trajectory:
    return replace(traj, scale=Scale("reconstruction", compute_scale(traj)))


def expert_action(traj: Trajectory, i: int, *, six_dof: bool = False) -> Action:
    """Demonstrated action at frame i: frame i+1's pose in frame i's camera.

    Translation is unit-normalized for reconstruction-scale trajectories and
    left in meters for metric ones.
    """
    if i < 0 or i + 1 >= len(traj.frames):
        raise IndexOutOfRange(f"frame {i}+1 outside trajectory of {len(traj.frames)} frames")
    rel = relative_pose(traj.frames[i].cam_from_world, traj.frames[i + 1].cam_from_world)
    t = np.asarray(rel.translation, dtype=float)
    norm = float(np.linalg.norm(t))
    if norm < ZERO_DISPLACEMENT_EPS:
        raise ZeroAction(f"{traj.id}: zero displacement between frames {i} and {i + 1}")
    if not traj.scale.metric:
        t = t / norm
    return Action(t, rotation_to_vector(rel.rotation) if six_dof else None)


def export_finetune_triples(traj: Trajectory, n: int, seed: int) -> list[FinetuneTriple]:
    """n uniformly drawn ordered image pairs (a != b) with their relative pose.

    Pairs never repeat within one call; across calls sampling is independent.
    """
    num = len(traj.frames)
    max_pairs = num * (num - 1)
    if n > max_pairs:
        raise ValueError(f"requested {n} triples but only {max_pairs} ordered pairs exist")
    rng = np.random.Generator(np.random.PCG64(seed))
    chosen: list[tuple[int, int]] = []
    seen: set[tuple[int, int]] = set()
    while len(chosen) < n:
        a = int(rng.integers(num))
        b = int(rng.integers(num))
        if a == b or (a, b) in seen:
            continue
        seen.add((a, b))
        chosen.append((a, b))
    out = []
    for a, b in chosen:
        fa, fb = traj.frames[a], traj.frames[b]
        out.append(
            FinetuneTriple(
                image_a_ref=fa.image_ref,
                image_b_ref=fb.image_ref,
                a_from_b=relative_pose(fa.cam_from_world, fb.cam_from_world),
            )
        )
    return out
