"""Deterministic planar pushing environment with eye-in-hand rendering.

The world is a 0.6 m square table seen from a top-down orthographic camera
rigidly centered on the gripper at height 0.30 m. The planar SE(2) state is
embedded in SE(3) (z fixed, camera looking down) so every pose, perturbation
and label computation runs through the full rigid-transform algebra, while
rendering stays a pure function of (world state, camera pose). That purity
is what lets the renderer double as an exact view synthesizer.

Camera frame convention: x_cam = world +x (image columns), y_cam = world -y
(image rows grow downward), z_cam = world -z (looking down). Right-handed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import imgio
from .geometry import WORLD, RigidTransform, Rotation
from .rng import derive_rng
from .trajectory import Frame, Scale, Trajectory, camera_frame_tag, read_trajectory, write_trajectory

RUNNING = "running"
SUCCESS = "success"
OUT_OF_BOUNDS = "out-of-bounds"
TIMEOUT = "timeout"

# world->camera rotation for the canonical top-down view
_R0 = Rotation(0.0, 1.0, 0.0, 0.0)  # 180deg about x: (x, y, z) -> (x, -y, -z)


@dataclass(frozen=True)
class CameraModel:
    """Top-down orthographic eye-in-hand camera."""

    resolution: int = 64
    window: float = 0.24  # metres covered by the full image
    height: float = 0.30  # camera-to-table distance; homography depth

    @property
    def pitch(self) -> float:
        return self.window / self.resolution


@dataclass(frozen=True)
class SimConfig:
    table_size: float = 0.6
    step_length: float = 0.01
    gripper_radius: float = 0.01
    object_radius: float = 0.03
    success_radius: float = 0.03
    camera: CameraModel = field(default_factory=CameraModel)

    # render intensities and geometry
    background: int = 30
    target_intensity: int = 120
    object_intensity: int = 200
    gripper_intensity: int = 255
    ring_halfwidth: float = 0.004
    tip_center: tuple[float, float] = (0.0, 0.09)  # camera-frame metres; +y is image-down
    tip_radius: float = 0.012

    # scripted expert
    expert_standoff: float = 0.05
    expert_align_tol: float = 0.008
    expert_clearance: float = 0.045
    expert_orbit_radius: float = 0.05
    expert_blend_dist: float = 0.03

    # start-configuration sampling: compact scenes keep the object and the
    # target ring inside the 0.24 m eye-in-hand window, so the task stays
    # observable from a single frame (otherwise every method is capped by
    # aim ambiguity rather than by compounding errors)
    start_object_box: tuple[float, float] = (0.22, 0.38)
    start_target_dist: tuple[float, float] = (0.07, 0.11)
    start_gripper_dist: tuple[float, float] = (0.042, 0.06)
    start_gripper_cone: float = 0.35  # max angle off the push line, radians
    target_margin: float = 0.08
    gripper_margin: float = 0.05

    play_steps: int = 120
    play_waypoint_box: tuple[float, float] = (0.18, 0.42)
    max_demo_steps: int = 400


@dataclass(frozen=True)
class SimWorld:
    gripper: np.ndarray
    obj: np.ndarray
    target: np.ndarray

    def __post_init__(self):
        for name in ("gripper", "obj", "target"):
            v = np.asarray(getattr(self, name), dtype=float).reshape(2).copy()
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SimWorld):
            return NotImplemented
        return (
            np.array_equal(self.gripper, other.gripper)
            and np.array_equal(self.obj, other.obj)
            and np.array_equal(self.target, other.target)
        )


def camera_pose(gripper: np.ndarray, cfg: SimConfig, frame: str) -> RigidTransform:
    """cam_from_world for the camera centered over the gripper."""
    c = np.array([gripper[0], gripper[1], cfg.camera.height])
    t = -_R0.rotate(c)
    return RigidTransform(_R0, t, from_frame=WORLD, to_frame=frame)


def action_world_from_camera(a_cam: np.ndarray) -> np.ndarray:
    """Map a camera-frame planar action (x right, y image-down) to world xy."""
    a = np.asarray(a_cam, dtype=float)
    return np.array([a[0], -a[1]])


def action_camera_from_world(a_world: np.ndarray) -> np.ndarray:
    a = np.asarray(a_world, dtype=float)
    return np.array([a[0], -a[1]])


# ---------------------------------------------------------------------------
# Dynamics
# ---------------------------------------------------------------------------


def world_status(world: SimWorld, cfg: SimConfig) -> str:
    if float(np.linalg.norm(world.obj - world.target)) <= cfg.success_radius:
        return SUCCESS
    for p in (world.gripper, world.obj):
        if p[0] < 0 or p[1] < 0 or p[0] > cfg.table_size or p[1] > cfg.table_size:
            return OUT_OF_BOUNDS
    return RUNNING


def step(world: SimWorld, action: np.ndarray, cfg: SimConfig) -> tuple[SimWorld, str]:
    """Advance one quasi-static step: move the gripper 1 cm, resolve overlap.

    The object translates by the minimal vector that removes gripper/object
    disk penetration, so it never moves farther than the gripper did.
    """
    action = np.asarray(action, dtype=float).reshape(2)
    n = float(np.linalg.norm(action))
    if abs(n - 1.0) > 1e-6:
        raise ValueError(f"action must be unit length, got norm {n}")
    g = world.gripper + cfg.step_length * action
    obj = world.obj
    contact = cfg.gripper_radius + cfg.object_radius
    delta = obj - g
    dist = float(np.linalg.norm(delta))
    if dist < contact:
        if dist < 1e-12:
            direction = action
        else:
            direction = delta / dist
        obj = obj + (contact - dist) * direction
    new = SimWorld(g, obj, world.target)
    return new, world_status(new, cfg)


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------


def render(world: SimWorld, cam_from_world: RigidTransform, cfg: SimConfig) -> np.ndarray:
    """64x64 grayscale view: object disk, target ring, fixed gripper-tip overlay.

    Pixels are shaded by signed distance (one-pixel soft edge). The gripper
    tip is rigidly attached to the camera, so it is drawn at a fixed image
    position regardless of the camera pose.
    """
    cam = cfg.camera
    res = cam.resolution
    pitch = cam.pitch
    R = cam_from_world.rotation.matrix()
    t = cam_from_world.translation
    center = -R.T @ t  # camera center in world
    ex, ey, ez = R[0], R[1], R[2]  # camera axes expressed in world coords

    half = (res - 1) / 2.0
    xs = (np.arange(res) - half) * pitch
    Xc, Yc = np.meshgrid(xs, xs)  # x_cam across columns, y_cam down rows

    img = np.full((res, res), float(cfg.background))
    if abs(ez[2]) > 1e-9:
        ox = center[0] + Xc * ex[0] + Yc * ey[0]
        oy = center[1] + Xc * ex[1] + Yc * ey[1]
        oz = center[2] + Xc * ex[2] + Yc * ey[2]
        s = -oz / ez[2]
        px = ox + s * ez[0]
        py = oy + s * ez[1]
        valid = s > 0

        ring = np.abs(np.hypot(px - world.target[0], py - world.target[1]) - cfg.success_radius)
        a = np.clip(0.5 - (ring - cfg.ring_halfwidth) / pitch, 0.0, 1.0) * valid
        img += a * (cfg.target_intensity - img)

        disk = np.hypot(px - world.obj[0], py - world.obj[1]) - cfg.object_radius
        a = np.clip(0.5 - disk / pitch, 0.0, 1.0) * valid
        img += a * (cfg.object_intensity - img)

    a = gripper_overlay_alpha(cfg)
    img += a * (cfg.gripper_intensity - img)

    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def gripper_overlay_alpha(cfg: SimConfig) -> np.ndarray:
    """Anti-aliased coverage of the fixed gripper-tip overlay, in [0, 1]."""
    cam = cfg.camera
    half = (cam.resolution - 1) / 2.0
    xs = (np.arange(cam.resolution) - half) * cam.pitch
    Xc, Yc = np.meshgrid(xs, xs)
    tip = np.hypot(Xc - cfg.tip_center[0], Yc - cfg.tip_center[1]) - cfg.tip_radius
    return np.clip(0.5 - tip / cam.pitch, 0.0, 1.0)


def gripper_overlay_mask(cfg: SimConfig) -> np.ndarray:
    """Boolean mask of pixels touched by the fixed gripper-tip overlay."""
    return gripper_overlay_alpha(cfg) > 0.0


# ---------------------------------------------------------------------------
# Scripted expert
# ---------------------------------------------------------------------------


def _segment_point_distance(a: np.ndarray, b: np.ndarray, p: np.ndarray) -> float:
    ab = b - a
    denom = float(ab @ ab)
    if denom < 1e-18:
        return float(np.linalg.norm(p - a))
    u = float(np.clip((p - a) @ ab / denom, 0.0, 1.0))
    return float(np.linalg.norm(p - (a + u * ab)))


def expert_policy(world: SimWorld, cfg: SimConfig) -> np.ndarray:
    """Two-phase pushing controller, always unit norm.

    Approach: head for the standoff point behind the object along the
    object-to-target line, orbiting the object when the direct path would
    clip it. Push: drive along that line through the object. The two blend
    near the standoff point.
    """
    o, g, tgt = world.obj, world.gripper, world.target
    to_t = tgt - o
    d_ot = float(np.linalg.norm(to_t))
    if d_ot < 1e-9:
        return np.array([1.0, 0.0])
    u = to_t / d_ot

    rel = g - o
    along = float(rel @ u)
    lat = float(np.linalg.norm(rel - along * u))
    if along < -cfg.object_radius and lat <= cfg.expert_align_tol:
        return u

    standoff = o - cfg.expert_standoff * u
    w = standoff - g
    dw = float(np.linalg.norm(w))
    if dw < 1e-9:
        return u

    if _segment_point_distance(g, standoff, o) < cfg.expert_clearance:
        rn = float(np.linalg.norm(rel))
        if rn < 1e-9:
            return -u
        radial = rel / rn
        tang = np.array([-radial[1], radial[0]])
        if float(tang @ w) < 0:
            tang = -tang
        corr = (cfg.expert_orbit_radius - rn) / cfg.expert_orbit_radius
        a = tang + 1.5 * corr * radial
        return a / float(np.linalg.norm(a))

    alpha = max(0.0, 1.0 - dw / cfg.expert_blend_dist)
    a = (1.0 - alpha) * (w / dw) + alpha * u
    n = float(np.linalg.norm(a))
    if n < 1e-9:
        return u
    return a / n


# ---------------------------------------------------------------------------
# Episodes and datasets
# ---------------------------------------------------------------------------

# A method maps (world, rendered image) to a unit world-frame xy action.
Method = Callable[[SimWorld, np.ndarray], np.ndarray]


@dataclass
class Episode:
    start: SimWorld
    states: list[SimWorld]
    actions: list[np.ndarray]
    images: list[np.ndarray]
    outcome: str
    seed: int | None = None

    @property
    def steps(self) -> int:
        return len(self.actions)


def run_episode(
    start: SimWorld,
    method: Method,
    cfg: SimConfig,
    max_steps: int = 400,
    record_images: bool = True,
    frame_prefix: str = "ep",
) -> Episode:
    world = start
    status = world_status(world, cfg)
    states = [world]
    actions: list[np.ndarray] = []
    images: list[np.ndarray] = []
    if record_images:
        images.append(render(world, camera_pose(world.gripper, cfg, f"{frame_prefix}/0"), cfg))
    step_i = 0
    while status == RUNNING and step_i < max_steps:
        img = images[-1] if record_images else None
        a = np.asarray(method(world, img), dtype=float).reshape(2)
        a = a / float(np.linalg.norm(a))
        world, status = step(world, a, cfg)
        actions.append(a)
        states.append(world)
        if record_images:
            images.append(
                render(world, camera_pose(world.gripper, cfg, f"{frame_prefix}/{step_i + 1}"), cfg)
            )
        step_i += 1
    outcome = status if status != RUNNING else TIMEOUT
    return Episode(start=start, states=states, actions=actions, images=images, outcome=outcome)


def replay(start: SimWorld, actions: list[np.ndarray], cfg: SimConfig) -> list[SimWorld]:
    """Re-simulate a logged action sequence; used by the replay invariant."""
    states = [start]
    world = start
    for a in actions:
        world, _ = step(world, a, cfg)
        states.append(world)
    return states


def _rot2(v: np.ndarray, angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([c * v[0] - s * v[1], s * v[0] + c * v[1]])


def _inside(p: np.ndarray, cfg: SimConfig, margin: float) -> bool:
    return bool(
        p[0] >= margin
        and p[1] >= margin
        and p[0] <= cfg.table_size - margin
        and p[1] <= cfg.table_size - margin
    )


def sample_start(rng: np.random.Generator, cfg: SimConfig) -> SimWorld:
    """Compact solvable scene: object, nearby target, gripper behind-ish."""
    while True:
        obj = rng.uniform(cfg.start_object_box[0], cfg.start_object_box[1], 2)
        theta = rng.uniform(0.0, 2.0 * math.pi)
        d = rng.uniform(*cfg.start_target_dist)
        target = obj + d * np.array([math.cos(theta), math.sin(theta)])
        if not _inside(target, cfg, cfg.target_margin):
            continue
        u = (target - obj) / d
        phi = rng.uniform(-cfg.start_gripper_cone, cfg.start_gripper_cone)
        dist_g = rng.uniform(*cfg.start_gripper_dist)
        gripper = obj - dist_g * _rot2(u, phi)
        if not _inside(gripper, cfg, cfg.gripper_margin):
            continue
        return SimWorld(gripper, obj, target)


def generate_demos(n: int, seed: int, cfg: SimConfig | None = None) -> list[Episode]:
    """Expert demonstrations; a failed demo is a simulator bug and aborts."""
    cfg = cfg or SimConfig()
    episodes = []
    for i in range(n):
        rng = derive_rng(seed, "demo-start", i)
        start = sample_start(rng, cfg)
        ep = run_episode(
            start,
            lambda world, img: expert_policy(world, cfg),
            cfg,
            max_steps=cfg.max_demo_steps,
            frame_prefix=f"demo{i:03d}",
        )
        if ep.outcome != SUCCESS:
            raise RuntimeError(f"expert failed demo {i} ({ep.outcome}); controller bug")
        ep.seed = seed
        episodes.append(ep)
    return episodes


def generate_play(n: int, seed: int, cfg: SimConfig | None = None) -> list[Episode]:
    """Random-walk gripper visiting waypoints, bumping the object at times."""
    cfg = cfg or SimConfig()
    episodes = []
    for i in range(n):
        rng = derive_rng(seed, "play-start", i)
        start = sample_start(rng, cfg)
        world = start
        states = [world]
        actions: list[np.ndarray] = []
        images = [render(world, camera_pose(world.gripper, cfg, f"play{i:03d}/0"), cfg)]
        lo, hi = cfg.play_waypoint_box
        waypoint = rng.uniform(lo, hi, 2)
        for s in range(cfg.play_steps):
            v = waypoint - world.gripper
            if float(np.linalg.norm(v)) < 0.02:
                waypoint = rng.uniform(lo, hi, 2)
                v = waypoint - world.gripper
            a = v / float(np.linalg.norm(v))
            world, _ = step(world, a, cfg)
            actions.append(a)
            states.append(world)
            images.append(render(world, camera_pose(world.gripper, cfg, f"play{i:03d}/{s + 1}"), cfg))
        episodes.append(
            Episode(start=start, states=states, actions=actions, images=images, outcome=TIMEOUT, seed=seed)
        )
    return episodes


@dataclass
class PushDataset:
    """Trajectories plus their rendered images and ground-truth world states.

    images are keyed by image_ref; states by the frame's camera tag, which is
    how the oracle synthesizer finds the world to re-render.
    """

    trajectories: list[Trajectory]
    images: dict[str, np.ndarray]
    states: dict[str, SimWorld]
    cfg: SimConfig


def episodes_to_dataset(
    episodes: list[Episode], cfg: SimConfig, kind: str = "task", prefix: str = "demo"
) -> PushDataset:
    trajectories = []
    images: dict[str, np.ndarray] = {}
    states: dict[str, SimWorld] = {}
    for e_i, ep in enumerate(episodes):
        traj_id = f"{prefix}{e_i:03d}"
        frames = []
        for f_i, (world, img) in enumerate(zip(ep.states, ep.images)):
            ref = f"images/{traj_id}/{f_i:05d}.png"
            tag = camera_frame_tag(traj_id, f_i)
            frames.append(
                Frame(
                    index=f_i,
                    image_ref=ref,
                    cam_from_world=camera_pose(world.gripper, cfg, tag),
                    timestamp=float(f_i),
                    gripper_state=None,
                )
            )
            images[ref] = img
            states[tag] = world
        trajectories.append(
            Trajectory(id=traj_id, frames=tuple(frames), scale=Scale("metric"), kind=kind)
        )
    return PushDataset(trajectories=trajectories, images=images, states=states, cfg=cfg)


def save_dataset(ds: PushDataset, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for traj in ds.trajectories:
        write_trajectory(traj, out / f"{traj.id}.traj.jsonl")
        lines = [json.dumps({"v": 1, "id": traj.id}, separators=(",", ":"))]
        for f in traj.frames:
            w = ds.states[f.cam_from_world.to_frame]
            lines.append(
                json.dumps(
                    {
                        "i": f.index,
                        "g": [w.gripper[0], w.gripper[1]],
                        "o": [w.obj[0], w.obj[1]],
                        "t": [w.target[0], w.target[1]],
                    },
                    separators=(",", ":"),
                )
            )
        (out / f"{traj.id}.states.jsonl").write_text("\n".join(lines) + "\n")
        for f in traj.frames:
            imgio.write_png(ds.images[f.image_ref], out / f.image_ref)


def load_dataset(in_dir, cfg: SimConfig | None = None) -> PushDataset:
    cfg = cfg or SimConfig()
    root = Path(in_dir)
    trajectories = []
    images: dict[str, np.ndarray] = {}
    states: dict[str, SimWorld] = {}
    for traj_path in sorted(root.glob("*.traj.jsonl")):
        traj = read_trajectory(traj_path)
        trajectories.append(traj)
        for f in traj.frames:
            images[f.image_ref] = imgio.read_png(root / f.image_ref)
        states_path = root / f"{traj.id}.states.jsonl"
        if states_path.exists():
            lines = states_path.read_text().splitlines()
            for raw in lines[1:]:
                rec = json.loads(raw)
                states[camera_frame_tag(traj.id, rec["i"])] = SimWorld(
                    np.array(rec["g"]), np.array(rec["o"]), np.array(rec["t"])
                )
    return PushDataset(trajectories=trajectories, images=images, states=states, cfg=cfg)
