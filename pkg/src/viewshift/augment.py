"""Perturbation sampling, corrective labels, and augmented-dataset assembly.

For a frame t of a posed trajectory, a perturbation is a small rigid offset
of the camera; a synthesizer produces the view from the offset pose, and
the label is the action that carries the perturbed camera to the pose at
frame t+k. The k-step lookahead exists because perturbations can travel
past the next frame (a perturbed view beyond frame t+1 would otherwise get
a label pointing backward, against task progress); labelling against a
farther frame keeps labels pointing forward.

Every random draw derives from (master seed, trajectory id, frame, sample),
so generation is reproducible and independent of execution order.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import IndexOutOfRange, MissingScale, SynthesizerError
from .geometry import (
    RigidTransform,
    Rotation,
    compose,
    euler_to_rotation,
    inverse,
    rotation_to_vector,
)
from .rng import derive_rng, derive_seed
from .synthesis import SynthRequest, SynthesizerId
from .trajectory import (
    Action,
    Scale,
    Trajectory,
    ZERO_DISPLACEMENT_EPS,
    expert_action,
    perturbed_frame_tag,
)

log = logging.getLogger(__name__)

DEG = math.pi / 180.0
DEFAULT_ROTATION_RANGES = (
    (-10 * DEG, 10 * DEG),  # yaw
    (-10 * DEG, 10 * DEG),  # pitch
    (-10 * DEG, 15 * DEG),  # roll
)


@dataclass(frozen=True)
class PerturbationSpec:
    """How to draw camera offsets.

    translation_range is in metres for metric trajectories; for
    reconstruction-scale ones it is a fraction of s, the largest adjacent
    displacement. None picks the defaults: (0.02, 0.04) m or (0.2, 1.0)*s.
    direction_mode 'sphere' draws uniformly on S2; 'in_plane' draws a
    uniform angle in the camera plane orthogonal to plane_normal.
    """

    translation_range: tuple[float, float] | None = None
    direction_mode: str = "sphere"
    plane_normal: tuple[float, float, float] = (0.0, 0.0, 1.0)
    rotation_ranges: tuple[tuple[float, float], ...] | None = None
    samples_per_frame: int = 2
    lookahead_k: int = 3

    def __post_init__(self):
        if self.translation_range is not None:
            lo, hi = self.translation_range
            if not (0 < lo < hi):
                raise ValueError(f"need 0 < lo < hi, got {self.translation_range}")
        if self.direction_mode not in ("sphere", "in_plane"):
            raise ValueError(f"unknown direction_mode {self.direction_mode!r}")
        if self.samples_per_frame < 1:
            raise ValueError("samples_per_frame must be >= 1")
        if self.lookahead_k < 1:
            raise ValueError("lookahead_k must be >= 1")
        if self.rotation_ranges is not None and len(self.rotation_ranges) != 3:
            raise ValueError("rotation_ranges needs (yaw, pitch, roll) bounds")

    def magnitude_bounds(self, scale: Scale | None) -> tuple[float, float]:
        if scale is None:
            raise MissingScale("perturbation sampling needs scale information")
        if scale.metric:
            return self.translation_range or (0.02, 0.04)
        if scale.s is None:
            raise MissingScale("reconstruction trajectory without scale s")
        lo, hi = self.translation_range or (0.2, 1.0)
        return lo * scale.s, hi * scale.s


@dataclass(frozen=True)
class RngPath:
    trajectory_id: str
    frame_index: int
    sample_index: int


@dataclass(frozen=True)
class Perturbation:
    """Sampled camera offset: t_from_tilde maps perturbed-frame points into
    the source camera frame, so its translation is the perturbed camera's
    position seen from the source camera."""

    t_from_tilde: RigidTransform
    source_frame_index: int
    sample_index: int
    rng_path: RngPath


@dataclass
class AugmentedSample:
    image: np.ndarray
    action: Action
    k_used: int
    perturbation: Perturbation
    synthesizer: SynthesizerId


def _plane_basis(normal: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = normal / np.linalg.norm(normal)
    helper = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(n, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(n, e1)
    return e1, e2


def sample_perturbation(
    spec: PerturbationSpec,
    scale: Scale,
    rng_path: RngPath,
    master_seed: int,
    source_frame_tag: str,
) -> Perturbation:
    """Draw one perturbation, deterministic in (master_seed, rng_path).

    Direction is uniform (sphere or in-plane angle), magnitude uniform in
    the resolved range, and the optional rotation part draws yaw/pitch/roll
    independently and uniformly from their ranges.
    """
    lo, hi = spec.magnitude_bounds(scale)
    rng = derive_rng(
        master_seed,
        "perturb",
        rng_path.trajectory_id,
        rng_path.frame_index,
        rng_path.sample_index,
    )
    if spec.direction_mode == "sphere":
        z = rng.uniform(-1.0, 1.0)
        phi = rng.uniform(0.0, 2.0 * math.pi)
        r = math.sqrt(max(0.0, 1.0 - z * z))
        direction = np.array([r * math.cos(phi), r * math.sin(phi), z])
    else:
        e1, e2 = _plane_basis(np.asarray(spec.plane_normal, dtype=float))
        phi = rng.uniform(0.0, 2.0 * math.pi)
        direction = math.cos(phi) * e1 + math.sin(phi) * e2
    magnitude = rng.uniform(lo, hi)

    rotation = Rotation.identity()
    if spec.rotation_ranges is not None:
        ranges = spec.rotation_ranges
        yaw = rng.uniform(*ranges[0])
        pitch = rng.uniform(*ranges[1])
        roll = rng.uniform(*ranges[2])
        rotation = euler_to_rotation(yaw, pitch, roll)

    t_from_tilde = RigidTransform(
        rotation,
        magnitude * direction,
        from_frame=perturbed_frame_tag(
            rng_path.trajectory_id, rng_path.frame_index, rng_path.sample_index
        ),
        to_frame=source_frame_tag,
    )
    return Perturbation(
        t_from_tilde=t_from_tilde,
        source_frame_index=rng_path.frame_index,
        sample_index=rng_path.sample_index,
        rng_path=rng_path,
    )


def compute_label(
    p: Perturbation, traj: Trajectory, k: int, *, six_dof: bool = False
) -> Action:
    """Corrective action: the pose of frame t+k seen from the perturbed camera.

    Chains perturbed<-source, source<-world, world<-frame(t+k). Translation
    is unit-normalized for reconstruction-scale trajectories.
    """
    t = p.source_frame_index
    if t + k >= len(traj.frames):
        raise IndexOutOfRange(
            f"frame {t}+{k} is in the excluded tail of a {len(traj.frames)}-frame trajectory"
        )
    tilde_from_source = inverse(p.t_from_tilde)
    tilde_from_world = compose(tilde_from_source, traj.frames[t].cam_from_world)
    label_tf = compose(tilde_from_world, inverse(traj.frames[t + k].cam_from_world))
    trans = np.asarray(label_tf.translation, dtype=float)
    if not traj.scale.metric:
        n = float(np.linalg.norm(trans))
        if n >= ZERO_DISPLACEMENT_EPS:
            trans = trans / n
    return Action(trans, rotation_to_vector(label_tf.rotation) if six_dof else None)


def overshoot_fraction(samples: list[AugmentedSample], traj: Trajectory) -> float:
    """Fraction of labels pointing against the expert's step at their frame.

    Report-only diagnostic; the pipeline mitigates overshoot via k alone.
    """
    if not samples:
        return 0.0
    backward = 0
    for s in samples:
        expert = expert_action(traj, s.perturbation.source_frame_index)
        if float(s.action.translation @ expert.translation) < 0.0:
            backward += 1
    return backward / len(samples)


def augment_trajectory(
    traj: Trajectory,
    spec: PerturbationSpec,
    synthesizer,
    images: Mapping[str, np.ndarray],
    master_seed: int,
    *,
    six_dof: bool = False,
    on_error: str = "abort",
    workers: int = 1,
) -> list[AugmentedSample]:
    """Perturb, synthesize, and label every eligible frame of a trajectory.

    Frames 0..N-1-k are eligible (the last k frames have no k-step target).
    Output is frame-major, sample-minor, and byte-identical regardless of
    `workers`; synthesis runs in a thread pool when workers > 1.
    """
    if on_error not in ("abort", "skip"):
        raise ValueError(f"on_error must be 'abort' or 'skip', got {on_error!r}")
    k = spec.lookahead_k
    n = len(traj.frames)
    if n < k + 1:
        raise IndexOutOfRange(f"trajectory has {n} frames; needs at least k+1 = {k + 1}")

    jobs = []
    for t in range(0, n - k):
        frame = traj.frames[t]
        for j in range(spec.samples_per_frame):
            path = RngPath(traj.id, t, j)
            p = sample_perturbation(
                spec, traj.scale, path, master_seed, frame.cam_from_world.to_frame
            )
            label = compute_label(p, traj, k, six_dof=six_dof)
            if float(np.linalg.norm(label.translation)) < ZERO_DISPLACEMENT_EPS:
                log.warning("%s frame %d sample %d: zero-norm label dropped", traj.id, t, j)
                continue
            req = SynthRequest(
                image=images[frame.image_ref],
                t_from_tilde=p.t_from_tilde,
                seed=derive_seed(master_seed, "synth", traj.id, t, j),
                cam_from_world=frame.cam_from_world,
            )
            jobs.append((p, label, req))

    def run(job):
        p, label, req = job
        try:
            return synthesizer.synthesize(req), None
        except SynthesizerError as exc:
            exc.provenance.update(
                trajectory=traj.id, frame=p.source_frame_index, sample=p.sample_index
            )
            return None, exc

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(job) for job in jobs]

    out: list[AugmentedSample] = []
    for (p, label, _req), (image, err) in zip(jobs, results):
        if err is not None:
            if on_error == "abort":
                raise err
            log.warning("skipping sample %s: %s", p.rng_path, err)
            continue
        out.append(
            AugmentedSample(
                image=image,
                action=label,
                k_used=k,
                perturbation=p,
                synthesizer=synthesizer.id,
            )
        )
    return out


# ---------------------------------------------------------------------------
# Baseline augmentations
# ---------------------------------------------------------------------------


def flip_augment(image: np.ndarray, action: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mirror the image horizontally and negate the lateral (camera-x)
    action component; forward/vertical components are untouched."""
    flipped = np.ascontiguousarray(image[:, ::-1])
    a = np.asarray(action, dtype=float).copy()
    a[0] = -a[0]
    return flipped, a


def jitter_with(image: np.ndarray, gain: float, bias: float) -> np.ndarray:
    """Intensity jitter with explicit parameters; gain 1 / bias 0 is identity."""
    out = image.astype(float) * gain + bias * 255.0
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def jitter_augment(image: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Uniform gain in [0.8, 1.2] and bias in [-0.1, 0.1] of full scale."""
    gain = rng.uniform(0.8, 1.2)
    bias = rng.uniform(-0.1, 0.1)
    return jitter_with(image, gain, bias)
