"""Offline evaluation, randomized A/B trials, and experiment recipes.

Offline metric: median angle between predicted and ground-truth unit
translations on a held-out split. Online metric: exact success fraction
over sealed A/B trial plans in the simulator, where each trial's start
configuration is drawn before its method assignment so the assignment
cannot leak into scene selection.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .augment import AugmentedSample, PerturbationSpec, augment_trajectory
from .errors import EmptyTestSet, NotUnit, PlanReuse
from .policy import PolicyNet, TrainConfig, predict, train
from .pushsim import (
    PushDataset,
    SimConfig,
    SimWorld,
    action_world_from_camera,
    run_episode,
    sample_start,
)
from .rng import derive_rng
from .trajectory import Trajectory, expert_action

UNIT_TOL = 1e-6


def config_hash(obj) -> str:
    return hashlib.sha256(
        json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")
    ).hexdigest()[:16]


def angle_error(pred: np.ndarray, gt: np.ndarray) -> float:
    """Angle in [0, pi] between two unit vectors."""
    pred = np.asarray(pred, dtype=float)
    gt = np.asarray(gt, dtype=float)
    for name, v in (("pred", pred), ("gt", gt)):
        if abs(float(np.linalg.norm(v)) - 1.0) > UNIT_TOL:
            raise NotUnit(f"{name} has norm {np.linalg.norm(v)}")
    return float(math.acos(np.clip(float(pred @ gt), -1.0, 1.0)))


# ---------------------------------------------------------------------------
# Dataset assembly
# ---------------------------------------------------------------------------


def build_direction_dataset(
    trajectories: Sequence[Trajectory],
    images: Mapping[str, np.ndarray],
    augmented: Sequence[AugmentedSample] = (),
    dims: int = 2,
) -> tuple[np.ndarray, np.ndarray]:
    """(N, H, W) uint8 images and (N, dims) unit camera-frame directions.

    Expert pairs come from consecutive frames; augmented samples contribute
    their synthesized image and corrective label.
    """
    xs: list[np.ndarray] = []
    ys: list[np.ndarray] = []
    for traj in trajectories:
        for i in range(len(traj.frames) - 1):
            a = expert_action(traj, i)
            xs.append(images[traj.frames[i].image_ref])
            ys.append(_unit(a.translation[:dims]))
    for s in augmented:
        xs.append(s.image)
        ys.append(_unit(s.action.translation[:dims]))
    if not xs:
        return np.zeros((0, 0, 0), dtype=np.uint8), np.zeros((0, dims))
    return np.stack(xs), np.stack(ys)


def _unit(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return v / float(np.linalg.norm(v))


# ---------------------------------------------------------------------------
# Offline evaluation
# ---------------------------------------------------------------------------


@dataclass
class OfflineReport:
    method: str
    median_angle_error: float
    n_test: int
    n_train: int
    seed: int
    extras: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "method": self.method,
            "median_angle_error": self.median_angle_error,
            "n_test": self.n_test,
            "n_train": self.n_train,
            "seed": self.seed,
            **self.extras,
        }


def offline_eval(
    net: PolicyNet,
    test_images: np.ndarray,
    test_actions: np.ndarray,
    method: str = "policy",
    n_train: int = 0,
    seed: int = 0,
) -> OfflineReport:
    if len(test_images) == 0:
        raise EmptyTestSet("offline evaluation needs a non-empty test set")
    errors = [
        angle_error(predict(net, img), _unit(act))
        for img, act in zip(test_images, test_actions)
    ]
    return OfflineReport(
        method=method,
        median_angle_error=float(np.median(errors)),
        n_test=len(errors),
        n_train=n_train,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Online A/B protocol
# ---------------------------------------------------------------------------


@dataclass
class ABTrialPlan:
    """Sealed list of (start configuration, method) pairs.

    Start configurations are drawn from one stream and method assignments
    from an independent stream, strictly after the trial's start is fixed;
    `draws` records that order for auditing. Executable exactly once.
    """

    methods: tuple[str, ...]
    trials: list[dict]
    draws: list[dict]
    seed: int
    executed: bool = False


def build_ab_plan(
    methods: Sequence[str],
    trials_per_method: int,
    seed: int,
    cfg: SimConfig,
) -> ABTrialPlan:
    start_rng = derive_rng(seed, "ab-starts")
    assign_rng = derive_rng(seed, "ab-assign")
    remaining = {m: trials_per_method for m in methods}
    trials: list[dict] = []
    draws: list[dict] = []
    total = trials_per_method * len(methods)
    for i in range(total):
        world = sample_start(start_rng, cfg)
        draws.append({"trial": i, "draw": "start", "stream": "ab-starts"})
        pool = [m for m in methods if remaining[m] > 0]
        method = pool[int(assign_rng.integers(len(pool)))]
        draws.append({"trial": i, "draw": "method", "stream": "ab-assign"})
        remaining[method] -= 1
        trials.append(
            {
                "trial": i,
                "method": method,
                "start": {
                    "gripper": world.gripper.tolist(),
                    "obj": world.obj.tolist(),
                    "target": world.target.tolist(),
                },
            }
        )
    return ABTrialPlan(methods=tuple(methods), trials=trials, draws=draws, seed=seed)


@dataclass
class OnlineReport:
    success_rate: dict[str, float]
    outcomes: list[dict]
    config_hash: str
    seed: int

    def to_json(self) -> dict:
        return {
            "success_rate": self.success_rate,
            "outcomes": self.outcomes,
            "config_hash": self.config_hash,
            "seed": self.seed,
        }


def run_ab(
    plan: ABTrialPlan,
    methods: Mapping[str, Callable[[SimWorld, np.ndarray], np.ndarray]],
    cfg: SimConfig,
    max_steps: int = 400,
    record_images: bool = True,
) -> OnlineReport:
    """Execute a sealed plan; each trial runs its assigned method once."""
    if plan.executed:
        raise PlanReuse("this plan has already been executed")
    plan.executed = True
    outcomes: list[dict] = []
    counts = {m: 0 for m in plan.methods}
    wins = {m: 0 for m in plan.methods}
    for trial in plan.trials:
        start = SimWorld(
            np.array(trial["start"]["gripper"]),
            np.array(trial["start"]["obj"]),
            np.array(trial["start"]["target"]),
        )
        ep = run_episode(
            start,
            methods[trial["method"]],
            cfg,
            max_steps=max_steps,
            record_images=record_images,
        )
        counts[trial["method"]] += 1
        wins[trial["method"]] += int(ep.outcome == "success")
        outcomes.append(
            {
                "trial": trial["trial"],
                "method": trial["method"],
                "outcome": ep.outcome,
                "steps": ep.steps,
                "start": trial["start"],
                # full-precision action log so the episode replays exactly
                "actions": [[float(a[0]), float(a[1])] for a in ep.actions],
            }
        )
    rates = {m: wins[m] / counts[m] if counts[m] else 0.0 for m in plan.methods}
    meta = {"methods": list(plan.methods), "seed": plan.seed, "max_steps": max_steps}
    return OnlineReport(
        success_rate=rates, outcomes=outcomes, config_hash=config_hash(meta), seed=plan.seed
    )


def policy_method(net: PolicyNet) -> Callable[[SimWorld, np.ndarray], np.ndarray]:
    """Adapter: predict a camera-frame direction, execute it in the world."""

    def method(world: SimWorld, image: np.ndarray) -> np.ndarray:
        a_cam = predict(net, image)
        return _unit(action_world_from_camera(a_cam[:2]))

    return method


# ---------------------------------------------------------------------------
# Experiment recipes
# ---------------------------------------------------------------------------


def train_policy_on(
    ds: PushDataset,
    train_trajs: Sequence[Trajectory],
    augmented: Sequence[AugmentedSample],
    cfg: TrainConfig,
) -> tuple[PolicyNet, list[float]]:
    images, actions = build_direction_dataset(train_trajs, ds.images, augmented)
    return train(images, actions, cfg)


def augment_task_data(
    ds: PushDataset,
    train_trajs: Sequence[Trajectory],
    spec: PerturbationSpec,
    synthesizer,
    master_seed: int,
    workers: int = 1,
) -> list[AugmentedSample]:
    out: list[AugmentedSample] = []
    for traj in train_trajs:
        out.extend(
            augment_trajectory(
                traj, spec, synthesizer, ds.images, master_seed, workers=workers
            )
        )
    return out


def k_sweep(
    ds: PushDataset,
    train_trajs: Sequence[Trajectory],
    test_images: np.ndarray,
    test_actions: np.ndarray,
    ks: Sequence[int],
    spec: PerturbationSpec,
    synthesizer,
    train_cfg: TrainConfig,
    master_seed: int,
) -> list[dict]:
    """Offline error as a function of the lookahead k, same seeds per k."""
    from dataclasses import replace

    rows = []
    for k in ks:
        spec_k = replace(spec, lookahead_k=k)
        augmented = augment_task_data(ds, train_trajs, spec_k, synthesizer, master_seed)
        net, _ = train_policy_on(ds, train_trajs, augmented, train_cfg)
        report = offline_eval(
            net, test_images, test_actions, method=f"k={k}", seed=train_cfg.seed
        )
        rows.append(
            {
                "k": k,
                "median_angle_error": report.median_angle_error,
                "n_aug": len(augmented),
                "seed": train_cfg.seed,
            }
        )
    return rows
