"""End-to-end miniature of the data-creation pipeline.

Generates a handful of expert demos, synthesizes perturbed views with
corrective labels via the oracle backend, trains behavior cloning with and
without the augmented data, and compares them offline (median angle error)
and online (success over A/B trials). Numbers here are a quick sketch; the
full comparison lives in tests/test_acceptance.py.

Run:  python demos/04_augment_train_evaluate.py   (~2-3 minutes)
"""

import numpy as np

from viewshift.augment import PerturbationSpec
from viewshift.harness import (
    augment_task_data,
    build_ab_plan,
    build_direction_dataset,
    offline_eval,
    policy_method,
    run_ab,
    train_policy_on,
)
from viewshift.policy import TrainConfig
from viewshift.pushsim import SimConfig, episodes_to_dataset, generate_demos
from viewshift.synthesis import OracleBackend

SEED = 11
cfg = SimConfig()

print("generating 8 training demos and 6 held-out test demos ...")
train_ds = episodes_to_dataset(generate_demos(8, seed=SEED, cfg=cfg), cfg)
test_ds = episodes_to_dataset(generate_demos(6, seed=SEED + 500, cfg=cfg), cfg, prefix="test")
test_imgs, test_acts = build_direction_dataset(test_ds.trajectories, test_ds.images)

spec = PerturbationSpec(
    direction_mode="in_plane", translation_range=(0.006, 0.03), samples_per_frame=4, lookahead_k=3
)
oracle = OracleBackend(train_ds.states, cfg)
augmented = augment_task_data(train_ds, train_ds.trajectories, spec, oracle, master_seed=SEED)
n_expert = sum(len(t.frames) - 1 for t in train_ds.trajectories)
print(f"dataset: {n_expert} expert frames + {len(augmented)} synthesized samples")

tc = TrainConfig(epochs=120, batch_size=32, seed=SEED)
print("training behavior cloning ...")
bc, _ = train_policy_on(train_ds, train_ds.trajectories, [], tc)
print("training with augmentation ...")
dmd, _ = train_policy_on(train_ds, train_ds.trajectories, augmented, tc)

off_bc = offline_eval(bc, test_imgs, test_acts, method="bc")
off_dmd = offline_eval(dmd, test_imgs, test_acts, method="augmented")
print(f"\noffline median angle error: bc={off_bc.median_angle_error:.3f} rad, "
      f"augmented={off_dmd.median_angle_error:.3f} rad")

plan = build_ab_plan(["bc", "augmented"], 20, seed=SEED + 1, cfg=cfg)
report = run_ab(plan, {"bc": policy_method(bc), "augmented": policy_method(dmd)}, cfg)
print("online success over 20 A/B trials each:")
for method, rate in sorted(report.success_rate.items()):
    print(f"  {method}: {rate:.0%}")
