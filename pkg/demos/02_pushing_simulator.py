"""Watch the scripted expert solve pushing episodes; dump a contact sheet.

Run:  python demos/02_pushing_simulator.py
Writes demo_out/expert_contact_sheet.png
"""

from pathlib import Path

import numpy as np

from viewshift.imgio import write_png
from viewshift.pushsim import (
    SimConfig,
    camera_pose,
    expert_policy,
    render,
    run_episode,
    sample_start,
)
from viewshift.rng import derive_rng

cfg = SimConfig()

# a handful of seeded episodes
outcomes = []
for i in range(20):
    rng = derive_rng(2024, "demo-tour", i)
    start = sample_start(rng, cfg)
    ep = run_episode(start, lambda w, img: expert_policy(w, cfg), cfg, record_images=False)
    outcomes.append((ep.outcome, ep.steps))
print("outcome, steps for 20 expert episodes:")
for o in outcomes:
    print("  ", o)

# re-run one with images and save a horizontal contact sheet
rng = derive_rng(2024, "demo-tour", 0)
ep = run_episode(sample_start(rng, cfg), lambda w, img: expert_policy(w, cfg), cfg)
stride = max(1, len(ep.images) // 8)
frames = ep.images[::stride][:8]
sheet = np.concatenate(frames, axis=1)
out = Path("demo_out")
write_png(sheet, out / "expert_contact_sheet.png")
print(f"\nwrote {out / 'expert_contact_sheet.png'} ({len(frames)} frames)")

# what the policy sees: the bright disk is the gripper tip (fixed, camera
# rides the gripper), the grey disk is the object, the ring is the target
chars = " .:-=+*#%@"
img = ep.images[len(ep.images) // 2]
print("\nmid-episode eye-in-hand view:")
for r in range(0, 64, 3):
    print("".join(chars[min(9, img[r, c] // 26)] for c in range(0, 64, 2)))
