"""Tour of the rigid-transform algebra and the corrective-label chain.

Run:  python demos/01_pose_algebra.py
"""

import numpy as np

from viewshift.geometry import (
    RigidTransform,
    Rotation,
    compose,
    euler_to_rotation,
    inverse,
    relative_pose,
    rotation_to_vector,
)

# Transforms carry explicit frame tags: a_from_b maps points expressed in
# frame b into frame a. Composition checks the inner tags, which catches
# the classic "which way does T go" mistake at runtime.
cam0 = RigidTransform(Rotation.identity(), [0.0, 0.0, 0.0], from_frame="world", to_frame="cam0")
cam1 = RigidTransform(
    euler_to_rotation(np.pi / 8, 0, 0), [-0.05, 0.0, 0.0], from_frame="world", to_frame="cam1"
)

rel = relative_pose(cam0, cam1)
print("cam0_from_cam1 =")
print(np.array_str(rel.matrix(), precision=4, suppress_small=True))
print("frames:", rel.to_frame, "<-", rel.from_frame)

try:
    compose(cam0, cam1)  # world-from-? composed with world-from-?: illegal
except Exception as exc:
    print("\nframe check works:", exc)

# Round trips
print("\ncompose(rel, inverse(rel)) ~ identity:")
print(np.array_str(compose(rel, inverse(rel)).matrix(), precision=4, suppress_small=True))

# The corrective-label chain: a camera at frame t is displaced by delta
# (perturbed camera pose expressed in frame t). The label for the perturbed
# view is the pose of frame t+k seen from the perturbed camera:
#   label = inverse(delta) * (t from world) * inverse(t+k from world)
t_from_world = cam0
tpk_from_world = RigidTransform(
    Rotation.identity(), [-0.03, 0.0, 0.0], from_frame="world", to_frame="cam3"
)
delta = RigidTransform(
    Rotation.identity(), [0.045, 0.0, 0.0], from_frame="cam0~p", to_frame="cam0"
)
label = compose(compose(inverse(delta), t_from_world), inverse(tpk_from_world))
print("\nperturbed camera sits 4.5 cm ahead; frame t+3 sits 3 cm ahead")
print("label translation (camera frame):", label.translation)
print("-> negative x: the corrective action points back toward the path")

# Axis-angle round trip
r = euler_to_rotation(0.3, -0.2, 0.1)
v = rotation_to_vector(r)
print("\nrotation vector:", v, " magnitude:", np.linalg.norm(v))
