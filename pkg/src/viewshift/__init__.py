"""Synthesized off-trajectory views with corrective labels for eye-in-hand
imitation learning, evaluated in a deterministic planar pushing testbed."""

from .geometry import (
    RigidTransform,
    Rotation,
    compose,
    euler_to_rotation,
    inverse,
    relative_pose,
    rotation_to_vector,
    vector_to_rotation,
)
from .trajectory import (
    Action,
    FinetuneTriple,
    Frame,
    Scale,
    Trajectory,
    compute_scale,
    expert_action,
    export_finetune_triples,
    parse_colmap_images,
    read_trajectory,
    write_trajectory,
)
from .augment import (
    AugmentedSample,
    Perturbation,
    PerturbationSpec,
    RngPath,
    augment_trajectory,
    compute_label,
    flip_augment,
    jitter_augment,
    overshoot_fraction,
    sample_perturbation,
)
from .synthesis import (
    HomographyBackend,
    IdentityBackend,
    OracleBackend,
    RemoteBackend,
    SynthRequest,
    SynthesizerId,
)
from .policy import PolicyNet, TrainConfig, gradient_check, init_net, predict, train
from .harness import angle_error, build_ab_plan, k_sweep, offline_eval, run_ab

__version__ = "0.1.0"
