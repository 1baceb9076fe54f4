"""Cross-component conformance: the primary pipeline's remote client against
this stub, compared with the primary's local backends."""

import numpy as np
import pytest

from synth_stub import StubConfig, StubServer

from viewshift.augment import PerturbationSpec
from viewshift.harness import augment_task_data
from viewshift.pushsim import SimConfig, episodes_to_dataset, generate_demos
from viewshift.rng import derive_rng
from viewshift.synthesis import (
    HomographyBackend,
    IdentityBackend,
    RemoteBackend,
    SynthRequest,
)
from viewshift.geometry import RigidTransform, Rotation
from viewshift.trajectory import camera_frame_tag, perturbed_frame_tag

CFG = SimConfig()


@pytest.fixture(scope="module")
def demo_dataset():
    episodes = generate_demos(2, seed=77, cfg=CFG)
    return episodes_to_dataset(episodes, CFG)


@pytest.fixture(scope="module")
def identity_server():
    srv = StubServer(StubConfig(mode="identity", port=0)).start()
    yield srv
    srv.stop()


@pytest.fixture(scope="module")
def homography_server():
    srv = StubServer(
        StubConfig(mode="homography", port=0, depth=CFG.camera.height, pitch=CFG.camera.pitch)
    ).start()
    yield srv
    srv.stop()


class TestIdentityConformance:
    def test_full_augment_run_matches_local_identity_backend(self, demo_dataset, identity_server):
        spec = PerturbationSpec(direction_mode="in_plane", samples_per_frame=2, lookahead_k=3)
        remote = RemoteBackend(identity_server.endpoint)
        local = IdentityBackend()
        via_remote = augment_task_data(
            demo_dataset, demo_dataset.trajectories, spec, remote, master_seed=42, workers=4
        )
        via_local = augment_task_data(
            demo_dataset, demo_dataset.trajectories, spec, local, master_seed=42
        )
        assert len(via_remote) == len(via_local) > 0
        for a, b in zip(via_remote, via_local):
            assert np.array_equal(a.image, b.image)  # byte-identical
            assert np.array_equal(a.action.translation, b.action.translation)
            assert a.perturbation.t_from_tilde == b.perturbation.t_from_tilde
            assert a.k_used == b.k_used


class TestHomographyConformance:
    def test_twenty_fixtures_within_one_intensity_level(self, demo_dataset, homography_server):
        remote = RemoteBackend(homography_server.endpoint)
        local = HomographyBackend(CFG)
        rng = derive_rng(123, "conformance")
        refs = sorted(demo_dataset.images)
        checked = 0
        for i in range(20):
            ref = refs[int(rng.integers(len(refs)))]
            image = demo_dataset.images[ref]
            delta = RigidTransform(
                Rotation.identity(),
                [rng.uniform(-0.03, 0.03), rng.uniform(-0.03, 0.03), 0.0],
                from_frame=perturbed_frame_tag("fx", i, 0),
                to_frame=camera_frame_tag("fx", i),
            )
            req = SynthRequest(image=image, t_from_tilde=delta, seed=i)
            out_remote = remote.synthesize(req)
            out_local = local.synthesize(req)
            assert np.max(np.abs(out_remote.astype(int) - out_local.astype(int))) <= 1
            checked += 1
        assert checked == 20
