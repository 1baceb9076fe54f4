import io
import math

import numpy as np
import pytest

from viewshift.errors import (
    DegenerateTrajectory,
    DuplicateImageName,
    IndexOutOfRange,
    ParseError,
    VersionMismatch,
    ZeroAction,
)
from viewshift.geometry import WORLD, RigidTransform, Rotation, compose, vector_to_rotation
from viewshift.trajectory import (
    Frame,
    Scale,
    Trajectory,
    camera_frame_tag,
    compute_scale,
    expert_action,
    export_finetune_triples,
    parse_colmap_images,
    read_trajectory,
    write_colmap_images,
    write_trajectory,
)

from oracle_helpers import homogeneous, random_rigid, rodrigues


def make_frame(traj_id, i, translation, rotation=None, **kw):
    pose = RigidTransform(
        rotation or Rotation.identity(),
        np.asarray(translation, float),
        from_frame=WORLD,
        to_frame=camera_frame_tag(traj_id, i),
    )
    return Frame(index=i, image_ref=f"images/{traj_id}/{i:05d}.png", cam_from_world=pose, **kw)


def line_trajectory(xs, traj_id="line", scale=None):
    frames = [make_frame(traj_id, i, [-x, 0, 0]) for i, x in enumerate(xs)]
    return Trajectory(
        id=traj_id,
        frames=tuple(frames),
        scale=scale or Scale("reconstruction", s=max(abs(b - a) for a, b in zip(xs, xs[1:]))),
    )


class TestColmapParser:
    def test_identity_record(self):
        text = "# comment\n1 1 0 0 0 0 0 0 1 f001.png\n\n"
        [(name, pose)] = parse_colmap_images(text)
        assert name == "f001.png"
        assert pose.rotation == Rotation.identity()
        assert np.allclose(pose.translation, 0.0)
        assert pose.from_frame == WORLD and pose.to_frame == "f001.png"

    def test_yaw_quaternion_record(self):
        text = "1 0.7071068 0 0 0.7071068 1 0 0 1 f002.png\n\n"
        [(_, pose)] = parse_colmap_images(text)
        assert abs(pose.rotation.w - math.sqrt(0.5)) < 1e-6
        assert abs(pose.rotation.z - math.sqrt(0.5)) < 1e-6
        assert np.allclose(pose.translation, [1, 0, 0])

    def test_points_lines_skipped_even_when_nonempty(self):
        text = (
            "1 1 0 0 0 0 0 0 1 a.png\n"
            "1.0 2.0 -1 3.0 4.0 7\n"
            "2 1 0 0 0 1 2 3 1 b.png\n"
            "\n"
        )
        records = parse_colmap_images(text)
        assert [name for name, _ in records] == ["a.png", "b.png"]

    def test_ordering_preserved(self):
        text = "9 1 0 0 0 0 0 0 1 z.png\n\n1 1 0 0 0 0 0 0 1 a.png\n\n"
        records = parse_colmap_images(text)
        assert [name for name, _ in records] == ["z.png", "a.png"]

    def test_malformed_field_reports_line(self):
        text = "# header\n1 1 0 0 0 0 0 0 1 ok.png\n\n2 nope 0 0 0 0 0 0 1 bad.png\n\n"
        with pytest.raises(ParseError) as err:
            parse_colmap_images(text)
        assert err.value.line == 4

    def test_short_record_reports_line(self):
        with pytest.raises(ParseError) as err:
            parse_colmap_images("1 1 0 0 0 0 0 1 x.png\n")
        assert err.value.line == 1

    def test_duplicate_image_name(self):
        text = "1 1 0 0 0 0 0 0 1 same.png\n\n2 1 0 0 0 1 0 0 1 same.png\n\n"
        with pytest.raises(DuplicateImageName):
            parse_colmap_images(text)

    def test_quaternion_normalized_on_ingest(self):
        text = "1 2 0 0 0 0 0 0 1 big.png\n\n"
        [(_, pose)] = parse_colmap_images(text)
        assert pose.rotation == Rotation.identity()

    def test_world_from_camera_flag_inverts(self):
        text = "1 1 0 0 0 5 0 0 1 f.png\n\n"
        [(_, cam_from_world)] = parse_colmap_images(text, world_from_camera=True)
        assert np.allclose(cam_from_world.translation, [-5, 0, 0])

    def test_round_trip_poses_within_1e9(self):
        rng = np.random.default_rng(21)
        records = []
        for i in range(10):
            tf, _ = random_rigid(rng, from_frame=WORLD, to_frame=f"img{i}.png")
            records.append((f"img{i}.png", tf))
        buf = io.StringIO()
        write_colmap_images(records, buf)
        parsed = parse_colmap_images(buf.getvalue())
        assert len(parsed) == 10
        for (name_a, tf_a), (name_b, tf_b) in zip(records, parsed):
            assert name_a == name_b
            assert np.max(np.abs(tf_a.matrix() - tf_b.matrix())) < 1e-9

    def test_simulator_pose_fixture_round_trips_within_1e6(self):
        # ground-truth simulator poses written as a COLMAP fixture and read back
        from viewshift.pushsim import SimConfig, episodes_to_dataset, generate_demos

        cfg = SimConfig()
        ds = episodes_to_dataset(generate_demos(1, seed=41, cfg=cfg), cfg)
        traj = ds.trajectories[0]
        records = [(f.image_ref, f.cam_from_world) for f in traj.frames[:10]]
        buf = io.StringIO()
        write_colmap_images(records, buf)
        parsed = parse_colmap_images(buf.getvalue())
        for (_, truth), (_, back) in zip(records, parsed):
            assert np.max(np.abs(truth.matrix() - back.matrix())) < 1e-6


class TestNativeFormat:
    def test_minimal_round_trip(self, tmp_path):
        traj = line_trajectory([0.0, 1.0])
        path = tmp_path / "t.traj.jsonl"
        write_trajectory(traj, path)
        back = read_trajectory(path)
        assert back == traj

    def test_gripper_annotations_round_trip(self, tmp_path):
        frames = (
            make_frame("g", 0, [0, 0, 0], gripper_state="open", timestamp=0.0),
            make_frame("g", 1, [1, 0, 0], gripper_state="closed", timestamp=0.5),
        )
        traj = Trajectory(id="g", frames=frames, scale=Scale("metric"), kind="task")
        path = tmp_path / "g.traj.jsonl"
        write_trajectory(traj, path)
        assert read_trajectory(path) == traj

    def test_long_random_trajectory_round_trip(self, tmp_path):
        rng = np.random.default_rng(22)
        frames = []
        for i in range(200):
            tf, _ = random_rigid(rng, from_frame=WORLD, to_frame=camera_frame_tag("long", i))
            frames.append(
                Frame(index=i, image_ref=f"images/long/{i:05d}.png", cam_from_world=tf)
            )
        traj = Trajectory(id="long", frames=tuple(frames), scale=Scale("metric"), kind="play")
        path = tmp_path / "long.traj.jsonl"
        write_trajectory(traj, path)
        assert read_trajectory(path) == traj

    def test_version_mismatch(self, tmp_path):
        path = tmp_path / "v.traj.jsonl"
        path.write_text('{"v":99,"id":"x","scale":{"kind":"metric","s":null},"kind":"task"}\n')
        with pytest.raises(VersionMismatch):
            read_trajectory(path)

    def test_bad_frame_line_number(self, tmp_path):
        path = tmp_path / "bad.traj.jsonl"
        path.write_text(
            '{"v":1,"id":"x","scale":{"kind":"metric","s":null},"kind":"task"}\n'
            '{"i":0,"img":"a.png","q":[1,0,0,0],"t":[0,0,0],"ts":null,"grip":null}\n'
            "not json\n"
        )
        with pytest.raises(ParseError) as err:
            read_trajectory(path)
        assert err.value.line == 3

    def test_zero_displacement_frames_dropped_at_ingest(self, tmp_path):
        traj = line_trajectory([0.0, 1.0, 1.0 + 1e-12, 2.0], scale=Scale("metric"))
        path = tmp_path / "dup.traj.jsonl"
        write_trajectory(traj, path)
        back = read_trajectory(path)
        assert [f.index for f in back.frames] == [0, 1, 3]


class TestComputeScale:
    def test_arithmetic(self):
        traj = line_trajectory([0.0, 1.0, 3.0])
        assert compute_scale(traj) == pytest.approx(2.0, abs=1e-12)

    def test_degenerate(self):
        frames = (make_frame("d", 0, [0, 0, 0]), make_frame("d", 1, [0, 0, 0]))
        traj = Trajectory(id="d", frames=frames, scale=Scale("metric"))
        with pytest.raises(DegenerateTrajectory):
            compute_scale(traj)

    def test_matches_brute_force_scan(self):
        rng = np.random.default_rng(23)
        centers = np.cumsum(rng.uniform(-0.1, 0.1, size=(50, 3)), axis=0)
        frames = tuple(make_frame("s", i, -c) for i, c in enumerate(centers))
        traj = Trajectory(id="s", frames=frames, scale=Scale("metric"))
        brute = max(
            float(np.linalg.norm(centers[i + 1] - centers[i])) for i in range(len(centers) - 1)
        )
        assert compute_scale(traj) == pytest.approx(brute, abs=1e-12)

    def test_invariant_under_global_rigid_transform(self):
        rng = np.random.default_rng(24)
        centers = np.cumsum(rng.uniform(-0.1, 0.1, size=(20, 3)), axis=0)
        frames = tuple(make_frame("a", i, -c) for i, c in enumerate(centers))
        traj = Trajectory(id="a", frames=frames, scale=Scale("metric"))
        g, _ = random_rigid(rng, from_frame="neworld", to_frame=WORLD)
        moved = tuple(
            Frame(
                index=f.index,
                image_ref=f.image_ref,
                cam_from_world=compose(f.cam_from_world, g),
            )
            for f in traj.frames
        )
        # retag base frames so the moved trajectory is self-consistent
        moved_traj = Trajectory(id="a", frames=moved, scale=Scale("metric"))
        assert compute_scale(moved_traj) == pytest.approx(compute_scale(traj), abs=1e-9)


class TestExpertAction:
    def test_unit_direction_for_reconstruction_scale(self):
        frames = (make_frame("u", 0, [0, 0, 0]), make_frame("u", 1, [0, -0.5, 0]))
        traj = Trajectory(id="u", frames=frames, scale=Scale("reconstruction", 0.5))
        a = expert_action(traj, 0)
        assert np.allclose(a.translation, [0, 1, 0], atol=1e-12)

    def test_metric_magnitude_preserved(self):
        frames = (make_frame("m", 0, [0, 0, 0]), make_frame("m", 1, [-0.5, 0, 0]))
        traj = Trajectory(id="m", frames=frames, scale=Scale("metric"))
        a = expert_action(traj, 0)
        assert np.allclose(a.translation, [0.5, 0, 0])

    def test_zero_displacement_raises(self):
        frames = (make_frame("z", 0, [0, 0, 0]), make_frame("z", 1, [0, 0, 0]))
        traj = Trajectory(id="z", frames=frames, scale=Scale("metric"))
        with pytest.raises(ZeroAction):
            expert_action(traj, 0)

    def test_index_out_of_range(self):
        traj = line_trajectory([0.0, 1.0])
        with pytest.raises(IndexOutOfRange):
            expert_action(traj, 1)

    def test_six_dof_matches_matrix_oracle(self):
        rng = np.random.default_rng(25)
        for _ in range(50):
            a, ma = random_rigid(rng, from_frame=WORLD, to_frame="cam0")
            b, mb = random_rigid(rng, from_frame=WORLD, to_frame="cam1")
            frames = (
                Frame(index=0, image_ref="0.png", cam_from_world=a),
                Frame(index=1, image_ref="1.png", cam_from_world=b),
            )
            traj = Trajectory(id="r", frames=frames, scale=Scale("metric"))
            act = expert_action(traj, 0, six_dof=True)
            rel = ma @ np.linalg.inv(mb)
            assert np.max(np.abs(act.translation - rel[:3, 3])) < 1e-9
            back = vector_to_rotation(act.rotation).matrix()
            assert np.max(np.abs(back - rel[:3, :3])) < 1e-9

    def test_always_unit_norm_on_random_reconstruction_data(self):
        rng = np.random.default_rng(26)
        centers = np.cumsum(rng.uniform(-0.2, 0.2, size=(30, 3)), axis=0)
        frames = tuple(make_frame("n", i, -c) for i, c in enumerate(centers))
        traj = Trajectory(id="n", frames=frames, scale=Scale("reconstruction", 1.0))
        for i in range(len(traj.frames) - 1):
            a = expert_action(traj, i)
            assert abs(np.linalg.norm(a.translation) - 1.0) < 1e-9


class TestFinetuneTriples:
    def test_two_frame_trajectory(self):
        traj = line_trajectory([0.0, 1.0])
        [triple] = export_finetune_triples(traj, 1, seed=0)
        refs = {triple.image_a_ref, triple.image_b_ref}
        assert refs == {traj.frames[0].image_ref, traj.frames[1].image_ref}
        assert abs(abs(triple.a_from_b.translation[0]) - 1.0) < 1e-12

    def test_deterministic_under_seed(self):
        traj = line_trajectory(list(np.linspace(0, 5, 20)))
        a = export_finetune_triples(traj, 30, seed=7)
        b = export_finetune_triples(traj, 30, seed=7)
        assert [(x.image_a_ref, x.image_b_ref) for x in a] == [
            (x.image_a_ref, x.image_b_ref) for x in b
        ]
        assert all(np.array_equal(x.a_from_b.matrix(), y.a_from_b.matrix()) for x, y in zip(a, b))

    def test_no_duplicate_pairs_within_call(self):
        traj = line_trajectory(list(np.linspace(0, 5, 10)))
        triples = export_finetune_triples(traj, 60, seed=3)
        pairs = [(t.image_a_ref, t.image_b_ref) for t in triples]
        assert len(set(pairs)) == len(pairs)
        assert all(a != b for a, b in pairs)

    def test_transforms_match_oracle_and_distribution_uniform(self):
        rng = np.random.default_rng(27)
        mats = {}
        frames = []
        for i in range(50):
            tf, m = random_rigid(rng, from_frame=WORLD, to_frame=camera_frame_tag("c", i))
            frames.append(Frame(index=i, image_ref=f"{i}.png", cam_from_world=tf))
            mats[f"{i}.png"] = m
        traj = Trajectory(id="c", frames=tuple(frames), scale=Scale("metric"))

        counts = np.zeros((50, 50))
        for seed in range(50):
            for t in export_finetune_triples(traj, 500, seed=seed):
                ia = int(t.image_a_ref.split(".")[0])
                ib = int(t.image_b_ref.split(".")[0])
                counts[ia, ib] += 1
                expected = mats[t.image_a_ref] @ np.linalg.inv(mats[t.image_b_ref])
                assert np.max(np.abs(t.a_from_b.matrix() - expected)) < 1e-9

        # chi-square against uniform over the 2450 ordered pairs at p=0.01
        from scipy.stats import chi2

        off_diag = ~np.eye(50, dtype=bool)
        observed = counts[off_diag]
        expected_count = observed.sum() / observed.size
        stat = float(((observed - expected_count) ** 2 / expected_count).sum())
        assert stat < chi2.ppf(0.99, observed.size - 1)
