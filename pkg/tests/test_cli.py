import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from viewshift.cli import load_augmented, load_config, main
from viewshift.errors import ConfigError
from viewshift.harness import build_direction_dataset
from viewshift.pushsim import load_dataset


def tree_hash(root: Path, include_provenance: bool = False) -> dict:
    # resolved.config.json records the invocation (out dir, worker count),
    # so runs that differ only in those still produce identical data files
    out = {}
    for p in sorted(root.rglob("*")):
        if p.is_file():
            if p.name == "resolved.config.json" and not include_provenance:
                continue
            out[str(p.relative_to(root))] = hashlib.sha256(p.read_bytes()).hexdigest()
    return out


@pytest.fixture
def fast_config(tmp_path):
    cfg = {
        "train": {"epochs": 3, "batch_size": 16},
        "perturbation": {"samples_per_frame": 2, "translation_range": [0.005, 0.02]},
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return str(path)


def run_cli(*argv):
    return main([str(a) for a in argv])


class TestDeterminism:
    def test_gen_demos_byte_identical(self, tmp_path):
        for sub in ("a", "b"):
            assert run_cli("gen-demos", "--n", 2, "--seed", 7, "--out", tmp_path / sub) == 0
        assert tree_hash(tmp_path / "a") == tree_hash(tmp_path / "b")

    def test_augment_byte_identical_across_workers(self, tmp_path, fast_config):
        run_cli("gen-demos", "--n", 2, "--seed", 7, "--out", tmp_path / "d")
        for sub, workers in (("w1", 1), ("w4", 4)):
            assert (
                run_cli(
                    "augment",
                    "--config",
                    fast_config,
                    "--data",
                    tmp_path / "d" / "demos",
                    "--backend",
                    "oracle",
                    "--workers",
                    workers,
                    "--seed",
                    7,
                    "--out",
                    tmp_path / sub,
                )
                == 0
            )
        assert tree_hash(tmp_path / "w1") == tree_hash(tmp_path / "w4")

    def test_train_and_eval_online_byte_identical(self, tmp_path, fast_config):
        run_cli("gen-demos", "--n", 2, "--seed", 7, "--out", tmp_path / "d")
        for sub in ("t1", "t2"):
            assert (
                run_cli(
                    "train",
                    "--config",
                    fast_config,
                    "--data",
                    tmp_path / "d" / "demos",
                    "--seed",
                    7,
                    "--out",
                    tmp_path / sub,
                )
                == 0
            )
        assert tree_hash(tmp_path / "t1") == tree_hash(tmp_path / "t2")
        for sub in ("e1", "e2"):
            assert (
                run_cli(
                    "eval-online",
                    "--config",
                    fast_config,
                    "--policy",
                    f"p={tmp_path / 't1' / 'policy.ckpt'}",
                    "--trials",
                    2,
                    "--seed",
                    9,
                    "--out",
                    tmp_path / sub,
                )
                == 0
            )
        assert tree_hash(tmp_path / "e1") == tree_hash(tmp_path / "e2")

    def test_augment_does_not_mutate_inputs(self, tmp_path, fast_config):
        run_cli("gen-demos", "--n", 2, "--seed", 7, "--out", tmp_path / "d")
        before = tree_hash(tmp_path / "d")
        run_cli(
            "augment",
            "--config",
            fast_config,
            "--data",
            tmp_path / "d" / "demos",
            "--backend",
            "identity",
            "--seed",
            7,
            "--out",
            tmp_path / "aug",
        )
        assert tree_hash(tmp_path / "d") == before


class TestNullPipeline:
    def test_identity_backend_tiny_perturbations_recover_expert_actions(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(
            json.dumps(
                {
                    "perturbation": {
                        "translation_range": [1e-10, 2e-10],
                        "lookahead_k": 1,
                        "samples_per_frame": 1,
                    }
                }
            )
        )
        run_cli("gen-demos", "--n", 2, "--seed", 5, "--out", tmp_path / "d")
        run_cli(
            "augment",
            "--config",
            cfg,
            "--data",
            tmp_path / "d" / "demos",
            "--backend",
            "identity",
            "--seed",
            5,
            "--out",
            tmp_path / "a",
        )
        ds = load_dataset(tmp_path / "d" / "demos")
        imgs, acts = build_direction_dataset(ds.trajectories, ds.images)
        aug_imgs, aug_acts = load_augmented(tmp_path / "a" / "aug")
        # identity backend keeps original pixels; near-zero perturbations
        # keep expert directions
        assert len(aug_imgs) == len(imgs)
        assert np.allclose(aug_acts, acts, atol=1e-6)
        assert all(np.array_equal(a, b) for a, b in zip(aug_imgs, imgs))


class TestLibraryEquivalence:
    def test_cli_train_matches_library_train_bit_for_bit(self, tmp_path, fast_config):
        from viewshift.augment import PerturbationSpec
        from viewshift.harness import augment_task_data, train_policy_on
        from viewshift.policy import TrainConfig, load_policy, save_policy
        from viewshift.pushsim import SimConfig
        from viewshift.synthesis import OracleBackend

        run_cli("gen-demos", "--n", 2, "--seed", 21, "--out", tmp_path / "d")
        run_cli(
            "augment", "--config", fast_config, "--data", tmp_path / "d" / "demos",
            "--backend", "oracle", "--seed", 21, "--out", tmp_path / "a",
        )
        run_cli(
            "train", "--config", fast_config, "--data", tmp_path / "d" / "demos",
            "--aug", tmp_path / "a" / "aug", "--seed", 21, "--out", tmp_path / "t",
        )

        cfg = SimConfig()
        ds = load_dataset(tmp_path / "d" / "demos", cfg)
        spec = PerturbationSpec(
            direction_mode="in_plane", samples_per_frame=2, translation_range=(0.005, 0.02)
        )
        aug = augment_task_data(ds, ds.trajectories, spec, OracleBackend(ds.states, cfg), 21)
        tc = TrainConfig(epochs=3, batch_size=16, seed=21)
        net, _ = train_policy_on(ds, ds.trajectories, aug, tc)
        save_policy(net, tc, tmp_path / "lib.ckpt")
        assert (tmp_path / "lib.ckpt").read_bytes() == (
            tmp_path / "t" / "policy.ckpt"
        ).read_bytes()


class TestConfigHandling:
    def test_unknown_key_is_config_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"typo_section": {}}))
        rc = run_cli("gen-demos", "--config", bad, "--n", 1, "--out", tmp_path / "x")
        assert rc == 1
        err = json.loads(capsys.readouterr().err)
        assert err["error"] == "ConfigError"

    def test_missing_input_dataset(self, tmp_path, capsys):
        rc = run_cli(
            "train", "--data", tmp_path / "nope", "--seed", 1, "--out", tmp_path / "t"
        )
        assert rc == 1
        assert json.loads(capsys.readouterr().err)["error"] == "MissingInput"

    def test_flag_overrides_config_seed(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"seed": 1}))
        resolved = load_config(str(cfg), {"seed": 42})
        assert resolved["seed"] == 42

    def test_config_out_relative_to_config_file(self, tmp_path):
        sub = tmp_path / "configs"
        sub.mkdir()
        cfg = sub / "c.json"
        cfg.write_text(json.dumps({"out": "../myrun"}))
        resolved = load_config(str(cfg), {})
        assert Path(resolved["out"]).resolve() == (tmp_path / "myrun").resolve()

    def test_deep_merge_preserves_defaults(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"train": {"epochs": 5}}))
        resolved = load_config(str(cfg), {})
        assert resolved["train"]["epochs"] == 5
        assert resolved["train"]["batch_size"] == 64

    def test_resolved_config_written_with_hash(self, tmp_path):
        run_cli("gen-demos", "--n", 1, "--seed", 2, "--out", tmp_path / "r")
        data = json.loads((tmp_path / "r" / "demos" / "resolved.config.json").read_text())
        assert "hash" in data and data["config"]["seed"] == 2


class TestReport:
    def test_report_merges_outputs(self, tmp_path, fast_config):
        run_cli("gen-demos", "--n", 2, "--seed", 3, "--out", tmp_path / "d")
        run_cli(
            "train", "--config", fast_config, "--data", tmp_path / "d" / "demos",
            "--seed", 3, "--out", tmp_path / "t",
        )
        run_cli(
            "eval-offline", "--config", fast_config,
            "--checkpoint", tmp_path / "t" / "policy.ckpt",
            "--data", tmp_path / "d" / "demos", "--seed", 3, "--out", tmp_path / "off",
        )
        assert run_cli("report", "--runs", tmp_path, "--out", tmp_path / "rep") == 0
        summary = json.loads((tmp_path / "rep" / "summary.json").read_text())
        assert len(summary["offline"]) == 1
