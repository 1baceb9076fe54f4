import logging
import math

import numpy as np
import pytest

from viewshift.errors import DimensionMismatch, EmptyDataset, MixedActionDims
from viewshift.harness import angle_error
from viewshift.policy import (
    PolicyNet,
    TrainConfig,
    forward,
    gradient_check,
    init_net,
    l1_loss_and_grads,
    load_policy,
    predict,
    save_policy,
    train,
)
from viewshift.rng import derive_rng


def tiny_dataset(n=32, side=8, out=2, seed=0):
    rng = derive_rng(seed, "tiny-data")
    images = rng.integers(0, 256, size=(n, side, side)).astype(np.uint8)
    actions = rng.normal(size=(n, out))
    actions /= np.linalg.norm(actions, axis=1, keepdims=True)
    return images, actions


class TestForwardPredict:
    def test_zero_net_falls_back_to_plus_x(self, caplog):
        net = init_net((16, 4, 2), seed=0)
        for w in net.weights:
            w[:] = 0.0
        with caplog.at_level(logging.WARNING):
            out = predict(net, np.zeros((4, 4), dtype=np.uint8))
        assert np.allclose(out, [1.0, 0.0])
        assert any("fall" in r.getMessage().lower() for r in caplog.records)

    def test_dimension_mismatch(self):
        net = init_net((16, 4, 2), seed=0)
        with pytest.raises(DimensionMismatch):
            forward(net, np.zeros((5, 5), dtype=np.uint8))

    def test_predict_unit_norm(self):
        net = init_net((16, 8, 2), seed=1)
        img = derive_rng(2, "img").integers(0, 256, size=(4, 4)).astype(np.uint8)
        assert abs(np.linalg.norm(predict(net, img)) - 1.0) < 1e-12

    def test_single_sample_overfit(self):
        rng = derive_rng(3, "overfit")
        image = rng.integers(0, 256, size=(8, 8)).astype(np.uint8)
        target = np.array([[0.6, -0.8]])
        cfg = TrainConfig(learning_rate=2e-4, batch_size=1, epochs=8000, seed=3)
        net, losses = train(image[None], target, cfg, sizes=(64, 16, 8, 2))
        assert losses[-1] < 1e-3
        assert angle_error(predict(net, image), target[0]) < 1e-3


class TestTrain:
    def test_empty_dataset(self):
        with pytest.raises(EmptyDataset):
            train(np.zeros((0, 4, 4), dtype=np.uint8), np.zeros((0, 2)), TrainConfig(epochs=1))

    def test_mismatched_counts(self):
        imgs, acts = tiny_dataset(8)
        with pytest.raises(MixedActionDims):
            train(imgs, acts[:4], TrainConfig(epochs=1))

    def test_bad_action_shape(self):
        imgs, _ = tiny_dataset(8)
        with pytest.raises(MixedActionDims):
            train(imgs, np.zeros(8), TrainConfig(epochs=1))

    def test_final_loss_below_initial(self):
        imgs, acts = tiny_dataset(48)
        net, losses = train(imgs, acts, TrainConfig(epochs=40, batch_size=16, seed=5))
        assert losses[-1] < losses[0]

    def test_deterministic_parameters(self):
        imgs, acts = tiny_dataset(32)
        cfg = TrainConfig(epochs=10, batch_size=8, seed=9, flip=True, jitter=True)
        net1, losses1 = train(imgs, acts, cfg)
        net2, losses2 = train(imgs, acts, cfg)
        assert losses1 == losses2
        for a, b in zip(net1.weights + net1.biases, net2.weights + net2.biases):
            assert np.array_equal(a, b)

    def test_opposite_labels_plateau_at_analytic_floor(self):
        image = np.full((6, 6), 120, dtype=np.uint8)
        images = np.stack([image, image])
        actions = np.array([[1.0, 0.0], [-1.0, 0.0]])
        cfg = TrainConfig(learning_rate=1e-3, batch_size=2, epochs=2000, seed=11)
        net, losses = train(images, actions, cfg, sizes=(36, 8, 2))
        # brute-force lower bound: best constant prediction per component
        grid = np.linspace(-1.5, 1.5, 3001)
        floor = 0.0
        for comp in range(actions.shape[1]):
            costs = np.abs(grid[:, None] - actions[None, :, comp]).mean(axis=1)
            floor += costs.min()
        floor /= actions.shape[1]
        assert losses[-1] >= floor - 1e-6
        assert losses[-1] == pytest.approx(floor, abs=0.05)


class TestOnSimulatorData:
    def test_24_demo_loss_monotone_after_warmup(self):
        from viewshift.harness import build_direction_dataset
        from viewshift.pushsim import SimConfig, episodes_to_dataset, generate_demos

        cfg = SimConfig()
        ds = episodes_to_dataset(generate_demos(24, seed=77, cfg=cfg), cfg)
        imgs, acts = build_direction_dataset(ds.trajectories, ds.images)
        _, losses = train(imgs, acts, TrainConfig(epochs=30, seed=77))
        for i in range(5, len(losses) - 1):
            assert losses[i + 1] <= losses[i] * 1.05

    def test_flip_equivariance_reported_not_asserted(self, capsys):
        # statistical, not exact: measured and printed for the record only
        from viewshift.augment import flip_augment
        from viewshift.harness import angle_error, build_direction_dataset
        from viewshift.pushsim import SimConfig, episodes_to_dataset, generate_demos

        cfg = SimConfig()
        ds = episodes_to_dataset(generate_demos(4, seed=78, cfg=cfg), cfg)
        imgs, acts = build_direction_dataset(ds.trajectories, ds.images)
        net, _ = train(imgs, acts, TrainConfig(epochs=40, batch_size=32, seed=78, flip=True))
        errs = []
        for img, act in zip(imgs[:40], acts[:40]):
            flipped_img, _ = flip_augment(img, act.copy())
            pred = predict(net, img)
            pred_flipped = predict(net, flipped_img)
            mirrored = pred.copy()
            mirrored[0] = -mirrored[0]
            errs.append(angle_error(pred_flipped, mirrored))
        with capsys.disabled():
            print(
                f"\n[report-only] flip equivariance residual after flip-augmented "
                f"training: median {np.median(errs):.3f} rad over {len(errs)} frames"
            )


class TestGradientCheck:
    def test_linear_net_exact(self):
        # no hidden layers: L1 over an affine map is piecewise linear, so
        # central differences away from kinks are exact to rounding
        net = init_net((12, 3), seed=21)
        rng = derive_rng(22, "linear-data")
        imgs = rng.integers(0, 256, size=(6, 12)).astype(np.uint8)
        acts = rng.normal(size=(6, 3))
        acts /= np.linalg.norm(acts, axis=1, keepdims=True)
        err = gradient_check(net, imgs, acts, n_samples=39, seed=23)
        assert err < 1e-8

    def test_relu_net_at_random_init(self):
        net = init_net((64, 24, 8, 2), seed=24)
        imgs, acts = tiny_dataset(12, side=8, out=2, seed=25)
        err = gradient_check(net, imgs, acts, n_samples=200, seed=26)
        assert err < 1e-4

    def test_analytic_grads_reduce_loss(self):
        net = init_net((16, 8, 2), seed=27)
        imgs, acts = tiny_dataset(8, side=4, out=2, seed=28)
        x = imgs.reshape(8, -1).astype(np.float64) / 255.0
        loss0, gw, gb = l1_loss_and_grads(net, x, acts)
        for w, g in zip(net.weights, gw):
            w -= 1e-3 * np.sign(g)
        for b, g in zip(net.biases, gb):
            b -= 1e-3 * np.sign(g)
        loss1, _, _ = l1_loss_and_grads(net, x, acts)
        assert loss1 < loss0


class TestCheckpoints:
    def test_round_trip_bit_exact(self, tmp_path):
        imgs, acts = tiny_dataset(16)
        cfg = TrainConfig(epochs=3, batch_size=8, seed=31)
        net, _ = train(imgs, acts, cfg)
        path = tmp_path / "p.ckpt"
        save_policy(net, cfg, path)
        loaded, loaded_cfg = load_policy(path)
        assert loaded.sizes == net.sizes
        assert loaded_cfg == cfg
        for a, b in zip(loaded.weights + loaded.biases, net.weights + net.biases):
            assert np.array_equal(a, b)

    def test_bytes_deterministic(self, tmp_path):
        imgs, acts = tiny_dataset(16)
        cfg = TrainConfig(epochs=2, batch_size=8, seed=32)
        net, _ = train(imgs, acts, cfg)
        save_policy(net, cfg, tmp_path / "a.ckpt")
        save_policy(net, cfg, tmp_path / "b.ckpt")
        assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()

    def test_reject_garbage(self, tmp_path):
        p = tmp_path / "x.ckpt"
        p.write_bytes(b"not a checkpoint")
        with pytest.raises(ValueError):
            load_policy(p)
