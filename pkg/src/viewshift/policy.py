"""Pixel-to-direction policy: small MLP trained by L1 regression.

Raw 64x64 pixels scaled to [0,1] feed a ReLU MLP (4096 -> 256 -> 64 -> out);
the translation head is normalized to a unit direction at inference time.
Training is plain mini-batch Adam over float64 arrays with a seeded shuffle
and no nondeterministic reductions, so identical config + dataset gives
bit-identical parameters.
"""

from __future__ import annotations

import json
import math
import logging
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .augment import flip_augment, jitter_augment
from .errors import DimensionMismatch, EmptyDataset, MixedActionDims
from .rng import derive_rng

log = logging.getLogger(__name__)

FALLBACK_DIRECTION_EPS = 1e-12


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 64
    epochs: int = 30
    seed: int = 0
    flip: bool = False
    jitter: bool = False

    def __post_init__(self):
        for name in ("learning_rate", "beta1", "beta2", "eps", "batch_size", "epochs"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class PolicyNet:
    sizes: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    seed: int

    @property
    def in_dim(self) -> int:
        return self.sizes[0]

    @property
    def out_dim(self) -> int:
        return self.sizes[-1]

    def num_params(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)


def init_net(sizes: tuple[int, ...] = (4096, 256, 64, 2), seed: int = 0) -> PolicyNet:
    """He-scaled normal init for the ReLU stack, zero biases."""
    rng = derive_rng(seed, "init")
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes, sizes[1:]):
        weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return PolicyNet(sizes=tuple(sizes), weights=weights, biases=biases, seed=seed)


def _as_inputs(net: PolicyNet, images: np.ndarray) -> np.ndarray:
    x = np.asarray(images)
    if x.ndim >= 2 and x.shape[-1] != net.in_dim:
        x = x.reshape(x.shape[0] if x.ndim > 2 else 1, -1)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != net.in_dim:
        raise DimensionMismatch(f"input dim {x.shape[1]} != net input {net.in_dim}")
    if x.dtype == np.uint8:
        x = x.astype(np.float64) / 255.0
    return x.astype(np.float64)


def forward(net: PolicyNet, images: np.ndarray) -> np.ndarray:
    """Raw network output for a batch (or single) image."""
    x = _as_inputs(net, images)
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        x = x @ w + b
        if i < len(net.weights) - 1:
            x = np.maximum(x, 0.0)
    return x


def predict(net: PolicyNet, image: np.ndarray) -> np.ndarray:
    """Unit-direction prediction; a zero raw output falls back to +x."""
    raw = forward(net, image)[0]
    n = float(np.linalg.norm(raw))
    if n < FALLBACK_DIRECTION_EPS:
        log.warning("zero raw policy output; falling back to +x direction")
        fallback = np.zeros(net.out_dim)
        fallback[0] = 1.0
        return fallback
    return raw / n


def _forward_cache(net: PolicyNet, x: np.ndarray):
    pre_acts = []
    acts = [x]
    h = x
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = h @ w + b
        pre_acts.append(z)
        h = np.maximum(z, 0.0) if i < len(net.weights) - 1 else z
        acts.append(h)
    return pre_acts, acts


def l1_loss_and_grads(net: PolicyNet, x: np.ndarray, y: np.ndarray):
    """Mean absolute error over batch and components, with parameter grads."""
    pre_acts, acts = _forward_cache(net, x)
    pred = acts[-1]
    resid = pred - y
    loss = float(np.mean(np.abs(resid)))
    delta = np.sign(resid) / resid.size
    n_layers = len(net.weights)
    grads_w: list = [None] * n_layers
    grads_b: list = [None] * n_layers
    for i in reversed(range(n_layers)):
        grads_w[i] = acts[i].T @ delta
        grads_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ net.weights[i].T) * (pre_acts[i - 1] > 0.0)
    return loss, grads_w, grads_b


@dataclass
class AdamState:
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)
    scratch: list[np.ndarray] = field(default_factory=list)
    t: int = 0


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState, cfg: TrainConfig):
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
        state.scratch = [np.zeros_like(p) for p in params]
    state.t += 1
    # bias correction folded into scalars: update = lr*sqrt(bc2)/bc1 *
    # m / (sqrt(v) + eps*sqrt(bc2)), algebraically the standard rule
    bc1 = 1.0 - cfg.beta1**state.t
    bc2 = 1.0 - cfg.beta2**state.t
    scale = cfg.learning_rate * math.sqrt(bc2) / bc1
    eps_hat = cfg.eps * math.sqrt(bc2)
    for p, g, m, v, buf in zip(params, grads, state.m, state.v, state.scratch):
        np.multiply(g, 1.0 - cfg.beta1, out=buf)
        m *= cfg.beta1
        m += buf
        np.multiply(g, g, out=buf)
        buf *= 1.0 - cfg.beta2
        v *= cfg.beta2
        v += buf
        np.sqrt(v, out=buf)
        buf += eps_hat
        np.divide(m, buf, out=buf)
        buf *= scale
        p -= buf


def train(
    images: np.ndarray,
    actions: np.ndarray,
    cfg: TrainConfig,
    net: PolicyNet | None = None,
    sizes: tuple[int, ...] | None = None,
) -> tuple[PolicyNet, list[float]]:
    """Train on (N, H, W) uint8 images and (N, out) unit actions.

    Optional flip/jitter transforms are drawn per sample per epoch from the
    config seed, keeping runs reproducible. Returns per-epoch mean L1.
    """
    images = np.asarray(images)
    actions = np.asarray(actions, dtype=np.float64)
    if images.shape[0] == 0:
        raise EmptyDataset("no training samples")
    if actions.ndim != 2:
        raise MixedActionDims(f"actions must be (N, dims), got shape {actions.shape}")
    if images.shape[0] != actions.shape[0]:
        raise MixedActionDims("images and actions disagree on sample count")
    in_dim = int(np.prod(images.shape[1:]))
    out_dim = actions.shape[1]
    if net is None:
        net = init_net(sizes or (in_dim, 256, 64, out_dim), seed=cfg.seed)
    if net.in_dim != in_dim or net.out_dim != out_dim:
        raise DimensionMismatch(
            f"net expects {net.in_dim}->{net.out_dim}, data is {in_dim}->{out_dim}"
        )

    params = net.weights + net.biases
    state = AdamState()
    losses: list[float] = []
    n = images.shape[0]
    for epoch in range(cfg.epochs):
        rng = derive_rng(cfg.seed, "train-epoch", epoch)
        order = rng.permutation(n)
        epoch_loss = 0.0
        batches = 0
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            xb = images[idx]
            yb = actions[idx].copy()
            if cfg.flip or cfg.jitter:
                xb = xb.copy()
                for row, sample_id in enumerate(idx):
                    srng = derive_rng(cfg.seed, "transform", epoch, int(sample_id))
                    if cfg.flip and srng.random() < 0.5:
                        xb[row], yb[row] = flip_augment(xb[row], yb[row])
                    if cfg.jitter:
                        xb[row] = jitter_augment(xb[row], srng)
            x = _as_inputs(net, xb.reshape(len(idx), -1))
            loss, gw, gb = l1_loss_and_grads(net, x, yb)
            adam_step(params, gw + gb, state, cfg)
            epoch_loss += loss
            batches += 1
        losses.append(epoch_loss / batches)
    return net, losses


def gradient_check(
    net: PolicyNet,
    images: np.ndarray,
    actions: np.ndarray,
    n_samples: int = 200,
    h: float = 1e-5,
    seed: int = 0,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Parameters whose +/-h evaluations cross a ReLU or L1 kink are excluded
    by resampling (the derivative is not defined there).
    """
    x = _as_inputs(net, np.asarray(images).reshape(np.asarray(images).shape[0], -1))
    y = np.asarray(actions, dtype=np.float64)
    params = net.weights + net.biases
    _, gw, gb = l1_loss_and_grads(net, x, y)
    grads = gw + gb

    def loss_and_signs(inputs=x):
        pre_acts, acts = _forward_cache(net, inputs)
        resid = acts[-1] - y
        signs = [z > 0.0 for z in pre_acts[:-1]] + [resid > 0.0]
        return float(np.mean(np.abs(resid))), signs

    rng = derive_rng(seed, "gradcheck")
    total = sum(p.size for p in params)
    max_rel = 0.0
    checked = 0
    attempts = 0
    while checked < n_samples and attempts < 50 * n_samples:
        attempts += 1
        flat = int(rng.integers(total))
        p_i = 0
        while flat >= params[p_i].size:
            flat -= params[p_i].size
            p_i += 1
        idx = np.unravel_index(flat, params[p_i].shape)
        orig = params[p_i][idx]

        params[p_i][idx] = orig + h
        lp, signs_p = loss_and_signs()
        params[p_i][idx] = orig - h
        lm, signs_m = loss_and_signs()
        params[p_i][idx] = orig

        if any((a != b).any() for a, b in zip(signs_p, signs_m)):
            continue  # kink-adjacent; resample
        numeric = (lp - lm) / (2.0 * h)
        analytic = grads[p_i][idx]
        denom = max(abs(numeric), abs(analytic), 1e-12)
        max_rel = max(max_rel, abs(numeric - analytic) / denom)
        checked += 1
    if checked < n_samples:
        raise RuntimeError(f"could not find {n_samples} kink-free parameters")
    return max_rel


# ---------------------------------------------------------------------------
# Checkpoints (deterministic bytes: JSON header + raw little-endian blocks)
# ---------------------------------------------------------------------------

_MAGIC = b"VSPOL1\n"


def save_policy(net: PolicyNet, cfg: TrainConfig, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "sizes": list(net.sizes),
        "seed": net.seed,
        "cfg": asdict(cfg),
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with path.open("wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for arr in net.weights + net.biases:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_policy(path) -> tuple[PolicyNet, TrainConfig]:
    path = Path(path)
    data = path.read_bytes()
    if not data.startswith(_MAGIC):
        raise ValueError(f"{path} is not a policy checkpoint")
    off = len(_MAGIC)
    (hlen,) = struct.unpack_from("<I", data, off)
    off += 4
    header = json.loads(data[off : off + hlen].decode("utf-8"))
    off += hlen
    sizes = tuple(header["sizes"])
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes, sizes[1:]):
        n = fan_in * fan_out * 8
        weights.append(np.frombuffer(data[off : off + n], dtype="<f8").reshape(fan_in, fan_out).copy())
        off += n
    for fan_out in sizes[1:]:
        n = fan_out * 8
        biases.append(np.frombuffer(data[off : off + n], dtype="<f8").copy())
        off += n
    net = PolicyNet(sizes=sizes, weights=weights, biases=biases, seed=header["seed"])
    return net, TrainConfig(**header["cfg"])
