"""Command-line pipeline driver.

Subcommands wire the library into a reproducible experiment flow::

    viewshift gen-demos      seeded expert demonstrations
    viewshift gen-play       seeded random-interaction trajectories
    viewshift export-triples image-pair/relative-pose triples for
                             view-synthesizer finetuning
    viewshift augment        perturb + synthesize + label a dataset
    viewshift train          fit the pixel policy (expert [+ augmented])
    viewshift eval-offline   median angle error on a held-out dataset
    viewshift eval-online    sealed randomized A/B trials in the simulator
    viewshift k-sweep        offline error as a function of lookahead k
    viewshift report         merge run outputs into one summary

Every subcommand is deterministic given (config, seed): re-running writes
byte-identical outputs. Flags override config-file values; the resolved
config and its hash are written next to each output. Paths inside a config
file resolve relative to the file's directory; outputs land only under the
chosen output directory.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import imgio
from .augment import PerturbationSpec, augment_trajectory
from .errors import ConfigError, MissingInput, ViewshiftError
from .harness import (
    build_ab_plan,
    build_direction_dataset,
    config_hash,
    k_sweep,
    offline_eval,
    policy_method,
    run_ab,
)
from .policy import TrainConfig, load_policy, save_policy, train
from .pushsim import (
    PushDataset,
    SimConfig,
    episodes_to_dataset,
    expert_policy,
    generate_demos,
    generate_play,
    load_dataset,
    save_dataset,
)
from .synthesis import (
    HomographyBackend,
    IdentityBackend,
    OracleBackend,
    RemoteBackend,
)
from .trajectory import export_finetune_triples

DEFAULT_CONFIG = {
    "seed": 0,
    "out": "run",
    "sim": {},
    "perturbation": {
        "translation_range": None,
        "direction_mode": "in_plane",
        "rotation_ranges": None,
        "samples_per_frame": 2,
        "lookahead_k": 3,
    },
    "synthesizer": {
        "backend": "oracle",
        "endpoint": None,
        "depth": None,
        "workers": 1,
        "on_error": "abort",
    },
    "train": {
        "learning_rate": 1e-4,
        "batch_size": 64,
        "epochs": 30,
        "flip": False,
        "jitter": False,
    },
    "harness": {"trials_per_method": 50, "max_steps": 400, "ks": [1, 2, 3, 4, 5]},
}

_SIM_FIELDS = {f.name for f in dataclasses.fields(SimConfig)}


def _merge(base: dict, override: dict, path="") -> dict:
    out = dict(base)
    for key, value in override.items():
        if key not in base:
            raise ConfigError(f"unknown config key {path + key!r}")
        if isinstance(base[key], dict) and isinstance(value, dict):
            out[key] = _merge(base[key], value, path + key + ".")
        else:
            out[key] = value
    return out


def load_config(path: str | None, overrides: dict | None = None) -> dict:
    cfg = DEFAULT_CONFIG
    if path:
        p = Path(path)
        if not p.exists():
            raise MissingInput(f"config file {path} does not exist")
        try:
            user = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
        cfg = _merge(cfg, user)
        if "out" in user and not Path(user["out"]).is_absolute():
            cfg["out"] = str((p.parent / user["out"]))
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        section, _, name = key.partition(".")
        if name:
            cfg[section] = {**cfg[section], name: value}
        else:
            cfg[section] = value
    return cfg


def sim_config(cfg: dict) -> SimConfig:
    fields = {}
    for key, value in cfg["sim"].items():
        if key not in _SIM_FIELDS:
            raise ConfigError(f"unknown sim config key {key!r}")
        if isinstance(value, list):
            value = tuple(value)
        fields[key] = value
    return SimConfig(**fields)


def perturbation_spec(cfg: dict) -> PerturbationSpec:
    p = cfg["perturbation"]
    tr = p["translation_range"]
    rr = p["rotation_ranges"]
    return PerturbationSpec(
        translation_range=tuple(tr) if tr else None,
        direction_mode=p["direction_mode"],
        rotation_ranges=tuple(tuple(r) for r in rr) if rr else None,
        samples_per_frame=p["samples_per_frame"],
        lookahead_k=p["lookahead_k"],
    )


def train_config(cfg: dict, seed: int) -> TrainConfig:
    t = cfg["train"]
    return TrainConfig(
        learning_rate=t["learning_rate"],
        batch_size=t["batch_size"],
        epochs=t["epochs"],
        seed=seed,
        flip=t["flip"],
        jitter=t["jitter"],
    )


def make_backend(cfg: dict, ds: PushDataset | None):
    s = cfg["synthesizer"]
    kind = s["backend"]
    sim = sim_config(cfg)
    if kind == "identity":
        return IdentityBackend()
    if kind == "oracle":
        if ds is None or not ds.states:
            raise MissingInput("oracle backend needs a dataset with recorded world states")
        return OracleBackend(ds.states, sim)
    if kind == "homography":
        return HomographyBackend(sim, depth=s["depth"])
    if kind == "remote":
        if not s["endpoint"]:
            raise ConfigError("remote backend needs synthesizer.endpoint")
        return RemoteBackend(s["endpoint"])
    raise ConfigError(f"unknown synthesizer backend {kind!r}")


def _dump_json(obj, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def write_resolved_config(cfg: dict, out: Path) -> str:
    # the hash covers experimental parameters only; where the outputs land
    # is not one of them, so reports stay byte-identical across locations
    digest = config_hash({k: v for k, v in cfg.items() if k != "out"})
    _dump_json({"config": cfg, "hash": digest}, out / "resolved.config.json")
    return digest


def _write_csv(rows: list[dict], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    if not rows:
        path.write_text("")
        return
    cols = list(rows[0].keys())
    lines = [",".join(cols)]
    for row in rows:
        lines.append(",".join(str(row[c]) for c in cols))
    path.write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_gen_demos(args) -> int:
    cfg = load_config(args.config, {"seed": args.seed, "out": args.out})
    sim = sim_config(cfg)
    episodes = generate_demos(args.n, cfg["seed"], sim)
    ds = episodes_to_dataset(episodes, sim, kind="task", prefix="demo")
    out = Path(cfg["out"]) / "demos"
    save_dataset(ds, out)
    write_resolved_config(cfg, out)
    print(f"wrote {len(ds.trajectories)} demos to {out}")
    return 0


def cmd_gen_play(args) -> int:
    cfg = load_config(args.config, {"seed": args.seed, "out": args.out})
    sim = sim_config(cfg)
    episodes = generate_play(args.n, cfg["seed"], sim)
    ds = episodes_to_dataset(episodes, sim, kind="play", prefix="play")
    out = Path(cfg["out"]) / "play"
    save_dataset(ds, out)
    write_resolved_config(cfg, out)
    print(f"wrote {len(ds.trajectories)} play trajectories to {out}")
    return 0


def cmd_export_triples(args) -> int:
    cfg = load_config(args.config, {"seed": args.seed, "out": args.out})
    data = Path(args.data)
    if not data.exists():
        raise MissingInput(f"dataset directory {data} does not exist")
    ds = load_dataset(data, sim_config(cfg))
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    lines = []
    total = 0
    for traj in ds.trajectories:
        per_traj = min(args.n, len(traj.frames) * (len(traj.frames) - 1))
        triples = export_finetune_triples(traj, per_traj, seed=cfg["seed"])
        for t in triples:
            lines.append(
                json.dumps(
                    {
                        "img_a": t.image_a_ref,
                        "img_b": t.image_b_ref,
                        "a_from_b": [float(v) for v in t.a_from_b.matrix().reshape(-1)],
                    },
                    separators=(",", ":"),
                )
            )
        total += len(triples)
    (out / "triples.jsonl").write_text("\n".join(lines) + "\n")
    write_resolved_config(cfg, out)
    print(f"wrote {total} triples to {out / 'triples.jsonl'}")
    return 0


def cmd_augment(args) -> int:
    overrides = {
        "seed": args.seed,
        "out": args.out,
        "synthesizer.backend": args.backend,
        "synthesizer.workers": args.workers,
        "perturbation.lookahead_k": args.k,
    }
    cfg = load_config(args.config, overrides)
    data = Path(args.data)
    if not data.exists():
        raise MissingInput(f"dataset directory {data} does not exist")
    ds = load_dataset(data, sim_config(cfg))
    backend = make_backend(cfg, ds)
    spec = perturbation_spec(cfg)
    out = Path(cfg["out"]) / "aug"
    out.mkdir(parents=True, exist_ok=True)

    header = {
        "v": 1,
        "spec": cfg["perturbation"],
        "synthesizer": {"kind": backend.id.kind, "version": backend.id.version},
        "seed": cfg["seed"],
    }
    lines = [json.dumps(header, sort_keys=True, separators=(",", ":"))]
    count = 0
    for traj in ds.trajectories:
        if traj.kind != "task":
            continue
        samples = augment_trajectory(
            traj,
            spec,
            backend,
            ds.images,
            cfg["seed"],
            on_error=cfg["synthesizer"]["on_error"],
            workers=cfg["synthesizer"]["workers"],
        )
        for s in samples:
            t = s.perturbation.source_frame_index
            j = s.perturbation.sample_index
            ref = f"images/{traj.id}/{t:05d}_{j}.png"
            imgio.write_png(s.image, out / ref)
            lines.append(
                json.dumps(
                    {
                        "img": ref,
                        "t": [float(v) for v in s.action.translation],
                        "r": [float(v) for v in s.action.rotation]
                        if s.action.rotation is not None
                        else None,
                        "k": s.k_used,
                        "traj": traj.id,
                        "frame": t,
                        "sample": j,
                        "t_from_tilde": [
                            float(v) for v in s.perturbation.t_from_tilde.matrix().reshape(-1)
                        ],
                    },
                    separators=(",", ":"),
                )
            )
            count += 1
    (out / "dataset.aug.jsonl").write_text("\n".join(lines) + "\n")
    write_resolved_config(cfg, out)
    print(f"wrote {count} augmented samples to {out}")
    return 0


def load_augmented(aug_dir) -> tuple[np.ndarray, np.ndarray]:
    """Images and camera-frame unit directions from an aug.jsonl dataset."""
    aug_dir = Path(aug_dir)
    manifest = aug_dir / "dataset.aug.jsonl"
    if not manifest.exists():
        raise MissingInput(f"{manifest} does not exist")
    lines = manifest.read_text().splitlines()
    images, actions = [], []
    for raw in lines[1:]:
        rec = json.loads(raw)
        images.append(imgio.read_png(aug_dir / rec["img"]))
        t = np.asarray(rec["t"], dtype=float)[:2]
        actions.append(t / np.linalg.norm(t))
    if not images:
        return np.zeros((0, 0, 0), dtype=np.uint8), np.zeros((0, 2))
    return np.stack(images), np.stack(actions)


def cmd_train(args) -> int:
    cfg = load_config(args.config, {"seed": args.seed, "out": args.out})
    data = Path(args.data)
    if not data.exists():
        raise MissingInput(f"dataset directory {data} does not exist")
    ds = load_dataset(data, sim_config(cfg))
    imgs, acts = build_direction_dataset(ds.trajectories, ds.images)
    if args.aug:
        aug_imgs, aug_acts = load_augmented(args.aug)
        if len(aug_imgs):
            imgs = np.concatenate([imgs, aug_imgs])
            acts = np.concatenate([acts, aug_acts])
    tc = train_config(cfg, cfg["seed"])
    net, losses = train(imgs, acts, tc)
    out = Path(cfg["out"])
    save_policy(net, tc, out / "policy.ckpt")
    _write_csv(
        [{"epoch": i, "mean_l1": loss} for i, loss in enumerate(losses)], out / "loss.csv"
    )
    write_resolved_config(cfg, out)
    print(f"trained on {len(imgs)} samples; final mean L1 {losses[-1]:.4f}")
    return 0


def cmd_eval_offline(args) -> int:
    cfg = load_config(args.config, {"seed": args.seed, "out": args.out})
    net, _ = load_policy(args.checkpoint)
    ds = load_dataset(Path(args.data), sim_config(cfg))
    imgs, acts = build_direction_dataset(ds.trajectories, ds.images)
    report = offline_eval(net, imgs, acts, method=args.method, seed=cfg["seed"])
    out = Path(cfg["out"])
    digest = write_resolved_config(cfg, out)
    payload = {**report.to_json(), "config_hash": digest}
    _dump_json(payload, out / "offline_report.json")
    _write_csv([payload], out / "offline_report.csv")
    print(f"median angle error: {report.median_angle_error:.4f} rad over {report.n_test} frames")
    return 0


def cmd_eval_online(args) -> int:
    cfg = load_config(args.config, {"seed": args.seed, "out": args.out})
    sim = sim_config(cfg)
    methods = {}
    for spec_str in args.policies:
        name, _, path = spec_str.partition("=")
        if name == "expert" and not path:
            methods[name] = lambda w, img: expert_policy(w, sim)
            continue
        if not path:
            raise ConfigError(f"--policy expects name=checkpoint, got {spec_str!r}")
        net, _ = load_policy(path)
        methods[name] = policy_method(net)
    trials = args.trials or cfg["harness"]["trials_per_method"]
    plan = build_ab_plan(sorted(methods), trials, cfg["seed"], sim)
    out = Path(cfg["out"])
    digest = write_resolved_config(cfg, out)
    _dump_json(
        {"methods": list(plan.methods), "seed": plan.seed, "trials": plan.trials, "draws": plan.draws},
        out / "plan.json",
    )
    report = run_ab(plan, methods, sim, max_steps=cfg["harness"]["max_steps"])
    payload = {**report.to_json(), "config_hash": digest}
    _dump_json(payload, out / "online_report.json")
    _write_csv(
        [
            {"method": m, "success_rate": r, "trials": trials}
            for m, r in sorted(report.success_rate.items())
        ],
        out / "online_report.csv",
    )
    for m, r in sorted(report.success_rate.items()):
        print(f"{m}: {r:.2%} success over {trials} trials")
    return 0


def cmd_k_sweep(args) -> int:
    cfg = load_config(args.config, {"seed": args.seed, "out": args.out})
    sim = sim_config(cfg)
    ds = load_dataset(Path(args.data), sim)
    test_ds = load_dataset(Path(args.test), sim)
    test_imgs, test_acts = build_direction_dataset(test_ds.trajectories, test_ds.images)
    backend = make_backend(cfg, ds)
    ks = [int(k) for k in args.ks.split(",")] if args.ks else cfg["harness"]["ks"]
    rows = k_sweep(
        ds,
        ds.trajectories,
        test_imgs,
        test_acts,
        ks,
        perturbation_spec(cfg),
        backend,
        train_config(cfg, cfg["seed"]),
        cfg["seed"],
    )
    out = Path(cfg["out"])
    digest = write_resolved_config(cfg, out)
    _dump_json({"rows": rows, "config_hash": digest}, out / "k_sweep.json")
    _write_csv(rows, out / "k_sweep.csv")
    for row in rows:
        print(f"k={row['k']}: median angle error {row['median_angle_error']:.4f} rad")
    return 0


def cmd_report(args) -> int:
    runs = Path(args.runs)
    if not runs.exists():
        raise MissingInput(f"runs directory {runs} does not exist")
    summary = {"offline": [], "online": [], "k_sweep": []}
    for path in sorted(runs.rglob("offline_report.json")):
        summary["offline"].append({"path": str(path.parent.relative_to(runs)), **json.loads(path.read_text())})
    for path in sorted(runs.rglob("online_report.json")):
        data = json.loads(path.read_text())
        summary["online"].append(
            {
                "path": str(path.parent.relative_to(runs)),
                "success_rate": data["success_rate"],
                "config_hash": data["config_hash"],
            }
        )
    for path in sorted(runs.rglob("k_sweep.json")):
        summary["k_sweep"].append({"path": str(path.parent.relative_to(runs)), **json.loads(path.read_text())})
    out = Path(args.out or runs)
    _dump_json(summary, out / "summary.json")
    rows = []
    for entry in summary["online"]:
        for method, rate in sorted(entry["success_rate"].items()):
            rows.append({"run": entry["path"], "method": method, "success_rate": rate})
    _write_csv(rows, out / "summary.csv")
    print(f"summarized {len(summary['offline'])} offline / {len(summary['online'])} online reports")
    return 0


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="viewshift", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--out", default=None, required=out_required, help="output directory")

    p = sub.add_parser("gen-demos", help="generate expert demonstrations")
    common(p)
    p.add_argument("--n", type=int, default=8)
    p.set_defaults(fn=cmd_gen_demos)

    p = sub.add_parser("gen-play", help="generate random-interaction play data")
    common(p)
    p.add_argument("--n", type=int, default=4)
    p.set_defaults(fn=cmd_gen_play)

    p = sub.add_parser("export-triples", help="export finetuning triples")
    common(p)
    p.add_argument("--data", required=True, help="trajectory dataset directory")
    p.add_argument("--n", type=int, default=100, help="triples per trajectory")
    p.set_defaults(fn=cmd_export_triples)

    p = sub.add_parser("augment", help="synthesize perturbed views with labels")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--backend", default=None, choices=["oracle", "homography", "identity", "remote"])
    p.add_argument("--k", type=int, default=None, help="lookahead override")
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(fn=cmd_augment)

    p = sub.add_parser("train", help="train the policy")
    common(p)
    p.add_argument("--data", required=True, help="expert dataset directory")
    p.add_argument("--aug", default=None, help="augmented dataset directory")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval-offline", help="offline median angle error")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="held-out dataset directory")
    p.add_argument("--method", default="policy")
    p.set_defaults(fn=cmd_eval_offline)

    p = sub.add_parser("eval-online", help="randomized A/B simulator trials")
    common(p)
    p.add_argument(
        "--policy",
        dest="policies",
        action="append",
        required=True,
        help="name=checkpoint (repeatable); bare 'expert' runs the scripted expert",
    )
    p.add_argument("--trials", type=int, default=None, help="trials per method")
    p.set_defaults(fn=cmd_eval_online)

    p = sub.add_parser("k-sweep", help="offline error vs lookahead k")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--ks", default=None, help="comma-separated k values")
    p.set_defaults(fn=cmd_k_sweep)

    p = sub.add_parser("report", help="summarize run outputs")
    p.add_argument("--runs", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ViewshiftError as exc:
        print(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
