"""Command-line entry points for the full pipeline."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np


def _err(msg: str, code: int = 2) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return code


def _load_overrides(args) -> dict:
    from .config import load_config_file
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise FileNotFoundError(f"config file {path} not found")
        return load_config_file(path)
    return {}


def _sim_configs(overrides):
    from .config import build_section
    return build_section("sim", overrides), build_section("workspace", overrides)


def cmd_grad_check(args) -> int:
    from .net import run_grad_check_suite
    worst, lines = run_grad_check_suite(seeds=range(args.seeds))
    for line in lines:
        print(line)
    print(f"max relative error: {worst:.3e}")
    return 0 if worst < 1e-3 else 1


def cmd_gen_demos(args) -> int:
    from .oracle import OracleConfig, generate_demos, goal_mask_from_oracle
    from .episodes import save_episode
    from .imageio import write_pbm
    from .config import build_section

    overrides = _load_overrides(args)
    params, ws = _sim_configs(overrides)
    cfg = build_section("oracle", overrides, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    goal_mask, flat_cov = goal_mask_from_oracle(params, ws)
    write_pbm(goal_mask, out / "goal.pbm")

    n_complete = 0
    for i, (ep, info) in enumerate(generate_demos(args.n, args.crumple_k, cfg,
                                                  params, ws)):
        save_episode(ep, out / f"ep_{i:04d}")
        n_complete += bool(info["complete"])
        print(f"ep_{i:04d}: {len(ep.steps)} steps, "
              f"{'complete' if info['complete'] else 'incomplete'}")
    meta = {"n_episodes": args.n, "crumple_k": args.crumple_k, "seed": args.seed,
            "flat_coverage": flat_cov, "complete": n_complete}
    (out / "demos.json").write_text(json.dumps(meta, sort_keys=True))
    print(f"{n_complete}/{args.n} episodes complete -> {out}")
    return 0


def cmd_extract(args) -> int:
    from .handtrace import (parse_trace, detect_grasps, detect_still_observations,
                            TrackerConfig, frame_differences)
    from .episodes import assemble_episode, save_episode
    from .imageio import read_pgm16, read_pbm
    from .sim.camera import Observation
    from .config import build_section

    overrides = _load_overrides(args)
    trace_path = Path(args.trace)
    frames_dir = Path(args.frames)
    if not trace_path.exists():
        raise FileNotFoundError(f"trace file {trace_path} not found")
    if not frames_dir.exists():
        raise FileNotFoundError(f"frames directory {frames_dir} not found")

    with open(trace_path) as f:
        parsed = parse_trace(f)
    for w in parsed.warnings:
        print(f"warning: {w}", file=sys.stderr)

    cfg = build_section("tracker", overrides)
    events, ev_warnings = detect_grasps(parsed.frames, cfg)
    for w in ev_warnings:
        print(f"warning: {w}", file=sys.stderr)

    manifest = json.loads((frames_dir / "frames.json").read_text())
    frames = []
    for rec in manifest["frames"]:
        obs = Observation(depth=read_pgm16(frames_dir / f"{rec['stem']}.pgm"),
                          mask=read_pbm(frames_dir / f"{rec['stem']}.pbm"))
        frames.append((float(rec["t"]), obs))
    if "diffs" in manifest:
        diffs = [(float(t), float(d)) for t, d in manifest["diffs"]]
    else:
        diffs = frame_differences([(t, o.depth) for t, o in frames])
    capture_ts = detect_still_observations(diffs, cfg)
    by_t = {t: o for t, o in frames}
    captures = [(t, by_t[t]) for t in capture_ts if t in by_t]

    episode, warnings = assemble_episode(captures, events, parsed.resolution,
                                         image_px=args.image_px)
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    if not episode.steps:
        return _err("no complete steps extracted from trace", 1)
    save_episode(episode, args.out)
    print(f"extracted {len(episode.steps)} steps "
          f"({len(events)} grasps, {len(captures)} captures) -> {args.out}")
    return 0


def cmd_build_dataset(args) -> int:
    from .episodes import load_episode
    from .dataset import (build_samples, augment_dataset, add_negatives,
                          write_dataset, AugmentConfig, SplitSpec)
    from .heatmap import HeatmapConfig
    from .config import build_section

    overrides = _load_overrides(args)
    hm = build_section("heatmap", overrides)
    ep_dirs = sorted(p for p in Path(args.episodes).iterdir()
                     if p.is_dir() and (p / "actions.jsonl").exists())
    if not ep_dirs:
        return _err(f"no episode directories under {args.episodes}", 2)
    if args.val_episodes > 0:
        if args.val_episodes >= len(ep_dirs):
            return _err("val-episodes must leave at least one training episode", 2)
        train_dirs = ep_dirs[:-args.val_episodes]
        val_dirs = ep_dirs[-args.val_episodes:]
    else:
        train_dirs, val_dirs = ep_dirs, []
    split = SplitSpec(train_episodes=[d.name for d in train_dirs],
                      val_episodes=[d.name for d in val_dirs])

    def collect(dirs):
        samples = []
        for d in dirs:
            got, warnings = build_samples(load_episode(d), hm)
            for w in warnings:
                print(f"warning: {d.name}: {w}", file=sys.stderr)
            samples.extend(got)
        return samples

    train = collect(train_dirs)
    val = collect(val_dirs)
    if not train:
        return _err("no training samples", 1)
    if args.augment > 0:
        aug_cfg = build_section("augment", overrides,
                                n_copies=args.augment, seed=args.seed)
        train = augment_dataset(train, aug_cfg, hm)
    train, warnings = add_negatives(train, seed=args.seed)
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)

    out_train = Path(args.out)
    write_dataset(train, out_train, sigma_px=hm.sigma_px)
    print(f"train: {len(train)} samples ({sum(s.negative for s in train)} negative) "
          f"from {len(train_dirs)} episodes -> {out_train}")
    if val_dirs:
        out_val = Path(args.out_val or str(out_train).replace(".fdst", "") + "_val.fdst")
        write_dataset(val, out_val, sigma_px=hm.sigma_px)
        print(f"val: {len(val)} samples from {len(val_dirs)} episodes -> {out_val}")
    (out_train.parent / (out_train.stem + ".split.json")).write_text(
        json.dumps({"train": split.train_episodes, "val": split.val_episodes}))
    return 0


def cmd_train(args) -> int:
    from .dataset import read_dataset
    from .training import TrainConfig, train_policy, write_training_log
    from .policy import PolicyKind
    from .heatmap import HeatmapConfig
    from .net import save_checkpoint
    from .config import build_section

    if args.steps < 1:
        return _err("--steps must be >= 1", 2)
    overrides = _load_overrides(args)
    train_samples, sigma_px = read_dataset(args.dataset)
    val_samples, _ = read_dataset(args.val)
    hm = HeatmapConfig(sigma_px=sigma_px, image_px=train_samples[0].depth.shape[0]
                       if train_samples else 64)
    cfg = build_section("train", overrides, max_steps=args.steps, seed=args.seed,
                        **({"lr": args.lr} if args.lr else {}),
                        **({"val_every": args.val_every} if args.val_every else {}))
    kind = PolicyKind(args.model)

    def progress(step, row):
        print(f"step {step}: train_loss={row.train_loss:.4f} "
              f"val_mse={row.val_action_mse:.2f}")

    model, rows, info = train_policy(train_samples, val_samples, kind, cfg,
                                     heatmap_cfg=hm, progress=progress)
    meta = {"kind": kind.value, "sigma_px": hm.sigma_px, "image_px": hm.image_px,
            "trained_steps": info["trained_steps"], "val_mse": info["best_val_mse"]}
    save_checkpoint(model.params, model.arch.out_channels, args.out, meta=meta)
    write_training_log(rows, str(args.out) + ".log.csv")
    print(f"best val action MSE {info['best_val_mse']:.2f} px^2 "
          f"at step {info['best_step']} -> {args.out}")
    return 0


def _load_policy(path):
    from .net import load_checkpoint, FcnArchitecture
    from .policy import PolicyModel, PolicyKind
    from .heatmap import HeatmapConfig

    params, out_channels, meta = load_checkpoint(path)
    if meta is None:
        raise FileNotFoundError(f"{path}.meta.json missing")
    kind = PolicyKind(meta["kind"])
    arch = FcnArchitecture.standard(2 if kind is PolicyKind.PICK_TO_PLACE else 1,
                                    out_channels)
    hm = HeatmapConfig(sigma_px=meta["sigma_px"], image_px=meta["image_px"])
    return PolicyModel(kind=kind, arch=arch, params=params, heatmap_cfg=hm)


def _load_goal(demos_dir):
    from .imageio import read_pbm
    from .metrics import GoalSpec

    d = Path(demos_dir)
    meta = json.loads((d / "demos.json").read_text())
    return GoalSpec(goal_mask=read_pbm(d / "goal.pbm"),
                    flat_coverage=int(meta["flat_coverage"]))


def _policy_callable(model, stride):
    from .policy import PolicyKind, select_action, baseline_select

    if model.kind is PolicyKind.PICK_TO_PLACE:
        return lambda obs: select_action(model, obs, stride=stride)
    return lambda obs: baseline_select(model, obs)


def cmd_rollout(args) -> int:
    from .sim import init_flat, crumple
    from .rollout import run_episode, write_run_csv

    overrides = _load_overrides(args)
    params, ws = _sim_configs(overrides)
    model = _load_policy(args.checkpoint)
    goal = _load_goal(args.demos)
    policy = _policy_callable(model, args.stride)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    center = (ws.side_m / 2, ws.side_m / 2)
    for seed in (int(s) for s in args.seeds.split(",")):
        state = init_flat(params, ws, center, 0.0)
        if args.crumple_k > 0:
            state = crumple(state, seed, args.crumple_k, params, ws)
        rep = run_episode(policy, state, goal, params, ws, T=args.steps)
        write_run_csv(rep, out / f"run_{seed}.csv")
        print(f"seed {seed}: success={rep.success} best_iou={rep.best_iou:.3f} "
              f"best_isc={rep.best_isc:.3f} steps={rep.steps_taken}")
    return 0


def cmd_eval(args) -> int:
    from .rollout import ExperimentConfig, run_experiment, write_summary_csv

    overrides = _load_overrides(args)
    params, ws = _sim_configs(overrides)
    goal = _load_goal(args.demos)
    cfg = ExperimentConfig(smooth_start=(args.protocol == "smooth"),
                           crumple_k=args.crumple_k,
                           runs_per_config=args.runs)
    summaries = []
    for label, ckpt in [("checkpoint", args.checkpoint)] + (
            [("baseline", args.baseline)] if args.baseline else []):
        model = _load_policy(ckpt)
        policy = _policy_callable(model, args.stride)
        summary = run_experiment(policy, goal, params, ws, cfg,
                                 method=model.kind.value,
                                 progress=lambda c, r, rep: print(
                                     f"  {model.kind.value} config{c} run{r}: "
                                     f"success={rep.success} iou={rep.best_iou:.3f} "
                                     f"isc={rep.best_isc:.3f}"))
        summaries.append(summary)
        print(f"{model.kind.value}: mean success {summary.mean_success:.2f}/"
              f"{cfg.runs_per_config}, mean IOU {summary.mean_iou:.3f}, "
              f"mean ISC {summary.mean_isc:.3f}")
    write_summary_csv(summaries, args.out)
    print(f"summary -> {args.out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn
    from .server import create_app

    overrides = _load_overrides(args)
    params, ws = _sim_configs(overrides)
    app = create_app(params=params, ws=ws, dataset_dir=args.dataset_dir,
                     checkpoint=args.checkpoint, seed=args.seed)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fabfold",
                                description="fabric pick-and-place pipeline")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="key=value config file")
        sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("grad-check", help="verify analytic gradients")
    sp.add_argument("--seeds", type=int, default=10)
    sp.set_defaults(fn=cmd_grad_check)

    sp = sub.add_parser("gen-demos", help="generate scripted demonstrations")
    common(sp)
    sp.add_argument("--n", type=int, default=15)
    sp.add_argument("--crumple-k", type=int, default=1)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_gen_demos)

    sp = sub.add_parser("extract", help="hand-keypoint trace -> episode")
    common(sp)
    sp.add_argument("--trace", required=True, help="JSONL hand trace")
    sp.add_argument("--frames", required=True,
                    help="directory with frames.json + PGM/PBM frames")
    sp.add_argument("--image-px", type=int, default=64)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_extract)

    sp = sub.add_parser("build-dataset", help="episodes -> training dataset")
    common(sp)
    sp.add_argument("--episodes", required=True, help="directory of episode dirs")
    sp.add_argument("--val-episodes", type=int, default=0,
                    help="hold out the last N episodes for validation")
    sp.add_argument("--augment", type=int, default=20)
    sp.add_argument("--out", required=True)
    sp.add_argument("--out-val")
    sp.set_defaults(fn=cmd_build_dataset)

    sp = sub.add_parser("train", help="train a policy")
    common(sp)
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--val", required=True)
    sp.add_argument("--model", choices=["pick-to-place", "pick-plus-place"],
                    default="pick-to-place")
    sp.add_argument("--steps", type=int, required=True)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--val-every", type=int)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_train)

    sp = sub.add_parser("rollout", help="run policy episodes")
    common(sp)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--demos", required=True, help="demo dir with goal.pbm")
    sp.add_argument("--seeds", default="0")
    sp.add_argument("--crumple-k", type=int, default=1)
    sp.add_argument("--steps", type=int, default=15)
    sp.add_argument("--stride", type=int, default=1)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_rollout)

    sp = sub.add_parser("eval", help="run the evaluation protocol")
    common(sp)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--baseline")
    sp.add_argument("--demos", required=True)
    sp.add_argument("--protocol", choices=["full", "smooth"], default="full")
    sp.add_argument("--crumple-k", type=int, default=1)
    sp.add_argument("--runs", type=int, default=5)
    sp.add_argument("--stride", type=int, default=1)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_eval)

    sp = sub.add_parser("serve", help="HTTP/WebSocket demonstration service")
    common(sp)
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--port", type=int, default=8412)
    sp.add_argument("--dataset-dir", default="datasets")
    sp.add_argument("--checkpoint")
    sp.set_defaults(fn=cmd_serve)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except FileNotFoundError as e:
        return _err(str(e), 2)
    except Exception as e:
        return _err(f"{type(e).__name__}: {e}", 1)


if __name__ == "__main__":
    sys.exit(main())
