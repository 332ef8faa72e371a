"""Minibatch BCE training for both policy architectures, with periodic
action-level validation and best-checkpoint selection."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dataset import DemoSample
from .heatmap import HeatmapConfig, encode_gaussian
from .net import (forward, backward, bce_loss, adam_step, AdamConfig, AdamState)
from .policy import (PolicyModel, PolicyKind, make_policy, select_action,
                     baseline_select)
from .sim.camera import Observation


class TrainingDiverged(Exception):
    def __init__(self, step: int):
        self.step = step
        super().__init__(f"non-finite loss at training step {step}")


@dataclass
class TrainConfig:
    batch_size: int = 16
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_steps: int = 500_000
    val_every: int = 500
    val_stride: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.lr > 0:
            raise ValueError("lr must be > 0")


@dataclass
class TrainLogRow:
    step: int
    train_loss: float
    val_action_mse: float


def write_training_log(rows, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["step", "train_loss", "val_action_mse"])
        for r in rows:
            w.writerow([r.step, f"{r.train_loss:.6f}", f"{r.val_action_mse:.4f}"])


def _stack_inputs(samples, kind: PolicyKind, hm: HeatmapConfig):
    """Precomputed network inputs/targets for a fixed sample list."""
    n = len(samples)
    px = hm.image_px
    if kind is PolicyKind.PICK_TO_PLACE:
        x = np.empty((n, px, px, 2), dtype=np.float32)
        y = np.empty((n, px, px, 1), dtype=np.float32)
        for i, s in enumerate(samples):
            x[i, :, :, 0] = s.depth
            x[i, :, :, 1] = encode_gaussian(s.pick_px, hm)
            y[i, :, :, 0] = s.label
    else:
        x = np.empty((n, px, px, 1), dtype=np.float32)
        y = np.empty((n, px, px, 2), dtype=np.float32)
        for i, s in enumerate(samples):
            x[i, :, :, 0] = s.depth
            y[i, :, :, 0] = encode_gaussian(s.pick_px, hm)
            y[i, :, :, 1] = encode_gaussian(s.place_px, hm)
    return x, y


def validation_action_mse(model: PolicyModel, val_samples, stride: int = 2) -> float:
    """Mean squared pixel error of selected (pick, place) vs ground truth,
    averaged with equal weight over the two coordinates."""
    errs = []
    for s in val_samples:
        obs = Observation(depth=s.depth, mask=s.mask)
        if model.kind is PolicyKind.PICK_TO_PLACE:
            act = select_action(model, obs, stride=stride)
        else:
            act = baseline_select(model, obs)
        e_pick = (act.pick_px[0] - s.pick_px[0]) ** 2 + (act.pick_px[1] - s.pick_px[1]) ** 2
        e_place = (act.place_px[0] - s.place_px[0]) ** 2 + (act.place_px[1] - s.place_px[1]) ** 2
        errs.append(0.5 * (e_pick + e_place))
    return float(np.mean(errs))


def train_policy(train_samples, val_samples, kind: PolicyKind,
                 cfg: TrainConfig, heatmap_cfg: Optional[HeatmapConfig] = None,
                 progress=None):
    """Train from scratch; returns (PolicyModel with the best-validation
    parameters, log rows, info dict)."""
    hm = heatmap_cfg or HeatmapConfig()
    n_dropped = 0
    if kind is PolicyKind.PICK_PLUS_PLACE:
        kept = [s for s in train_samples if not s.negative]
        n_dropped = len(train_samples) - len(kept)
        train_samples = kept
    if not any(not s.negative for s in train_samples):
        raise ValueError("need at least one positive training sample")
    val_positives = [s for s in val_samples if not s.negative]
    if not val_positives:
        raise ValueError("need at least one validation positive")

    model = make_policy(kind, seed=cfg.seed, heatmap_cfg=hm)
    x_all, y_all = _stack_inputs(train_samples, kind, hm)
    rng = np.random.default_rng(cfg.seed)
    opt_cfg = AdamConfig(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
    opt_state = AdamState()

    rows: list[TrainLogRow] = []
    best_mse = np.inf
    best_params = {k: v.copy() for k, v in model.params.items()}
    best_step = 0
    loss_accum: list[float] = []

    val_steps = set(range(cfg.val_every, cfg.max_steps + 1, cfg.val_every))
    if cfg.max_steps % cfg.val_every != 0:
        val_steps.add(cfg.max_steps)

    for step in range(1, cfg.max_steps + 1):
        idx = rng.integers(0, len(train_samples), size=cfg.batch_size)
        xb = x_all[idx]
        yb = y_all[idx]
        logits, cache = forward(model.arch, model.params, xb, want_cache=True)
        loss, gz = bce_loss(logits, yb)
        if not np.isfinite(loss):
            raise TrainingDiverged(step)
        grads = backward(model.arch, model.params, cache, gz)
        model.params, opt_state = adam_step(model.params, grads, opt_state, opt_cfg)
        loss_accum.append(loss)

        if step in val_steps:
            mse = validation_action_mse(model, val_positives, stride=cfg.val_stride)
            rows.append(TrainLogRow(step=step,
                                    train_loss=float(np.mean(loss_accum)),
                                    val_action_mse=mse))
            loss_accum = []
            if mse < best_mse:
                best_mse = mse
                best_params = {k: v.copy() for k, v in model.params.items()}
                best_step = step
            if progress is not None:
                progress(step, rows[-1])

    model.params = best_params
    info = {"best_step": best_step, "best_val_mse": float(best_mse),
            "trained_steps": cfg.max_steps, "dropped_negatives": n_dropped}
    return model, rows, info
