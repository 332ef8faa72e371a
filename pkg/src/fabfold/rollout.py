"""Episode rollouts and the crumpled/smooth-start evaluation protocols."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .sim import (ClothParams, WorkspaceConfig, ClothState, init_flat, render,
                  crumple, execute_pick_place, EmptyGraspError, PickOffMaskError,
                  DivergenceError, PickPlaceAction)
from .metrics import GoalSpec, iou_aligned, isc
from .policy import choose_grasp_mode
from .imageio import write_pgm16, write_pbm

SUCCESS_IOU_THRESHOLD = 0.8
EPISODE_STEPS = 15


@dataclass
class StepRecord:
    step: int
    action: Optional[PickPlaceAction]
    iou_aligned: float
    isc: float
    note: str = ""


@dataclass
class EpisodeReport:
    steps: list = field(default_factory=list)
    best_iou: float = 0.0
    best_isc: float = 0.0
    success: bool = False
    steps_taken: int = 0
    aborted: str = ""

    def best_iou_step(self) -> int:
        vals = [r.iou_aligned for r in self.steps]
        return int(np.argmax(vals)) if vals else -1

    def best_isc_step(self) -> int:
        vals = [r.isc for r in self.steps]
        return int(np.argmax(vals)) if vals else -1


def run_episode(policy: Callable, state: ClothState, goal: GoalSpec,
                params: ClothParams, ws: WorkspaceConfig,
                T: int = EPISODE_STEPS,
                success_threshold: float = SUCCESS_IOU_THRESHOLD,
                keep_observations: bool = False) -> EpisodeReport:
    """Roll the policy for up to T steps, recording metrics after each action.

    policy(obs) returns a PickPlaceAction; grasp_mode is resolved via
    choose_grasp_mode when the action leaves it None. Empty-grasp and
    off-mask picks consume the step with the state unchanged. The episode
    stops early once the success threshold is reached.
    """
    report = EpisodeReport()
    observations = []
    for t in range(T):
        obs = render(state, ws, params)
        try:
            action = policy(obs)
        except Exception as e:  # a policy with no legal action ends the episode
            report.aborted = f"policy failure at step {t}: {e}"
            break
        if action.grasp_mode is None:
            action.grasp_mode = choose_grasp_mode(obs, action)
        note = ""
        try:
            state = execute_pick_place(state, action, params, ws, obs=obs)
        except (EmptyGraspError, PickOffMaskError) as e:
            note = type(e).__name__
        except DivergenceError as e:
            report.aborted = str(e)
            break
        new_obs = render(state, ws, params)
        rec = StepRecord(step=t, action=action,
                         iou_aligned=iou_aligned(new_obs.mask, goal),
                         isc=isc(new_obs.mask, goal), note=note)
        report.steps.append(rec)
        if keep_observations:
            observations.append(new_obs)
        report.steps_taken = t + 1
        report.best_iou = max(report.best_iou, rec.iou_aligned)
        report.best_isc = max(report.best_isc, rec.isc)
        if report.best_iou >= success_threshold:
            break
    report.success = report.best_iou >= success_threshold
    if keep_observations:
        report.observations = observations
    return report


@dataclass
class ExperimentConfig:
    n_configs: int = 3
    runs_per_config: int = 5
    crumple_k: int = 2
    config_seeds: tuple = (11, 23, 37)
    smooth_start: bool = False     # Table II protocol: 1 config, flat start
    T: int = EPISODE_STEPS
    success_threshold: float = SUCCESS_IOU_THRESHOLD

    def seeds_for(self, config_idx: int):
        base = self.config_seeds[config_idx % len(self.config_seeds)]
        return [base * 1000 + r for r in range(self.runs_per_config)]


@dataclass
class ExperimentSummary:
    rows: list            # (config_label, success_count, mean_iou, mean_isc)
    reports: list         # list of lists of EpisodeReport
    method: str = ""

    @property
    def mean_success(self) -> float:
        return float(np.mean([r[1] for r in self.rows]))

    @property
    def mean_iou(self) -> float:
        return float(np.mean([r[2] for r in self.rows]))

    @property
    def mean_isc(self) -> float:
        return float(np.mean([r[3] for r in self.rows]))


def run_experiment(policy: Callable, goal: GoalSpec, params: ClothParams,
                   ws: WorkspaceConfig, cfg: ExperimentConfig,
                   method: str = "policy", progress=None) -> ExperimentSummary:
    """The Table-style protocol: configs x runs episodes, per-config rows."""
    center = (ws.side_m / 2.0, ws.side_m / 2.0)
    n_configs = 1 if cfg.smooth_start else cfg.n_configs
    rows = []
    all_reports = []
    for c in range(n_configs):
        reports = []
        for run, seed in enumerate(cfg.seeds_for(c)):
            state = init_flat(params, ws, center, 0.0)
            if not cfg.smooth_start:
                state = crumple(state, seed, cfg.crumple_k, params, ws)
            rep = run_episode(policy, state, goal, params, ws, T=cfg.T,
                              success_threshold=cfg.success_threshold)
            reports.append(rep)
            if progress is not None:
                progress(c, run, rep)
        label = "smooth" if cfg.smooth_start else f"config{c}"
        rows.append((label,
                     sum(r.success for r in reports),
                     float(np.mean([r.best_iou for r in reports])),
                     float(np.mean([r.best_isc for r in reports]))))
        all_reports.append(reports)
    return ExperimentSummary(rows=rows, reports=all_reports, method=method)


def write_run_csv(report: EpisodeReport, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["step", "iou", "isc"])
        for r in report.steps:
            w.writerow([r.step, f"{r.iou_aligned:.4f}", f"{r.isc:.4f}"])


def write_summary_csv(summaries, path) -> None:
    """Table-style summary: per-config rows plus the mean row per method."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["config", "method", "success", "iou", "isc"])
        for s in summaries:
            for label, succ, miou, misc_ in s.rows:
                w.writerow([label, s.method, succ, f"{miou:.4f}", f"{misc_:.4f}"])
            w.writerow(["mean", s.method, f"{s.mean_success:.3f}",
                        f"{s.mean_iou:.4f}", f"{s.mean_isc:.4f}"])


def write_episode_strip(report: EpisodeReport, out_dir) -> None:
    """Optional per-step renders for visual inspection (needs
    keep_observations=True on run_episode)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i, obs in enumerate(getattr(report, "observations", [])):
        write_pgm16(obs.depth, out / f"step_{i:02d}_depth.pgm")
        write_pbm(obs.mask, out / f"step_{i:02d}_mask.pbm")
