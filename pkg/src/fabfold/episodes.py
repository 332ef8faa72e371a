"""Demonstration episodes: assembly from captures + grasp events, and the
on-disk episode directory format shared by all demonstration sources.

An episode directory holds obs_0000.pgm/mask_0000.pbm .. obs_NNNN (one more
observation than steps) plus actions.jsonl with one record per step:
    {"step": i, "pick": [u, v], "place": [u, v]}
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .sim.camera import Observation
from .imageio import write_pgm16, read_pgm16, write_pbm, read_pbm
from .handtrace import GraspEvent


class EpisodeError(Exception):
    pass


@dataclass
class EpisodeStep:
    obs_before: Observation
    pick_px: tuple[int, int]
    place_px: tuple[int, int]
    obs_after: Observation


@dataclass
class Episode:
    steps: list
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.steps)


def rescale_pixel(p, src_res, dst_px: int) -> tuple[int, int]:
    """Map a pixel between resolutions using the pixel-center convention."""
    u = int(np.floor((p[0] + 0.5) * dst_px / src_res[0]))
    v = int(np.floor((p[1] + 0.5) * dst_px / src_res[1]))
    return (min(max(u, 0), dst_px - 1), min(max(v, 0), dst_px - 1))


def assemble_episode(captures: Sequence[tuple[float, Observation]],
                     events: Sequence[GraspEvent],
                     trace_res: tuple[int, int],
                     image_px: int = 64,
                     meta: Optional[dict] = None):
    """Pair each grasp event with its bracketing still captures.

    obs_before is the latest capture before t_grasp, obs_after the earliest
    after t_release; events without both brackets, with a capture occurring
    mid-pinch, or breaking step contiguity are dropped with a warning.
    Returns (Episode, warnings).
    """
    warnings: list[str] = []
    steps: list[EpisodeStep] = []
    times = [t for t, _ in captures]
    prev_after_idx: Optional[int] = None

    for k, ev in enumerate(events):
        before_idx = None
        for i, t in enumerate(times):
            if t < ev.t_grasp:
                before_idx = i
        after_idx = None
        for i in range(len(times) - 1, -1, -1):
            if times[i] > ev.t_release:
                after_idx = i
        if before_idx is None or after_idx is None:
            warnings.append(f"event {k}: no bracketing capture; dropped")
            continue
        if any(ev.t_grasp <= t <= ev.t_release for t in times):
            warnings.append(f"event {k}: capture occurred mid-pinch; dropped")
            continue
        if prev_after_idx is not None and before_idx != prev_after_idx:
            # keep obs_after(step i) == obs_before(step i+1)
            if before_idx < prev_after_idx:
                warnings.append(f"event {k}: no capture since previous action; dropped")
                continue
        prev_after_idx = after_idx
        steps.append(EpisodeStep(
            obs_before=captures[before_idx][1],
            pick_px=rescale_pixel(ev.pick_px, trace_res, image_px),
            place_px=rescale_pixel(ev.place_px, trace_res, image_px),
            obs_after=captures[after_idx][1],
        ))
    ep_meta = {"trace_res": list(trace_res), "image_px": image_px}
    if meta:
        ep_meta.update(meta)
    return Episode(steps=steps, meta=ep_meta), warnings


def save_episode(ep: Episode, path) -> None:
    """Write the episode directory (observations + actions.jsonl)."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    obs_seq: list[Observation] = []
    for i, s in enumerate(ep.steps):
        if i == 0:
            obs_seq.append(s.obs_before)
        obs_seq.append(s.obs_after)
    if not ep.steps:
        raise EpisodeError("refusing to save an empty episode")
    for i, obs in enumerate(obs_seq):
        write_pgm16(obs.depth, path / f"obs_{i:04d}.pgm")
        write_pbm(obs.mask, path / f"mask_{i:04d}.pbm")
    with open(path / "actions.jsonl", "w") as f:
        for i, s in enumerate(ep.steps):
            rec = {"step": i, "pick": list(map(int, s.pick_px)),
                   "place": list(map(int, s.place_px))}
            f.write(json.dumps(rec) + "\n")
    if ep.meta:
        with open(path / "meta.json", "w") as f:
            json.dump(ep.meta, f, indent=1)


def load_episode(path) -> Episode:
    """Read an episode directory back; inverse of save_episode."""
    path = Path(path)
    actions_file = path / "actions.jsonl"
    if not actions_file.exists():
        raise EpisodeError(f"{path}: missing actions.jsonl")
    actions = []
    with open(actions_file) as f:
        for line in f:
            line = line.strip()
            if line:
                actions.append(json.loads(line))
    actions.sort(key=lambda r: r["step"])
    n_obs = len(actions) + 1
    obs_seq = []
    for i in range(n_obs):
        pgm = path / f"obs_{i:04d}.pgm"
        pbm = path / f"mask_{i:04d}.pbm"
        if not pgm.exists() or not pbm.exists():
            raise EpisodeError(f"{path}: missing observation {i}")
        obs_seq.append(Observation(depth=read_pgm16(pgm), mask=read_pbm(pbm)))
    meta = {}
    meta_file = path / "meta.json"
    if meta_file.exists():
        meta = json.loads(meta_file.read_text())
    steps = [EpisodeStep(obs_before=obs_seq[i],
                         pick_px=tuple(actions[i]["pick"]),
                         place_px=tuple(actions[i]["place"]),
                         obs_after=obs_seq[i + 1])
             for i in range(len(actions))]
    return Episode(steps=steps, meta=meta)
