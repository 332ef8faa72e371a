"""Pinch-based pick/place extraction from hand-keypoint traces.

Traces are line-delimited JSON, one frame per line:
    {"t": <seconds>, "present": <bool>, "lm": [[u, v, conf] x 21], "res": [w, h]}

Grasps are detected from the thumb-tip/index-tip distance with hysteresis
and a debounce count; still periods in the accompanying frame-difference
signal select the observation snapshots between actions.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

N_LANDMARKS = 21
THUMB_TIP = 4
INDEX_TIP = 8


class TraceError(Exception):
    pass


@dataclass
class HandFrame:
    t: float
    landmarks: list  # 21 entries of (u, v, conf)
    present: bool


@dataclass
class TrackerConfig:
    """Thresholds for the pinch state machine and still-frame capture.

    Pixel thresholds are in trace resolution. Defaults assume ~640 px video:
    grasp onset at 4% of the image diagonal, release at 1.25x that
    (hysteresis), three consecutive frames to confirm a pinch.
    """

    grasp_thresh_px: float = 36.0
    release_thresh_px: float = 45.0
    min_pinch_frames: int = 3
    still_thresh: float = 0.01
    still_frames: int = 3
    min_conf: float = 0.5

    def __post_init__(self):
        if not self.grasp_thresh_px > 0:
            raise ValueError("grasp_thresh_px must be > 0")
        if self.release_thresh_px < self.grasp_thresh_px:
            raise ValueError("release_thresh_px must be >= grasp_thresh_px")
        if self.min_pinch_frames < 1 or self.still_frames < 1:
            raise ValueError("min_pinch_frames and still_frames must be >= 1")

    @classmethod
    def for_resolution(cls, w: int, h: int, **kw) -> "TrackerConfig":
        diag = math.hypot(w, h)
        kw.setdefault("grasp_thresh_px", 0.04 * diag)
        kw.setdefault("release_thresh_px", 0.05 * diag)
        return cls(**kw)


@dataclass
class GraspEvent:
    pick_px: tuple[float, float]
    place_px: tuple[float, float]
    t_grasp: float
    t_release: float

    def __post_init__(self):
        if not self.t_release > self.t_grasp:
            raise ValueError("t_release must be > t_grasp")


class ParsedTrace(NamedTuple):
    frames: list
    resolution: tuple[int, int]
    warnings: list


def parse_trace(stream) -> ParsedTrace:
    """Parse a line-delimited trace; stream is an iterable of lines.

    Malformed lines and short landmark lists are downgraded to warnings
    (the frame is kept with present=False where possible); a timestamp
    going backwards is a hard error.
    """
    frames: list[HandFrame] = []
    warnings: list[str] = []
    resolution = (640, 640)
    last_t = -math.inf
    for lineno, line in enumerate(stream, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            rec = json.loads(line)
            t = float(rec["t"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            warnings.append(f"line {lineno}: unparseable frame record ({e})")
            continue
        if t < last_t:
            raise TraceError(f"line {lineno}: timestamp regression {t} < {last_t}")
        last_t = t
        if "res" in rec:
            resolution = (int(rec["res"][0]), int(rec["res"][1]))
        present = bool(rec.get("present", False))
        lm = rec.get("lm") or []
        if present and len(lm) != N_LANDMARKS:
            warnings.append(
                f"line {lineno}: expected {N_LANDMARKS} landmarks, got {len(lm)}; "
                f"marking frame absent")
            present = False
        landmarks = [(float(p[0]), float(p[1]), float(p[2])) for p in lm[:N_LANDMARKS]]
        while len(landmarks) < N_LANDMARKS:
            landmarks.append((0.0, 0.0, 0.0))
        frames.append(HandFrame(t=t, landmarks=landmarks, present=present))
    return ParsedTrace(frames=frames, resolution=resolution, warnings=warnings)


def pinch_distance(frame: HandFrame, cfg: TrackerConfig) -> Optional[float]:
    """Thumb-tip to index-tip distance, or None when undefined.

    Undefined when the hand is absent or either tip confidence is below
    min_conf; undefined frames are skipped by the state machine.
    """
    if not frame.present:
        return None
    tu, tv, tc = frame.landmarks[THUMB_TIP]
    iu, iv, ic = frame.landmarks[INDEX_TIP]
    if tc < cfg.min_conf or ic < cfg.min_conf:
        return None
    return math.hypot(iu - tu, iv - tv)


def _tip_midpoint(frame: HandFrame) -> tuple[float, float]:
    tu, tv, _ = frame.landmarks[THUMB_TIP]
    iu, iv, _ = frame.landmarks[INDEX_TIP]
    return ((tu + iu) / 2.0, (tv + iv) / 2.0)


def detect_grasps(frames: Sequence[HandFrame], cfg: TrackerConfig):
    """Run the OPEN -> PINCHED state machine over a time-ordered trace.

    A pinch is confirmed after min_pinch_frames consecutive frames below
    grasp_thresh_px; the pick is the tip midpoint at the first frame of
    that run. Release fires on the first frame above release_thresh_px
    (hysteresis); undefined-distance frames inside a pinch do not release.
    Returns (events, warnings).
    """
    events: list[GraspEvent] = []
    warnings: list[str] = []
    pinched = False
    run_len = 0
    run_start: Optional[HandFrame] = None
    pick: Optional[tuple] = None
    t_grasp = 0.0

    for frame in frames:
        d = pinch_distance(frame, cfg)
        if not pinched:
            if d is not None and d < cfg.grasp_thresh_px:
                if run_len == 0:
                    run_start = frame
                run_len += 1
                if run_len >= cfg.min_pinch_frames:
                    pinched = True
                    pick = _tip_midpoint(run_start)
                    t_grasp = run_start.t
                    run_len = 0
            else:
                run_len = 0
        else:
            if d is not None and d > cfg.release_thresh_px:
                place = _tip_midpoint(frame)
                events.append(GraspEvent(pick_px=pick, place_px=place,
                                         t_grasp=t_grasp, t_release=frame.t))
                pinched = False
    if pinched:
        warnings.append(
            f"trace ended inside a pinch started at t={t_grasp:.3f}; dropped")
    return events, warnings


def detect_still_observations(frame_diffs, cfg: TrackerConfig) -> list[float]:
    """Capture timestamps: the end of each maximal run of >= still_frames
    consecutive mean-abs-diff values below still_thresh.

    frame_diffs is a sequence of (t, scalar) pairs with scalars >= 0.
    """
    captures: list[float] = []
    run = 0
    last_t = None
    for t, d in frame_diffs:
        if d < 0:
            raise ValueError(f"negative frame difference {d} at t={t}")
        if d < cfg.still_thresh:
            run += 1
            last_t = t
        else:
            if run >= cfg.still_frames:
                captures.append(last_t)
            run = 0
    if run >= cfg.still_frames:
        captures.append(last_t)
    return captures


def frame_differences(images) -> list[tuple[float, float]]:
    """Mean absolute difference between consecutive (t, image) pairs."""
    import numpy as np

    out = []
    prev_t, prev_img = None, None
    for t, img in images:
        img = np.asarray(img, dtype=np.float64)
        if prev_img is not None:
            out.append((t, float(np.abs(img - prev_img).mean())))
        prev_t, prev_img = t, img
    return out
