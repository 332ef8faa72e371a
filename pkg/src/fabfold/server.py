"""HTTP/WebSocket service exposing the live simulator to the demonstration UI.

Sessions are isolated simulator instances; requests within one session are
serialized by a per-session lock. All images travel base64-encoded (the
literal PGM/PBM file bytes) inside JSON bodies.
"""
from __future__ import annotations

import asyncio
import base64
import io
import json
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from fastapi import FastAPI, Request, WebSocket, WebSocketDisconnect
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, FileResponse
from starlette.concurrency import run_in_threadpool

from .sim import (ClothParams, WorkspaceConfig, init_flat, render, crumple,
                  execute_pick_place, EmptyGraspError, PickOffMaskError,
                  PickPlaceAction, GraspMode)
from .episodes import Episode, EpisodeStep, save_episode
from .metrics import GoalSpec, iou_aligned, isc
from .policy import choose_grasp_mode, select_action, PolicyKind
from .imageio import write_pgm16, write_pbm
from .oracle import goal_mask_from_oracle

IDLE_TIMEOUT_S = 30 * 60


def _b64_pgm(depth) -> str:
    import tempfile, os
    # write_pgm16 works on paths; render to bytes via a temp buffer
    buf = io.BytesIO()
    arr = np.clip(np.asarray(depth, dtype=np.float64), 0.0, 1.0)
    samples = np.round(arr * 65535.0).astype(">u2")
    h, w = samples.shape
    buf.write(f"P5\n{w} {h}\n65535\n".encode())
    buf.write(samples.tobytes())
    return base64.b64encode(buf.getvalue()).decode()


def _b64_pbm(mask) -> str:
    arr = (np.asarray(mask) != 0).astype(np.uint8)
    h, w = arr.shape
    buf = io.BytesIO()
    buf.write(f"P4\n{w} {h}\n".encode())
    buf.write(np.packbits(arr, axis=1).tobytes())
    return base64.b64encode(buf.getvalue()).decode()


def _b64_heatmap(hm) -> str:
    return _b64_pgm(np.clip(hm, 0.0, 1.0))


@dataclass
class Session:
    sid: str
    state: object
    steps: list = field(default_factory=list)
    prev: Optional[tuple] = None          # one-level undo: (state, steps[:])
    lock: threading.Lock = field(default_factory=threading.Lock)
    last_access: float = field(default_factory=time.monotonic)
    version: int = 0

    def touch(self):
        self.last_access = time.monotonic()


class ApiError(Exception):
    def __init__(self, status: int, error: str):
        self.status = status
        self.error = error
        super().__init__(error)


def create_app(params: Optional[ClothParams] = None,
               ws: Optional[WorkspaceConfig] = None,
               dataset_dir: str = "datasets",
               checkpoint: Optional[str] = None,
               seed: int = 0,
               frontend_dir: Optional[str] = None,
               idle_timeout_s: float = IDLE_TIMEOUT_S) -> FastAPI:
    params = params or ClothParams()
    ws_cfg = ws or WorkspaceConfig()
    app = FastAPI(title="fabfold demonstration service")
    sessions: dict[str, Session] = {}

    goal_mask, flat_cov = goal_mask_from_oracle(params, ws_cfg)
    goal = GoalSpec(goal_mask=goal_mask, flat_coverage=flat_cov)

    policy_model = None
    if checkpoint:
        from .cli import _load_policy
        policy_model = _load_policy(checkpoint)

    @app.exception_handler(RequestValidationError)
    async def _on_validation(request, exc):
        return JSONResponse(status_code=400, content={"error": "malformed_body"})

    @app.exception_handler(ApiError)
    async def _on_api_error(request, exc: ApiError):
        return JSONResponse(status_code=exc.status, content={"error": exc.error})

    def purge():
        now = time.monotonic()
        for sid in [s for s, v in sessions.items()
                    if now - v.last_access > idle_timeout_s]:
            sessions.pop(sid, None)

    def get_session(sid: str) -> Session:
        purge()
        sess = sessions.get(sid)
        if sess is None:
            raise ApiError(404, "unknown_session")
        sess.touch()
        return sess

    async def parse_body(request: Request) -> dict:
        try:
            body = await request.json()
        except Exception:
            raise ApiError(400, "malformed_body")
        if not isinstance(body, dict):
            raise ApiError(400, "malformed_body")
        return body

    def obs_payload(sess: Session) -> dict:
        obs = render(sess.state, ws_cfg, params)
        return {"depth_pgm": _b64_pgm(obs.depth), "mask_pbm": _b64_pbm(obs.mask),
                "step": len(sess.steps)}

    @app.post("/session")
    async def create_session(request: Request):
        body = await parse_body(request)
        s_seed = int(body.get("seed", seed))
        crumple_k = int(body.get("crumple_k", 0))

        def build():
            center = (ws_cfg.side_m / 2, ws_cfg.side_m / 2)
            state = init_flat(params, ws_cfg, center, 0.0)
            if crumple_k > 0:
                state = crumple(state, s_seed, crumple_k, params, ws_cfg)
            return state

        state = await run_in_threadpool(build)
        sid = uuid.uuid4().hex[:12]
        sessions[sid] = Session(sid=sid, state=state)
        payload = await run_in_threadpool(obs_payload, sessions[sid])
        return {"id": sid, **payload}

    @app.get("/session/{sid}/obs")
    async def get_obs(sid: str):
        sess = get_session(sid)
        return await run_in_threadpool(obs_payload, sess)

    @app.post("/session/{sid}/action")
    async def post_action(sid: str, request: Request):
        sess = get_session(sid)
        body = await parse_body(request)
        try:
            pick = (int(body["pick"][0]), int(body["pick"][1]))
            place = (int(body["place"][0]), int(body["place"][1]))
        except (KeyError, TypeError, ValueError, IndexError):
            raise ApiError(400, "malformed_body")
        mode_raw = body.get("grasp_mode", "auto")
        if mode_raw not in ("auto", "top", "all"):
            raise ApiError(400, "malformed_body")
        px = ws_cfg.image_px
        if not (0 <= pick[0] < px and 0 <= pick[1] < px
                and 0 <= place[0] < px and 0 <= place[1] < px):
            raise ApiError(422, "pick_off_mask" if not (0 <= pick[0] < px and 0 <= pick[1] < px)
                           else "place_out_of_bounds")

        def act():
            with sess.lock:
                obs = render(sess.state, ws_cfg, params)
                if obs.mask[pick[1], pick[0]] == 0:
                    raise ApiError(422, "pick_off_mask")
                action = PickPlaceAction(pick_px=pick, place_px=place)
                if mode_raw == "auto":
                    action.grasp_mode = choose_grasp_mode(obs, action)
                else:
                    action.grasp_mode = GraspMode.TOP_LAYER if mode_raw == "top" else GraspMode.ALL_LAYER
                try:
                    new_state = execute_pick_place(sess.state, action, params,
                                                   ws_cfg, obs=obs)
                except EmptyGraspError:
                    raise ApiError(422, "empty_grasp")
                except PickOffMaskError:
                    raise ApiError(422, "pick_off_mask")
                new_obs = render(new_state, ws_cfg, params)
                sess.prev = (sess.state, list(sess.steps))
                sess.steps.append(EpisodeStep(obs_before=obs, pick_px=pick,
                                              place_px=place, obs_after=new_obs))
                sess.state = new_state
                sess.version += 1
                return {
                    "obs": {"depth_pgm": _b64_pgm(new_obs.depth),
                            "mask_pbm": _b64_pbm(new_obs.mask),
                            "step": len(sess.steps)},
                    "metrics": {"iou_aligned": iou_aligned(new_obs.mask, goal),
                                "isc": isc(new_obs.mask, goal)},
                    "echo": {"pick": list(pick), "place": list(place),
                             "grasp_mode": action.grasp_mode.value},
                }

        return await run_in_threadpool(act)

    @app.post("/session/{sid}/undo")
    async def post_undo(sid: str):
        sess = get_session(sid)

        def undo():
            with sess.lock:
                if sess.prev is None:
                    raise ApiError(422, "nothing_to_undo")
                sess.state, sess.steps = sess.prev
                sess.prev = None
                sess.version += 1
                return obs_payload(sess)

        return await run_in_threadpool(undo)

    @app.post("/session/{sid}/save")
    async def post_save(sid: str, request: Request):
        sess = get_session(sid)
        body = await parse_body(request)
        name = str(body.get("name", "human"))
        if not name or "/" in name or name.startswith("."):
            raise ApiError(400, "malformed_body")

        def save():
            with sess.lock:
                if not sess.steps:
                    raise ApiError(422, "empty_episode")
                root = Path(dataset_dir) / name
                root.mkdir(parents=True, exist_ok=True)
                idx = 0
                while (root / f"ep_{idx:04d}").exists():
                    idx += 1
                ep_dir = root / f"ep_{idx:04d}"
                ep = Episode(steps=list(sess.steps),
                             meta={"source": "service", "session": sess.sid,
                                   "image_px": ws_cfg.image_px})
                save_episode(ep, ep_dir)
                return {"episode_dir": str(ep_dir), "steps": len(sess.steps)}

        return await run_in_threadpool(save)

    @app.get("/session/{sid}/suggest")
    async def get_suggest(sid: str):
        sess = get_session(sid)
        if policy_model is None:
            raise ApiError(409, "no_policy_loaded")

        def suggest():
            with sess.lock:
                obs = render(sess.state, ws_cfg, params)
                action = select_action(policy_model, obs, stride=2)
                from .policy import predict_place
                heat = predict_place(policy_model, obs, action.pick_px)
                return {"pick": list(action.pick_px), "place": list(action.place_px),
                        "score": action.score, "heatmap_pgm": _b64_heatmap(heat)}

        return await run_in_threadpool(suggest)

    @app.websocket("/session/{sid}/stream")
    async def stream(websocket: WebSocket, sid: str):
        await websocket.accept()
        sess = sessions.get(sid)
        if sess is None:
            await websocket.close(code=4004)
            return
        try:
            last = -1
            while True:
                if sess.version != last:
                    last = sess.version
                    payload = await run_in_threadpool(obs_payload, sess)
                    await websocket.send_text(json.dumps(payload))
                await asyncio.sleep(0.05)
        except (WebSocketDisconnect, RuntimeError):
            return

    if frontend_dir and Path(frontend_dir).exists():
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=frontend_dir, html=True), name="ui")

    return app
