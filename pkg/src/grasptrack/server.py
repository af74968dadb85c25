"""Streaming session service.

One WebSocket connection drives at most one session: the client sends a
start message naming a scene seed and a checkpoint, the server replays the
generated scene through a tracking session and streams frames with grasp
overlays and the position heatmap. Prompts arriving mid-stream apply to
the next processed frame (last writer wins between frames). A bounded
send buffer (4 frames) drops the oldest unprompted frame when the client
stalls, so memory stays flat while prompt acknowledgments still arrive.
"""

from __future__ import annotations

import asyncio
import base64
import io
import json
from collections import deque
from pathlib import Path

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from PIL import Image

from .config import DecodeConfig, SceneConfig
from .memory import Session
from .model import Prompt, PromptableGraspNet
from .protocol import ControlMsg, ErrorMsg, FrameMsg, NoticeMsg, PromptMsg, ProtocolError, StartMsg, parse_client_message, serialize
from .scene import generate_clip

SEND_BUFFER = 4


def _png_b64(array: np.ndarray, mode: str) -> str:
    img = Image.fromarray(array, mode=mode)
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def _heatmap_png(mask_stack) -> str:
    prob = mask_stack.position_prob()
    return _png_b64((prob * 255.0).astype(np.uint8), "L")


class _SessionRunner:
    """Producer/sender pair behind one WebSocket."""

    def __init__(self, ws: WebSocket, model, decode_cfg, frames, n_hist, frame_interval):
        self.ws = ws
        self.session = Session(model, n_hist=n_hist, decode_cfg=decode_cfg)
        self.frames = frames
        self.frame_interval = frame_interval
        self.buffer: deque = deque()
        self.new_item = asyncio.Event()
        self.latest_prompt: Prompt | None = None
        self.paused = False
        self.stopped = False

    def push(self, message: dict, prompted: bool = False) -> None:
        if len(self.buffer) >= SEND_BUFFER:
            for i, (_, was_prompted) in enumerate(self.buffer):
                if not was_prompted:
                    del self.buffer[i]
                    break
            else:
                self.buffer.popleft()
        self.buffer.append((message, prompted))
        self.new_item.set()

    def submit_prompt(self, msg: PromptMsg) -> None:
        # prompts apply to the next processed frame; last writer wins
        if msg.box is not None:
            self.latest_prompt = Prompt(kind="box", box=msg.box)
        else:
            self.latest_prompt = Prompt(kind="point", point=msg.point)

    async def producer(self) -> None:
        noticed = False
        for index, frame in enumerate(self.frames):
            if self.stopped:
                return
            while self.paused and not self.stopped:
                await asyncio.sleep(0.005)
            prompt = self.latest_prompt
            self.latest_prompt = None  # consumed exactly once
            if prompt is None and not self.session._primed:
                if not noticed:
                    self.push(serialize(NoticeMsg(message="needs_prompt", frame=index)))
                    noticed = True
                empty = _png_b64(np.zeros(frame.shape[:2], dtype=np.uint8), "L")
                msg = FrameMsg(
                    index=index,
                    image_png_b64=_png_b64(frame, "RGB"),
                    grasps=(),
                    heatmap_png_b64=empty,
                    prompted=False,
                    latency_ms=0.0,
                )
                self.push(serialize(msg))
            else:
                mask, grasps = await asyncio.to_thread(self.session.step, frame, prompt)
                msg = FrameMsg(
                    index=index,
                    image_png_b64=_png_b64(frame, "RGB"),
                    grasps=tuple(
                        tuple(sorted({"x": g.x, "y": g.y, "theta": g.theta, "width": g.width, "conf": g.confidence}.items()))
                        for g in grasps
                    ),
                    heatmap_png_b64=_heatmap_png(mask),
                    prompted=prompt is not None,
                    latency_ms=self.session.last_timing.total_ms,
                )
                self.push(serialize(msg), prompted=prompt is not None)
            if self.frame_interval > 0:
                await asyncio.sleep(self.frame_interval)
            else:
                await asyncio.sleep(0)
        self.push(serialize(NoticeMsg(message="end_of_stream", frame=len(self.frames))))

    async def sender(self) -> None:
        while True:
            await self.new_item.wait()
            self.new_item.clear()
            while self.buffer:
                message, _ = self.buffer.popleft()
                await self.ws.send_json(message)


def create_app(
    checkpoint_root: str | Path = ".",
    scene: SceneConfig | None = None,
    stream_frames: int = 256,
    frame_interval: float = 0.04,
    n_hist: int = 8,
    ui_dir: str | Path | None = None,
) -> FastAPI:
    """Build the service; `checkpoint_root` anchors relative checkpoint paths."""
    app = FastAPI(title="grasptrack session server")
    scene_cfg = scene or SceneConfig(n_objects_min=2, n_objects_max=3)
    root = Path(checkpoint_root)

    @app.get("/health")
    async def health():
        return {"status": "ok"}

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        await ws.accept()
        runner = None
        tasks: list[asyncio.Task] = []
        try:
            raw = await ws.receive_text()
            try:
                msg = parse_client_message(json.loads(raw))
            except (json.JSONDecodeError, ProtocolError) as e:
                await ws.send_json(serialize(ErrorMsg(message=f"malformed start: {e}")))
                await ws.close()
                return
            if not isinstance(msg, StartMsg):
                await ws.send_json(serialize(ErrorMsg(message="first message must be a start message")))
                await ws.close()
                return
            ckpt = Path(msg.checkpoint)
            if not ckpt.is_absolute():
                ckpt = root / ckpt
            if not ckpt.exists():
                await ws.send_json(serialize(ErrorMsg(message=f"unknown checkpoint: {msg.checkpoint}")))
                await ws.close()
                return
            model, meta = PromptableGraspNet.load(ckpt)
            decode_cfg = DecodeConfig(w_max=float(meta.get("w_max", scene_cfg.w_max)))
            clip = generate_clip(msg.scene_seed, scene_cfg, n_frames=stream_frames)
            runner = _SessionRunner(ws, model, decode_cfg, clip.frames, n_hist, frame_interval)
            tasks = [asyncio.create_task(runner.producer()), asyncio.create_task(runner.sender())]

            while True:
                raw = await ws.receive_text()
                try:
                    msg = parse_client_message(json.loads(raw))
                except (json.JSONDecodeError, ProtocolError) as e:
                    await ws.send_json(serialize(ErrorMsg(message=str(e))))
                    await ws.close()
                    return
                if isinstance(msg, PromptMsg):
                    runner.submit_prompt(msg)
                elif isinstance(msg, ControlMsg):
                    if msg.action == "pause":
                        runner.paused = True
                    elif msg.action == "resume":
                        runner.paused = False
                    else:  # stop
                        runner.stopped = True
                        await ws.close()
                        return
                elif isinstance(msg, StartMsg):
                    await ws.send_json(serialize(ErrorMsg(message="session already started on this connection")))
        except WebSocketDisconnect:
            pass
        finally:
            if runner is not None:
                runner.stopped = True
            for task in tasks:
                task.cancel()

    if ui_dir is not None and Path(ui_dir).exists():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")
    return app
