"""Wire schema for the streaming session service.

All messages are JSON objects with a "type" field. Client to server:

    {"type": "start", "scene_seed": int, "checkpoint": str}
    {"type": "prompt", "frame": int, "box": [x0, y0, x1, y1]}
    {"type": "prompt", "frame": int, "point": [x, y]}
    {"type": "pause"} | {"type": "resume"} | {"type": "stop"}

Server to client:

    {"type": "frame", "index": int, "image_png_b64": str,
     "grasps": [{"x","y","theta","width","conf"}, ...],
     "heatmap_png_b64": str, "prompted": bool, "latency_ms": float}
    {"type": "notice", "message": str, "frame": int}
    {"type": "error", "message": str}

Parsing is strict: unknown types and malformed fields raise ProtocolError.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field


class ProtocolError(ValueError):
    pass


@dataclass(frozen=True)
class StartMsg:
    scene_seed: int
    checkpoint: str


@dataclass(frozen=True)
class PromptMsg:
    frame: int
    box: tuple | None = None
    point: tuple | None = None


@dataclass(frozen=True)
class ControlMsg:
    action: str  # pause | resume | stop


@dataclass(frozen=True)
class FrameMsg:
    index: int
    image_png_b64: str
    grasps: tuple
    heatmap_png_b64: str
    prompted: bool
    latency_ms: float


@dataclass(frozen=True)
class NoticeMsg:
    message: str
    frame: int


@dataclass(frozen=True)
class ErrorMsg:
    message: str


def _require(d: dict, key: str, types, ctx: str):
    if key not in d:
        raise ProtocolError(f"{ctx}: missing field {key!r}")
    v = d[key]
    if not isinstance(v, types):
        raise ProtocolError(f"{ctx}: field {key!r} has type {type(v).__name__}")
    return v


def _number_seq(d: dict, key: str, n: int, ctx: str) -> tuple:
    v = _require(d, key, (list, tuple), ctx)
    if len(v) != n or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
        raise ProtocolError(f"{ctx}: field {key!r} must be {n} numbers")
    return tuple(float(x) for x in v)


def parse_client_message(d: dict):
    """Typed view of a client JSON object; raises ProtocolError when malformed."""
    if not isinstance(d, dict):
        raise ProtocolError(f"message must be an object, got {type(d).__name__}")
    mtype = _require(d, "type", str, "message")
    if mtype == "start":
        seed = _require(d, "scene_seed", int, "start")
        if isinstance(seed, bool):
            raise ProtocolError("start: scene_seed must be an integer")
        return StartMsg(scene_seed=seed, checkpoint=_require(d, "checkpoint", str, "start"))
    if mtype == "prompt":
        frame = _require(d, "frame", int, "prompt")
        has_box, has_point = "box" in d, "point" in d
        if has_box == has_point:
            raise ProtocolError("prompt: exactly one of box or point required")
        if has_box:
            box = _number_seq(d, "box", 4, "prompt")
            if not (box[0] < box[2] and box[1] < box[3]):
                raise ProtocolError(f"prompt: degenerate box {box}")
            return PromptMsg(frame=frame, box=box)
        return PromptMsg(frame=frame, point=_number_seq(d, "point", 2, "prompt"))
    if mtype in ("pause", "resume", "stop"):
        return ControlMsg(action=mtype)
    raise ProtocolError(f"unknown client message type {mtype!r}")


def parse_server_message(d: dict):
    if not isinstance(d, dict):
        raise ProtocolError(f"message must be an object, got {type(d).__name__}")
    mtype = _require(d, "type", str, "message")
    if mtype == "frame":
        grasps = _require(d, "grasps", list, "frame")
        for g in grasps:
            for k in ("x", "y", "theta", "width", "conf"):
                _require(g, k, (int, float), "frame.grasps")
        return FrameMsg(
            index=_require(d, "index", int, "frame"),
            image_png_b64=_require(d, "image_png_b64", str, "frame"),
            grasps=tuple(tuple(sorted(g.items())) for g in grasps),
            heatmap_png_b64=_require(d, "heatmap_png_b64", str, "frame"),
            prompted=_require(d, "prompted", bool, "frame"),
            latency_ms=float(_require(d, "latency_ms", (int, float), "frame")),
        )
    if mtype == "notice":
        return NoticeMsg(message=_require(d, "message", str, "notice"), frame=_require(d, "frame", int, "notice"))
    if mtype == "error":
        return ErrorMsg(message=_require(d, "message", str, "error"))
    raise ProtocolError(f"unknown server message type {mtype!r}")


def serialize(msg) -> dict:
    """Dataclass message -> plain JSON-ready dict (inverse of the parsers)."""
    if isinstance(msg, StartMsg):
        return {"type": "start", "scene_seed": msg.scene_seed, "checkpoint": msg.checkpoint}
    if isinstance(msg, PromptMsg):
        out = {"type": "prompt", "frame": msg.frame}
        if msg.box is not None:
            out["box"] = list(msg.box)
        else:
            out["point"] = list(msg.point)
        return out
    if isinstance(msg, ControlMsg):
        return {"type": msg.action}
    if isinstance(msg, FrameMsg):
        return {
            "type": "frame",
            "index": msg.index,
            "image_png_b64": msg.image_png_b64,
            "grasps": [dict(g) for g in msg.grasps],
            "heatmap_png_b64": msg.heatmap_png_b64,
            "prompted": msg.prompted,
            "latency_ms": msg.latency_ms,
        }
    if isinstance(msg, NoticeMsg):
        return {"type": "notice", "message": msg.message, "frame": msg.frame}
    if isinstance(msg, ErrorMsg):
        return {"type": "error", "message": msg.message}
    raise ProtocolError(f"cannot serialize {type(msg).__name__}")
