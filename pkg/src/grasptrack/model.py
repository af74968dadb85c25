"""The promptable grasp network.

Pipeline: a stride-8 convolutional encoder turns each frame into a grid
embedding; prompts (point or box) become Fourier-positional tokens; when
no prompt is given, cross-frame attention fuses the embedding with memory
tokens built from past state vectors (embedding grid + downsampled
position mask + object pointer per frame, plus a recency embedding); a
two-way token<->grid transformer followed by an upsampling head emits the
5-channel mask stack and the object pointer.

All forward paths carry a leading batch axis so training can run clips in
lockstep; inference wraps batch size 1.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import ModelConfig
from .decoding import MaskStack


@dataclass(frozen=True)
class Prompt:
    """A point or box designating the target instance, in pixel coordinates."""

    kind: str                      # "point" | "box"
    point: tuple | None = None     # (x, y)
    box: tuple | None = None       # (x0, y0, x1, y1)

    def __post_init__(self):
        if self.kind == "point":
            if self.point is None or len(self.point) != 2:
                raise ValueError("point prompt needs (x, y)")
        elif self.kind == "box":
            if self.box is None or len(self.box) != 4:
                raise ValueError("box prompt needs (x0, y0, x1, y1)")
            x0, y0, x1, y1 = self.box
            if not (x0 < x1 and y0 < y1):
                raise ValueError(f"box corners must satisfy x0<x1, y0<y1, got {self.box}")
        else:
            raise ValueError(f"prompt kind must be 'point' or 'box', got {self.kind!r}")


class PromptRequired(ValueError):
    """Raised when a prompt-encoding path receives no prompt."""


def _he(rng, shape, fan_in, dtype):
    return (rng.standard_normal(shape) * math.sqrt(2.0 / fan_in)).astype(dtype)


def _normal(rng, shape, std, dtype):
    return (rng.standard_normal(shape) * std).astype(dtype)


class PromptableGraspNet:
    """Parameter container plus every forward path of the tracker."""

    def __init__(self, config: ModelConfig | None = None, dtype=np.float32):
        self.config = config or ModelConfig()
        self.dtype = np.dtype(dtype)
        self.params: "OrderedDict[str, Tensor]" = OrderedDict()
        self._build(np.random.default_rng(self.config.init_seed))

    # -- construction --------------------------------------------------------

    def _param(self, name: str, array: np.ndarray, trainable: bool = True) -> Tensor:
        t = Tensor(array.astype(self.dtype), requires_grad=trainable)
        self.params[name] = t
        return t

    def _build(self, rng) -> None:
        cfg = self.config
        d = cfg.embed_dim
        c1, c2, c3 = cfg.enc_channels
        self._param("enc.c1.w", _he(rng, (4, 4, 3, c1), 4 * 4 * 3, self.dtype))
        self._param("enc.c1.b", np.zeros(c1))
        self._param("enc.c2.w", _he(rng, (4, 4, c1, c2), 4 * 4 * c1, self.dtype))
        self._param("enc.c2.b", np.zeros(c2))
        self._param("enc.c3.w", _he(rng, (4, 4, c2, c3), 4 * 4 * c2, self.dtype))
        self._param("enc.c3.b", np.zeros(c3))
        self._param("enc.c4.w", _he(rng, (3, 3, c3, d), 3 * 3 * c3, self.dtype))
        self._param("enc.c4.b", np.zeros(d))
        self._param("enc.ln.g", np.ones(d))
        self._param("enc.ln.b", np.zeros(d))

        # one fixed Fourier basis shared by grid positions, prompt corners and
        # memory tokens: matching "prompt corner" to "grid cell" in attention
        # is then a dot product of the same encoding, not a learned mapping
        self._param(
            "prompt.freqs",
            (rng.standard_normal((2, d // 2)) * cfg.fourier_scale).astype(self.dtype),
            trainable=False,
        )
        gy, gx = np.meshgrid(
            (np.arange(cfg.grid_h) + 0.5) / cfg.grid_h,
            (np.arange(cfg.grid_w) + 0.5) / cfg.grid_w,
            indexing="ij",
        )
        centers = np.stack([gx.ravel(), gy.ravel()], axis=1)  # (hw, 2) as (x, y)
        self._param("pos_embed", self._fourier(centers), trainable=False)
        self._param("prompt.point", _normal(rng, (d,), 0.02, self.dtype))
        self._param("prompt.box_tl", _normal(rng, (d,), 0.02, self.dtype))
        self._param("prompt.box_br", _normal(rng, (d,), 0.02, self.dtype))

        # cross-frame fusion attention; output projection starts at zero so
        # an untrained fuse() is exactly the identity residual
        std = 1.0 / math.sqrt(d)
        for n in ("wq", "wk", "wv"):
            self._param(f"fuse.{n}", _normal(rng, (d, d), std, self.dtype))
        self._param("fuse.wo", np.zeros((d, d)))
        self._param("fuse.pos_proj", _normal(rng, (d,), 0.5, self.dtype))
        self._param("fuse.ptr.w", _normal(rng, (cfg.pointer_dim, d), std, self.dtype))
        self._param("fuse.ptr.b", np.zeros(d))
        self._param("fuse.age", _normal(rng, (cfg.mem_capacity, d), 0.02, self.dtype))

        self._param("dec.mask_token", _normal(rng, (1, 1, d), 0.02, self.dtype))
        for i in range(cfg.decoder_layers):
            for blk in ("self", "t2i", "i2t"):
                for n in ("wq", "wk", "wv", "wo"):
                    self._param(f"dec.l{i}.{blk}.{n}", _normal(rng, (d, d), std, self.dtype))
            self._param(f"dec.l{i}.mlp.w1", _he(rng, (d, 2 * d), d, self.dtype))
            self._param(f"dec.l{i}.mlp.b1", np.zeros(2 * d))
            self._param(f"dec.l{i}.mlp.w2", _he(rng, (2 * d, d), 2 * d, self.dtype))
            self._param(f"dec.l{i}.mlp.b2", np.zeros(d))
            for ln in ("ln1", "ln2", "ln3", "ln4"):
                self._param(f"dec.l{i}.{ln}.g", np.ones(d))
                self._param(f"dec.l{i}.{ln}.b", np.zeros(d))

        h0, h1, h2 = cfg.head_channels
        self._param("head.c0.w", _he(rng, (1, 1, d, h0), d, self.dtype))
        self._param("head.c0.b", np.zeros(h0))
        self._param("head.c1.w", _he(rng, (3, 3, h0, h1), 9 * h0, self.dtype))
        self._param("head.c1.b", np.zeros(h1))
        self._param("head.c2.w", _he(rng, (3, 3, h1, h2), 9 * h1, self.dtype))
        self._param("head.c2.b", np.zeros(h2))
        self._param("head.c3.w", _he(rng, (3, 3, h2, 5), 9 * h2, self.dtype))
        # start position/width/semantic slightly OFF so the untrained decoder
        # emits nothing and the balanced BCE sees sane probabilities
        self._param("head.c3.b", np.array([-2.0, 0.0, 0.0, -2.0, -2.0]))

        self._param("ptr.w", _normal(rng, (d, cfg.pointer_dim), std, self.dtype))
        self._param("ptr.b", np.zeros(cfg.pointer_dim))

    def trainable(self) -> "OrderedDict[str, Tensor]":
        return OrderedDict((k, v) for k, v in self.params.items() if v.requires_grad)

    # -- persistence -----------------------------------------------------------

    def save(self, path, extra_meta: dict | None = None) -> None:
        meta = {"model": asdict(self.config)}
        if extra_meta:
            meta.update(extra_meta)
        ad.save_params(path, self.params, meta)

    @classmethod
    def load(cls, path) -> tuple["PromptableGraspNet", dict]:
        arrays, meta = ad.load_params(path)
        if "model" not in meta:
            raise ad.CheckpointError(f"{path} lacks a model config block")
        mcfg = meta["model"]
        mcfg["enc_channels"] = tuple(mcfg["enc_channels"])
        mcfg["head_channels"] = tuple(mcfg["head_channels"])
        model = cls(ModelConfig(**mcfg))
        missing = set(model.params) - set(arrays)
        surplus = set(arrays) - set(model.params)
        if missing or surplus:
            raise ad.CheckpointError(f"checkpoint mismatch: missing {sorted(missing)}, surplus {sorted(surplus)}")
        for name, tensor in model.params.items():
            if arrays[name].shape != tensor.data.shape:
                raise ad.CheckpointError(
                    f"{name}: checkpoint shape {arrays[name].shape} vs model {tensor.data.shape}"
                )
            tensor.data = arrays[name].astype(model.dtype)
        return model, meta

    # -- attention helper --------------------------------------------------------

    def _mha(self, q_in: Tensor, kv_in: Tensor, prefix: str) -> Tensor:
        """Multi-head attention (B, Tq, d) x (B, Tk, d) -> (B, Tq, d)."""
        p = self.params
        heads = self.config.num_heads
        d = self.config.embed_dim
        dh = d // heads
        b, tq = q_in.shape[0], q_in.shape[1]
        tk = kv_in.shape[1]

        def split(x, t):
            return ad.transpose(x.reshape(b, t, heads, dh), (0, 2, 1, 3))

        q = split(ad.matmul(q_in, p[f"{prefix}.wq"]), tq)
        k = split(ad.matmul(kv_in, p[f"{prefix}.wk"]), tk)
        v = split(ad.matmul(kv_in, p[f"{prefix}.wv"]), tk)
        out = ad.scaled_dot_attention(q, k, v)  # (B, heads, Tq, dh)
        out = ad.transpose(out, (0, 2, 1, 3)).reshape(b, tq, d)
        return ad.matmul(out, p[f"{prefix}.wo"])

    # -- encoder -------------------------------------------------------------

    def normalize_frames(self, frames: np.ndarray) -> np.ndarray:
        """uint8 (B, H, W, 3) -> centered float (B, H, W, 3)."""
        return (np.asarray(frames, dtype=self.dtype) / 127.5) - 1.0

    def encode(self, frames) -> Tensor:
        """Image batch (B, H, W, 3) -> grid embedding (B, h, w, d)."""
        cfg = self.config
        arr = frames if isinstance(frames, Tensor) else Tensor(self.normalize_frames(frames))
        if arr.ndim != 4 or arr.shape[1:] != (cfg.frame_height, cfg.frame_width, 3):
            raise ad.ShapeMismatch(
                f"encode expects (B, {cfg.frame_height}, {cfg.frame_width}, 3), got {arr.shape}"
            )
        p = self.params
        x = ad.relu(ad.conv2d(arr, p["enc.c1.w"], p["enc.c1.b"], stride=2, pad=1))
        x = ad.relu(ad.conv2d(x, p["enc.c2.w"], p["enc.c2.b"], stride=2, pad=1))
        x = ad.relu(ad.conv2d(x, p["enc.c3.w"], p["enc.c3.b"], stride=2, pad=1))
        x = ad.conv2d(x, p["enc.c4.w"], p["enc.c4.b"], stride=1, pad=1)
        return ad.layer_norm(x, p["enc.ln.g"], p["enc.ln.b"])

    def encode_image(self, frame: np.ndarray) -> Tensor:
        """Single frame (H, W, 3) -> (1, h, w, d)."""
        return self.encode(np.asarray(frame)[None])

    # -- prompt encoder --------------------------------------------------------

    def _fourier(self, coords: np.ndarray) -> np.ndarray:
        """Normalized coords (N, 2) in [0,1] -> (N, d) Fourier features."""
        proj = 2.0 * math.pi * coords.astype(np.float64) @ self.params["prompt.freqs"].data.astype(np.float64)
        return np.concatenate([np.sin(proj), np.cos(proj)], axis=-1).astype(self.dtype)

    def box_tokens(self, boxes: np.ndarray) -> Tensor:
        """Pixel boxes (B, 4) -> (B, 2, d) corner tokens."""
        cfg = self.config
        boxes = np.asarray(boxes, dtype=np.float64)
        scale = np.array([cfg.frame_width, cfg.frame_height], dtype=np.float64)
        tl = self._fourier(boxes[:, 0:2] / scale)
        br = self._fourier(boxes[:, 2:4] / scale)
        base = Tensor(np.stack([tl, br], axis=1))  # (B, 2, d)
        kinds = ad.concat(
            [self.params["prompt.box_tl"].reshape(1, 1, -1), self.params["prompt.box_br"].reshape(1, 1, -1)],
            axis=1,
        )
        return ad.add(base, kinds)

    def point_tokens(self, points: np.ndarray) -> Tensor:
        cfg = self.config
        points = np.asarray(points, dtype=np.float64)
        scale = np.array([cfg.frame_width, cfg.frame_height], dtype=np.float64)
        base = Tensor(self._fourier(points / scale)[:, None, :])  # (B, 1, d)
        return ad.add(base, self.params["prompt.point"].reshape(1, 1, -1))

    def encode_prompt(self, prompt: Prompt) -> Tensor:
        """One prompt -> (1, k, d) tokens; raises PromptRequired on None."""
        if prompt is None:
            raise PromptRequired("tracking mode has no prompt tokens; route through fuse() instead")
        if prompt.kind == "box":
            return self.box_tokens(np.asarray(prompt.box, dtype=np.float64)[None])
        return self.point_tokens(np.asarray(prompt.point, dtype=np.float64)[None])

    # -- memory fusion ---------------------------------------------------------

    def memory_tokens(self, entries) -> Tensor:
        """State vectors (oldest -> newest) -> context tokens (B, S, d).

        Each entry contributes its h*w embedding tokens (with the position
        mask pooled to the grid and added through a learned channel, plus a
        recency embedding) and one projected object-pointer token.
        """
        if not entries:
            raise ValueError("memory_tokens requires a non-empty context")
        cfg = self.config
        h, w, d = cfg.grid_h, cfg.grid_w, cfg.embed_dim
        n = len(entries)
        groups = []
        for i, (emb, pos, ptr) in enumerate(entries):
            b = emb.shape[0]
            age = min(n - 1 - i, cfg.mem_capacity - 1)
            toks = ad.add(emb.reshape(b, h * w, d), self.params["pos_embed"])
            pos_t = pos if isinstance(pos, Tensor) else Tensor(np.asarray(pos, dtype=self.dtype))
            pooled = pos_t.reshape(b, h, cfg.frame_height // h, w, cfg.frame_width // w).mean(axis=(2, 4))
            toks = ad.add(toks, ad.mul(pooled.reshape(b, h * w, 1), self.params["fuse.pos_proj"]))
            toks = ad.add(toks, self.params["fuse.age"][age])
            ptr_tok = ad.add(ad.matmul(ptr, self.params["fuse.ptr.w"]), self.params["fuse.ptr.b"])
            groups.append(ad.concat([toks, ptr_tok.reshape(b, 1, d)], axis=1))
        return ad.concat(groups, axis=1) if len(groups) > 1 else groups[0]

    def fuse(self, mem_tokens: Tensor, embedding: Tensor) -> Tensor:
        """Cross-frame attention: embedding queries memory; residual add."""
        cfg = self.config
        b = embedding.shape[0]
        hw = cfg.grid_h * cfg.grid_w
        x = embedding.reshape(b, hw, cfg.embed_dim)
        q = ad.add(x, self.params["pos_embed"])
        out = self._mha(q, mem_tokens, "fuse")
        return ad.add(x, out).reshape(b, cfg.grid_h, cfg.grid_w, cfg.embed_dim)

    # -- mask decoder ------------------------------------------------------------

    def decode(self, features: Tensor, prompt_tokens: Tensor | None) -> tuple[Tensor, Tensor]:
        """Feature grid (B, h, w, d) + optional prompt tokens -> (mask (B,H,W,5), pointer (B, dp)).

        Prompted mode passes the raw frame embedding as features; tracking
        mode passes the fused features and no tokens.
        """
        cfg = self.config
        p = self.params
        b = features.shape[0]
        hw = cfg.grid_h * cfg.grid_w
        d = cfg.embed_dim

        g = features.reshape(b, hw, d)
        t = ad.add(p["dec.mask_token"], Tensor(np.zeros((b, 1, d), dtype=self.dtype)))
        if prompt_tokens is not None:
            if prompt_tokens.shape[0] != b:
                raise ad.ShapeMismatch(f"prompt tokens batch {prompt_tokens.shape} vs features batch {b}")
            t = ad.concat([t, prompt_tokens], axis=1)

        pos = self.params["pos_embed"]
        for i in range(cfg.decoder_layers):
            pre = f"dec.l{i}"
            t = ad.layer_norm(ad.add(t, self._mha(t, t, f"{pre}.self")), p[f"{pre}.ln1.g"], p[f"{pre}.ln1.b"])
            gk = ad.add(g, pos)
            t = ad.layer_norm(ad.add(t, self._mha(t, gk, f"{pre}.t2i")), p[f"{pre}.ln2.g"], p[f"{pre}.ln2.b"])
            m = ad.matmul(ad.relu(ad.add(ad.matmul(t, p[f"{pre}.mlp.w1"]), p[f"{pre}.mlp.b1"])), p[f"{pre}.mlp.w2"])
            t = ad.layer_norm(ad.add(t, ad.add(m, p[f"{pre}.mlp.b2"])), p[f"{pre}.ln3.g"], p[f"{pre}.ln3.b"])
            gq = ad.add(g, pos)
            g = ad.layer_norm(ad.add(g, self._mha(gq, t, f"{pre}.i2t")), p[f"{pre}.ln4.g"], p[f"{pre}.ln4.b"])

        pointer = ad.add(ad.matmul(t[:, 0], p["ptr.w"]), p["ptr.b"])

        # head runs to half resolution and finishes with a plain 2x nearest
        # upsample: grasp strips are several pixels wide, and dropping the
        # full-resolution conv roughly halves the training step cost
        x = g.reshape(b, cfg.grid_h, cfg.grid_w, d)
        x = ad.relu(ad.conv2d(x, p["head.c0.w"], p["head.c0.b"], stride=1, pad=0))
        x = ad.relu(ad.conv2d(ad.upsample2x(x), p["head.c1.w"], p["head.c1.b"], stride=1, pad=1))
        x = ad.relu(ad.conv2d(ad.upsample2x(x), p["head.c2.w"], p["head.c2.b"], stride=1, pad=1))
        x = ad.upsample2x(ad.conv2d(x, p["head.c3.w"], p["head.c3.b"], stride=1, pad=1))
        mask = ad.concat([x[..., 0:1], ad.tanh(x[..., 1:3]), x[..., 3:5]], axis=3)
        return mask, pointer

    # -- single-frame inference ---------------------------------------------------

    def predict_frame(self, embedding: Tensor, prompt_tokens: Tensor | None) -> tuple[MaskStack, Tensor, Tensor]:
        """Decode one frame batch of 1; returns (MaskStack, mask tensor row, pointer)."""
        mask, pointer = self.decode(embedding, prompt_tokens)
        return MaskStack(np.asarray(mask.data[0], dtype=np.float64)), mask, pointer
