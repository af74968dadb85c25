"""Spatiotemporal context state machine.

A session tracks exactly one target. Prompted frames reset the FIFO bank
and decode from the raw frame embedding with prompt tokens; unprompted
frames fuse the aggregated bank into the embedding and decode without
tokens. Every processed frame pushes a fresh state vector (embedding,
post-sigmoid position mask, object pointer), evicting the oldest entry
once the bank is full.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .config import DecodeConfig
from .decoding import MaskStack, decode as decode_grasps
from .geometry import GraspPose
from .model import Prompt


class NeedsPrompt(RuntimeError):
    """First frame of a session (or after a reset) must carry a prompt."""


@dataclass
class StateVector:
    """Per-frame memory entry: embedding, position probabilities, pointer."""

    embedding: object            # Tensor (1, h, w, d)
    pos_mask: object             # Tensor or array (1, H, W), post-sigmoid position probabilities
    pointer: object              # Tensor (1, d_ptr)
    frame_index: int


class MemoryBank:
    """FIFO of at most `capacity` state vectors; reset drops everything."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError(f"memory capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._entries: deque[StateVector] = deque()

    def push(self, sv: StateVector) -> None:
        if self._entries and sv.frame_index <= self._entries[-1].frame_index:
            raise ValueError(
                f"frame_index must increase: got {sv.frame_index} after {self._entries[-1].frame_index}"
            )
        if len(self._entries) == self.capacity:
            self._entries.popleft()
        self._entries.append(sv)

    def reset(self) -> None:
        self._entries.clear()

    def entries(self) -> list[StateVector]:
        """Oldest -> newest snapshot; never exposes the internal deque."""
        return list(self._entries)

    def __len__(self) -> int:
        return len(self._entries)


@dataclass
class AggregatedContext:
    """Ordered (oldest -> newest) state vectors plus token accounting."""

    states: list
    grid_tokens: int  # h*w tokens per frame

    @property
    def token_count(self) -> int:
        return len(self.states) * (self.grid_tokens + 1)


def aggregate(bank: MemoryBank, grid_tokens: int) -> AggregatedContext:
    """Snapshot the bank for fusion; empty banks are a caller bug."""
    if len(bank) == 0:
        raise ValueError("cannot aggregate an empty memory bank; prompted path required")
    return AggregatedContext(states=bank.entries(), grid_tokens=grid_tokens)


@dataclass
class StepTiming:
    encode_ms: float = 0.0
    propagate_ms: float = 0.0  # fuse + decode + grasp extraction + memory push
    total_ms: float = 0.0


class Session:
    """Single-target tracking over one stream with frozen model parameters."""

    def __init__(self, model, n_hist: int = 8, decode_cfg: DecodeConfig | None = None, memory_enabled: bool = True):
        self.model = model
        self.bank = MemoryBank(n_hist)
        self.decode_cfg = decode_cfg or DecodeConfig(w_max=40.0)
        self.memory_enabled = memory_enabled
        self.last_frame_index = -1
        self.last_timing = StepTiming()
        self._primed = False  # set once a prompt has registered a target

    def step(self, frame: np.ndarray, prompt: Prompt | None = None) -> tuple[MaskStack, list[GraspPose]]:
        """Process one frame; returns the mask stack and decoded grasps.

        The prompt, when given, applies to this frame and resets the bank.
        Without a prompt the session tracks from memory; stepping an
        unprimed session without a prompt raises NeedsPrompt.
        """
        if prompt is None and not self._primed:
            raise NeedsPrompt("session has no registered target; provide a point or box prompt")
        t0 = time.perf_counter()
        frame_index = self.last_frame_index + 1
        with ad.no_grad():
            embedding = self.model.encode_image(frame)
            t1 = time.perf_counter()
            if prompt is not None:
                self.bank.reset()
                tokens = self.model.encode_prompt(prompt)
                mask_stack, mask, pointer = self.model.predict_frame(embedding, tokens)
                self._primed = True
            elif self.memory_enabled and len(self.bank) > 0:
                ctx = aggregate(self.bank, self.model.config.grid_h * self.model.config.grid_w)
                mem = self.model.memory_tokens([(s.embedding, s.pos_mask, s.pointer) for s in ctx.states])
                fused = self.model.fuse(mem, embedding)
                mask_stack, mask, pointer = self.model.predict_frame(fused, None)
            else:
                # memory disabled (ablation) or bank empty: plain embedding
                mask_stack, mask, pointer = self.model.predict_frame(embedding, None)
            if self.memory_enabled:
                # same float32 sigmoid as the training unroll, so a batch-1
                # training forward and a session replay agree bit for bit
                pos_prob = ad.sigmoid(mask[..., 0])
                self.bank.push(
                    StateVector(embedding=embedding, pos_mask=pos_prob, pointer=pointer, frame_index=frame_index)
                )
            grasps = decode_grasps(mask_stack, self.decode_cfg)
        t2 = time.perf_counter()
        self.last_frame_index = frame_index
        self.last_timing = StepTiming(
            encode_ms=(t1 - t0) * 1e3,
            propagate_ms=(t2 - t1) * 1e3,
            total_ms=(t2 - t0) * 1e3,
        )
        return mask_stack, grasps
