/**
 * Session client state machine, independent of the DOM.
 *
 * The socket is injected so tests can script a fake server. Incoming
 * frames land in a latest-frame slot (rendering reads it on its own
 * clock and late frames are simply replaced, never queued). A submitted
 * prompt stays "pending" until the server acknowledges it with a frame
 * carrying prompted=true; prompts issued while paused are held and sent
 * on resume.
 */

import {
  parseServerMessage,
  serializeClientMessage,
  type ClientMessage,
  type FrameMessage,
  type PromptMessage,
} from "./protocol.js";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onmessage: ((data: string) => void) | null;
  onclose: (() => void) | null;
  onopen: (() => void) | null;
}

export type SessionStatus = "connecting" | "streaming" | "paused" | "stopped" | "disconnected";

export interface PromptDraft {
  box?: [number, number, number, number];
  point?: [number, number];
}

export interface ClientEvents {
  onFrame?: (frame: FrameMessage) => void;
  onStatus?: (status: SessionStatus) => void;
  onError?: (message: string) => void;
  onNotice?: (message: string, frame: number) => void;
}

export class SessionClient {
  status: SessionStatus = "connecting";
  latestFrame: FrameMessage | null = null;
  pendingPrompt: PromptDraft | null = null;
  acknowledgedPrompt: PromptDraft | null = null;
  latencyMs = 0;
  framesSeen = 0;

  private socket: SocketLike | null = null;
  private queuedPrompt: PromptDraft | null = null;
  private events: ClientEvents;

  constructor(events: ClientEvents = {}) {
    this.events = events;
  }

  attach(socket: SocketLike, sceneSeed: number, checkpoint: string): void {
    this.socket = socket;
    socket.onopen = () => {
      this.send({ type: "start", scene_seed: sceneSeed, checkpoint });
      this.setStatus("streaming");
    };
    socket.onmessage = (data) => this.handleMessage(data);
    socket.onclose = () => {
      if (this.status !== "stopped") this.setStatus("disconnected");
    };
  }

  private setStatus(status: SessionStatus): void {
    this.status = status;
    this.events.onStatus?.(status);
  }

  private send(msg: ClientMessage): void {
    this.socket?.send(serializeClientMessage(msg));
  }

  private handleMessage(data: string): void {
    let raw: unknown;
    try {
      raw = JSON.parse(data);
    } catch {
      this.events.onError?.("unparseable message from server");
      return;
    }
    const msg = parseServerMessage(raw);
    switch (msg.type) {
      case "parse_failure":
        this.events.onError?.(`bad server message: ${msg.reason}`);
        return;
      case "error":
        this.events.onError?.(msg.message);
        return;
      case "notice":
        this.events.onNotice?.(msg.message, msg.frame);
        return;
      case "frame": {
        // latest-frame slot: replace, never queue
        this.latestFrame = msg;
        this.framesSeen += 1;
        this.latencyMs = msg.latency_ms;
        if (msg.prompted && this.pendingPrompt) {
          this.acknowledgedPrompt = this.pendingPrompt;
          this.pendingPrompt = null;
        }
        this.events.onFrame?.(msg);
        return;
      }
    }
  }

  /** Click or drag result in image coordinates. */
  submitPrompt(draft: PromptDraft): void {
    if (this.status === "paused") {
      this.queuedPrompt = draft;  // sent on resume
      this.pendingPrompt = draft;
      return;
    }
    this.sendPrompt(draft);
  }

  private sendPrompt(draft: PromptDraft): void {
    const frame = this.latestFrame?.index ?? 0;
    const msg: PromptMessage = { type: "prompt", frame };
    if (draft.box) msg.box = draft.box;
    else if (draft.point) msg.point = draft.point;
    else return;
    this.pendingPrompt = draft;
    this.acknowledgedPrompt = null;
    this.send(msg);
  }

  pause(): void {
    if (this.status !== "streaming") return;
    this.send({ type: "pause" });
    this.setStatus("paused");
  }

  resume(): void {
    if (this.status !== "paused") return;
    this.send({ type: "resume" });
    this.setStatus("streaming");
    if (this.queuedPrompt) {
      const draft = this.queuedPrompt;
      this.queuedPrompt = null;
      this.sendPrompt(draft);
    }
  }

  stop(): void {
    this.send({ type: "stop" });
    this.setStatus("stopped");
    this.socket?.close();
  }
}
