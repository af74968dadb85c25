/**
 * Wire schema shared with the session server.
 *
 * Everything is JSON with a "type" tag. Parsing is defensive: a malformed
 * server message yields a ParseFailure instead of throwing, so a glitchy
 * stream shows an error banner rather than killing the client.
 */

export interface GraspDto {
  x: number;
  y: number;
  theta: number;
  width: number;
  conf: number;
}

export interface FrameMessage {
  type: "frame";
  index: number;
  image_png_b64: string;
  grasps: GraspDto[];
  heatmap_png_b64: string;
  prompted: boolean;
  latency_ms: number;
}

export interface NoticeMessage {
  type: "notice";
  message: string;
  frame: number;
}

export interface ErrorMessage {
  type: "error";
  message: string;
}

export type ServerMessage = FrameMessage | NoticeMessage | ErrorMessage;

export interface StartMessage {
  type: "start";
  scene_seed: number;
  checkpoint: string;
}

export interface PromptMessage {
  type: "prompt";
  frame: number;
  box?: [number, number, number, number];
  point?: [number, number];
}

export interface ControlMessage {
  type: "pause" | "resume" | "stop";
}

export type ClientMessage = StartMessage | PromptMessage | ControlMessage;

export interface ParseFailure {
  type: "parse_failure";
  reason: string;
}

function isNumber(v: unknown): v is number {
  return typeof v === "number" && Number.isFinite(v);
}

function isGrasp(v: unknown): v is GraspDto {
  if (typeof v !== "object" || v === null) return false;
  const g = v as Record<string, unknown>;
  return isNumber(g.x) && isNumber(g.y) && isNumber(g.theta) && isNumber(g.width) && isNumber(g.conf);
}

/** Strictly validate one JSON value as a server message. */
export function parseServerMessage(raw: unknown): ServerMessage | ParseFailure {
  if (typeof raw !== "object" || raw === null) {
    return { type: "parse_failure", reason: "message is not an object" };
  }
  const msg = raw as Record<string, unknown>;
  switch (msg.type) {
    case "frame": {
      if (!Number.isInteger(msg.index)) return { type: "parse_failure", reason: "frame.index missing" };
      if (typeof msg.image_png_b64 !== "string") return { type: "parse_failure", reason: "frame.image_png_b64 missing" };
      if (typeof msg.heatmap_png_b64 !== "string") return { type: "parse_failure", reason: "frame.heatmap_png_b64 missing" };
      if (typeof msg.prompted !== "boolean") return { type: "parse_failure", reason: "frame.prompted missing" };
      if (!isNumber(msg.latency_ms)) return { type: "parse_failure", reason: "frame.latency_ms missing" };
      if (!Array.isArray(msg.grasps) || !msg.grasps.every(isGrasp)) {
        return { type: "parse_failure", reason: "frame.grasps malformed" };
      }
      return msg as unknown as FrameMessage;
    }
    case "notice":
      if (typeof msg.message !== "string" || !Number.isInteger(msg.frame)) {
        return { type: "parse_failure", reason: "notice malformed" };
      }
      return msg as unknown as NoticeMessage;
    case "error":
      if (typeof msg.message !== "string") return { type: "parse_failure", reason: "error malformed" };
      return msg as unknown as ErrorMessage;
    default:
      return { type: "parse_failure", reason: `unknown type ${String(msg.type)}` };
  }
}

/** Client messages are built locally, so serialization is just shaping. */
export function serializeClientMessage(msg: ClientMessage): string {
  return JSON.stringify(msg);
}

export function parseClientMessage(raw: unknown): ClientMessage | ParseFailure {
  if (typeof raw !== "object" || raw === null) {
    return { type: "parse_failure", reason: "message is not an object" };
  }
  const msg = raw as Record<string, unknown>;
  switch (msg.type) {
    case "start":
      if (!Number.isInteger(msg.scene_seed) || typeof msg.checkpoint !== "string") {
        return { type: "parse_failure", reason: "start malformed" };
      }
      return msg as unknown as StartMessage;
    case "prompt": {
      if (!Number.isInteger(msg.frame)) return { type: "parse_failure", reason: "prompt.frame missing" };
      const hasBox = Array.isArray(msg.box);
      const hasPoint = Array.isArray(msg.point);
      if (hasBox === hasPoint) return { type: "parse_failure", reason: "prompt needs exactly one of box/point" };
      if (hasBox) {
        const b = msg.box as unknown[];
        if (b.length !== 4 || !b.every(isNumber)) return { type: "parse_failure", reason: "prompt.box malformed" };
        const [x0, y0, x1, y1] = b as number[];
        if (!(x0 < x1 && y0 < y1)) return { type: "parse_failure", reason: "prompt.box degenerate" };
      } else {
        const p = msg.point as unknown[];
        if (p.length !== 2 || !p.every(isNumber)) return { type: "parse_failure", reason: "prompt.point malformed" };
      }
      return msg as unknown as PromptMessage;
    }
    case "pause":
    case "resume":
    case "stop":
      return msg as unknown as ControlMessage;
    default:
      return { type: "parse_failure", reason: `unknown type ${String(msg.type)}` };
  }
}
