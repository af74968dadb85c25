/**
 * Canvas <-> image coordinate mapping.
 *
 * The stream frame is letterboxed into the canvas: uniform scale, centered.
 * Both directions share one transform so a prompt drawn on the canvas maps
 * to image pixels and back within a pixel at any zoom.
 */

export interface ViewTransform {
  scale: number;
  offsetX: number;
  offsetY: number;
  imageW: number;
  imageH: number;
}

export function fitTransform(canvasW: number, canvasH: number, imageW: number, imageH: number): ViewTransform {
  const scale = Math.min(canvasW / imageW, canvasH / imageH);
  return {
    scale,
    offsetX: (canvasW - imageW * scale) / 2,
    offsetY: (canvasH - imageH * scale) / 2,
    imageW,
    imageH,
  };
}

export function imageToCanvas(t: ViewTransform, x: number, y: number): [number, number] {
  return [t.offsetX + x * t.scale, t.offsetY + y * t.scale];
}

export function canvasToImage(t: ViewTransform, cx: number, cy: number): [number, number] {
  return [(cx - t.offsetX) / t.scale, (cy - t.offsetY) / t.scale];
}

/** Clamp an image-space point into the frame bounds. */
export function clampToImage(t: ViewTransform, x: number, y: number): [number, number] {
  return [Math.min(Math.max(x, 0), t.imageW), Math.min(Math.max(y, 0), t.imageH)];
}

export interface BoxDrag {
  x0: number;
  y0: number;
  x1: number;
  y1: number;
}

/**
 * Normalize a drag in image coords into a prompt: a box when it has real
 * extent, a point when the drag collapses (sub-pixel area).
 */
export function dragToPrompt(drag: BoxDrag):
  | { kind: "box"; box: [number, number, number, number] }
  | { kind: "point"; point: [number, number] } {
  const x0 = Math.min(drag.x0, drag.x1);
  const x1 = Math.max(drag.x0, drag.x1);
  const y0 = Math.min(drag.y0, drag.y1);
  const y1 = Math.max(drag.y0, drag.y1);
  if (x1 - x0 < 1 || y1 - y0 < 1) {
    return { kind: "point", point: [drag.x1, drag.y1] };
  }
  return { kind: "box", box: [x0, y0, x1, y1] };
}
