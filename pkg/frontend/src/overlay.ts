/**
 * Grasp rectangle geometry and canvas drawing.
 *
 * Rectangles use the same convention as the evaluator: the jaw axis u runs
 * along (cos theta, sin theta) with half extent width/2, and the rectangle
 * height is width/2 (half extent width/4), so what the user sees is exactly
 * what the benchmark scores.
 */

import type { GraspDto } from "./protocol.js";
import { imageToCanvas, type ViewTransform } from "./coords.js";

export const HEIGHT_RATIO = 0.5;

export type Corner = [number, number];

/** Four corners in image coordinates, traced consecutively. */
export function graspCorners(g: GraspDto): [Corner, Corner, Corner, Corner] {
  const cu = Math.cos(g.theta);
  const su = Math.sin(g.theta);
  const hu = g.width / 2;
  const hv = (g.width * HEIGHT_RATIO) / 2;
  const ux = hu * cu;
  const uy = hu * su;
  const vx = -hv * su;
  const vy = hv * cu;
  return [
    [g.x + ux + vx, g.y + uy + vy],
    [g.x - ux + vx, g.y - uy + vy],
    [g.x - ux - vx, g.y - uy - vy],
    [g.x + ux - vx, g.y + uy - vy],
  ];
}

export function shoelaceArea(corners: Corner[]): number {
  let acc = 0;
  for (let i = 0; i < corners.length; i++) {
    const [x0, y0] = corners[i];
    const [x1, y1] = corners[(i + 1) % corners.length];
    acc += x0 * y1 - x1 * y0;
  }
  return Math.abs(acc) / 2;
}

export function drawGrasp(ctx: CanvasRenderingContext2D, t: ViewTransform, grasp: GraspDto, color = "#3dff74"): void {
  const corners = graspCorners(grasp).map(([x, y]) => imageToCanvas(t, x, y));
  ctx.beginPath();
  ctx.moveTo(corners[0][0], corners[0][1]);
  for (const [x, y] of corners.slice(1)) ctx.lineTo(x, y);
  ctx.closePath();
  ctx.strokeStyle = color;
  ctx.lineWidth = 2;
  ctx.stroke();
  // jaw axis tick to make theta legible
  const [mx0, my0] = imageToCanvas(t, grasp.x - (Math.cos(grasp.theta) * grasp.width) / 2, grasp.y - (Math.sin(grasp.theta) * grasp.width) / 2);
  const [mx1, my1] = imageToCanvas(t, grasp.x + (Math.cos(grasp.theta) * grasp.width) / 2, grasp.y + (Math.sin(grasp.theta) * grasp.width) / 2);
  ctx.beginPath();
  ctx.moveTo(mx0, my0);
  ctx.lineTo(mx1, my1);
  ctx.strokeStyle = color;
  ctx.lineWidth = 1;
  ctx.stroke();
}

export function drawPromptMarker(
  ctx: CanvasRenderingContext2D,
  t: ViewTransform,
  prompt: { box?: [number, number, number, number]; point?: [number, number] },
  pending: boolean,
): void {
  ctx.save();
  ctx.strokeStyle = pending ? "#ffb13d" : "#3da9ff";
  ctx.setLineDash(pending ? [6, 4] : []);
  ctx.lineWidth = 2;
  if (prompt.box) {
    const [x0, y0] = imageToCanvas(t, prompt.box[0], prompt.box[1]);
    const [x1, y1] = imageToCanvas(t, prompt.box[2], prompt.box[3]);
    ctx.strokeRect(x0, y0, x1 - x0, y1 - y0);
  } else if (prompt.point) {
    const [x, y] = imageToCanvas(t, prompt.point[0], prompt.point[1]);
    ctx.beginPath();
    ctx.arc(x, y, 6, 0, 2 * Math.PI);
    ctx.stroke();
  }
  ctx.restore();
}
