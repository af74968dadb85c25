/**
 * DOM wiring: canvas stream view, drag/click prompting, overlay toggles.
 *
 * Server address comes from the `?server=` query parameter and defaults to
 * the page host. Rendering runs on requestAnimationFrame against the
 * client's latest-frame slot, so a slow tab never backs up the socket.
 */

import { SessionClient, type SocketLike } from "./client.js";
import { canvasToImage, clampToImage, dragToPrompt, fitTransform, type ViewTransform } from "./coords.js";
import { drawGrasp, drawPromptMarker } from "./overlay.js";

function wrapWebSocket(url: string): SocketLike {
  const ws = new WebSocket(url);
  const wrapper: SocketLike = {
    send: (d) => ws.send(d),
    close: () => ws.close(),
    onmessage: null,
    onclose: null,
    onopen: null,
  };
  ws.onmessage = (ev) => wrapper.onmessage?.(String(ev.data));
  ws.onclose = () => wrapper.onclose?.();
  ws.onopen = () => wrapper.onopen?.();
  return wrapper;
}

function loadPng(b64: string): Promise<HTMLImageElement> {
  return new Promise((resolve, reject) => {
    const img = new Image();
    img.onload = () => resolve(img);
    img.onerror = reject;
    img.src = `data:image/png;base64,${b64}`;
  });
}

function main(): void {
  const canvas = document.getElementById("view") as HTMLCanvasElement;
  const ctx = canvas.getContext("2d")!;
  const statusEl = document.getElementById("status")!;
  const latencyEl = document.getElementById("latency")!;
  const banner = document.getElementById("banner")!;
  const heatmapToggle = document.getElementById("heatmap-toggle") as HTMLInputElement;
  const seedInput = document.getElementById("seed") as HTMLInputElement;
  const checkpointInput = document.getElementById("checkpoint") as HTMLInputElement;

  const params = new URLSearchParams(window.location.search);
  const server = params.get("server") ?? `ws://${window.location.host}/ws`;

  let client = new SessionClient();
  let transform: ViewTransform | null = null;
  let frameImg: HTMLImageElement | null = null;
  let heatImg: HTMLImageElement | null = null;
  let renderedIndex = -1;
  let drag: { x0: number; y0: number; x1: number; y1: number } | null = null;

  function showBanner(text: string): void {
    banner.textContent = text;
    banner.classList.remove("hidden");
  }

  function connect(): void {
    banner.classList.add("hidden");
    client = new SessionClient({
      onStatus: (s) => {
        statusEl.textContent = s;
        if (s === "disconnected") showBanner("connection lost");
      },
      onError: (m) => showBanner(m),
      onNotice: (m) => {
        if (m === "needs_prompt") statusEl.textContent = "click or drag a box to pick a target";
      },
    });
    client.attach(wrapWebSocket(server), Number(seedInput.value) || 0, checkpointInput.value || "checkpoint.bin");
  }

  async function render(): Promise<void> {
    const frame = client.latestFrame;
    if (frame && frame.index !== renderedIndex) {
      renderedIndex = frame.index;
      try {
        [frameImg, heatImg] = await Promise.all([loadPng(frame.image_png_b64), loadPng(frame.heatmap_png_b64)]);
      } catch {
        showBanner("frame decode failed");
      }
      latencyEl.textContent = `${frame.latency_ms.toFixed(1)} ms`;
    }
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    if (frameImg) {
      transform = fitTransform(canvas.width, canvas.height, frameImg.width, frameImg.height);
      ctx.imageSmoothingEnabled = false;
      ctx.drawImage(frameImg, transform.offsetX, transform.offsetY, frameImg.width * transform.scale, frameImg.height * transform.scale);
      if (heatmapToggle.checked && heatImg) {
        ctx.globalAlpha = 0.45;
        ctx.drawImage(heatImg, transform.offsetX, transform.offsetY, heatImg.width * transform.scale, heatImg.height * transform.scale);
        ctx.globalAlpha = 1.0;
      }
      const frame = client.latestFrame;
      if (frame && transform) {
        for (const g of frame.grasps) drawGrasp(ctx, transform, g);
      }
      if (transform && client.pendingPrompt) drawPromptMarker(ctx, transform, client.pendingPrompt, true);
      else if (transform && client.acknowledgedPrompt) drawPromptMarker(ctx, transform, client.acknowledgedPrompt, false);
      if (transform && drag) {
        drawPromptMarker(ctx, transform, { box: [Math.min(drag.x0, drag.x1), Math.min(drag.y0, drag.y1), Math.max(drag.x0, drag.x1), Math.max(drag.y0, drag.y1)] }, true);
      }
    }
    requestAnimationFrame(() => void render());
  }

  canvas.addEventListener("mousedown", (ev) => {
    if (!transform) return;
    const rect = canvas.getBoundingClientRect();
    const [x, y] = clampToImage(transform, ...canvasToImage(transform, ev.clientX - rect.left, ev.clientY - rect.top));
    drag = { x0: x, y0: y, x1: x, y1: y };
  });
  canvas.addEventListener("mousemove", (ev) => {
    if (!drag || !transform) return;
    const rect = canvas.getBoundingClientRect();
    const [x, y] = clampToImage(transform, ...canvasToImage(transform, ev.clientX - rect.left, ev.clientY - rect.top));
    drag.x1 = x;
    drag.y1 = y;
  });
  canvas.addEventListener("mouseup", () => {
    if (!drag) return;
    const prompt = dragToPrompt(drag);
    drag = null;
    client.submitPrompt(prompt.kind === "box" ? { box: prompt.box } : { point: prompt.point });
  });

  document.getElementById("pause")!.addEventListener("click", () => client.pause());
  document.getElementById("resume")!.addEventListener("click", () => client.resume());
  document.getElementById("stop")!.addEventListener("click", () => client.stop());
  document.getElementById("reconnect")!.addEventListener("click", () => connect());

  connect();
  void render();
}

main();
