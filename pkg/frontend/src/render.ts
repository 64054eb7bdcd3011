// Bird's-eye canvas rendering and HUD text. Pure geometry helpers are
// separated from drawing so they test without a DOM.

import type { UiSessionState, FrameView } from "./state.js";

export interface Viewport {
  width: number;
  height: number;
}

// Structural subset of CanvasRenderingContext2D used here; lets the
// renderer run against a recording stub in tests.
export interface Canvas2DLike {
  fillStyle: string | CanvasGradient | CanvasPattern;
  strokeStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  closePath(): void;
  fill(): void;
  stroke(): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  fillRect(x: number, y: number, w: number, h: number): void;
  setLineDash(segments: number[]): void;
}

export function worldToCanvas(
  bounds: [number, number, number, number],
  viewport: Viewport,
  point: [number, number],
): [number, number] {
  const [xmin, ymin, xmax, ymax] = bounds;
  const scale = Math.min(viewport.width / (xmax - xmin), viewport.height / (ymax - ymin));
  const cx = viewport.width / 2 + (point[0] - (xmin + xmax) / 2) * scale;
  const cy = viewport.height / 2 - (point[1] - (ymin + ymax) / 2) * scale; // y up in world, down on canvas
  return [cx, cy];
}

export function canvasScale(bounds: [number, number, number, number], viewport: Viewport): number {
  const [xmin, ymin, xmax, ymax] = bounds;
  return Math.min(viewport.width / (xmax - xmin), viewport.height / (ymax - ymin));
}

/** World-frame LIDAR points: beam i at yaw + i deg, finite ranges only. */
export function lidarPoints(frame: FrameView): [number, number][] {
  const points: [number, number][] = [];
  const [x, y] = frame.ips;
  for (let i = 0; i < frame.lidar.length; i++) {
    const range = frame.lidar[i];
    if (!Number.isFinite(range)) continue;
    const theta = frame.yaw + (i * Math.PI) / 180;
    points.push([x + range * Math.cos(theta), y + range * Math.sin(theta)]);
  }
  return points;
}

const LIGHT_COLORS: Record<string, string> = { red: "#e33", yellow: "#dc3", green: "#3c5" };

export function renderScene(ctx: Canvas2DLike, state: UiSessionState, viewport: Viewport): void {
  ctx.fillStyle = "#181c20";
  ctx.fillRect(0, 0, viewport.width, viewport.height);
  const toPx = (p: [number, number]) => worldToCanvas(state.bounds, viewport, p);
  const scale = canvasScale(state.bounds, viewport);

  ctx.setLineDash([4, 4]);
  ctx.strokeStyle = "#3a4148";
  ctx.lineWidth = 1;
  for (const line of state.laneBounds) {
    ctx.beginPath();
    line.forEach((pt, i) => {
      const [x, y] = toPx(pt as [number, number]);
      i === 0 ? ctx.moveTo(x, y) : ctx.lineTo(x, y);
    });
    ctx.stroke();
  }
  ctx.setLineDash([]);

  ctx.fillStyle = "#4a5560";
  for (const poly of state.collisionPolygons) {
    ctx.beginPath();
    poly.forEach((pt, i) => {
      const [x, y] = toPx(pt as [number, number]);
      i === 0 ? ctx.moveTo(x, y) : ctx.lineTo(x, y);
    });
    ctx.closePath();
    ctx.fill();
  }

  for (const [eid, element] of Object.entries(state.elements)) {
    const [x, y] = toPx([element.pose[0], element.pose[1]]);
    ctx.beginPath();
    ctx.arc(x, y, element.kind === "traffic_light" ? 5 : 3, 0, 2 * Math.PI);
    ctx.fillStyle = element.kind === "traffic_light"
      ? LIGHT_COLORS[element.state ?? "red"] ?? "#888"
      : "#8a93d0";
    ctx.fill();
  }

  ctx.fillStyle = "#9cf";
  for (const [vid, frame] of Object.entries(state.frames)) {
    for (const pt of lidarPoints(frame)) {
      const [x, y] = toPx(pt);
      ctx.fillRect(x - 1, y - 1, 2, 2);
    }
    drawVehicle(ctx, toPx, scale, frame, vid === state.selectedVehicle);
  }
}

function drawVehicle(
  ctx: Canvas2DLike,
  toPx: (p: [number, number]) => [number, number],
  scale: number,
  frame: FrameView,
  selected: boolean,
): void {
  const [x, y] = frame.ips;
  const yaw = frame.yaw;
  const L = 0.26, W = 0.16;
  const corners: [number, number][] = [
    [L / 2, W / 2], [L / 2, -W / 2], [-L / 2, -W / 2], [-L / 2, W / 2],
  ].map(([px, py]) => [
    x + px * Math.cos(yaw) - py * Math.sin(yaw),
    y + px * Math.sin(yaw) + py * Math.cos(yaw),
  ]);
  ctx.beginPath();
  corners.forEach((pt, i) => {
    const [cx, cy] = toPx(pt);
    i === 0 ? ctx.moveTo(cx, cy) : ctx.lineTo(cx, cy);
  });
  ctx.closePath();
  ctx.fillStyle = frame.collision ? "#e55" : selected ? "#6cf" : "#8ad";
  ctx.fill();
  // heading tick
  const [hx, hy] = toPx([x + (L / 2 + 0.06) * Math.cos(yaw), y + (L / 2 + 0.06) * Math.sin(yaw)]);
  const [cx, cy] = toPx([x, y]);
  ctx.strokeStyle = "#fff";
  ctx.lineWidth = Math.max(1, 0.02 * scale);
  ctx.beginPath();
  ctx.moveTo(cx, cy);
  ctx.lineTo(hx, hy);
  ctx.stroke();
}

export function hudLines(state: UiSessionState): string[] {
  const lines = [
    `scene: ${state.sceneName || "-"}   link: ${state.connection}${state.recording ? "   REC" : ""}`,
  ];
  const vid = state.selectedVehicle;
  const frame = vid ? state.frames[vid] : undefined;
  if (!vid || !frame) {
    lines.push("waiting for frames...");
    return lines;
  }
  lines.push(
    `${vid}  mode: ${state.vehicleModes[vid] ?? "?"}${frame.collision ? "  COLLISION" : ""}`,
    `throttle ${frame.throttle.toFixed(2)}   steer ${(frame.steering * 57.2958).toFixed(1)} deg`,
    `speed ${frame.speed.toFixed(3)} m/s`,
    `enc L ${frame.encTicks[0]}  R ${frame.encTicks[1]}`,
    `ips (${frame.ips[0].toFixed(3)}, ${frame.ips[1].toFixed(3)}, ${frame.ips[2].toFixed(3)})`,
    `t ${frame.timestamp.toFixed(3)} s`,
  );
  return lines;
}
