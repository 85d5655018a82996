/** Canvas painters: grid, obstacles, body proxies, plan polyline, goal
 * marker, and a small side-view inset when the walker env is live. */

import { Primitive, StateFrame, SceneFrame } from "./protocol";
import { Camera, worldToScreen } from "./view";

export function drawGrid(ctx: CanvasRenderingContext2D, cam: Camera): void {
  const step = cam.ppm >= 40 ? 0.5 : 1.0;
  const x0 = cam.cx - cam.width / 2 / cam.ppm;
  const x1 = cam.cx + cam.width / 2 / cam.ppm;
  const y0 = cam.cy - cam.height / 2 / cam.ppm;
  const y1 = cam.cy + cam.height / 2 / cam.ppm;
  ctx.strokeStyle = "#233";
  ctx.lineWidth = 1;
  ctx.beginPath();
  for (let x = Math.floor(x0 / step) * step; x <= x1; x += step) {
    const [sx] = worldToScreen(cam, x, 0);
    ctx.moveTo(sx, 0);
    ctx.lineTo(sx, cam.height);
  }
  for (let y = Math.floor(y0 / step) * step; y <= y1; y += step) {
    const [, sy] = worldToScreen(cam, 0, y);
    ctx.moveTo(0, sy);
    ctx.lineTo(cam.width, sy);
  }
  ctx.stroke();
}

export function drawPrimitive(ctx: CanvasRenderingContext2D, cam: Camera, prim: Primitive): void {
  ctx.fillStyle = "rgba(200, 80, 80, 0.35)";
  ctx.strokeStyle = "#c55";
  ctx.lineWidth = 2;
  if (prim.kind === "circle") {
    const [sx, sy] = worldToScreen(cam, prim.center[0], prim.center[1]);
    ctx.beginPath();
    ctx.arc(sx, sy, prim.radius * cam.ppm, 0, Math.PI * 2);
    ctx.fill();
    ctx.stroke();
  } else {
    const [sx, sy] = worldToScreen(cam, prim.center[0] - prim.half_extents[0], prim.center[1] + prim.half_extents[1]);
    ctx.fillRect(sx, sy, 2 * prim.half_extents[0] * cam.ppm, 2 * prim.half_extents[1] * cam.ppm);
    ctx.strokeRect(sx, sy, 2 * prim.half_extents[0] * cam.ppm, 2 * prim.half_extents[1] * cam.ppm);
  }
}

export function drawScene(ctx: CanvasRenderingContext2D, cam: Camera, scene: SceneFrame | null): void {
  if (!scene) return;
  for (const prim of scene.primitives) drawPrimitive(ctx, cam, prim);
}

export function drawPlan(ctx: CanvasRenderingContext2D, cam: Camera, plan: number[][]): void {
  if (plan.length === 0) return;
  ctx.strokeStyle = "#6cf";
  ctx.lineWidth = 2;
  ctx.setLineDash([6, 4]);
  ctx.beginPath();
  plan.forEach(([x, y], i) => {
    const [sx, sy] = worldToScreen(cam, x, y);
    if (i === 0) ctx.moveTo(sx, sy);
    else ctx.lineTo(sx, sy);
  });
  ctx.stroke();
  ctx.setLineDash([]);
}

export function drawRobot(ctx: CanvasRenderingContext2D, cam: Camera, state: StateFrame): void {
  const radii = state.radii ?? [];
  state.bodies.forEach((b, i) => {
    const [sx, sy] = worldToScreen(cam, b[0], b[1]);
    const r = (radii[i] ?? 0.08) * cam.ppm;
    ctx.fillStyle = i === 0 ? "rgba(120, 220, 140, 0.8)" : "rgba(120, 180, 220, 0.55)";
    ctx.beginPath();
    ctx.arc(sx, sy, r, 0, Math.PI * 2);
    ctx.fill();
  });
  // heading tick
  const [rx, ry] = worldToScreen(cam, state.root.p[0], state.root.p[1]);
  const hx = rx + Math.cos(state.root.yaw) * 0.3 * cam.ppm;
  const hy = ry - Math.sin(state.root.yaw) * 0.3 * cam.ppm;
  ctx.strokeStyle = "#9f9";
  ctx.lineWidth = 2;
  ctx.beginPath();
  ctx.moveTo(rx, ry);
  ctx.lineTo(hx, hy);
  ctx.stroke();
}

export function drawGoal(ctx: CanvasRenderingContext2D, cam: Camera, goal: number[] | null): void {
  if (!goal) return;
  const [sx, sy] = worldToScreen(cam, goal[0], goal[1]);
  ctx.strokeStyle = "#fc6";
  ctx.lineWidth = 2;
  ctx.beginPath();
  ctx.arc(sx, sy, 8, 0, Math.PI * 2);
  ctx.moveTo(sx - 12, sy);
  ctx.lineTo(sx + 12, sy);
  ctx.moveTo(sx, sy - 12);
  ctx.lineTo(sx, sy + 12);
  ctx.stroke();
}

/** Side-view inset for the walker: root height over ground. */
export function drawWalkerInset(ctx: CanvasRenderingContext2D, x: number, y: number, w: number, h: number, state: StateFrame): void {
  ctx.save();
  ctx.strokeStyle = "#456";
  ctx.strokeRect(x, y, w, h);
  ctx.beginPath();
  const groundY = y + h - 8;
  ctx.moveTo(x, groundY);
  ctx.lineTo(x + w, groundY);
  ctx.strokeStyle = "#684";
  ctx.stroke();
  const z = state.root.p[2];
  const py = groundY - z * (h - 16);
  ctx.fillStyle = "#9cf";
  ctx.beginPath();
  ctx.arc(x + w / 2, py, 5, 0, Math.PI * 2);
  ctx.fill();
  ctx.restore();
}
