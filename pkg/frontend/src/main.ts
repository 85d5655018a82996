/** Entry point: connect to the service, render at display refresh, and
 * translate pointer/keyboard input into commands. */

import { Session } from "./net";
import { Command, StateFrame } from "./protocol";
import { Camera, joystickToVelocity, screenToWorld, trackCamera } from "./view";
import { drawGoal, drawGrid, drawPlan, drawRobot, drawScene, drawWalkerInset } from "./render";

type InputMode = "joystick" | "waypoint" | "obstacle";

const MAX_SPEED = 1.0; // m/s at full stick
const JOYSTICK_RATE_MS = 100; // stick resend cadence while held

function wsUrl(): string {
  const loc = window.location;
  const qs = new URLSearchParams(loc.search);
  const explicit = qs.get("ws");
  if (explicit) return explicit;
  const host = loc.hostname || "127.0.0.1";
  const port = Number(qs.get("port") || (loc.port ? Number(loc.port) - 1 : 8765));
  return `ws://${host}:${port}/`;
}

function main(): void {
  const canvas = document.getElementById("scene") as HTMLCanvasElement;
  const ctx = canvas.getContext("2d")!;
  const banner = document.getElementById("banner")!;
  const hud = document.getElementById("hud")!;
  const stick = document.getElementById("stick") as HTMLDivElement;
  const knob = document.getElementById("knob") as HTMLDivElement;
  const modeButtons = Array.from(document.querySelectorAll<HTMLButtonElement>("[data-mode]"));

  const session = new Session(wsUrl(), (url) => new WebSocket(url) as unknown as import("./net").SocketLike);
  session.onstatus = (up) => {
    banner.style.display = up ? "none" : "block";
  };
  session.connect();

  let mode: InputMode = "joystick";
  let latest: StateFrame | null = null;
  let cam: Camera = { cx: 0, cy: 0, ppm: 60, width: canvas.width, height: canvas.height };
  let frames = 0;
  let fps = 0;
  let lastFpsAt = performance.now();
  let lastDraw = performance.now();

  function setMode(m: InputMode): void {
    mode = m;
    modeButtons.forEach((b) => b.classList.toggle("active", b.dataset.mode === m));
    session.send({ type: "mode", task: m });
  }
  modeButtons.forEach((b) => b.addEventListener("click", () => setMode(b.dataset.mode as InputMode)));
  (document.getElementById("reset") as HTMLButtonElement).addEventListener("click", () => session.send({ type: "reset" }));
  (document.getElementById("pause") as HTMLButtonElement).addEventListener("click", () => session.send({ type: "pause" }));

  // --- virtual joystick (pointer) + WASD mirror ---
  let stickActive = false;
  let stickVec: [number, number] = [0, 0];
  const keys = new Set<string>();

  function stickRadius(): number {
    return stick.clientWidth / 2;
  }

  function updateKnob(dx: number, dy: number): void {
    const r = stickRadius();
    const n = Math.hypot(dx, dy) || 1;
    const c = Math.min(n, r);
    knob.style.transform = `translate(${(dx / n) * c}px, ${(dy / n) * c}px)`;
  }

  function sendStick(): void {
    const [vx, vy] = stickVec;
    session.send({ type: "joystick", v: [vx, vy] });
  }

  stick.addEventListener("pointerdown", (ev) => {
    stickActive = true;
    stick.setPointerCapture(ev.pointerId);
  });
  stick.addEventListener("pointermove", (ev) => {
    if (!stickActive) return;
    const rect = stick.getBoundingClientRect();
    const dx = ev.clientX - (rect.left + rect.width / 2);
    const dy = ev.clientY - (rect.top + rect.height / 2);
    stickVec = joystickToVelocity(dx, dy, stickRadius(), MAX_SPEED);
    updateKnob(dx, dy);
  });
  const release = () => {
    if (!stickActive) return;
    stickActive = false;
    stickVec = [0, 0];
    updateKnob(0, 0);
    sendStick();
  };
  stick.addEventListener("pointerup", release);
  stick.addEventListener("pointercancel", release);

  window.addEventListener("keydown", (ev) => keys.add(ev.key.toLowerCase()));
  window.addEventListener("keyup", (ev) => keys.delete(ev.key.toLowerCase()));

  setInterval(() => {
    if (keys.size > 0) {
      const vx = (keys.has("d") ? 1 : 0) - (keys.has("a") ? 1 : 0);
      const vy = (keys.has("w") ? 1 : 0) - (keys.has("s") ? 1 : 0);
      const n = Math.hypot(vx, vy) || 1;
      stickVec = [(vx / n) * MAX_SPEED, (vy / n) * MAX_SPEED];
      sendStick();
    } else if (stickActive) {
      sendStick();
    }
  }, JOYSTICK_RATE_MS);

  // --- canvas clicks: waypoints and obstacles (drag to size) ---
  let obstacleStart: [number, number] | null = null;

  canvas.addEventListener("pointerdown", (ev) => {
    const rect = canvas.getBoundingClientRect();
    const [wx, wy] = screenToWorld(cam, ev.clientX - rect.left, ev.clientY - rect.top);
    if (mode === "waypoint") {
      session.send({ type: "waypoint", p: [wx, wy] });
    } else if (mode === "obstacle") {
      obstacleStart = [wx, wy];
    }
  });
  canvas.addEventListener("pointerup", (ev) => {
    if (mode !== "obstacle" || !obstacleStart) return;
    const rect = canvas.getBoundingClientRect();
    const [wx, wy] = screenToWorld(cam, ev.clientX - rect.left, ev.clientY - rect.top);
    const radius = Math.max(0.15, Math.hypot(wx - obstacleStart[0], wy - obstacleStart[1]));
    const cmd: Command = {
      type: "obstacle_add",
      primitive: { kind: "circle", center: obstacleStart, radius },
    };
    session.send(cmd);
    obstacleStart = null;
  });

  function draw(now: number): void {
    const dt = Math.min(0.1, (now - lastDraw) / 1000);
    lastDraw = now;
    const fresh = session.stateSlot.take();
    if (fresh) latest = fresh;
    ctx.fillStyle = "#101418";
    ctx.fillRect(0, 0, canvas.width, canvas.height);
    cam.width = canvas.width;
    cam.height = canvas.height;
    if (latest) {
      cam = trackCamera(cam, latest.root.p[0], latest.root.p[1], dt);
      drawGrid(ctx, cam);
      drawScene(ctx, cam, session.scene);
      drawGoal(ctx, cam, latest.costs.waypoint);
      drawPlan(ctx, cam, latest.plan);
      drawRobot(ctx, cam, latest);
      if (latest.env === "walker") drawWalkerInset(ctx, canvas.width - 130, 10, 120, 90, latest);
      hud.textContent =
        `tick ${latest.tick}  mode ${latest.mode}` +
        `  starve ${latest.starvation}  fps ${fps}` +
        (latest.paused ? "  PAUSED" : "");
    } else {
      drawGrid(ctx, cam);
    }
    frames += 1;
    if (now - lastFpsAt > 1000) {
      fps = frames;
      frames = 0;
      lastFpsAt = now;
    }
    requestAnimationFrame(draw);
  }
  requestAnimationFrame(draw);
}

window.addEventListener("DOMContentLoaded", main);
