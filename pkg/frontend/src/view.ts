/** World <-> screen transform for the top-down canvas.
 *
 * World: meters, x right, y up. Screen: CSS pixels, y down, origin at the
 * canvas top-left. The camera tracks a center point at a pixels-per-meter
 * zoom.
 */

export interface Camera {
  cx: number; // world x at the viewport center
  cy: number;
  ppm: number; // pixels per meter
  width: number; // viewport size in pixels
  height: number;
}

export function worldToScreen(cam: Camera, wx: number, wy: number): [number, number] {
  return [cam.width / 2 + (wx - cam.cx) * cam.ppm, cam.height / 2 - (wy - cam.cy) * cam.ppm];
}

export function screenToWorld(cam: Camera, sx: number, sy: number): [number, number] {
  return [cam.cx + (sx - cam.width / 2) / cam.ppm, cam.cy - (sy - cam.height / 2) / cam.ppm];
}

/** Exponential tracking of a target point (frame-rate independent). */
export function trackCamera(cam: Camera, tx: number, ty: number, dt: number, rate = 3.0): Camera {
  const a = 1 - Math.exp(-rate * dt);
  return { ...cam, cx: cam.cx + (tx - cam.cx) * a, cy: cam.cy + (ty - cam.cy) * a };
}

/** Radial joystick mapping: pointer offset in widget pixels -> velocity.
 * Saturates at the widget radius; dead zone avoids drift near center. */
export function joystickToVelocity(
  dx: number,
  dy: number,
  widgetRadius: number,
  maxSpeed: number,
  deadZone = 0.08
): [number, number] {
  const r = Math.hypot(dx, dy);
  if (r < deadZone * widgetRadius) return [0, 0];
  const scale = Math.min(r, widgetRadius) / widgetRadius;
  const speed = scale * maxSpeed;
  // screen y is down; world y is up
  return [(dx / r) * speed, (-dy / r) * speed];
}
