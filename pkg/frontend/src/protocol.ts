/** Wire protocol types and the outgoing-command codec.
 *
 * Mirrors docs/wire-protocol.schema.json on the server side: JSON text
 * frames, monotone per-client sequence numbers on commands.
 */

export interface StateFrame {
  type: "state";
  seq: number;
  tick: number;
  sim_time: number;
  env: "navigator" | "walker";
  root: { p: [number, number, number]; yaw: number; vel?: number[] };
  bodies: number[][];
  radii?: number[];
  plan: number[][];
  costs: { joystick: number[] | null; waypoint: number[] | null; sdf: boolean };
  mode: string;
  paused: boolean;
  starvation: number;
}

export type Primitive =
  | { kind: "circle"; center: [number, number]; radius: number }
  | { kind: "box"; center: [number, number]; half_extents: [number, number] };

export interface SceneFrame {
  type: "scene";
  primitives: Primitive[];
  delta?: number;
}

export interface ReportFrame {
  type: "report";
  summary?: Record<string, unknown>;
}

export type ServerFrame = StateFrame | SceneFrame | ReportFrame;

export type Command =
  | { type: "joystick"; v: [number, number] }
  | { type: "waypoint"; p: [number, number] }
  | { type: "obstacle_add"; primitive: Primitive }
  | { type: "obstacle_remove"; index: number }
  | { type: "pause" }
  | { type: "reset" }
  | { type: "mode"; task: "joystick" | "waypoint" | "obstacle" };

export function parseServerFrame(raw: string): ServerFrame | null {
  let msg: unknown;
  try {
    msg = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof msg !== "object" || msg === null) return null;
  const t = (msg as { type?: unknown }).type;
  if (t === "state" || t === "scene" || t === "report") {
    return msg as ServerFrame;
  }
  return null;
}

/** Stamps commands with a monotone sequence number. */
export class CommandEncoder {
  private seq = 0;

  encode(cmd: Command): string {
    this.seq += 1;
    return JSON.stringify({ ...cmd, seq: this.seq });
  }

  get lastSeq(): number {
    return this.seq;
  }
}
