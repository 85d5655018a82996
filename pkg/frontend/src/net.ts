/** Reconnecting websocket session with a newest-frame slot.
 *
 * Frames may be dropped (rendering always reads the newest state frame),
 * never reordered for display. While disconnected, outgoing commands are
 * buffered newest-wins (length 1) and flushed on reconnect.
 */

import { Command, CommandEncoder, StateFrame, SceneFrame, parseServerFrame } from "./protocol";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: ((ev?: unknown) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: string }) => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export function backoffDelay(attempt: number, baseMs = 250, capMs = 5000): number {
  return Math.min(capMs, baseMs * Math.pow(2, Math.max(0, attempt)));
}

export class NewestSlot<T> {
  private item: T | null = null;

  put(v: T): void {
    this.item = v;
  }

  take(): T | null {
    const v = this.item;
    this.item = null;
    return v;
  }

  peek(): T | null {
    return this.item;
  }
}

export class Session {
  readonly stateSlot = new NewestSlot<StateFrame>();
  scene: SceneFrame | null = null;
  connected = false;
  lastTick = -1;
  droppedOld = 0;
  onstatus: ((connected: boolean) => void) | null = null;

  private encoder = new CommandEncoder();
  private pending: Command | null = null; // newest-wins while disconnected
  private sock: SocketLike | null = null;
  private attempt = 0;
  private closed = false;
  private timer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private url: string,
    private factory: SocketFactory,
    private schedule: (fn: () => void, ms: number) => ReturnType<typeof setTimeout> = setTimeout
  ) {}

  connect(): void {
    if (this.closed) return;
    const sock = this.factory(this.url);
    this.sock = sock;
    sock.onopen = () => {
      this.connected = true;
      this.attempt = 0;
      this.onstatus?.(true);
      if (this.pending) {
        sock.send(this.encoder.encode(this.pending));
        this.pending = null;
      }
    };
    sock.onclose = () => {
      this.connected = false;
      this.onstatus?.(false);
      if (this.closed) return;
      const delay = backoffDelay(this.attempt);
      this.attempt += 1;
      this.timer = this.schedule(() => this.connect(), delay);
    };
    sock.onmessage = (ev) => this.handle(ev.data);
  }

  handle(raw: string): void {
    const frame = parseServerFrame(raw);
    if (!frame) return;
    if (frame.type === "state") {
      if (frame.tick < this.lastTick && frame.tick !== 0) {
        // out-of-order frame (tick 0 means a reset): display newest only
        this.droppedOld += 1;
        return;
      }
      this.lastTick = frame.tick;
      this.stateSlot.put(frame);
    } else if (frame.type === "scene") {
      this.scene = frame;
    }
  }

  send(cmd: Command): void {
    if (this.connected && this.sock) {
      this.sock.send(this.encoder.encode(cmd));
    } else {
      this.pending = cmd; // newest wins
    }
  }

  close(): void {
    this.closed = true;
    if (this.timer) clearTimeout(this.timer);
    this.sock?.close();
  }
}
