"""Live guided-episode service.

Three cooperating tasks: the control tick (own thread; owns the
environment and the receding-horizon executor), the planner (own thread
inside ThreadedExecutor; owns the model), and the network (asyncio
websocket server). Control and network exchange data through a newest-wins
snapshot slot and a newest-wins command board, so a slow or non-reading
client can never stall the 50 Hz tick. Exactly one client (the first, or
the one presenting the configured token) may command; the rest spectate.

Wire protocol: JSON text frames with monotone per-client sequence numbers;
stale commands (seq at or below the last applied of that type) are
ignored. See docs/wire-protocol.schema.json.
"""

from __future__ import annotations

import asyncio
import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import Config
from .dataset import navigator_step_kinematics, walker_step_kinematics
from .diffusion.executor import Plan, ThreadedExecutor
from .diffusion.model import DiffusionModel, load_checkpoint
from .diffusion.sampling import sample
from .geom import footprint, inverse
from .guidance import JoystickCost, Sdf, SdfCost, WaypointCost, WeightedSum
from .sim.navigator import NavigatorState, proxy_positions, proxy_radii, step_navigator

COMMAND_TYPES = ("joystick", "waypoint", "obstacle_add", "obstacle_remove", "pause", "reset", "mode")


class BindFailure(OSError):
    pass


@dataclass
class Shared:
    """Thread-safe slots between control and network."""

    lock: threading.Lock = field(default_factory=threading.Lock)
    snapshot: dict | None = None
    scene_msg: dict | None = None
    report_msg: dict | None = None
    commands: dict = field(default_factory=dict)  # type -> payload (newest wins)
    stop: threading.Event = field(default_factory=threading.Event)

    def put_command(self, kind: str, payload: dict):
        with self.lock:
            self.commands[kind] = payload

    def drain_commands(self) -> dict:
        with self.lock:
            out = self.commands
            self.commands = {}
            return out

    def set_snapshot(self, snap: dict):
        with self.lock:
            self.snapshot = snap

    def get_snapshot(self):
        with self.lock:
            return self.snapshot


class NavigatorSession:
    """Control-side state machine for the navigator environment."""

    def __init__(self, cfg: Config, model: DiffusionModel, scene: list, rng):
        self.cfg = cfg
        self.model = model
        self.rng = rng
        self.state = NavigatorState.rest()
        self.mode = "joystick"
        self.joystick = np.zeros(2)
        self.waypoint = None
        self.primitives = list(scene)
        self.sdf = Sdf.from_primitives(self.primitives) if self.primitives else None
        self.paused = False
        self.tick = 0
        self._lock = threading.Lock()
        self._history = []
        self._actions = []
        self.executor = ThreadedExecutor(self._plan, model.action_horizon)
        self.latest_plan_states = np.zeros((0, 2))

    def reset(self):
        with self._lock:
            self.state = NavigatorState.rest()
            self.tick = 0

    def _guidance(self, anchor):
        costs = []
        weights = []
        with self._lock:
            mode, joystick, waypoint = self.mode, self.joystick.copy(), self.waypoint
            sdf = self.sdf
        if mode == "joystick" and np.any(joystick != 0.0):
            g_local = anchor.R[:2, :2].T @ joystick
            costs.append(JoystickCost(g_local))
            weights.append(1.0)
        if mode == "waypoint" and waypoint is not None:
            inv = inverse(anchor)
            g_local = (inv.R @ np.array([waypoint[0], waypoint[1], 0.0]) + inv.p)[:2]
            costs.append(WaypointCost(g_local, blend=self.cfg.guidance.waypoint_blend))
            weights.append(1.0)
        if sdf is not None:
            yaw = float(np.arctan2(anchor.R[1, 0], anchor.R[0, 0]))
            costs.append(
                SdfCost(
                    sdf, proxy_radii(self.cfg.navigator), delta=self.cfg.guidance.barrier_delta,
                    frame=(float(anchor.p[0]), float(anchor.p[1]), yaw),
                    weight=self.cfg.guidance.sdf_weight,
                )
            )
            weights.append(1.0)
        if not costs:
            return None
        if len(costs) == 1:
            return costs[0]
        return WeightedSum(costs, weights)

    def _plan(self, tick: int) -> Plan:
        with self._lock:
            hist = list(self._history)
            acts = list(self._actions)
        N = self.model.history
        while len(hist) < N + 1:
            hist = [hist[0]] + hist
        hist = hist[-(N + 1) :]
        while len(acts) < N:
            acts = [np.zeros(self.model.net.da)] + acts
        acts = acts[-N:]
        from .dataset import encode_state

        anchor = footprint(hist[-1].root_pose)
        hs = np.stack([encode_state(s, self.model.spec, anchor) for s in hist])
        ha = np.stack(acts)
        states, actions = sample(
            self.model, hs, ha, self.rng, guidance=self._guidance(anchor),
            weight=self.cfg.diffusion.guidance_weight, ramp=self.cfg.diffusion.guidance_ramp,
        )
        # world-frame plan preview: root xy of the predicted states
        cy, sy = anchor.R[0, 0], anchor.R[1, 0]
        px = cy * states[:, 0] - sy * states[:, 1] + anchor.p[0]
        py = sy * states[:, 0] + cy * states[:, 1] + anchor.p[1]
        with self._lock:
            self.latest_plan_states = np.stack([px, py], axis=1)
        return Plan(start_tick=tick, actions=actions[: self.model.action_horizon], states=states)


    def apply_commands(self, cmds: dict):
        with self._lock:
            if "mode" in cmds:
                m = cmds["mode"].get("task")
                if m in ("joystick", "waypoint", "obstacle"):
                    self.mode = "waypoint" if m == "obstacle" else m
            if "joystick" in cmds:
                v = cmds["joystick"].get("v", [0.0, 0.0])
                self.joystick = np.clip(np.asarray(v, dtype=np.float64), -self.cfg.navigator.v_max, self.cfg.navigator.v_max)
                self.mode = "joystick"
            if "waypoint" in cmds:
                p = cmds["waypoint"].get("p")
                if p is not None:
                    self.waypoint = np.asarray(p, dtype=np.float64)
                    self.mode = "waypoint"
            scene_dirty = False
            if "obstacle_add" in cmds:
                prim = cmds["obstacle_add"].get("primitive")
                if prim:
                    self.primitives.append(prim)
                    scene_dirty = True
            if "obstacle_remove" in cmds:
                idx = cmds["obstacle_remove"].get("index", -1)
                if 0 <= idx < len(self.primitives):
                    self.primitives.pop(idx)
                    scene_dirty = True
            if scene_dirty:
                self.sdf = Sdf.from_primitives(self.primitives) if self.primitives else None
        if "pause" in cmds:
            self.paused = not self.paused
        if "reset" in cmds:
            self.reset()
        return "obstacle_add" in cmds or "obstacle_remove" in cmds

    def step(self) -> dict:
        if not self.paused:
            step_kin = navigator_step_kinematics(self.state, self.cfg.navigator)
            with self._lock:
                self._history = (self._history + [step_kin])[-(self.model.history + 1) :]
            action = self.executor.step(self.tick, self.model.net.da)
            with self._lock:
                self._actions = (self._actions + [action])[-self.model.history :]
            self.state = step_navigator(self.state, action, self.cfg.navigator)
            self.tick += 1
        with self._lock:
            plan = self.latest_plan_states.tolist()
            joystick = self.joystick.tolist()
            waypoint = None if self.waypoint is None else self.waypoint.tolist()
        pts = proxy_positions(self.state, self.cfg.navigator)
        return {
            "type": "state",
            "tick": self.tick,
            "sim_time": self.tick * self.cfg.navigator.dt,
            "env": "navigator",
            "root": {
                "p": [float(self.state.pos[0]), float(self.state.pos[1]), 0.0],
                "yaw": float(self.state.heading),
                "vel": self.state.vel.tolist(),
            },
            "bodies": pts.tolist(),
            "radii": proxy_radii(self.cfg.navigator).tolist(),
            "plan": plan,
            "costs": {
                "joystick": joystick,
                "waypoint": waypoint,
                "sdf": self.sdf is not None,
            },
            "mode": self.mode,
            "paused": self.paused,
            "starvation": self.executor.starvation,
        }

    def scene_message(self) -> dict:
        with self._lock:
            prims = [dict(p) for p in self.primitives]
        return {"type": "scene", "primitives": prims, "delta": self.cfg.guidance.barrier_delta}

    def close(self):
        self.executor.close()


def control_thread_main(shared: Shared, session, cfg: Config, fast: bool):
    dt = 1.0 / cfg.service.control_rate
    seq = 0
    next_tick = time.monotonic()
    while not shared.stop.is_set():
        cmds = shared.drain_commands()
        scene_changed = False
        if cmds:
            scene_changed = session.apply_commands(cmds)
        snap = session.step()
        seq += 1
        snap["seq"] = seq
        shared.set_snapshot(snap)
        if scene_changed or seq == 1:
            with shared.lock:
                shared.scene_msg = session.scene_message()
        if not fast:
            next_tick += dt
            delay = next_tick - time.monotonic()
            if delay > 0:
                time.sleep(delay)
            else:
                next_tick = time.monotonic()
    session.close()


async def client_sender(ws, queue: asyncio.Queue):
    while True:
        msg = await queue.get()
        await ws.send(msg)


async def run_server_async(shared: Shared, cfg: Config, stop_future=None):
    import websockets

    clients = {}
    commander = {"ws": None}
    seq_applied = {}

    async def handler(ws):
        q = asyncio.Queue(maxsize=2)
        clients[ws] = q
        sender = asyncio.create_task(client_sender(ws, q))
        token_ok = not cfg.service.command_token
        if commander["ws"] is None and token_ok:
            commander["ws"] = ws
        with shared.lock:
            scene = shared.scene_msg or {"type": "scene", "primitives": [], "delta": cfg.guidance.barrier_delta}
        await ws.send(json.dumps(scene))
        try:
            async for raw in ws:
                try:
                    msg = json.loads(raw)
                except json.JSONDecodeError:
                    break  # protocol violation: close this client only
                kind = msg.get("type")
                if kind == "hello" and cfg.service.command_token and msg.get("token") == cfg.service.command_token:
                    commander["ws"] = ws
                    continue
                if kind not in COMMAND_TYPES:
                    break
                if commander["ws"] is None:
                    commander["ws"] = ws
                if ws is not commander["ws"]:
                    continue  # spectators cannot command
                seq = msg.get("seq", 0)
                key = (id(ws), kind)
                if seq <= seq_applied.get(key, -1):
                    continue  # stale command
                seq_applied[key] = seq
                shared.put_command(kind, msg)
        finally:
            sender.cancel()
            clients.pop(ws, None)
            if commander["ws"] is ws:
                commander["ws"] = next(iter(clients), None)

    async def broadcaster():
        period = 1.0 / cfg.service.broadcast_rate
        last_scene = None
        while not shared.stop.is_set():
            snap = shared.get_snapshot()
            with shared.lock:
                scene = shared.scene_msg
            if snap is not None:
                payload = json.dumps(snap)
                scene_payload = json.dumps(scene) if scene is not None and scene is not last_scene else None
                last_scene = scene
                for q in list(clients.values()):
                    for item in filter(None, (scene_payload, payload)):
                        if q.full():
                            try:
                                q.get_nowait()  # drop the stale frame
                            except asyncio.QueueEmpty:
                                pass
                        q.put_nowait(item)
            await asyncio.sleep(period)

    try:
        server = await websockets.serve(handler, cfg.service.bind, cfg.service.port)
    except OSError as e:
        raise BindFailure(f"cannot bind {cfg.service.bind}:{cfg.service.port}: {e}") from e
    btask = asyncio.create_task(broadcaster())
    try:
        if stop_future is not None:
            await stop_future
        else:
            while not shared.stop.is_set():
                await asyncio.sleep(0.2)
    finally:
        btask.cancel()
        server.close()
        await server.wait_closed()


def make_session(cfg: Config, model: DiffusionModel, scene: list, seed: int):
    rng = np.random.default_rng(seed)
    if model.meta.get("env") == "walker" or model.spec.n_joints > 0:
        raise NotImplementedError("live service currently drives the navigator checkpoint")
    return NavigatorSession(cfg, model, scene, rng)


def run_service(cfg: Config, checkpoint: Path, scene_path=None, ui_dir=None, fast=False, seed=0):
    model = load_checkpoint(checkpoint)
    scene = []
    if scene_path is not None:
        scene = json.loads(Path(scene_path).read_text())
    session = make_session(cfg, model, scene, seed)
    shared = Shared()
    ctrl = threading.Thread(target=control_thread_main, args=(shared, session, cfg, fast), daemon=True)
    ctrl.start()
    httpd = None
    if ui_dir is not None:
        import functools
        import http.server

        handler = functools.partial(http.server.SimpleHTTPRequestHandler, directory=str(ui_dir))
        httpd = http.server.ThreadingHTTPServer((cfg.service.bind, cfg.service.port + 1), handler)
        threading.Thread(target=httpd.serve_forever, daemon=True).start()
        print(f"ui: http://{cfg.service.bind}:{cfg.service.port + 1}/")
    print(f"service: ws://{cfg.service.bind}:{cfg.service.port}/")
    try:
        asyncio.run(run_server_async(shared, cfg))
    except KeyboardInterrupt:
        pass
    finally:
        shared.stop.set()
        ctrl.join(timeout=2.0)
        if httpd:
            httpd.shutdown()
