"""Receding-horizon execution of trajectory plans.

The deterministic core models planner latency in control ticks (used by
benchmarks and tests); a threaded wrapper runs the same logic against a
wall-clock planner for the live service. Plans carry the tick their history
ended at; on arrival, execution switches at the matching index. If a plan
runs dry before the next arrives, the last action is held and the
starvation counter increments (never a crash).
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np

from .model import DiffusionModel
from .sampling import sample


@dataclass
class Plan:
    start_tick: int  # first tick the plan's actions apply to
    actions: np.ndarray  # (H_a, da) physical units
    states: np.ndarray  # (H, ds) predicted future, for previews

    def action_at(self, tick: int):
        i = tick - self.start_tick
        if 0 <= i < self.actions.shape[0]:
            return self.actions[i]
        return None


class RecedingHorizonExecutor:
    """Tick-driven executor with simulated planner latency.

    ``plan_fn(tick)`` must return a Plan conditioned on history up to and
    including ``tick``. A new plan is requested every ``replan_period``
    ticks; it arrives ``latency`` ticks later.
    """

    def __init__(self, plan_fn, horizon_actions: int, replan_period: int = 8, latency: int = 0, action_dim: int = 1):
        if replan_period < 1:
            raise ValueError("replan_period must be >= 1")
        self.plan_fn = plan_fn
        self.h_a = horizon_actions
        self.replan_period = replan_period
        self.latency = latency
        self.action_dim = action_dim
        self.reset()

    def reset(self):
        self.plan: Plan | None = None
        self.pending: tuple[int, Plan] | None = None  # (arrival tick, plan)
        self.last_action = None
        self.starvation = 0
        self._last_request = None

    def step(self, tick: int) -> np.ndarray:
        # deliver a pending plan whose latency has elapsed
        if self.pending is not None and tick >= self.pending[0]:
            self.plan = self.pending[1]
            self.pending = None
        # request on cadence, or early enough that the replacement arrives
        # before the current plan runs dry (one request in flight at a time)
        if self.pending is None:
            due = self._last_request is None or tick - self._last_request >= self.replan_period
            runway = (
                -1
                if self.plan is None
                else self.plan.start_tick + self.plan.actions.shape[0] - tick
            )
            if due or runway <= self.latency:
                plan = self.plan_fn(tick)
                self._last_request = tick
                if self.latency == 0:
                    self.plan = plan
                else:
                    self.pending = (tick + self.latency, plan)
        action = self.plan.action_at(tick) if self.plan is not None else None
        if action is None:
            self.starvation += 1
            if self.last_action is not None:
                action = self.last_action
            elif self.plan is not None:
                action = self.plan.actions[-1]
            else:
                action = np.zeros(self.action_dim)  # nothing ever arrived
        self.last_action = np.asarray(action, dtype=np.float64)
        return self.last_action


class DiffusionPlanPolicy:
    """run_episode policy: keeps raw step history, re-encodes it against the
    current character frame each plan, samples the model, executes the
    action head receding-horizon."""

    def __init__(
        self,
        model: DiffusionModel,
        encode_step,  # callable(state) -> StepKinematics
        rng,
        guidance_factory=None,  # callable(anchor Pose) -> GuidanceCost | None
        replan_period: int | None = None,
        latency: int = 0,
        weight: float = 1.0,
        ramp: bool = False,
    ):
        from ..dataset import encode_state, local_block, global_block  # noqa: F401
        from ..geom import footprint

        self.model = model
        self.encode_step = encode_step
        self.rng = rng
        self.guidance_factory = guidance_factory
        self.weight = weight
        self.ramp = ramp
        self._footprint = footprint
        self.replan = replan_period or model.action_horizon
        self.latency = latency
        self.exec = RecedingHorizonExecutor(
            self._plan, model.action_horizon, self.replan, latency, action_dim=model.net.da
        )
        self.reset(0.0)

    def reset(self, start_time: float):
        self.steps = []  # StepKinematics history (raw)
        self.actions = []  # applied actions
        self.exec.reset()

    def _history_arrays(self):
        from ..dataset import encode_state

        N = self.model.history
        steps = self.steps
        # left-pad a short history by repeating the first step with zero actions
        while len(steps) < N + 1:
            steps = [steps[0]] + steps
        steps = steps[-(N + 1) :]
        acts = self.actions[-N:] if self.actions else []
        while len(acts) < N:
            acts = [np.zeros(self.model.net.da)] + acts
        anchor = self._footprint(steps[-1].root_pose)
        hs = np.stack([encode_state(s, self.model.spec, anchor) for s in steps])
        ha = np.stack(acts)
        return hs, ha, anchor

    def _plan(self, tick: int) -> Plan:
        hs, ha, anchor = self._history_arrays()
        guidance = self.guidance_factory(anchor) if self.guidance_factory else None
        states, actions = sample(
            self.model, hs, ha, self.rng, guidance=guidance, weight=self.weight, ramp=self.ramp
        )
        return Plan(start_tick=tick, actions=actions[: self.model.action_horizon], states=states)

    def act(self, tick: int, sim_time: float, state, ctx=None) -> np.ndarray:
        self.steps.append(self.encode_step(state))
        action = self.exec.step(tick)
        if action.shape[0] == 0:
            action = np.zeros(self.model.net.da)
        self.actions.append(action)
        return action

    @property
    def starvation(self) -> int:
        return self.exec.starvation


class BatchedDiffusionPolicies:
    """Many receding-horizon policies stepped in lockstep; all live runs
    replan on the same ticks through one batched denoiser call. Used by the
    evaluation protocols, where per-run planning would dominate runtime."""

    def __init__(
        self,
        model: DiffusionModel,
        encode_step,
        n_runs: int,
        rng,
        guidance_builders=None,  # callable(run index, anchor Pose) -> cost | None
        replan_period: int = 2,
        weight: float = 1.0,
        ramp: bool = False,
    ):
        from ..geom import footprint

        self.model = model
        self.encode_step = encode_step
        self.n = n_runs
        self.rng = rng
        self.guidance_builders = guidance_builders
        self.replan = max(1, replan_period)
        self.weight = weight
        self.ramp = ramp
        self._footprint = footprint
        self.steps = [[] for _ in range(n_runs)]
        self.actions = [[] for _ in range(n_runs)]
        self.plans = [None] * n_runs  # (start_tick, actions (H_a, da))
        self.starvation = np.zeros(n_runs, dtype=int)

    def _history(self, i):
        from ..dataset import encode_state

        N = self.model.history
        steps = self.steps[i]
        while len(steps) < N + 1:
            steps = [steps[0]] + steps
        steps = steps[-(N + 1) :]
        acts = self.actions[i][-N:]
        while len(acts) < N:
            acts = [np.zeros(self.model.net.da)] + acts
        anchor = self._footprint(steps[-1].root_pose)
        hs = np.stack([encode_state(s, self.model.spec, anchor) for s in steps])
        return hs, np.stack(acts), anchor

    def act_all(self, tick: int, live_states: dict) -> dict:
        """live_states: run index -> env state. Returns index -> action."""
        from .sampling import sample_batch

        live = sorted(live_states)
        for i in live:
            self.steps[i].append(self.encode_step(live_states[i]))
            self.steps[i] = self.steps[i][-(self.model.history + 1) :]
        if tick % self.replan == 0 and live:
            hs, ha, costs = [], [], []
            for i in live:
                h, a, anchor = self._history(i)
                hs.append(h)
                ha.append(a)
                costs.append(self.guidance_builders(i, anchor) if self.guidance_builders else None)
            guidance = costs if any(c is not None for c in costs) else None
            _, acts = sample_batch(
                self.model, np.stack(hs), np.stack(ha), self.rng,
                guidance=guidance, weight=self.weight, ramp=self.ramp,
            )
            for j, i in enumerate(live):
                self.plans[i] = (tick, acts[j][: self.model.action_horizon])
        out = {}
        for i in live:
            plan = self.plans[i]
            action = None
            if plan is not None:
                idx = tick - plan[0]
                if 0 <= idx < plan[1].shape[0]:
                    action = plan[1][idx]
            if action is None:
                self.starvation[i] += 1
                action = self.actions[i][-1] if self.actions[i] else np.zeros(self.model.net.da)
            self.actions[i].append(np.asarray(action, dtype=np.float64))
            self.actions[i] = self.actions[i][-max(self.model.history, 1) :]
            out[i] = self.actions[i][-1]
        return out


class ThreadedExecutor:
    """Wall-clock variant for the live service: a planner thread fills a
    single-slot handoff; the control tick consumes the freshest plan and
    never blocks on planning."""

    def __init__(self, plan_fn, horizon_actions: int):
        self.plan_fn = plan_fn
        self.h_a = horizon_actions
        self._slot = None
        self._slot_lock = threading.Lock()
        self._request = threading.Event()
        self._req_tick = 0
        self._stop = threading.Event()
        self.plan: Plan | None = None
        self.last_action = None
        self.starvation = 0
        self._thread = threading.Thread(target=self._worker, daemon=True)
        self._thread.start()

    def _worker(self):
        while not self._stop.is_set():
            if not self._request.wait(timeout=0.1):
                continue
            self._request.clear()
            tick = self._req_tick
            try:
                plan = self.plan_fn(tick)
            except Exception:
                continue
            with self._slot_lock:
                self._slot = plan

    def step(self, tick: int, da: int) -> np.ndarray:
        with self._slot_lock:
            if self._slot is not None:
                self.plan = self._slot
                self._slot = None
        need_plan = self.plan is None or (tick - self.plan.start_tick) >= max(1, self.h_a // 2)
        if need_plan and not self._request.is_set():
            self._req_tick = tick
            self._request.set()
        action = self.plan.action_at(tick) if self.plan is not None else None
        if action is None:
            self.starvation += 1
            action = self.last_action if self.last_action is not None else np.zeros(da)
        self.last_action = np.asarray(action, dtype=np.float64)
        return self.last_action

    def close(self):
        self._stop.set()
        self._thread.join(timeout=1.0)
