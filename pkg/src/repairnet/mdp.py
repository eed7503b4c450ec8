"""The uniformized discrete-time MDP.

States pair the repairer's location with the per-machine degradation
vector.  One time step has length ``1 / Lambda`` where ``Lambda`` is the
total event-rate bound, so each rate maps directly to a per-step
probability.  Costs are per unit time and accrue at the state occupied at
the start of a step, which makes simulated averages directly comparable
with the continuous-time averages.

A single uniform number drives each simulated step through a fixed event
layout: every machine owns a reserved degradation slot (machine order),
then the repair-or-switch slot, then the self-loop remainder.  A capped
machine's slot degenerates to a self-loop instead of being reassigned, so
degradation draws coincide across policies sharing the same uniforms.
"""

from __future__ import annotations

import enum
import itertools
import json
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .instance import InstanceParameters


class SystemState(NamedTuple):
    location: int
    conditions: tuple[int, ...]


Action = int
DecisionRule = Callable[[SystemState], Action]


class EventKind(enum.Enum):
    DEGRADE = "degrade"
    REPAIR_STEP = "repair_step"
    SWITCH_ARRIVE = "switch_arrive"
    SELF_LOOP = "self_loop"


class TransitionEvent(NamedTuple):
    kind: EventKind
    node: int | None = None


class CapacityError(RuntimeError):
    """State space larger than the configured enumeration bound."""


def pristine_state(inst: InstanceParameters, location: int = 1) -> SystemState:
    return SystemState(location, (0,) * inst.machine_count)


def all_failed_state(inst: InstanceParameters, location: int = 1) -> SystemState:
    return SystemState(location, tuple(inst.cap))


def with_location(state: SystemState, node: int) -> SystemState:
    return SystemState(node, state.conditions)


def with_level_change(state: SystemState, machine: int, delta: int) -> SystemState:
    conds = list(state.conditions)
    conds[machine - 1] += delta
    return SystemState(state.location, tuple(conds))


def actions_of(inst: InstanceParameters, state: SystemState) -> tuple[Action, ...]:
    """Available actions: remain, or head to an adjacent node."""
    return (state.location,) + inst.layout.neighbors(state.location)


def step_cost(inst: InstanceParameters, state: SystemState) -> float:
    """Cost rate of a state: sum of per-machine cost rates."""
    total = 0.0
    for i, level in enumerate(state.conditions, start=1):
        total += inst.cost.rate(i, level, inst.cap[i - 1])
    return total


def step_reward(inst: InstanceParameters, state: SystemState, action: Action) -> float:
    """Reward rate: positive only while actively repairing.

    Repairing machine i at level x earns (mu_i / lambda_i) times the cost
    headroom between the failed state and the post-repair level; every
    other state-action pair earns zero.
    """
    i = state.location
    if action != i or not inst.layout.is_machine(i):
        return 0.0
    x = state.conditions[i - 1]
    if x < 1:
        return 0.0
    cap = inst.cap[i - 1]
    headroom = inst.cost.rate(i, cap, cap) - inst.cost.rate(i, x - 1, cap)
    return (inst.mu[i - 1] / inst.lam[i - 1]) * headroom


def step_shifted_cost(inst: InstanceParameters, state: SystemState, action: Action) -> float:
    """Action-dependent cost that differs from the plain cost only by a
    policy-independent average: total failed cost minus the reward."""
    return inst.failed_cost_total() - step_reward(inst, state, action)


def step_probabilities(
    inst: InstanceParameters, state: SystemState, action: Action
) -> list[tuple[TransitionEvent, float]]:
    """Transition distribution of one uniformized step.

    Each machine below its cap degrades with probability lambda_j * step;
    staying at a damaged machine completes one repair level with
    probability mu_i * step; heading to an adjacent node arrives with
    probability tau * step; the remainder is a self-loop.  Zero-probability
    events are omitted and the probabilities sum to one exactly.
    """
    if action not in actions_of(inst, state):
        raise ValueError(f"action {action} not available in state {state}")
    delta = inst.step_length
    events: list[tuple[TransitionEvent, float]] = []
    total = 0.0
    for j in range(1, inst.machine_count + 1):
        if state.conditions[j - 1] < inst.cap[j - 1]:
            p = inst.lam[j - 1] * delta
            events.append((TransitionEvent(EventKind.DEGRADE, j), p))
            total += p
    i = state.location
    if action == i:
        if inst.layout.is_machine(i) and state.conditions[i - 1] >= 1:
            p = inst.mu[i - 1] * delta
            events.append((TransitionEvent(EventKind.REPAIR_STEP, i), p))
            total += p
    else:
        p = inst.tau * delta
        events.append((TransitionEvent(EventKind.SWITCH_ARRIVE, action), p))
        total += p
    residual = 1.0 - total
    if residual > 0.0:
        events.append((TransitionEvent(EventKind.SELF_LOOP), residual))
    return events


def apply_event(state: SystemState, event: TransitionEvent) -> SystemState:
    if event.kind is EventKind.DEGRADE:
        return with_level_change(state, event.node, +1)
    if event.kind is EventKind.REPAIR_STEP:
        return with_level_change(state, event.node, -1)
    if event.kind is EventKind.SWITCH_ARRIVE:
        return with_location(state, event.node)
    return state


class Kernel:
    """Per-instance tables for fast stepping and state indexing."""

    def __init__(self, inst: InstanceParameters):
        self.inst = inst
        delta = inst.step_length
        m = inst.machine_count
        self.machine_count = m
        self.cap = inst.cap
        # Reserved degradation slots: machine j owns
        # [cum_lambda[j-1], cum_lambda[j]); a draw there at cap self-loops.
        self.cum_lambda = [0.0] * (m + 1)
        for j in range(m):
            self.cum_lambda[j + 1] = self.cum_lambda[j] + inst.lam[j] * delta
        self.degrade_upper = self.cum_lambda[m]
        self.mu_delta = [mu_i * delta for mu_i in inst.mu]
        self.tau_delta = inst.tau * delta
        # Cost-rate lookup per machine and level.
        self.cost_rate = [
            [inst.cost.rate(i, level, inst.cap[i - 1]) for level in range(inst.cap[i - 1] + 1)]
            for i in range(1, m + 1)
        ]
        self._cost_cache: dict[tuple[int, ...], float] = {}

    def cost(self, state: SystemState) -> float:
        cached = self._cost_cache.get(state.conditions)
        if cached is None:
            cached = sum(
                self.cost_rate[j][level] for j, level in enumerate(state.conditions)
            )
            self._cost_cache[state.conditions] = cached
        return cached

    def reward(self, state: SystemState, action: Action) -> float:
        i = state.location
        if action != i or i > self.machine_count:
            return 0.0
        x = state.conditions[i - 1]
        if x < 1:
            return 0.0
        rates = self.cost_rate[i - 1]
        return (self.inst.mu[i - 1] / self.inst.lam[i - 1]) * (rates[-1] - rates[x - 1])

    def step(self, state: SystemState, action: Action, u: float) -> SystemState:
        """Advance one uniformized step driven by the uniform draw ``u``."""
        if u < self.degrade_upper:
            lo, hi = 0, self.machine_count
            cum = self.cum_lambda
            while lo + 1 < hi:
                mid = (lo + hi) // 2
                if u < cum[mid]:
                    hi = mid
                else:
                    lo = mid
            j = lo  # 0-based machine whose slot contains u
            if state.conditions[j] < self.cap[j]:
                return with_level_change(state, j + 1, +1)
            return state
        threshold = self.degrade_upper
        i = state.location
        if action == i:
            if i <= self.machine_count and state.conditions[i - 1] >= 1:
                threshold += self.mu_delta[i - 1]
                if u < threshold:
                    return with_level_change(state, i, -1)
        else:
            threshold += self.tau_delta
            if u < threshold:
                return with_location(state, action)
        return state


@dataclass
class SimulationReport:
    """Averages and counters from one policy run."""

    average_cost: float
    average_reward: float
    steps: int
    visit_counts: tuple[int, ...]
    safe_action_fraction: float | None = None
    metadata: dict = field(default_factory=dict)

    def to_json(self) -> str:
        payload = {
            "average_cost": self.average_cost,
            "average_reward": self.average_reward,
            "steps": self.steps,
            "visit_counts": list(self.visit_counts),
            "safe_action_fraction": self.safe_action_fraction,
            "metadata": self.metadata,
        }
        return json.dumps(payload, indent=2)


class _UniformSource:
    """Sequential uniforms from either a pre-generated list or a generator."""

    def __init__(self, crn: Sequence[float] | None, rng: np.random.Generator | None):
        self._crn = crn
        self._pos = 0
        self._rng = rng
        self._buffer: np.ndarray | None = None
        self._buf_pos = 0

    def take(self) -> float:
        if self._crn is not None:
            u = self._crn[self._pos]
            self._pos += 1
            return u
        if self._buffer is None or self._buf_pos >= len(self._buffer):
            self._buffer = self._rng.random(4096)
            self._buf_pos = 0
        u = self._buffer[self._buf_pos]
        self._buf_pos += 1
        return u


def simulate(
    inst: InstanceParameters,
    policy: DecisionRule,
    x0: SystemState,
    steps: int,
    crn: Sequence[float] | None = None,
    rng: np.random.Generator | None = None,
) -> SimulationReport:
    """Run the uniformized chain for ``steps`` steps under ``policy``.

    Supply ``crn`` (one uniform per step) to compare policies under common
    random numbers, or ``rng`` for an independent run.  Stateful decision
    rules are supported; the rule is queried once per step with the
    start-of-step state.
    """
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    if crn is not None and len(crn) < steps:
        raise ValueError(f"CRN list of length {len(crn)} is shorter than {steps} steps")
    if crn is None and rng is None:
        raise ValueError("either crn or rng must be supplied")

    kernel = Kernel(inst)
    uniforms = _UniformSource(crn, rng)
    visits = [0] * inst.layout.node_count
    total_cost = 0.0
    total_reward = 0.0
    state = x0
    for _ in range(steps):
        visits[state.location - 1] += 1
        action = policy(state)
        total_cost += kernel.cost(state)
        total_reward += kernel.reward(state, action)
        state = kernel.step(state, action, uniforms.take())

    return SimulationReport(
        average_cost=total_cost / steps,
        average_reward=total_reward / steps,
        steps=steps,
        visit_counts=tuple(visits),
    )


DEFAULT_STATE_BOUND = 5_000_000


def enumerate_states(
    inst: InstanceParameters, bound: int = DEFAULT_STATE_BOUND
) -> list[SystemState]:
    """All states in deterministic order: location major, conditions minor
    (last machine's level varies fastest)."""
    count = inst.state_count()
    if count > bound:
        raise CapacityError(
            f"state space has {count} states, above the bound of {bound}"
        )
    ranges = [range(k + 1) for k in inst.cap]
    return [
        SystemState(loc, conds)
        for loc in range(1, inst.layout.node_count + 1)
        for conds in itertools.product(*ranges)
    ]


class StateIndexer:
    """Mixed-radix state index consistent with enumerate_states ordering."""

    def __init__(self, inst: InstanceParameters):
        self.caps = inst.cap
        m = len(self.caps)
        self.strides = [0] * m
        stride = 1
        for j in range(m - 1, -1, -1):
            self.strides[j] = stride
            stride *= self.caps[j] + 1
        self.conditions_per_location = stride
        self.count = stride * inst.layout.node_count

    def index(self, state: SystemState) -> int:
        idx = (state.location - 1) * self.conditions_per_location
        for level, stride in zip(state.conditions, self.strides):
            idx += level * stride
        return idx

    def state(self, idx: int) -> SystemState:
        loc, rem = divmod(idx, self.conditions_per_location)
        conds = []
        for stride in self.strides:
            level, rem = divmod(rem, stride)
            conds.append(level)
        return SystemState(loc + 1, tuple(conds))
