"""Two-phase rollout policy improvement.

Offline, trajectories simulated under a base policy estimate relative
values for a growing set of frequently visited states; each estimate is a
trajectory's excess cost over the base policy's average, bootstrapped
through the value of the state where the trajectory stops.  Estimates are
blended by exponential averaging, and the squared-weight bookkeeping
yields an honest confidence interval for each value (reliability-weight
variance of a weighted mean).

Online, every decision compares the candidate actions' one-step value
deltas as intervals.  An action is taken only when its interval lies
strictly below every rival's, shared endpoints handled sign-by-sign;
otherwise the base policy's action is used as the safe fallback.  The gap
between transitions funds nested simulations that sharpen the estimates
around the states the system is about to visit.

Budgets run in two modes.  Wall-clock mode reproduces the real-time
regime (seconds per decision); step-count mode swaps every clock for a
deterministic counter so runs are exactly reproducible.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .instance import InstanceParameters
from .mdp import (
    DecisionRule,
    Kernel,
    SimulationReport,
    SystemState,
    actions_of,
    pristine_state,
    with_level_change,
    with_location,
)

Z_CRITICAL = 1.96
LEARNING_SCALE = 10.0

WALL_CLOCK = "wall_clock"
STEP_COUNT = "step_count"

UNBOUNDED = (-math.inf, math.inf)


@dataclass
class OpiBudget:
    """Iteration and time budgets for the offline and online parts.

    In wall-clock mode ``tau_max`` and ``delta`` are seconds; in
    step-count mode ``tau_max`` counts simulated steps per start state
    and ``delta`` counts nested trajectories per decision.
    """

    r1: int = 10_000
    r2: int = 500_000
    r_off: int = 100_000
    tau_max: float = 100.0
    r_on: int = 500_000
    delta: float = 0.01
    mode: str = WALL_CLOCK

    def __post_init__(self) -> None:
        if min(self.r1, self.r2, self.r_off, self.r_on) < 1:
            raise ValueError("all iteration budgets must be positive")
        if self.tau_max <= 0 or self.delta <= 0:
            raise ValueError("tau_max and delta must be positive")
        if self.mode not in (WALL_CLOCK, STEP_COUNT):
            raise ValueError(f"unknown budget mode {self.mode!r}")


def full_scale_budget() -> OpiBudget:
    return OpiBudget()


def desk_scale_budget(r_on: int = 50_000) -> OpiBudget:
    """Deterministic budgets sized for desk experiments.

    Large enough that the value store separates actions on instances with
    a few thousand states; scale r_off and delta up for larger systems.
    """
    return OpiBudget(
        r1=2_000,
        r2=300_000,
        r_off=2_000,
        tau_max=200_000.0,
        r_on=r_on,
        delta=4.0,
        mode=STEP_COUNT,
    )


@dataclass
class ValueStoreEntry:
    h: float = 0.0
    ss: float = 0.0
    w: float = 0.0
    s: int = 0


@dataclass
class ValueStore:
    """Relative-value statistics for visited states.

    The reference state starts with the pinned entry (0, 0, 1, 1), as if
    one exact zero observation had been recorded; later trajectories keep
    updating it like any other entry.  Two known biases follow from that
    bookkeeping: observations bootstrap through stop-state estimates that
    may themselves be freshly created, and any error in g_base compounds
    through the bootstrap into a drift that is common to every entry.
    Action comparisons depend only on differences of entries, which the
    common drift leaves untouched.
    """

    reference: SystemState
    g_base: float
    entries: dict[SystemState, ValueStoreEntry] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.reference not in self.entries:
            self.entries[self.reference] = ValueStoreEntry(h=0.0, ss=0.0, w=1.0, s=1)

    def __contains__(self, state: SystemState) -> bool:
        return state in self.entries

    def get(self, state: SystemState) -> ValueStoreEntry | None:
        return self.entries.get(state)


def state_key(state: SystemState) -> str:
    return f"{state.location}:{','.join(map(str, state.conditions))}"


def parse_state_key(key: str) -> SystemState:
    loc, _, conds = key.partition(":")
    return SystemState(int(loc), tuple(int(c) for c in conds.split(",")))


def save_store(store: ValueStore, path) -> None:
    payload = {
        "reference": state_key(store.reference),
        "g_base": store.g_base,
        "entries": {
            state_key(s): [e.h, e.ss, e.w, e.s] for s, e in sorted(store.entries.items())
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def load_store(path) -> ValueStore:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    entries = {
        parse_state_key(key): ValueStoreEntry(h=vals[0], ss=vals[1], w=vals[2], s=int(vals[3]))
        for key, vals in payload["entries"].items()
    }
    return ValueStore(
        reference=parse_state_key(payload["reference"]),
        g_base=payload["g_base"],
        entries=entries,
    )


class _Uniforms:
    """Buffered sequential uniforms from a generator."""

    __slots__ = ("_rng", "_buffer", "_pos")

    def __init__(self, rng: np.random.Generator):
        self._rng = rng
        self._buffer = rng.random(8192)
        self._pos = 0

    def take(self) -> float:
        if self._pos >= len(self._buffer):
            self._buffer = self._rng.random(8192)
            self._pos = 0
        u = self._buffer[self._pos]
        self._pos += 1
        return u


class _Runtime:
    """Shared kernel plus memoized base-policy actions for hot loops."""

    def __init__(self, inst: InstanceParameters, base: DecisionRule):
        self.inst = inst
        self.kernel = Kernel(inst)
        self.base = base
        self._actions: dict[SystemState, int] = {}

    def base_action(self, state: SystemState) -> int:
        action = self._actions.get(state)
        if action is None:
            action = self.base(state)
            self._actions[state] = action
        return action

    def step(self, state: SystemState, action: int, u: float) -> SystemState:
        return self.kernel.step(state, action, u)

    def base_step(self, state: SystemState, u: float) -> SystemState:
        return self.kernel.step(state, self.base_action(state), u)


TRAJECTORY_CAP = 50_000_000


def _sample_trajectory(
    runtime: _Runtime,
    store: ValueStore,
    z: SystemState,
    p: int,
    uniforms: _Uniforms,
    mode: str,
) -> tuple[SystemState, float]:
    """One variable-length rollout from ``z`` under the base policy.

    Runs until hitting a stored state other than ``z`` itself (returning
    to the reference state always stops).  The first ``p`` distinct states
    receive a bootstrapped excess-cost observation; the elapsed budget is
    returned in the active mode's unit.
    """
    started = time.perf_counter() if mode == WALL_CLOCK else 0.0
    kernel = runtime.kernel
    entries = store.entries
    reference = store.reference
    g_base = store.g_base

    total_cost = 0.0
    steps = 0
    current = z
    seen = {z}
    records = [(z, 0.0, 0)]
    while True:
        total_cost += kernel.cost(current)
        steps += 1
        nxt = runtime.base_step(current, uniforms.take())
        if (nxt != z or nxt == reference) and nxt in entries:
            stop = nxt
            break
        current = nxt
        if nxt not in seen:
            seen.add(nxt)
            if len(records) < p:
                records.append((nxt, total_cost, steps))
        if steps >= TRAJECTORY_CAP:
            raise RuntimeError(
                f"trajectory from {z} exceeded {TRAJECTORY_CAP} steps without "
                "reaching a stored state; is the base policy unichain?"
            )

    for x, cost_at, steps_at in records:
        entry = entries.get(x)
        if entry is None:
            entry = ValueStoreEntry()
            entries[x] = entry
        entry.s += 1
        alpha = LEARNING_SCALE / (LEARNING_SCALE + entry.s - 1)
        observation = (total_cost - cost_at) + entries[stop].h - g_base * (steps - steps_at)
        entry.h = (1.0 - alpha) * entry.h + alpha * observation
        entry.ss = (1.0 - alpha) * entry.ss + alpha * observation * observation
        entry.w = (1.0 - alpha) ** 2 * entry.w + alpha * alpha

    elapsed = (time.perf_counter() - started) if mode == WALL_CLOCK else float(steps)
    return stop, elapsed


def sample_trajectory(
    inst: InstanceParameters,
    base: DecisionRule,
    store: ValueStore,
    z: SystemState,
    p: int,
    rng: np.random.Generator,
    mode: str = STEP_COUNT,
) -> tuple[SystemState, float]:
    """Public single-trajectory entry point (see _sample_trajectory)."""
    if store.reference not in store.entries:
        raise ValueError("store is missing its reference entry")
    runtime = _Runtime(inst, base)
    return _sample_trajectory(runtime, store, z, p, _Uniforms(rng), mode)


@dataclass
class OfflinePreparation:
    g_base: float
    reference: SystemState
    z_core: list[SystemState]
    z_all: list[SystemState]


def offline_preparatory(
    inst: InstanceParameters,
    base: DecisionRule,
    budget: OpiBudget,
    rng: np.random.Generator,
) -> OfflinePreparation:
    """Pick representative states and estimate the base policy's average.

    Per machine, a short run started there identifies the most frequent
    state at that location.  A long run then estimates the average cost
    and crowns the most visited machine's state as the reference.  The
    start set is the core states plus their one-switch and one-repair
    neighbors, which the online part will need intervals for.
    """
    runtime = _Runtime(inst, base)
    uniforms = _Uniforms(rng)
    m = inst.machine_count

    z_core: list[SystemState] = []
    for i in range(1, m + 1):
        state = pristine_state(inst, location=i)
        counts: dict[SystemState, int] = {}
        for _ in range(budget.r1):
            state = runtime.base_step(state, uniforms.take())
            if state.location == i:
                counts[state] = counts.get(state, 0) + 1
        if counts:
            # Most frequent; ties go to the lexicographically smallest state.
            best = min(counts.items(), key=lambda kv: (-kv[1], kv[0]))
            z_core.append(best[0])
        else:
            z_core.append(pristine_state(inst, location=i))

    state = pristine_state(inst, location=1)
    total_cost = 0.0
    visits = [0] * m
    for _ in range(budget.r2):
        total_cost += runtime.kernel.cost(state)
        state = runtime.base_step(state, uniforms.take())
        if state.location <= m:
            visits[state.location - 1] += 1
    g_base = total_cost / budget.r2
    j_star = max(range(1, m + 1), key=lambda i: (visits[i - 1], -i))
    reference = z_core[j_star - 1]
    ordered_core = [z_core[j_star - 1]] + [z for k, z in enumerate(z_core, 1) if k != j_star]

    z_all: list[SystemState] = []
    seen: set[SystemState] = set()

    def add(s: SystemState) -> None:
        if s not in seen:
            seen.add(s)
            z_all.append(s)

    for z in ordered_core:
        add(z)
        for j in inst.layout.neighbors(z.location):
            add(with_location(z, j))
        i = z.location
        if i <= m and z.conditions[i - 1] >= 1:
            add(with_level_change(z, i, -1))

    return OfflinePreparation(g_base=g_base, reference=reference, z_core=ordered_core, z_all=z_all)


def offline_main(
    inst: InstanceParameters,
    base: DecisionRule,
    prep: OfflinePreparation,
    budget: OpiBudget,
    rng: np.random.Generator,
) -> ValueStore:
    """Populate the value store from repeated and chained trajectories."""
    runtime = _Runtime(inst, base)
    uniforms = _Uniforms(rng)
    store = ValueStore(reference=prep.reference, g_base=prep.g_base)

    for z in prep.z_all:
        done = 0
        used = 0.0
        while done < budget.r_off and used < budget.tau_max:
            _, elapsed = _sample_trajectory(runtime, store, z, 1, uniforms, budget.mode)
            done += 1
            used += elapsed

    for z in prep.z_core:
        done = 0
        used = 0.0
        start = z
        while done < budget.r_off and used < budget.tau_max:
            start, elapsed = _sample_trajectory(runtime, store, start, 5, uniforms, budget.mode)
            done += 1
            used += elapsed

    return store


def confidence_interval(entry: ValueStoreEntry | None) -> tuple[float, float]:
    """Reliability-weight interval h +/- 1.96 * sqrt(var / (1 - W) * W).

    Degenerate statistics (no entry, fewer than two observations, or the
    squared-weight sum at one) give the unbounded interval: no confident
    comparison is possible.  Tiny negative variance from rounding clamps
    to an exact zero-width interval.
    """
    if entry is None or entry.s < 2 or entry.w >= 1.0 - 1e-12:
        return UNBOUNDED
    variance = entry.ss - entry.h * entry.h
    if variance < 0.0:
        if variance < -1e-9 * max(1.0, abs(entry.ss)):
            return UNBOUNDED
        variance = 0.0
    half = Z_CRITICAL * math.sqrt(variance / (1.0 - entry.w) * entry.w)
    return entry.h - half, entry.h + half


def neighborhood(inst: InstanceParameters, state: SystemState) -> list[SystemState]:
    """States whose values an improvement step at ``state`` depends on:
    the state itself, each one-switch variant, and the one-repair variant.
    Degradation successors are excluded; they occur with the same
    probability under every action."""
    members = [state]
    i = state.location
    for j in inst.layout.neighbors(i):
        members.append(with_location(state, j))
    if inst.layout.is_machine(i) and state.conditions[i - 1] >= 1:
        members.append(with_level_change(state, i, -1))
    return members


def _delta_coefficients(
    inst: InstanceParameters, state: SystemState, action: int
) -> dict[SystemState, float]:
    """The action-dependent part of the one-step lookahead, as a linear
    form over stored values.  Idle contributes the exact constant zero."""
    i = state.location
    if action == i:
        if inst.layout.is_machine(i) and state.conditions[i - 1] >= 1:
            mu = inst.mu[i - 1]
            return {with_level_change(state, i, -1): mu, state: -mu}
        return {}
    return {with_location(state, action): inst.tau, state: -inst.tau}


def _dominates(
    lhs: dict[SystemState, float],
    rhs: dict[SystemState, float],
    intervals: dict[SystemState, tuple[float, float]],
) -> bool:
    """True when lhs < rhs for every value assignment inside the intervals.

    The worst case of the difference takes each state's upper endpoint
    where its net coefficient is positive and the lower endpoint where it
    is negative; any needed-but-unbounded endpoint defeats the comparison.
    """
    states = set(lhs) | set(rhs)
    worst = 0.0
    for s in states:
        coefficient = lhs.get(s, 0.0) - rhs.get(s, 0.0)
        if coefficient == 0.0:
            continue
        lo, hi = intervals[s]
        bound = coefficient * (hi if coefficient > 0.0 else lo)
        if math.isinf(bound):
            return False
        worst += bound
    return worst < 0.0


def improving_action(
    inst: InstanceParameters,
    state: SystemState,
    store: ValueStore,
    base_action: int,
) -> tuple[int, bool]:
    """Confidence-gated improvement step at one state.

    Returns the unique action whose value delta beats every rival across
    all interval-consistent value assignments, with safe_flag False; if no
    action separates, returns the base action with safe_flag True.
    """
    members = neighborhood(inst, state)
    intervals = {s: confidence_interval(store.get(s)) for s in members}
    actions = actions_of(inst, state)
    forms = {a: _delta_coefficients(inst, state, a) for a in actions}
    for a in actions:
        if all(_dominates(forms[a], forms[b], intervals) for b in actions if b != a):
            return a, False
    return base_action, True


def online_run(
    inst: InstanceParameters,
    base: DecisionRule,
    store: ValueStore,
    budget: OpiBudget,
    rng: np.random.Generator,
    x0: SystemState | None = None,
    crn=None,
) -> SimulationReport:
    """Run the improving policy for r_on steps, refining the store as it goes.

    Each step: pick the confidence-gated action, spend the per-decision
    budget on nested rollouts around a hypothetical successor, then
    realize the actual transition (from the shared random-number list
    when one is supplied, so runs are comparable across policies).
    """
    runtime = _Runtime(inst, base)
    uniforms = _Uniforms(rng)
    kernel = runtime.kernel

    state = store.reference if x0 is None else x0
    total_cost = 0.0
    total_reward = 0.0
    safe_count = 0
    safe_by_quarter = [0, 0, 0, 0]
    quarter = max(1, budget.r_on // 4)
    visits = [0] * inst.layout.node_count
    crn_pos = 0
    if crn is not None and len(crn) < budget.r_on:
        raise ValueError(f"CRN list of length {len(crn)} is shorter than r_on={budget.r_on}")

    for step_index in range(budget.r_on):
        visits[state.location - 1] += 1
        total_cost += kernel.cost(state)
        action, safe = improving_action(inst, state, store, runtime.base_action(state))
        if safe:
            safe_count += 1
            safe_by_quarter[min(step_index // quarter, 3)] += 1
        total_reward += kernel.reward(state, action)

        if budget.mode == STEP_COUNT:
            remaining = int(budget.delta)
            while remaining > 0:
                hypothetical = runtime.step(state, action, uniforms.take())
                for y in neighborhood(inst, hypothetical):
                    if remaining <= 0:
                        break
                    _sample_trajectory(runtime, store, y, 1, uniforms, budget.mode)
                    remaining -= 1
        else:
            used = 0.0
            while used < budget.delta:
                hypothetical = runtime.step(state, action, uniforms.take())
                for y in neighborhood(inst, hypothetical):
                    if used >= budget.delta:
                        break
                    _, elapsed = _sample_trajectory(runtime, store, y, 1, uniforms, budget.mode)
                    used += elapsed

        if crn is not None:
            u = crn[crn_pos]
            crn_pos += 1
        else:
            u = uniforms.take()
        state = runtime.step(state, action, u)

    report = SimulationReport(
        average_cost=total_cost / budget.r_on,
        average_reward=total_reward / budget.r_on,
        steps=budget.r_on,
        visit_counts=tuple(visits),
        safe_action_fraction=safe_count / budget.r_on,
    )
    sizes = [quarter, quarter, quarter, max(1, budget.r_on - 3 * quarter)]
    report.metadata["safe_by_quarter"] = [c / n for c, n in zip(safe_by_quarter, sizes)]
    return report


@dataclass
class OpiResult:
    report: SimulationReport
    store: ValueStore
    preparation: OfflinePreparation


def run_opi(
    inst: InstanceParameters,
    base: DecisionRule,
    budget: OpiBudget,
    offline_rng: np.random.Generator,
    online_rng: np.random.Generator,
    x0: SystemState | None = None,
    crn=None,
    store: ValueStore | None = None,
) -> OpiResult:
    """Offline preparation and estimation followed by the online run."""
    prep = offline_preparatory(inst, base, budget, offline_rng)
    if store is None:
        store = offline_main(inst, base, prep, budget, offline_rng)
    report = online_run(inst, base, store, budget, online_rng, x0=x0, crn=crn)
    return OpiResult(report=report, store=store, preparation=prep)
