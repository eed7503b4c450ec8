"""Exact average-cost dynamic programming for small instances.

Policy evaluation follows the successive-approximation scheme: sweep
v+(x) = stage(x) + sum_y p_xy v(y) with the self-loop residual folded into
the kernel, read off g+(x) = v+(x) - v(x), and stop once the per-state g
estimates settle.  Values are re-anchored at the reference state after
every sweep; this subtracts a constant, leaves every g+(x) untouched, and
keeps the iterates bounded for unichain policies.

Policy iteration alternates evaluation with a greedy improvement step.
Only the action-dependent part of the lookahead differs between actions,
so improvement reduces to minimizing rate * (v(target) - v(x)) per state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .instance import InstanceParameters
from .mdp import (
    DEFAULT_STATE_BOUND,
    DecisionRule,
    StateIndexer,
    SystemState,
    enumerate_states,
    pristine_state,
)

DEFAULT_TOL = 1e-9
DEFAULT_MAX_SWEEPS = 10_000_000


class EvaluationDidNotConverge(RuntimeError):
    """Evaluation hit the sweep cap; the policy is likely multichain."""


@dataclass(frozen=True)
class StationaryPolicy:
    """Per-state action table aligned with the enumerate_states ordering."""

    actions: tuple[int, ...]

    @classmethod
    def from_rule(cls, inst: InstanceParameters, rule: DecisionRule) -> "StationaryPolicy":
        return cls(tuple(rule(state) for state in enumerate_states(inst)))

    def as_rule(self, inst: InstanceParameters) -> DecisionRule:
        indexer = StateIndexer(inst)
        actions = self.actions

        def rule(state: SystemState) -> int:
            return actions[indexer.index(state)]

        return rule


@dataclass
class PolicyEvaluation:
    g: float
    v: np.ndarray
    sweeps: int
    g_span: float


@dataclass
class DpSolution:
    g_star: float
    v: np.ndarray
    policy: StationaryPolicy
    iterations: int
    reference: SystemState
    g_history: tuple[float, ...] = ()

    def policy_table(self, inst: InstanceParameters) -> dict[SystemState, int]:
        return dict(zip(enumerate_states(inst), self.policy.actions))


class DpModel:
    """Vectorized transition structure shared by evaluation and improvement."""

    def __init__(self, inst: InstanceParameters, bound: int = DEFAULT_STATE_BOUND):
        self.inst = inst
        self.indexer = StateIndexer(inst)
        n = self.indexer.count
        if n > bound:
            from .mdp import CapacityError

            raise CapacityError(f"state space has {n} states, above the bound of {bound}")
        self.n = n
        self.block = self.indexer.conditions_per_location
        m = inst.machine_count
        self.m = m
        delta = inst.step_length

        idx = np.arange(n, dtype=np.int64)
        self.loc = idx // self.block + 1
        rem = idx % self.block
        caps = np.array(inst.cap, dtype=np.int64)
        strides = np.array(self.indexer.strides, dtype=np.int64)
        self.cond = np.empty((n, m), dtype=np.int64)
        for j in range(m):
            self.cond[:, j] = (rem // strides[j]) % (caps[j] + 1)
        self.strides = strides

        # Degradation transitions are action-independent.
        rows_list, cols_list, data_list = [], [], []
        deg_sum = np.zeros(n)
        for j in range(m):
            mask = self.cond[:, j] < caps[j]
            p = inst.lam[j] * delta
            rows_list.append(idx[mask])
            cols_list.append(idx[mask] + strides[j])
            data_list.append(np.full(mask.sum(), p))
            deg_sum[mask] += p
        self.deg_rows = np.concatenate(rows_list) if rows_list else np.empty(0, np.int64)
        self.deg_cols = np.concatenate(cols_list) if cols_list else np.empty(0, np.int64)
        self.deg_data = np.concatenate(data_list) if data_list else np.empty(0)
        self.deg_sum = deg_sum
        self.idx = idx

        self.mu_delta = np.array(inst.mu) * delta
        self.tau_delta = inst.tau * delta

        self.cost = np.zeros(n)
        for j in range(m):
            table = np.array(
                [inst.cost.rate(j + 1, level, inst.cap[j]) for level in range(inst.cap[j] + 1)]
            )
            self.cost += table[self.cond[:, j]]

        # Reward for repairing machine i at level x; zero at level 0.
        self.reward_table = []
        for i in range(1, m + 1):
            cap = inst.cap[i - 1]
            top = inst.cost.rate(i, cap, cap)
            row = [0.0] + [
                (inst.mu[i - 1] / inst.lam[i - 1]) * (top - inst.cost.rate(i, x - 1, cap))
                for x in range(1, cap + 1)
            ]
            self.reward_table.append(np.array(row))

    def _action_parts(self, actions: np.ndarray):
        """Masks, targets, and probabilities of the action-dependent event."""
        stay = actions == self.loc
        at_machine = self.loc <= self.m
        cond_here = np.zeros(self.n, dtype=np.int64)
        machine_states = at_machine
        cond_here[machine_states] = self.cond[
            machine_states, self.loc[machine_states] - 1
        ]
        repair = stay & at_machine & (cond_here >= 1)
        switch = ~stay

        repair_rows = self.idx[repair]
        repair_cols = repair_rows - self.strides[self.loc[repair] - 1]
        repair_data = self.mu_delta[self.loc[repair] - 1]

        switch_rows = self.idx[switch]
        switch_cols = switch_rows + (actions[switch] - self.loc[switch]) * self.block
        switch_data = np.full(switch_rows.shape[0], self.tau_delta)
        return repair, (repair_rows, repair_cols, repair_data), (
            switch_rows,
            switch_cols,
            switch_data,
        )

    def transition_matrix(self, policy: StationaryPolicy) -> sp.csr_matrix:
        actions = np.asarray(policy.actions, dtype=np.int64)
        repair, rep, swi, = self._action_parts(actions)
        action_prob = np.zeros(self.n)
        action_prob[rep[0]] = rep[2]
        action_prob[swi[0]] = swi[2]
        self_loop = 1.0 - self.deg_sum - action_prob
        rows = np.concatenate([self.deg_rows, rep[0], swi[0], self.idx])
        cols = np.concatenate([self.deg_cols, rep[1], swi[1], self.idx])
        data = np.concatenate([self.deg_data, rep[2], swi[2], self_loop])
        return sp.csr_matrix((data, (rows, cols)), shape=(self.n, self.n))

    def stage_vector(self, policy: StationaryPolicy, objective: str) -> np.ndarray:
        if objective == "cost":
            return self.cost
        actions = np.asarray(policy.actions, dtype=np.int64)
        repair, _, _ = self._action_parts(actions)
        reward = np.zeros(self.n)
        rows = self.idx[repair]
        locs = self.loc[repair]
        levels = self.cond[repair, locs - 1]
        for i in range(1, self.m + 1):
            mask = locs == i
            reward[rows[mask]] = self.reward_table[i - 1][levels[mask]]
        if objective == "reward":
            return reward
        if objective == "shifted_cost":
            return self.inst.failed_cost_total() - reward
        raise ValueError(f"unknown objective {objective!r}")

    def improve(self, v: np.ndarray, previous: StationaryPolicy) -> StationaryPolicy:
        """Greedy improvement; per-state smallest-id tie-break."""
        inst = self.inst
        block = self.block
        new_actions = np.empty(self.n, dtype=np.int64)
        for loc in range(1, inst.layout.node_count + 1):
            lo = (loc - 1) * block
            hi = loc * block
            v_block = v[lo:hi]
            candidates = sorted((loc,) + inst.layout.neighbors(loc))
            q = np.empty((len(candidates), block))
            for row, a in enumerate(candidates):
                if a == loc:
                    if loc <= self.m:
                        cond_here = self.cond[lo:hi, loc - 1]
                        stride = self.strides[loc - 1]
                        targets = np.where(cond_here >= 1, np.arange(lo, hi) - stride, lo)
                        q[row] = np.where(
                            cond_here >= 1,
                            self.mu_delta[loc - 1] * (v[targets] - v_block),
                            0.0,
                        )
                    else:
                        q[row] = 0.0
                else:
                    shift = (a - loc) * block
                    q[row] = self.tau_delta * (v[lo + shift : hi + shift] - v_block)
            best = np.argmin(q, axis=0)  # first minimum: smallest action id
            new_actions[lo:hi] = np.array(candidates, dtype=np.int64)[best]
        return StationaryPolicy(tuple(int(a) for a in new_actions))


DENSE_STATE_LIMIT = 1024


def evaluate_policy(
    inst: InstanceParameters,
    policy: StationaryPolicy,
    reference: SystemState | None = None,
    tol: float = DEFAULT_TOL,
    objective: str = "cost",
    max_sweeps: int = DEFAULT_MAX_SWEEPS,
    model: DpModel | None = None,
    v0: np.ndarray | None = None,
    span_target: float | None = None,
) -> PolicyEvaluation:
    """Average cost (or reward) and relative values of a stationary policy.

    Sweeps until max_x |g+(x) - g(x)| < tol.  Returns g at the reference
    state and v normalized to zero there.  Raises EvaluationDidNotConverge
    at the sweep cap, which usually means the policy is multichain and has
    class-dependent averages that no single sweep limit can reconcile.

    For a unichain policy the true average is a stationary-weighted mean
    of the per-state estimates g+(x), so span(g+) bounds the error of
    g+(reference).  Passing ``span_target`` keeps sweeping until that
    certified bound is met as well.
    """
    if model is None:
        model = DpModel(inst)
    if reference is None:
        reference = pristine_state(inst)
    ref = model.indexer.index(reference)
    matrix = model.transition_matrix(policy)
    if model.n <= DENSE_STATE_LIMIT:
        matrix = matrix.toarray()
    stage = model.stage_vector(policy, objective)

    v = np.zeros(model.n) if v0 is None else v0.copy()
    g_prev = np.zeros(model.n)
    for sweep in range(1, max_sweeps + 1):
        v_plus = stage + matrix.dot(v)
        g_new = v_plus - v
        err = float(np.max(np.abs(g_new - g_prev)))
        v = v_plus - v_plus[ref]
        g_prev = g_new
        if err < tol:
            span = float(np.max(g_new) - np.min(g_new))
            if span_target is None or span < span_target:
                return PolicyEvaluation(g=float(g_new[ref]), v=v, sweeps=sweep, g_span=span)
    raise EvaluationDidNotConverge(
        f"policy evaluation did not converge within {max_sweeps} sweeps "
        f"(last change {err:.3e}); the policy may be multichain"
    )


def policy_iteration(
    inst: InstanceParameters,
    base: StationaryPolicy | None = None,
    reference: SystemState | None = None,
    tol: float = DEFAULT_TOL,
    max_improvements: int = 1000,
    max_sweeps: int = DEFAULT_MAX_SWEEPS,
    span_target: float | None = None,
) -> DpSolution:
    """Exact policy iteration from a unichain base policy.

    The default base is the modified index policy.  Improvement repeats
    until the policy reproduces itself; if a cycle over equally good
    policies appears (a floating-point tie artifact), the best policy
    seen is returned.
    """
    from .index_policy import ModifiedIndexPolicy

    if reference is None:
        reference = pristine_state(inst)
    model = DpModel(inst)
    if base is None:
        base = StationaryPolicy.from_rule(inst, ModifiedIndexPolicy(inst))

    policy = base
    seen: set[tuple[int, ...]] = set()
    best: tuple[float, StationaryPolicy, np.ndarray] | None = None
    v_start: np.ndarray | None = None
    history: list[float] = []
    stalls = 0
    for iteration in range(1, max_improvements + 1):
        evaluation = evaluate_policy(
            inst,
            policy,
            reference,
            tol=tol,
            model=model,
            max_sweeps=max_sweeps,
            v0=v_start,
            span_target=span_target,
        )
        v_start = evaluation.v
        history.append(evaluation.g)
        # Approximate evaluation can shuffle near-tied policies forever;
        # once g stops improving beyond the evaluation noise for several
        # consecutive rounds, the best policy seen is the answer.
        if best is not None and evaluation.g >= best[0] - 10 * tol:
            stalls += 1
        else:
            stalls = 0
        if best is None or evaluation.g < best[0]:
            best = (evaluation.g, policy, evaluation.v)
        improved = model.improve(evaluation.v, policy)
        done = improved.actions == policy.actions
        if done and evaluation.g <= best[0] + 10 * tol:
            return DpSolution(
                g_star=evaluation.g,
                v=evaluation.v,
                policy=policy,
                iterations=iteration,
                reference=reference,
                g_history=tuple(history),
            )
        if done or improved.actions in seen or stalls >= 10:
            g_best, policy_best, v_best = best
            return DpSolution(
                g_star=g_best,
                v=v_best,
                policy=policy_best,
                iterations=iteration,
                reference=reference,
                g_history=tuple(history),
            )
        seen.add(improved.actions)
        policy = improved
    raise RuntimeError(f"policy iteration did not settle within {max_improvements} improvements")


def reward_optimum(inst: InstanceParameters, solution: DpSolution) -> float:
    """Optimal average reward implied by the optimal average cost."""
    return inst.failed_cost_total() - solution.g_star


def optimality_residual(
    inst: InstanceParameters, solution: DpSolution, model: DpModel | None = None
) -> float:
    """max_x |g* + v(x) - min_a Q(x, a)| over the whole state space."""
    if model is None:
        model = DpModel(inst)
    greedy = model.improve(solution.v, solution.policy)
    matrix = model.transition_matrix(greedy)
    q_min = model.cost + matrix.dot(solution.v)
    return float(np.max(np.abs(solution.g_star + solution.v - q_min)))
