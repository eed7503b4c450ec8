"""Shared helpers: independent oracles the implementation is checked against."""

from __future__ import annotations

import numpy as np
import pytest

from repairnet.dp import DpModel, StationaryPolicy
from repairnet.instance import CostKind, CostModel, InstanceParameters
from repairnet.network import build_complete_layout, build_star_layout


def rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def homogeneous_complete_instance(
    m: int, lam: float, mu: float, f1: float, tau: float
) -> InstanceParameters:
    return InstanceParameters(
        layout=build_complete_layout(m),
        lam=(lam,) * m,
        mu=(mu,) * m,
        tau=tau,
        cap=(1,) * m,
        cost=CostModel(kind=CostKind.LINEAR, c=(f1,) * m),
    )


def homogeneous_star_instance(
    m: int, radius: int, lam: float, mu: float, f1: float, tau: float
) -> InstanceParameters:
    return InstanceParameters(
        layout=build_star_layout(m, radius),
        lam=(lam,) * m,
        mu=(mu,) * m,
        tau=tau,
        cap=(1,) * m,
        cost=CostModel(kind=CostKind.LINEAR, c=(f1,) * m),
    )


def floyd_warshall(adjacency) -> list[list[float]]:
    """Independent all-pairs shortest path oracle."""
    n = len(adjacency)
    dist = [[float("inf")] * n for _ in range(n)]
    for i in range(n):
        dist[i][i] = 0
        for j in adjacency[i]:
            dist[i][j - 1] = 1
    for k in range(n):
        for i in range(n):
            dik = dist[i][k]
            for j in range(n):
                if dik + dist[k][j] < dist[i][j]:
                    dist[i][j] = dik + dist[k][j]
    return dist


def limiting_average(inst, policy: StationaryPolicy, state_index: int) -> float:
    """Average cost from one start state by repeated squaring of the
    transition matrix; valid for aperiodic multichain policies too.
    Rows are renormalized after each squaring, otherwise rounding drift
    in the dominant eigenvalue compounds through the 2^30 implicit steps.
    """
    model = DpModel(inst)
    power = model.transition_matrix(policy).toarray()
    for _ in range(30):
        power = power @ power
        power /= power.sum(axis=1, keepdims=True)
    return float(power[state_index] @ model.cost)


def random_unichain_policy(inst, seed: int) -> StationaryPolicy:
    """Random stationary policy pinned at the all-failed states.

    At every state where all machines sit at their caps the policy heads
    for machine 1 (or stays there), which makes the all-failed state at
    machine 1 reachable from everywhere and the chain unichain; all other
    states get uniformly random admissible actions.
    """
    from repairnet.mdp import actions_of, enumerate_states
    from repairnet.network import shortest_next_hop

    generator = rng(seed)
    actions = []
    for state in enumerate_states(inst):
        if state.conditions == inst.cap:
            if state.location == 1:
                actions.append(1)
            else:
                actions.append(shortest_next_hop(inst.layout, state.location, 1))
        else:
            options = actions_of(inst, state)
            actions.append(options[generator.integers(0, len(options))])
    return StationaryPolicy(tuple(actions))


@pytest.fixture
def two_machines():
    from repairnet.instance import two_machine_instance

    return two_machine_instance()
