import itertools

import pytest

from conftest import homogeneous_complete_instance, rng
from repairnet.dp import policy_iteration
from repairnet.instance import generate_instance
from repairnet.mdp import SystemState, pristine_state, simulate
from repairnet.network import build_lattice_layout
from repairnet.polling import (
    PollingPolicy,
    best_polling_report,
    best_tour,
    polling_decision,
    tour_length,
)

FIG3 = build_lattice_layout(5, [(1, 3), (2, 5), (3, 1)])


def test_best_tour_singleton_and_pair():
    single = best_tour(FIG3, [2])
    assert single.sequence == (2,)
    assert single.cycle_length == 0
    pair = best_tour(FIG3, [1, 3])
    assert pair.cycle_length == 2 * FIG3.dist(1, 3) == 8


def test_best_tour_three_machines_fig3():
    tour = best_tour(FIG3, [1, 2, 3])
    assert tour.cycle_length == 3 + 5 + 4 == 12
    # Anchored at the smallest machine; ties resolve lexicographically.
    assert tour.sequence[0] == 1
    assert tour.sequence == (1, 2, 3)


def test_best_tour_matches_full_permutation_oracle():
    generator = rng(31)
    for seed in range(6):
        inst = generate_instance(seed, m=int(generator.integers(3, 7)))
        layout = inst.layout
        machines = layout.machines
        tour = best_tour(layout, machines)
        oracle = min(tour_length(layout, perm) for perm in itertools.permutations(machines))
        assert tour.cycle_length == oracle


def test_best_tour_rejects_empty():
    with pytest.raises(ValueError):
        best_tour(FIG3, [])


def test_polling_decision_rules():
    tour = best_tour(FIG3, [1, 2, 3])
    # At the target with damage: stay.
    action, progress = polling_decision(FIG3, tour, SystemState(1, (2, 0, 0)), 0)
    assert (action, progress) == (1, 0)
    # At the target, pristine: advance the cycle and head out.
    action, progress = polling_decision(FIG3, tour, SystemState(1, (0, 2, 0)), 0)
    assert progress == 1
    assert FIG3.dist(action, 2) == FIG3.dist(1, 2) - 1
    # Mid-route, other machines failing does not change the route.
    mid = FIG3.next_hop_table[0][1]
    a1, p1 = polling_decision(FIG3, tour, SystemState(mid, (0, 0, 0)), 1)
    a2, p2 = polling_decision(FIG3, tour, SystemState(mid, (2, 0, 2)), 1)
    assert (a1, p1) == (a2, p2)


def test_singleton_tour_camps_at_machine():
    inst = generate_instance(4, m=3, cap=2)
    tour = best_tour(inst.layout, [2])
    policy = PollingPolicy(inst, tour)
    # Pristine at the single tour machine: advancing wraps to itself.
    assert policy(SystemState(2, (0, 0, 0))) == 2
    assert policy(SystemState(2, (1, 2, 1))) == 2


def test_best_polling_report_subset_count_and_argmin():
    inst = generate_instance(11, m=2, cap=1)
    crn = rng(1).random(4_000)
    report = best_polling_report(inst, 4_000, crn)
    table = report.metadata["subsets"]
    assert len(table) == 3  # 2^2 - 1
    best_g = min(row["average_cost"] for row in table)
    assert report.average_cost == best_g


def test_best_polling_limit_and_override():
    inst = generate_instance(3, m=5, cap=1)
    crn = rng(2).random(200)
    with pytest.raises(ValueError):
        best_polling_report(inst, 200, crn)
    report = best_polling_report(inst, 200, crn, allow_large=True)
    assert len(report.metadata["subsets"]) == 2**5 - 1


def test_polling_never_beats_optimum():
    inst = homogeneous_complete_instance(3, 0.1, 0.5, 1.0, 0.4)
    solution = policy_iteration(inst, tol=1e-10)
    crn = rng(9).random(60_000)
    report = best_polling_report(inst, 60_000, crn)
    assert report.average_cost >= solution.g_star - 0.05


def test_polling_policy_runs_under_simulate():
    inst = generate_instance(8, m=3, cap=2)
    tour = best_tour(inst.layout, inst.layout.machines)
    report = simulate(inst, PollingPolicy(inst, tour), pristine_state(inst), 5_000, rng=rng(3))
    assert report.steps == 5_000
    assert sum(report.visit_counts) == 5_000
