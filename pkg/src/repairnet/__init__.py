"""Repair and maintenance scheduling on networks.

A single repairer serves machines that degrade stochastically at nodes of
a graph.  The package provides the uniformized MDP model, exact
average-cost policy iteration for small instances, index heuristics, a
cyclic polling benchmark, a rollout-based online policy improvement
method with a confidence-gated safe fallback, and a reproducible
experiment harness.
"""

from .dp import (
    DpSolution,
    StationaryPolicy,
    evaluate_policy,
    policy_iteration,
    reward_optimum,
)
from .index_policy import (
    IndexPolicy,
    ModifiedIndexPolicy,
    arrival_distribution,
    idle_score,
    index_decision,
    modified_index_decision,
    move_index,
    repair_statistics,
    stay_index,
    wait_index,
)
from .instance import (
    CostKind,
    CostModel,
    InstanceParameters,
    counterexample_instances,
    two_machine_instance,
    generate_instance,
    load_instance,
    save_instance,
)
from .mdp import (
    SimulationReport,
    SystemState,
    enumerate_states,
    simulate,
    step_cost,
    step_probabilities,
    step_reward,
)
from .network import (
    NetworkLayout,
    build_complete_layout,
    build_lattice_layout,
    build_star_layout,
    shortest_next_hop,
)
from .opi import (
    OpiBudget,
    ValueStore,
    confidence_interval,
    improving_action,
    offline_main,
    offline_preparatory,
    online_run,
    run_opi,
    sample_trajectory,
)
from .polling import PollingPolicy, PollingTour, best_polling_report, best_tour

__version__ = "0.1.0"
