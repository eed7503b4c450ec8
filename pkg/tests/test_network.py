import pytest

from conftest import floyd_warshall
from repairnet.network import (
    LayoutError,
    build_complete_layout,
    build_lattice_layout,
    build_star_layout,
    shortest_next_hop,
)

FIG3_MACHINES = [(1, 3), (2, 5), (3, 1)]


def test_lattice_fig3_machine_distances():
    layout = build_lattice_layout(5, FIG3_MACHINES)
    assert layout.dist(1, 3) == 4
    assert layout.dist(1, 2) == 3
    assert layout.dist(2, 3) == 5


def test_lattice_two_machines_manhattan():
    layout = build_lattice_layout(5, [(1, 3), (2, 5)])
    assert layout.dist(1, 2) == abs(1 - 2) + abs(3 - 5) == 3


def test_lattice_single_node():
    layout = build_lattice_layout(1, [(1, 1)])
    assert layout.node_count == 1
    assert layout.dist(1, 1) == 0


def test_lattice_machine_renumbering():
    # Machines sorted by a then b regardless of the given order.
    layout = build_lattice_layout(5, [(3, 1), (1, 3), (2, 5)])
    assert layout.coordinates[0] == (1, 3)
    assert layout.coordinates[1] == (2, 5)
    assert layout.coordinates[2] == (3, 1)
    assert layout.machines == (1, 2, 3)
    assert layout.node_count == 25


def test_lattice_manhattan_between_all_machines():
    layout = build_lattice_layout(5, [(1, 1), (2, 4), (5, 5), (4, 2)])
    for i in layout.machines:
        ai, bi = layout.coordinates[i - 1]
        for j in layout.machines:
            aj, bj = layout.coordinates[j - 1]
            assert layout.dist(i, j) == abs(ai - aj) + abs(bi - bj)


def test_lattice_rejects_duplicates_and_out_of_range():
    with pytest.raises(LayoutError):
        build_lattice_layout(5, [(1, 1), (1, 1)])
    with pytest.raises(LayoutError):
        build_lattice_layout(5, [(0, 3)])
    with pytest.raises(LayoutError):
        build_lattice_layout(5, [(2, 6)])


def test_star_distances():
    layout = build_star_layout(6, 3)
    center = 7
    for i in range(1, 7):
        assert layout.dist(i, center) == 3
        for j in range(1, 7):
            if i != j:
                assert layout.dist(i, j) == 6


def test_star_small_cases():
    layout = build_star_layout(3, 1)
    assert layout.node_count == 4
    assert layout.dist(1, 2) == 2
    two = build_star_layout(2, 1)
    assert two.node_count == 3
    assert two.adjacency[2] == (1, 2)  # center joins both machines


def test_star_rejects_bad_arguments():
    with pytest.raises(LayoutError):
        build_star_layout(1, 2)
    with pytest.raises(LayoutError):
        build_star_layout(3, 0)


def test_complete_layouts():
    layout = build_complete_layout(4)
    edges = sum(len(nbrs) for nbrs in layout.adjacency) // 2
    assert edges == 6
    for i in range(1, 5):
        assert layout.dist(i, i) == 0
        for j in range(1, 5):
            if i != j:
                assert layout.dist(i, j) == 1
    assert build_complete_layout(2).node_count == 2
    with pytest.raises(LayoutError):
        build_complete_layout(1)


def test_next_hop_adjacent_and_error():
    layout = build_complete_layout(3)
    assert shortest_next_hop(layout, 1, 2) == 2
    with pytest.raises(LayoutError):
        shortest_next_hop(layout, 2, 2)


def test_next_hop_star_unique_path():
    layout = build_star_layout(3, 2)
    hop = shortest_next_hop(layout, 1, 2)
    # One step inward along the unique path toward the center.
    assert layout.dist(hop, 2) == layout.dist(1, 2) - 1
    assert hop in layout.neighbors(1)


def _bfs_smallest_id_path(layout, source, target):
    """Oracle: greedily walk to the smallest-id neighbor closer to target."""
    path = [source]
    node = source
    while node != target:
        best = min(
            u for u in layout.neighbors(node) if layout.dist(u, target) == layout.dist(node, target) - 1
        )
        path.append(best)
        node = best
    return path


def test_next_hop_smallest_id_tie_break_fig3():
    layout = build_lattice_layout(5, FIG3_MACHINES)
    path = _bfs_smallest_id_path(layout, 1, 2)
    assert shortest_next_hop(layout, 1, 2) == path[1]
    assert len(path) - 1 == layout.dist(1, 2)


@pytest.mark.parametrize(
    "layout",
    [
        build_lattice_layout(5, FIG3_MACHINES),
        build_star_layout(4, 2),
        build_complete_layout(5),
        build_lattice_layout(3, [(1, 1), (3, 3)]),
    ],
)
def test_next_hop_walk_reaches_target_in_dist_steps(layout):
    for i in range(1, layout.node_count + 1):
        for j in range(1, layout.node_count + 1):
            if i == j:
                continue
            node, steps = i, 0
            while node != j:
                node = shortest_next_hop(layout, node, j)
                steps += 1
                assert steps <= layout.node_count
            assert steps == layout.dist(i, j)


@pytest.mark.parametrize(
    "layout",
    [
        build_lattice_layout(5, FIG3_MACHINES),
        build_star_layout(5, 3),
        build_complete_layout(6),
    ],
)
def test_bfs_matches_floyd_warshall(layout):
    oracle = floyd_warshall(layout.adjacency)
    for i in range(layout.node_count):
        for j in range(layout.node_count):
            assert layout.dist_table[i][j] == oracle[i][j]


def test_dist_symmetry_and_triangle():
    layout = build_lattice_layout(4, [(1, 1), (4, 4), (2, 3)])
    n = layout.node_count
    for i in range(1, n + 1):
        assert layout.dist(i, i) == 0
        for j in range(1, n + 1):
            assert layout.dist(i, j) == layout.dist(j, i)
            for k in range(1, n + 1):
                assert layout.dist(i, j) <= layout.dist(i, k) + layout.dist(k, j)
