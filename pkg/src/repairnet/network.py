"""Graph model of machines and intermediate stages.

Nodes are labeled with 1-based ids: machines 1..m, intermediate stages
m+1..m+n.  All movement follows shortest paths; ties between shortest
paths are broken by always stepping to the smallest-id adjacent node,
which makes every routing decision in the package deterministic.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

NodeId = int


@dataclass(frozen=True)
class NetworkLayout:
    """Immutable connected graph with precomputed shortest-path structure.

    Attributes:
        node_count: total number of nodes |V|.
        adjacency: per-node sorted tuple of adjacent node ids (1-based,
            indexed by ``node - 1``).
        machines: machine node ids, always ``(1, ..., m)``.
        coordinates: optional per-node lattice coordinates ``(a, b)``;
            ``None`` for non-lattice layouts.
        dist_table: all-pairs shortest-path edge counts.
        next_hop_table: first node on the canonical (smallest-id) shortest
            path for each ordered pair; ``0`` on the diagonal.
    """

    node_count: int
    adjacency: tuple[tuple[NodeId, ...], ...]
    machines: tuple[NodeId, ...]
    coordinates: tuple[tuple[int, int], ...] | None
    dist_table: tuple[tuple[int, ...], ...]
    next_hop_table: tuple[tuple[NodeId, ...], ...]

    @property
    def machine_count(self) -> int:
        return len(self.machines)

    def neighbors(self, node: NodeId) -> tuple[NodeId, ...]:
        return self.adjacency[node - 1]

    def dist(self, source: NodeId, target: NodeId) -> int:
        return self.dist_table[source - 1][target - 1]

    def is_machine(self, node: NodeId) -> bool:
        return 1 <= node <= len(self.machines)


class LayoutError(ValueError):
    """Raised for invalid layout construction arguments."""


def _bfs_distances(adjacency: tuple[tuple[NodeId, ...], ...], source: NodeId) -> list[int]:
    n = len(adjacency)
    dist = [-1] * n
    dist[source - 1] = 0
    queue = deque([source])
    while queue:
        node = queue.popleft()
        for nbr in adjacency[node - 1]:
            if dist[nbr - 1] < 0:
                dist[nbr - 1] = dist[node - 1] + 1
                queue.append(nbr)
    return dist


def layout_from_adjacency(
    adjacency: tuple[tuple[NodeId, ...], ...],
    machines: tuple[NodeId, ...],
    coordinates: tuple[tuple[int, int], ...] | None,
) -> NetworkLayout:
    """Finish construction: BFS all-pairs distances and canonical next hops."""
    n = len(adjacency)
    dist_rows = []
    for src in range(1, n + 1):
        row = _bfs_distances(adjacency, src)
        if any(d < 0 for d in row):
            raise LayoutError("graph is not connected")
        dist_rows.append(tuple(row))
    dist_table = tuple(dist_rows)

    # Canonical next hop: the smallest-id neighbor that reduces the
    # distance to the target by exactly one.  Adjacency is sorted, so the
    # first qualifying neighbor is the smallest.
    hop_rows = []
    for src in range(1, n + 1):
        row = []
        for dst in range(1, n + 1):
            if src == dst:
                row.append(0)
                continue
            target_d = dist_table[src - 1][dst - 1] - 1
            hop = next(u for u in adjacency[src - 1] if dist_table[u - 1][dst - 1] == target_d)
            row.append(hop)
        hop_rows.append(tuple(row))

    return NetworkLayout(
        node_count=n,
        adjacency=adjacency,
        machines=machines,
        coordinates=coordinates,
        dist_table=dist_table,
        next_hop_table=tuple(hop_rows),
    )


def build_lattice_layout(
    grid_side: int, machine_coords: list[tuple[int, int]]
) -> NetworkLayout:
    """Full grid graph on ``grid_side x grid_side`` lattice points.

    The listed coordinates become machines, renumbered by a-coordinate
    then b-coordinate; every remaining lattice point is kept as an
    intermediate stage, numbered in the same row-major order after the
    machines.  Machine-to-machine distances equal Manhattan distances.
    """
    if grid_side < 1:
        raise LayoutError(f"grid_side must be >= 1, got {grid_side}")
    coords = list(machine_coords)
    if not coords:
        raise LayoutError("at least one machine coordinate required")
    if len(set(coords)) != len(coords):
        raise LayoutError(f"duplicate machine coordinates: {sorted(coords)}")
    for a, b in coords:
        if not (1 <= a <= grid_side and 1 <= b <= grid_side):
            raise LayoutError(f"coordinate ({a}, {b}) outside 1..{grid_side}")

    machine_order = sorted(coords)
    stage_order = [
        (a, b)
        for a in range(1, grid_side + 1)
        for b in range(1, grid_side + 1)
        if (a, b) not in set(coords)
    ]
    all_coords = machine_order + stage_order
    id_of = {coord: i + 1 for i, coord in enumerate(all_coords)}

    adjacency = []
    for a, b in all_coords:
        nbrs = []
        for da, db in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            nb = (a + da, b + db)
            if nb in id_of:
                nbrs.append(id_of[nb])
        adjacency.append(tuple(sorted(nbrs)))

    return layout_from_adjacency(
        tuple(adjacency),
        machines=tuple(range(1, len(machine_order) + 1)),
        coordinates=tuple(all_coords),
    )


def build_star_layout(m: int, radius: int) -> NetworkLayout:
    """Star network: one center stage, ``m`` spokes of length ``radius``.

    Machines sit at the spoke ends; every pair of machines is at distance
    ``2 * radius`` via the center.  Stage ids: the center is ``m + 1``,
    then each spoke's intermediate nodes are numbered from the machine
    inward, spoke by spoke.
    """
    if m < 2:
        raise LayoutError(f"star layout needs m >= 2 machines, got {m}")
    if radius < 1:
        raise LayoutError(f"star layout needs radius >= 1, got {radius}")

    center = m + 1
    n_total = m + 1 + m * (radius - 1)
    adjacency: list[list[NodeId]] = [[] for _ in range(n_total)]

    def connect(u: NodeId, v: NodeId) -> None:
        adjacency[u - 1].append(v)
        adjacency[v - 1].append(u)

    next_id = m + 2
    for machine in range(1, m + 1):
        prev = machine
        for _ in range(radius - 1):
            connect(prev, next_id)
            prev = next_id
            next_id += 1
        connect(prev, center)

    return layout_from_adjacency(
        tuple(tuple(sorted(nbrs)) for nbrs in adjacency),
        machines=tuple(range(1, m + 1)),
        coordinates=None,
    )


def build_complete_layout(m: int) -> NetworkLayout:
    """Complete graph on ``m`` machines, no intermediate stages."""
    if m < 2:
        raise LayoutError(f"complete layout needs m >= 2 machines, got {m}")
    adjacency = tuple(
        tuple(j for j in range(1, m + 1) if j != i) for i in range(1, m + 1)
    )
    return layout_from_adjacency(adjacency, machines=tuple(range(1, m + 1)), coordinates=None)


def shortest_next_hop(layout: NetworkLayout, source: NodeId, target: NodeId) -> NodeId:
    """First node on the canonical shortest path from ``source`` to ``target``."""
    if source == target:
        raise LayoutError(f"no next hop from node {source} to itself")
    return layout.next_hop_table[source - 1][target - 1]
