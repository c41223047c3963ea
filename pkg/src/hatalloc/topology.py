"""Interaction graph over autonomous and human agents.

The vertex set is the union of the two agent groups. Every stacked vector or
matrix in the package orders blocks canonically: sorted autonomous ids first,
then sorted human ids. Connectivity is a hard precondition for the constraint
decoupling, so it is checked at construction time.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import DisconnectedGraphError, TopologyError


@dataclass(frozen=True)
class NetworkTopology:
    """Undirected connected graph partitioned into autonomous and human nodes.

    Ids are stored sorted; `edges` is a frozenset of sorted id pairs, so the
    adjacency is symmetric by representation and free of self loops.
    """

    autonomous_ids: tuple[str, ...]
    human_ids: tuple[str, ...]
    edges: frozenset[tuple[str, str]]
    _adjacency: dict[str, list[str]] = field(
        init=False, repr=False, compare=False, default_factory=dict
    )

    def __post_init__(self):
        auto = tuple(sorted(self.autonomous_ids))
        hum = tuple(sorted(self.human_ids))
        object.__setattr__(self, "autonomous_ids", auto)
        object.__setattr__(self, "human_ids", hum)

        all_ids = set(auto) | set(hum)
        if len(all_ids) != len(auto) + len(hum):
            raise TopologyError("agent ids must be unique across both groups")
        if not all_ids:
            raise TopologyError("topology needs at least one agent")

        normalized = set()
        adjacency: dict[str, list[str]] = {i: [] for i in all_ids}
        for edge in self.edges:
            a, b = edge
            if a == b:
                raise TopologyError(f"self loop on '{a}'")
            for endpoint in (a, b):
                if endpoint not in all_ids:
                    raise TopologyError(f"edge endpoint '{endpoint}' is not an agent")
            pair = (a, b) if a < b else (b, a)
            if pair not in normalized:
                normalized.add(pair)
                adjacency[a].append(b)
                adjacency[b].append(a)
        object.__setattr__(self, "edges", frozenset(normalized))
        for key in adjacency:
            adjacency[key].sort()
        object.__setattr__(self, "_adjacency", adjacency)

        # Assumption: connected graph. BFS from an arbitrary vertex.
        start = next(iter(all_ids))
        seen = {start}
        queue = deque([start])
        while queue:
            node = queue.popleft()
            for other in adjacency[node]:
                if other not in seen:
                    seen.add(other)
                    queue.append(other)
        if seen != all_ids:
            missing = sorted(all_ids - seen)
            raise DisconnectedGraphError(
                f"graph is not connected (unreachable: {missing})"
            )

    @property
    def node_order(self) -> tuple[str, ...]:
        """Canonical vertex order: autonomous ids then human ids."""
        return self.autonomous_ids + self.human_ids

    @property
    def n_autonomous(self) -> int:
        return len(self.autonomous_ids)

    @property
    def n_human(self) -> int:
        return len(self.human_ids)

    def is_autonomous(self, agent_id: str) -> bool:
        return agent_id in set(self.autonomous_ids)


def neighbors(topology: NetworkTopology, agent_id: str) -> tuple[list[str], list[str]]:
    """Neighbor set of `agent_id`, split into (autonomous, human), each sorted."""
    if agent_id not in topology._adjacency:
        raise KeyError(f"unknown agent id '{agent_id}'")
    autos = set(topology.autonomous_ids)
    adjacent = topology._adjacency[agent_id]
    return (
        [n for n in adjacent if n in autos],
        [n for n in adjacent if n not in autos],
    )


def laplacian(topology: NetworkTopology) -> np.ndarray:
    """Graph Laplacian D - A in canonical vertex order."""
    order = topology.node_order
    index = {node: i for i, node in enumerate(order)}
    n = len(order)
    lap = np.zeros((n, n))
    for a, b in topology.edges:
        i, j = index[a], index[b]
        lap[i, j] -= 1.0
        lap[j, i] -= 1.0
        lap[i, i] += 1.0
        lap[j, j] += 1.0
    return lap


def laplacian_lift(lap: np.ndarray, r: int) -> np.ndarray:
    """Kronecker product lap (x) I_r, acting on stacked r-dimensional blocks."""
    lap = np.asarray(lap, dtype=float)
    if lap.ndim != 2 or lap.shape[0] != lap.shape[1]:
        raise ValueError("laplacian must be square")
    if r < 1:
        raise ValueError(f"block size must be a positive integer, got {r}")
    return np.kron(lap, np.eye(r))
