"""Network substrates: construction, edge-list I/O and structural queries."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import IO, Iterable, Sequence

import networkx as nx
import numpy as np

UNREACHABLE = -1
DEFAULT_MAX_NODES = 1_000_000


class GraphError(ValueError):
    pass


class GraphSizeError(GraphError):
    pass


class GraphParamError(GraphError):
    pass


class EdgeListParseError(GraphError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ScheduleError(GraphError):
    pass


@dataclass(frozen=True, eq=False)
class Graph:
    """Directed graph on dense node ids ``0..node_count-1``.

    ``arcs`` is an (A, 2) int array of (src, dst) pairs in a canonical order;
    arc ``k`` is identified by its row index, which is what the cascade's
    random streams are keyed on.
    """

    node_count: int
    arcs: np.ndarray
    out_adjacency: tuple[tuple[int, ...], ...] = field(repr=False)

    @classmethod
    def from_arcs(cls, node_count: int, arcs: Iterable[tuple[int, int]]) -> "Graph":
        if node_count < 1:
            raise GraphError(f"node_count must be positive, got {node_count}")
        unique = sorted({(int(u), int(v)) for u, v in arcs})
        for u, v in unique:
            if u == v:
                raise GraphError(f"self-loop on node {u}")
            if not (0 <= u < node_count and 0 <= v < node_count):
                raise GraphError(f"arc ({u}, {v}) outside 0..{node_count - 1}")
        arr = np.array(unique, dtype=np.int64).reshape(-1, 2)
        adj: list[list[int]] = [[] for _ in range(node_count)]
        for u, v in unique:
            adj[u].append(v)
        arr.setflags(write=False)
        return cls(node_count, arr, tuple(tuple(a) for a in adj))

    @property
    def arc_count(self) -> int:
        return len(self.arcs)

    @property
    def src(self) -> np.ndarray:
        return self.arcs[:, 0]

    @property
    def dst(self) -> np.ndarray:
        return self.arcs[:, 1]

    @cached_property
    def out_arc_ptr(self) -> np.ndarray:
        """CSR row pointer: out-arcs of node u are rows ptr[u]:ptr[u+1]."""
        return np.searchsorted(self.src, np.arange(self.node_count + 1))

    def out_degrees(self) -> np.ndarray:
        return np.bincount(self.src, minlength=self.node_count)

    def in_degrees(self) -> np.ndarray:
        return np.bincount(self.dst, minlength=self.node_count)

    def is_symmetric(self) -> bool:
        fwd = {tuple(a) for a in self.arcs.tolist()}
        return all((v, u) in fwd for u, v in fwd)


@dataclass(frozen=True)
class SeedSchedule:
    """Seed nodes with their activation offsets (in time steps)."""

    entries: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if not self.entries:
            raise ScheduleError("seed schedule is empty")
        nodes = [n for n, _ in self.entries]
        if len(set(nodes)) != len(nodes):
            raise ScheduleError(f"duplicate seed nodes in {nodes}")
        offsets = [o for _, o in self.entries]
        if any(o < 0 for o in offsets):
            raise ScheduleError("activation offsets must be non-negative")
        if any(b < a for a, b in zip(offsets, offsets[1:])):
            raise ScheduleError("activation offsets must be nondecreasing")

    @classmethod
    def single(cls, node: int = 0) -> "SeedSchedule":
        return cls(((int(node), 0),))

    @classmethod
    def staggered(cls, nodes: Sequence[int]) -> "SeedSchedule":
        """Seed k becomes active at step k (nodes taken in the given order)."""
        return cls(tuple((int(n), k) for k, n in enumerate(nodes)))

    @property
    def nodes(self) -> list[int]:
        return [n for n, _ in self.entries]

    def validate(self, graph: Graph) -> None:
        bad = [n for n in self.nodes if not 0 <= n < graph.node_count]
        if bad:
            raise ScheduleError(f"seed ids {bad} not in graph of {graph.node_count} nodes")


def gen_balanced_tree(branching: int, height: int, max_nodes: int = DEFAULT_MAX_NODES) -> Graph:
    """Rooted tree with parent->child arcs; root is node 0, ids in BFS order."""
    if branching < 1:
        raise GraphParamError(f"branching must be >= 1, got {branching}")
    if height < 0:
        raise GraphParamError(f"height must be >= 0, got {height}")
    if branching == 1:
        n = height + 1
    else:
        n = (branching ** (height + 1) - 1) // (branching - 1)
    if n > max_nodes:
        raise GraphSizeError(f"tree would have {n} nodes, cap is {max_nodes}")
    # in BFS numbering the parent of node i > 0 is (i - 1) // branching
    arcs = [((i - 1) // branching, i) for i in range(1, n)]
    return Graph.from_arcs(n, arcs)


def gen_barabasi_albert(n: int, m: int, rng_seed: int) -> Graph:
    """Preferential-attachment graph with both directions of every edge."""
    if m < 1 or n <= m:
        raise GraphParamError(f"need n > m >= 1, got n={n}, m={m}")
    g = nx.barabasi_albert_graph(n, m, seed=int(rng_seed))
    arcs = []
    for u, v in g.edges():
        arcs.append((u, v))
        arcs.append((v, u))
    return Graph.from_arcs(n, arcs)


def gen_star(leaves: int) -> Graph:
    """Center 0 with arcs to leaves 1..leaves (directed outward)."""
    return Graph.from_arcs(leaves + 1, [(0, i) for i in range(1, leaves + 1)])


def load_edge_list(source: IO[str]) -> Graph:
    arcs = []
    max_id = -1
    for lineno, raw in enumerate(source, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise EdgeListParseError(lineno, f"expected 'src dst', got {line!r}")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise EdgeListParseError(lineno, f"non-integer token in {line!r}") from None
        if u < 0 or v < 0:
            raise EdgeListParseError(lineno, "negative node id")
        if u == v:
            raise EdgeListParseError(lineno, f"self-loop on node {u}")
        arcs.append((u, v))
        max_id = max(max_id, u, v)
    if max_id < 0:
        raise EdgeListParseError(0, "no arcs found")
    return Graph.from_arcs(max_id + 1, arcs)


def dump_edge_list(graph: Graph, sink: IO[str]) -> None:
    sink.write(f"# nodes {graph.node_count} arcs {graph.arc_count}\n")
    for u, v in graph.arcs.tolist():
        sink.write(f"{u} {v}\n")


def hop_distances(graph: Graph, seeds: SeedSchedule) -> np.ndarray:
    """Multi-source BFS distance along out-arcs; ``UNREACHABLE`` where none."""
    seeds.validate(graph)
    dist = np.full(graph.node_count, UNREACHABLE, dtype=np.int64)
    queue = deque()
    for s in seeds.nodes:
        dist[s] = 0
        queue.append(s)
    while queue:
        u = queue.popleft()
        for v in graph.out_adjacency[u]:
            if dist[v] == UNREACHABLE:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist
