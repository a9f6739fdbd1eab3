"""Port-numbered graphs, multisets over finite alphabets, and configurations.

Node handles are simulator-internal integers; the algorithms executed on top
of these graphs never read them (they see only ports, degrees and the global
degree bound).  Port order is deterministic from construction input so that
runs are reproducible from a seed.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Iterable, Iterator

INF = math.inf


class GraphError(ValueError):
    pass


class SelfLoop(GraphError):
    pass


class DuplicateEdge(GraphError):
    pass


class DegreeBoundViolated(GraphError):
    pass


def edge_id(u: int, v: int) -> tuple[int, int]:
    """Canonical unordered pair for an edge."""
    return (u, v) if u <= v else (v, u)


class Graph:
    """Undirected graph with per-node ordered port lists and a degree bound.

    Ports of node ``v`` are the positions 0..d-1 of its adjacency list (the
    usual 1..d numbering shifted to 0-based indexing).
    """

    __slots__ = ("delta", "_adj", "_port_of")

    def __init__(self, delta: int):
        if delta < 1:
            raise GraphError(f"degree bound must be positive, got {delta}")
        self.delta = delta
        self._adj: dict[int, list[int]] = {}
        self._port_of: dict[tuple[int, int], int] | None = None

    # -- construction / mutation (mutation is reserved for the adversary) --

    def add_node(self, v: int | None = None) -> int:
        if v is None:
            v = max(self._adj, default=-1) + 1
        if v in self._adj:
            raise GraphError(f"node {v} already present")
        self._adj[v] = []
        self._port_of = None
        return v

    def add_edge(self, u: int, v: int) -> None:
        if u == v:
            raise SelfLoop(f"self-loop at {u}")
        for w in (u, v):
            if w not in self._adj:
                self.add_node(w)
        if v in self._adj[u]:
            raise DuplicateEdge(f"edge {u}-{v} already present")
        if len(self._adj[u]) >= self.delta or len(self._adj[v]) >= self.delta:
            raise DegreeBoundViolated(f"edge {u}-{v} exceeds degree bound {self.delta}")
        self._adj[u].append(v)
        self._adj[v].append(u)
        self._port_of = None

    def remove_edge(self, u: int, v: int) -> None:
        if v not in self._adj.get(u, ()):
            raise GraphError(f"edge {u}-{v} not present")
        self._adj[u].remove(v)
        self._adj[v].remove(u)
        self._port_of = None

    def remove_node(self, v: int) -> None:
        if v not in self._adj:
            raise GraphError(f"node {v} not present")
        for u in list(self._adj[v]):
            self._adj[u].remove(v)
        del self._adj[v]
        self._port_of = None

    def permute_ports(self, v: int, perm: list[int]) -> None:
        """Reorder v's port list; ``perm`` maps new port -> old port."""
        adj = self._adj[v]
        if sorted(perm) != list(range(len(adj))):
            raise GraphError(f"bad port permutation for node {v}")
        self._adj[v] = [adj[i] for i in perm]
        self._port_of = None

    # -- queries --

    def nodes(self) -> list[int]:
        return sorted(self._adj)

    def __contains__(self, v: int) -> bool:
        return v in self._adj

    def num_nodes(self) -> int:
        return len(self._adj)

    def edges(self) -> list[tuple[int, int]]:
        return sorted(edge_id(u, v) for u in self._adj for v in self._adj[u] if u <= v)

    def num_edges(self) -> int:
        return sum(len(a) for a in self._adj.values()) // 2

    def neighbors(self, v: int) -> list[int]:
        return self._adj[v]

    def degree(self, v: int) -> int:
        return len(self._adj[v])

    def port_of(self, v: int, u: int) -> int:
        """Port index under which v sees neighbor u."""
        if self._port_of is None:
            self._port_of = {
                (w, x): i for w in self._adj for i, x in enumerate(self._adj[w])
            }
        return self._port_of[(v, u)]

    def has_edge(self, u: int, v: int) -> bool:
        return v in self._adj.get(u, ())

    def copy(self) -> "Graph":
        g = Graph(self.delta)
        g._adj = {v: list(a) for v, a in self._adj.items()}
        return g

    def check_valid(self) -> None:
        """Assert the structural invariants (port bijection, symmetry, bound)."""
        for v, adj in self._adj.items():
            if len(adj) > self.delta:
                raise DegreeBoundViolated(f"node {v} has degree {len(adj)}")
            if len(set(adj)) != len(adj):
                raise DuplicateEdge(f"node {v} has duplicate ports")
            if v in adj:
                raise SelfLoop(f"node {v} adjacent to itself")
            for u in adj:
                if v not in self._adj.get(u, ()):
                    raise GraphError(f"asymmetric adjacency {v}->{u}")


def build_graph(
    edge_list: Iterable[tuple[int, int]],
    delta: int,
    nodes: Iterable[int] = (),
) -> Graph:
    """Build a graph from an edge list; ports follow insertion order."""
    g = Graph(delta)
    for v in nodes:
        if v not in g:
            g.add_node(v)
    for u, v in edge_list:
        g.add_edge(u, v)
    return g


def parse_edge_list(text: str, delta: int) -> Graph:
    """Parse the edge-list text format: one ``u v`` pair per line.

    Blank lines and lines starting with ``#`` are skipped.
    """
    edges = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise GraphError(f"line {lineno}: expected 'u v', got {line!r}")
        edges.append((int(parts[0]), int(parts[1])))
    return build_graph(edges, delta)


# -- named generators --


def cycle_graph(n: int) -> Graph:
    if n < 3:
        raise GraphError("cycle needs at least 3 nodes")
    return build_graph([(i, (i + 1) % n) for i in range(n)], delta=2)


def path_graph(n: int) -> Graph:
    if n < 1:
        raise GraphError("path needs at least 1 node")
    return build_graph([(i, i + 1) for i in range(n - 1)], delta=2, nodes=range(n))


def grid_graph(a: int, b: int) -> Graph:
    g = Graph(4)
    for i in range(a):
        for j in range(b):
            g.add_node(i * b + j)
    for i in range(a):
        for j in range(b):
            if j + 1 < b:
                g.add_edge(i * b + j, i * b + j + 1)
            if i + 1 < a:
                g.add_edge(i * b + j, (i + 1) * b + j)
    return g


def random_bounded_graph(
    n: int, p: float, delta: int, seed: int | random.Random = 0, max_tries: int = 1000
) -> Graph:
    """G(n, p) conditioned on max degree <= delta, by rejection."""
    rng = seed if isinstance(seed, random.Random) else random.Random(seed)
    for _ in range(max_tries):
        edges = [
            (i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < p
        ]
        deg: dict[int, int] = {}
        ok = True
        for u, v in edges:
            deg[u] = deg.get(u, 0) + 1
            deg[v] = deg.get(v, 0) + 1
            if deg[u] > delta or deg[v] > delta:
                ok = False
                break
        if ok:
            return build_graph(edges, delta, nodes=range(n))
    raise GraphError(f"rejection sampling failed after {max_tries} tries")


GENERATORS = {
    "cycle": lambda n: cycle_graph(n),
    "path": lambda n: path_graph(n),
    "grid": lambda a, b: grid_graph(a, b),
}


# -- derived graphs --


def line_graph(g: Graph) -> tuple[Graph, dict[tuple[int, int], int]]:
    """Line graph of g plus the bijection edge-id -> line-node handle.

    The returned graph's degree bound is max(1, 2*delta - 2).
    """
    ids = g.edges()
    handle = {e: i for i, e in enumerate(ids)}
    lg = Graph(max(1, 2 * g.delta - 2))
    for i in range(len(ids)):
        lg.add_node(i)
    for v in g.nodes():
        inc = sorted(edge_id(v, u) for u in g.neighbors(v))
        for i in range(len(inc)):
            for j in range(i + 1, len(inc)):
                a, b = handle[inc[i]], handle[inc[j]]
                if not lg.has_edge(a, b):
                    lg.add_edge(a, b)
    return lg, handle


def clone_graph(g: Graph, alpha: int) -> tuple[Graph, dict[tuple[int, int], int]]:
    """Clone graph with alpha layered copies of g plus per-node clone cliques.

    Returns the graph and the bijection (v, layer) -> clone handle.
    """
    if alpha < 1:
        raise GraphError("alpha must be >= 1")
    base = g.nodes()
    handle = {(v, i): k for k, (v, i) in enumerate((v, i) for v in base for i in range(alpha))}
    cg = Graph(g.delta + alpha - 1)
    for k in range(len(handle)):
        cg.add_node(k)
    for v in base:
        for i in range(alpha):
            for j in range(i + 1, alpha):
                cg.add_edge(handle[(v, i)], handle[(v, j)])
    for u, v in g.edges():
        for i in range(alpha):
            cg.add_edge(handle[(u, i)], handle[(v, i)])
    return cg, handle


# -- distances --


def distances_from_set(g: Graph, sources: Iterable[int]) -> dict[int, int]:
    """Multi-source BFS hop distances; unreachable nodes are absent."""
    dist = {v: 0 for v in sources if v in g}
    frontier = list(dist)
    d = 0
    while frontier:
        d += 1
        nxt = []
        for v in frontier:
            for u in g.neighbors(v):
                if u not in dist:
                    dist[u] = d
                    nxt.append(u)
        frontier = nxt
    return dist


def distance(g: Graph, v: int, targets: Iterable[int]) -> float:
    """Hop distance from v to the nearest node of ``targets``; inf if none."""
    tset = set(targets)
    if not tset:
        return INF
    if v in tset:
        return 0
    dist = distances_from_set(g, [v])
    hits = [dist[w] for w in tset if w in dist]
    return min(hits) if hits else INF


# -- multisets --


class Multiset:
    """Immutable multiset over a finite alphabet, represented by counts."""

    __slots__ = ("_items",)

    def __init__(self, counts: dict | None = None):
        items = tuple(sorted((k, c) for k, c in (counts or {}).items() if c > 0))
        for _, c in items:
            if c < 0:
                raise ValueError("negative multiplicity")
        self._items = items

    @classmethod
    def from_values(cls, values: Iterable) -> "Multiset":
        counts: dict = {}
        for v in values:
            counts[v] = counts.get(v, 0) + 1
        return cls(counts)

    def count(self, value) -> int:
        for k, c in self._items:
            if k == value:
                return c
        return 0

    @property
    def size(self) -> int:
        return sum(c for _, c in self._items)

    def values(self) -> tuple:
        """Expanded sorted value sequence, e.g. {a:2, b:1} -> (a, a, b)."""
        out = []
        for k, c in self._items:
            out.extend([k] * c)
        return tuple(out)

    def __contains__(self, value) -> bool:
        return self.count(value) >= 1

    def issubset(self, other: "Multiset") -> bool:
        return all(other.count(k) >= c for k, c in self._items)

    def union(self, other: "Multiset") -> "Multiset":
        keys = {k for k, _ in self._items} | {k for k, _ in other._items}
        return Multiset({k: max(self.count(k), other.count(k)) for k in keys})

    def intersection(self, other: "Multiset") -> "Multiset":
        keys = {k for k, _ in self._items}
        return Multiset({k: min(self.count(k), other.count(k)) for k in keys})

    def __eq__(self, other) -> bool:
        return isinstance(other, Multiset) and self._items == other._items

    def __hash__(self) -> int:
        return hash(self._items)

    def __repr__(self) -> str:
        return f"Multiset({dict(self._items)!r})"


# -- configurations --

BOTTOM = None  # the "no output" symbol


@dataclass
class Configuration:
    """Assignment of an output value or None to every node (or edge)."""

    kind: str  # "node" | "edge"
    assignment: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("node", "edge"):
            raise ValueError(f"bad configuration kind {self.kind!r}")

    def value(self, x):
        return self.assignment.get(x)

    def decided(self) -> list:
        return sorted(x for x, v in self.assignment.items() if v is not None)

    def undecided(self) -> list:
        return sorted(x for x, v in self.assignment.items() if v is None)

    def is_complete(self) -> bool:
        return all(v is not None for v in self.assignment.values())

    def with_value(self, x, v) -> "Configuration":
        new = dict(self.assignment)
        new[x] = v
        return Configuration(self.kind, new)

    def restrict(self, keys: Iterable) -> "Configuration":
        keys = set(keys)
        return Configuration(
            self.kind, {x: v for x, v in self.assignment.items() if x in keys}
        )

    def items(self) -> Iterator:
        return iter(sorted(self.assignment.items()))


def empty_node_config(g: Graph) -> Configuration:
    return Configuration("node", {v: None for v in g.nodes()})


def empty_edge_config(g: Graph) -> Configuration:
    return Configuration("edge", {e: None for e in g.edges()})
