"""LCL predicate families: legality, cores, supportive digraphs, potentials.

Predicates take the neighbor multiset as a value sequence (order-free).  The
core/coverage analyzers enumerate bounded multisets as multiplicity-vector
matrices so the exhaustive checks stay fast even for edge-coloring palettes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .graph import Configuration, Graph, Multiset, edge_id

IN, OUT = "in", "out"
MATCHED, UNMATCHED = "matched", "unmatched"


class CyclicError(ValueError):
    """The supportive digraph contains a directed cycle."""


class UndecidedElement(ValueError):
    pass


class KindMismatch(ValueError):
    pass


class UnknownProblem(ValueError):
    pass


class PaletteTooSmall(ValueError):
    pass


@dataclass(frozen=True)
class LclSpec:
    """A locally checkable labeling: alphabet plus per-degree predicate."""

    name: str
    kind: str  # "node" | "edge"
    alphabet: tuple
    predicate: Callable[[object, tuple], bool]
    # optional vectorized form over multiplicity-count matrices (columns
    # follow ``alphabet`` order); used by the exhaustive analyzers
    counts_predicate: Callable[[object, np.ndarray], np.ndarray] | None = None

    def check(self, o, values: Iterable) -> bool:
        return self.predicate(o, tuple(values))


# -- builtin LCLs --


def mis_lcl() -> LclSpec:
    def pred(o, vs):
        return (IN not in vs) if o == IN else (IN in vs)

    def cpred(o, counts):
        i = 0  # alphabet index of IN
        return counts[:, i] == 0 if o == IN else counts[:, i] >= 1

    return LclSpec("mis", "node", (IN, OUT), pred, cpred)


def coloring_lcl(palette: int) -> LclSpec:
    """Proper node coloring with the given palette size."""

    def pred(o, vs):
        return o not in vs

    def cpred(o, counts):
        return counts[:, o - 1] == 0

    return LclSpec(f"coloring[{palette}]", "node", tuple(range(1, palette + 1)), pred, cpred)


def maximal_coloring_lcl(c: int, kind: str = "node") -> LclSpec:
    """Maximal c-coloring: colors < c proper; color c needs all lower colors."""

    def pred(o, vs):
        if o < c:
            return o not in vs
        return all(any(v == j for v in vs) for j in range(1, c))

    def cpred(o, counts):
        if o < c:
            return counts[:, o - 1] == 0
        return (counts[:, : c - 1] >= 1).all(axis=1)

    return LclSpec(f"maximal-coloring[{c}]", kind, tuple(range(1, c + 1)), pred, cpred)


def incremental_coloring_lcl(c: int, kind: str = "node") -> LclSpec:
    """Incremental c-coloring: colors < c proper; color i needs i-1 lower ones.

    Color c itself is exempt from the properness clause (fixing c = 2 yields
    exactly the maximal-independent-set labeling).
    """

    def pred(o, vs):
        if o < c and o in vs:
            return False
        return sum(1 for v in vs if v < o) >= o - 1

    def cpred(o, counts):
        ok = counts[:, : o - 1].sum(axis=1) >= o - 1
        if o < c:
            ok &= counts[:, o - 1] == 0
        return ok

    return LclSpec(f"incremental-coloring[{c}]", kind, tuple(range(1, c + 1)), pred, cpred)


def mm_lcl() -> LclSpec:
    def pred(o, vs):
        return (MATCHED not in vs) if o == MATCHED else (MATCHED in vs)

    def cpred(o, counts):
        i = 0
        return counts[:, i] == 0 if o == MATCHED else counts[:, i] >= 1

    return LclSpec("mm", "edge", (MATCHED, UNMATCHED), pred, cpred)


def edge_coloring_lcl(palette: int) -> LclSpec:
    def pred(o, vs):
        return o not in vs

    def cpred(o, counts):
        return counts[:, o - 1] == 0

    return LclSpec(f"edge-coloring[{palette}]", "edge", tuple(range(1, palette + 1)), pred, cpred)


# -- contentness / legality --


def neighbor_values(g: Graph, c: Configuration, x) -> list:
    """Output values of x's decided neighbors (for edges: in the line graph)."""
    if c.kind == "node":
        return [c.assignment[u] for u in g.neighbors(x) if c.assignment.get(u) is not None]
    u, v = x
    vals = []
    for a, b in ((u, v), (v, u)):
        for w in g.neighbors(a):
            if w == b:
                continue
            val = c.assignment.get(edge_id(a, w))
            if val is not None:
                vals.append(val)
    return vals


def is_content(lcl: LclSpec, g: Graph, c: Configuration, x) -> bool:
    """Whether the decided element x satisfies its predicate under c."""
    if lcl.kind != c.kind:
        raise KindMismatch(f"{lcl.kind} LCL vs {c.kind} configuration")
    o = c.assignment.get(x)
    if o is None:
        raise UndecidedElement(f"{x} is undecided")
    return lcl.check(o, neighbor_values(g, c, x))


def is_strong(lcl: LclSpec, g: Graph, c: Configuration) -> bool:
    """Every decided element is content."""
    return all(is_content(lcl, g, c, x) for x in c.decided())


def uncontent_elements(lcl: LclSpec, g: Graph, c: Configuration) -> list:
    return [x for x in c.decided() if not is_content(lcl, g, c, x)]


def is_legal(lcl: LclSpec, g: Graph, c: Configuration) -> bool:
    """Complete and every element content."""
    if lcl.kind != c.kind:
        raise KindMismatch(f"{lcl.kind} LCL vs {c.kind} configuration")
    domain = g.nodes() if c.kind == "node" else g.edges()
    for x in domain:
        if c.assignment.get(x) is None:
            return False
        if not is_content(lcl, g, c, x):
            return False
    return True


# -- bounded multiset universe (analysis machinery) --


class MultisetUniverse:
    """All multisets of size <= max_size over a q-letter alphabet.

    Rows of ``counts`` are multiplicity vectors; ``succ[s]`` maps row i to the
    row index of the vector with one more copy of letter s (-1 if the sum
    bound would be exceeded).
    """

    def __init__(self, q: int, max_size: int):
        self.q = q
        self.max_size = max_size
        self.counts = self._enumerate(q, max_size)
        self.sizes = self.counts.sum(axis=1)
        radix = max_size + 1
        powers = radix ** np.arange(q, dtype=np.int64)
        keys = self.counts.astype(np.int64) @ powers
        order = np.argsort(keys)
        self._sorted_keys = keys[order]
        self._order = order.astype(np.int64)
        self.succ = []
        room = self.sizes < max_size
        for s in range(q):
            pos = np.searchsorted(self._sorted_keys, keys + powers[s])
            pos[pos >= len(keys)] = 0
            idx = self._order[pos]
            idx = np.where(room, idx, -1).astype(np.int64)
            self.succ.append(idx)

    @staticmethod
    def _enumerate(q: int, budget: int) -> np.ndarray:
        if q == 1:
            return np.arange(budget + 1, dtype=np.int16).reshape(-1, 1)
        blocks = []
        for m in range(budget + 1):
            rest = MultisetUniverse._enumerate(q - 1, budget - m)
            first = np.full((len(rest), 1), m, dtype=np.int16)
            blocks.append(np.hstack([first, rest]))
        return np.vstack(blocks)

    def index_of(self, vec: np.ndarray) -> int:
        radix = self.max_size + 1
        powers = radix ** np.arange(self.q, dtype=np.int64)
        key = int(vec.astype(np.int64) @ powers)
        pos = int(np.searchsorted(self._sorted_keys, key))
        return int(self._order[pos])

    def sat_table(self, lcl: LclSpec, o) -> np.ndarray:
        if lcl.counts_predicate is not None:
            return np.asarray(lcl.counts_predicate(o, self.counts), dtype=bool)
        out = np.empty(len(self.counts), dtype=bool)
        for i, row in enumerate(self.counts):
            vals = []
            for s, cnt in zip(lcl.alphabet, row):
                vals.extend([s] * int(cnt))
            out[i] = lcl.predicate(o, tuple(vals))
        return out

    def minimal_sat(self, sat: np.ndarray) -> np.ndarray:
        """Indices of inclusion-minimal satisfying vectors."""
        has_sat_pred = np.zeros(len(sat), dtype=bool)
        for s in range(self.q):
            idx = self.succ[s]
            ok = idx >= 0
            np.logical_or.at(has_sat_pred, idx[ok & sat], True)
        return np.nonzero(sat & ~has_sat_pred)[0]


_universe_cache: dict[tuple[int, int], MultisetUniverse] = {}


def _universe(q: int, max_size: int) -> MultisetUniverse:
    key = (q, max_size)
    if key not in _universe_cache:
        if len(_universe_cache) > 2:
            _universe_cache.clear()
        _universe_cache[key] = MultisetUniverse(q, max_size)
    return _universe_cache[key]


def multiset_bound(lcl: LclSpec, delta: int) -> int:
    """Largest neighbor-multiset size reachable at host degree bound delta."""
    return delta if lcl.kind == "node" else max(1, 2 * delta - 2)


def _row_multiset(lcl: LclSpec, row: np.ndarray) -> Multiset:
    return Multiset({s: int(c) for s, c in zip(lcl.alphabet, row) if c})


def compute_cores(lcl: LclSpec, o, max_size: int) -> list[Multiset]:
    """Inclusion-minimal multisets of size <= max_size satisfying (o, .)."""
    if max_size < 0:
        raise ValueError("max_size must be >= 0")
    uni = _universe(len(lcl.alphabet), max_size)
    sat = uni.sat_table(lcl, o)
    rows = uni.counts[uni.minimal_sat(sat)]
    cores = [_row_multiset(lcl, r) for r in rows]
    return sorted(cores, key=lambda m: (m.size, m.values()))


@dataclass
class SupportiveDigraph:
    """Digraph on output values: an arc o -> o' when o' is in some core of o."""

    nodes: tuple
    arcs: set = field(default_factory=set)
    cores: dict = field(default_factory=dict)

    def successors(self, o) -> list:
        return sorted(o2 for (o1, o2) in self.arcs if o1 == o)


def build_supportive_digraph(lcl: LclSpec, delta: int) -> SupportiveDigraph:
    bound = multiset_bound(lcl, delta)
    cores = {o: compute_cores(lcl, o, bound) for o in lcl.alphabet}
    arcs = {(o, o2) for o in lcl.alphabet for m in cores[o] for o2, _ in m._items}
    return SupportiveDigraph(tuple(lcl.alphabet), arcs, cores)


def influence_number(d: SupportiveDigraph) -> int:
    """Length (arc count) of the longest directed path; CyclicError if cyclic."""
    depth: dict = {}
    visiting: set = set()

    def walk(o) -> int:
        if o in depth:
            return depth[o]
        if o in visiting:
            raise CyclicError(f"cycle through output value {o!r}")
        visiting.add(o)
        best = 0
        for o2 in d.successors(o):
            best = max(best, 1 + walk(o2))
        visiting.discard(o)
        depth[o] = best
        return best

    return max((walk(o) for o in d.nodes), default=0)


@dataclass
class CoverageResult:
    ok: bool
    counterexample: tuple | None = None  # (o, M, M', M'') with M,M'' sat, M' not


def check_core_coverage(lcl: LclSpec, delta: int) -> CoverageResult:
    """Check T(o) nonempty and subset-convex over all reachable multisets.

    Convexity is verified through its single-step form: a violation exists
    iff some non-satisfying M' contains a core and has a satisfying
    one-element extension.
    """
    bound = multiset_bound(lcl, delta)
    uni = _universe(len(lcl.alphabet), bound)
    for o in lcl.alphabet:
        sat = uni.sat_table(lcl, o)
        if not sat.any():
            return CoverageResult(False, (o, None, None, None))
        core_rows = uni.counts[uni.minimal_sat(sat)]
        contains_core = np.zeros(len(sat), dtype=bool)
        for row in core_rows:
            contains_core |= (uni.counts >= row).all(axis=1)
        has_sat_succ = np.zeros(len(sat), dtype=bool)
        for s in range(uni.q):
            idx = uni.succ[s]
            ok = idx >= 0
            has_sat_succ[ok] |= sat[idx[ok]]
        bad = (~sat) & contains_core & has_sat_succ
        if bad.any():
            i = int(np.nonzero(bad)[0][0])
            mid = uni.counts[i]
            core = next(r for r in core_rows if (mid >= r).all())
            top = None
            for s in range(uni.q):
                j = uni.succ[s][i]
                if j >= 0 and sat[j]:
                    top = uni.counts[j]
                    break
            return CoverageResult(
                False,
                (
                    o,
                    _row_multiset(lcl, core),
                    _row_multiset(lcl, mid),
                    _row_multiset(lcl, top),
                ),
            )
    return CoverageResult(True)


# -- locally separable potential functions --


@dataclass(frozen=True)
class PotentialSpec:
    """Coefficient family of a locally separable potential function."""

    name: str
    kind: str  # "node": sigma(M, M'); "edge": sigma(M)
    coefficient: Callable  # node: (values, values') -> int; edge: (values,) -> int
    top: int  # sigma_0

    def sigma(self, *multisets) -> int:
        return self.coefficient(*multisets)


def potential(p: PotentialSpec, g: Graph, c: Configuration) -> int:
    """Sum of coefficients over undecided-adjacent pairs (or undecided edges)."""
    if p.kind != c.kind:
        raise KindMismatch(f"{p.kind} potential vs {c.kind} configuration")
    total = 0
    if p.kind == "node":
        und = {v for v, val in c.assignment.items() if val is None}
        seen = set()
        vals = {}
        for v in und:
            vals[v] = tuple(neighbor_values(g, c, v))
        for v in und:
            for u in g.neighbors(v):
                if u in und:
                    e = edge_id(v, u)
                    if e not in seen:
                        seen.add(e)
                        total += p.coefficient(vals[v], vals[u])
    else:
        for e, val in c.assignment.items():
            if val is None:
                total += p.coefficient(tuple(neighbor_values(g, c, e)))
    return total


def builtin_potential(problem: str, c: int | None = None) -> PotentialSpec:
    """The per-problem potential coefficients."""
    if problem == "mis":
        return PotentialSpec(
            "mis", "node", lambda m1, m2: 1 if (IN in m1 or IN in m2) else 2, top=2
        )
    if problem == "coloring":
        return PotentialSpec("coloring", "node", lambda m1, m2: 1, top=1)
    if problem == "incremental-coloring":
        if c is None or c < 2:
            raise UnknownProblem("incremental-coloring needs c >= 2")

        def coeff(m1, m2, _c=c):
            low1 = sum(1 for v in m1 if v <= _c - 1)
            low2 = sum(1 for v in m2 if v <= _c - 1)
            return _c + max(0, _c - 1 - low1) + max(0, _c - 1 - low2)

        return PotentialSpec(f"incremental-coloring[{c}]", "node", coeff, top=3 * c - 2)
    if problem == "mm":
        return PotentialSpec(
            "mm", "edge", lambda m: 1 if MATCHED in m else 2, top=2
        )
    if problem == "edge-coloring":
        return PotentialSpec("edge-coloring", "edge", lambda m: 1, top=1)
    raise UnknownProblem(problem)


# -- eligibility report --


@dataclass
class EligibilityReport:
    problem: str
    delta: int
    kind: str
    alphabet: tuple
    core_coverage_ok: bool
    influence_number: int | str  # int or "cyclic"
    cores: dict  # output -> list of sorted multiplicity vectors
    digraph_arcs: list
    probe: dict | None = None  # statistical probe results, filled by the harness

    def to_jsonable(self) -> dict:
        return {
            "problem": self.problem,
            "delta": self.delta,
            "kind": self.kind,
            "alphabet": list(self.alphabet),
            "core_coverage_ok": self.core_coverage_ok,
            "influence_number": self.influence_number,
            "cores": {str(o): vecs for o, vecs in self.cores.items()},
            "digraph_arcs": [[str(a), str(b)] for a, b in self.digraph_arcs],
            "probe": self.probe,
        }


def analyze_lcl(lcl: LclSpec, delta: int, problem: str = "") -> EligibilityReport:
    """Mechanical eligibility checks: coverage, cores, influence number."""
    cov = check_core_coverage(lcl, delta)
    dg = build_supportive_digraph(lcl, delta)
    try:
        nu: int | str = influence_number(dg)
    except CyclicError:
        nu = "cyclic"
    cores_json = {
        o: [[m.count(s) for s in lcl.alphabet] for m in ms] for o, ms in dg.cores.items()
    }
    return EligibilityReport(
        problem=problem or lcl.name,
        delta=delta,
        kind=lcl.kind,
        alphabet=lcl.alphabet,
        core_coverage_ok=cov.ok,
        influence_number=nu,
        cores=cores_json,
        digraph_arcs=sorted(dg.arcs),
    )
