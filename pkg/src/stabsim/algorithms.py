"""Fault-free phase procedures and detection procedures for the builtin
problems, plus a direct executor that runs one synchronized phase on a
configuration (the reference semantics used by the probes and the tests).

A phase procedure is written against an opaque port-id space: the transformer
supplies real port indices, the graph simulations supply structured keys.
Working steps of node problems see only the synchronized neighbors, their
payloads, the degree within that subgraph, the global degree bound, and the
node's own coins; decided-neighbor outputs become visible at the decision
step only.
"""

from __future__ import annotations

import random
from typing import Iterable

from .graph import Configuration, Graph, edge_id
from .lcl import (
    IN,
    MATCHED,
    OUT,
    UNMATCHED,
    LclSpec,
    PaletteTooSmall,
    coloring_lcl,
    edge_coloring_lcl,
    incremental_coloring_lcl,
    mis_lcl,
    mm_lcl,
)


class InvalidPhaseStructure(ValueError):
    pass


class PhaseCtx:
    """Per-step view handed to phase procedures."""

    __slots__ = ("sync_ports", "regs", "rng", "delta", "_inbox", "_out", "_decided", "_own")

    def __init__(self, sync_ports, inbox, regs, rng, delta, own_values=None, decided=None):
        self.sync_ports = sync_ports
        self.regs = regs
        self.rng = rng
        self.delta = delta
        self._inbox = inbox
        self._out = {}
        self._decided = decided
        self._own = own_values

    def payload(self, port):
        return self._inbox.get(port)

    def send(self, port, payload) -> None:
        self._out[port] = payload

    @property
    def decided_values(self) -> tuple:
        # decided-neighbor outputs; only the decision step gets them
        if self._decided is None:
            raise RuntimeError("decided-neighbor outputs are not visible in the working stage")
        return self._decided

    @property
    def own_values(self) -> tuple:
        # own per-port output registers; edge problems only
        if self._own is None:
            raise RuntimeError("own port registers are not available here")
        return self._own


class NodePhaseProcedure:
    """Base class; subclasses set phi and implement the steps."""

    phi: int = 0
    kind = "node"

    def init_regs(self, rng: random.Random) -> dict:
        return {}

    def working_step(self, j: int, ctx: PhaseCtx) -> None:
        raise NotImplementedError

    def decision_step(self, ctx: PhaseCtx):
        raise NotImplementedError

    def corrupt_regs(self, rng: random.Random, degree: int) -> dict:
        return {}

    def random_payload(self, rng: random.Random):
        return None


class EdgePhaseProcedure(NodePhaseProcedure):
    kind = "edge"

    def decision_step(self, ctx: PhaseCtx) -> dict:
        """Return {port: value} commitments."""
        raise NotImplementedError


def validate_phase(phase: NodePhaseProcedure) -> None:
    """Construction-time probing of the announcement/decision constraints."""
    if phase.phi < 2:
        raise InvalidPhaseStructure(f"phase length must be >= 2, got {phase.phi}")
    for name in ("init_regs", "working_step", "decision_step"):
        if not callable(getattr(phase, name, None)):
            raise InvalidPhaseStructure(f"phase procedure lacks {name}")


# -- maximal independent set (phase length 3) --


class MisPhase(NodePhaseProcedure):
    phi = 3

    def working_step(self, j, ctx):
        d = len(ctx.sync_ports)
        # an isolated node in the working subgraph marks itself for sure
        marked = d == 0 or ctx.rng.random() < 1.0 / d
        ctx.regs["marked"] = marked
        ctx.regs["deg"] = d
        for p in ctx.sync_ports:
            ctx.send(p, (marked, d))

    def decision_step(self, ctx):
        if IN in ctx.decided_values:
            return OUT
        if not ctx.regs.get("marked"):
            return None
        d = ctx.regs.get("deg", 0)
        for p in ctx.sync_ports:
            m = ctx.payload(p)
            if isinstance(m, tuple) and len(m) == 2 and m[0] and d <= m[1]:
                return None
        return IN

    def corrupt_regs(self, rng, degree):
        return {"marked": bool(rng.getrandbits(1)), "deg": rng.randrange(degree + 1)}

    def random_payload(self, rng):
        return (bool(rng.getrandbits(1)), rng.randrange(8))


# -- node coloring with palette > delta (phase length 3) --


class ColoringPhase(NodePhaseProcedure):
    phi = 3

    def __init__(self, palette: int):
        self.palette = palette

    def working_step(self, j, ctx):
        prop = ctx.rng.randrange(self.palette) + 1
        ctx.regs["prop"] = prop
        for p in ctx.sync_ports:
            ctx.send(p, prop)

    def decision_step(self, ctx):
        taken = set(ctx.decided_values)
        if not ctx.sync_ports:
            # no synchronized undecided neighbors: lowest free color always
            # exists because the palette exceeds the degree bound
            for color in range(1, self.palette + 1):
                if color not in taken:
                    return color
            return None
        prop = ctx.regs.get("prop")
        if prop is None or prop in taken:
            return None
        for p in ctx.sync_ports:
            if ctx.payload(p) == prop:
                return None
        return prop

    def corrupt_regs(self, rng, degree):
        return {"prop": rng.randrange(self.palette) + 1}

    def random_payload(self, rng):
        return rng.randrange(self.palette) + 1


# -- incremental node c-coloring (phase length 3) --


class IncrementalColoringPhase(NodePhaseProcedure):
    phi = 3

    def __init__(self, c: int):
        self.c = c

    def working_step(self, j, ctx):
        d = len(ctx.sync_ports)
        marked = d == 0 or ctx.rng.random() < 1.0 / d
        ctx.regs["marked"] = marked
        ctx.regs["deg"] = d
        for p in ctx.sync_ports:
            ctx.send(p, (marked, d))

    def decision_step(self, ctx):
        c = self.c
        vals = ctx.decided_values
        if sum(1 for v in vals if v <= c - 1) >= c - 1:
            return c
        if not ctx.regs.get("marked"):
            return None
        d = ctx.regs.get("deg", 0)
        for p in ctx.sync_ports:
            m = ctx.payload(p)
            if isinstance(m, tuple) and len(m) == 2 and m[0] and d <= m[1]:
                return None
        for i in range(1, c):
            if i not in vals and sum(1 for v in vals if v <= i - 1) >= i - 1:
                return i
        return None

    def corrupt_regs(self, rng, degree):
        return {"marked": bool(rng.getrandbits(1)), "deg": rng.randrange(degree + 1)}

    def random_payload(self, rng):
        return (bool(rng.getrandbits(1)), rng.randrange(8))


# -- maximal matching (edge problem, phase length 4) --


class MmPhase(EdgePhaseProcedure):
    phi = 4

    def working_step(self, j, ctx):
        if j == 1:
            active = bool(ctx.rng.getrandbits(1))
            ctx.regs["active"] = active
            if active and ctx.sync_ports:
                tgt = ctx.sync_ports[ctx.rng.randrange(len(ctx.sync_ports))]
                hint = MATCHED in ctx.own_values
                ctx.regs["req_port"] = tgt
                ctx.regs["sent_hint"] = hint
                ctx.send(tgt, ("req", hint))
        elif j == 2:
            if ctx.regs.get("active") is False:
                reqs = []
                for p in ctx.sync_ports:
                    m = ctx.payload(p)
                    if isinstance(m, tuple) and len(m) == 2 and m[0] == "req":
                        reqs.append((p, m[1]))
                if reqs:
                    p, their_hint = min(reqs)  # lowest requesting port
                    hint = MATCHED in ctx.own_values
                    ctx.regs["accept_port"] = p
                    ctx.regs["their_hint"] = their_hint
                    ctx.regs["sent_hint"] = hint
                    ctx.send(p, ("acc", hint))

    def decision_step(self, ctx):
        if "active" not in ctx.regs:
            return {}
        if ctx.regs["active"]:
            p = ctx.regs.get("req_port")
            if p is None or p not in ctx.sync_ports:
                return {}
            m = ctx.payload(p)
            if not (isinstance(m, tuple) and len(m) == 2 and m[0] == "acc"):
                return {}
            clean = not m[1] and not ctx.regs.get("sent_hint", True)
        else:
            p = ctx.regs.get("accept_port")
            if p is None or p not in ctx.sync_ports:
                return {}
            clean = not ctx.regs.get("their_hint", True) and not ctx.regs.get("sent_hint", True)
        return {p: MATCHED if clean else UNMATCHED}

    def corrupt_regs(self, rng, degree):
        regs = {"active": bool(rng.getrandbits(1))}
        if degree:
            regs["req_port"] = rng.randrange(degree)
            regs["accept_port"] = rng.randrange(degree)
        regs["sent_hint"] = bool(rng.getrandbits(1))
        regs["their_hint"] = bool(rng.getrandbits(1))
        return regs

    def random_payload(self, rng):
        return (rng.choice(["req", "acc"]), bool(rng.getrandbits(1)))


# -- edge coloring with palette > 2*delta (phase length 5) --


class EdgeColoringPhase(EdgePhaseProcedure):
    phi = 5

    def __init__(self, palette: int):
        self.palette = palette

    def working_step(self, j, ctx):
        if j == 1:
            props = {}
            for p in ctx.sync_ports:
                col = ctx.rng.randrange(self.palette) + 1
                props[p] = col
                ctx.send(p, col)
            ctx.regs["props"] = props
        elif j == 2:
            props = ctx.regs.get("props", {})
            cands = {}
            for p in ctx.sync_ports:
                mine = props.get(p)
                theirs = ctx.payload(p)
                if mine is None or not isinstance(theirs, int):
                    continue
                cands[p] = 1 + ((mine + theirs) % self.palette)
            ctx.regs["cands"] = cands
        elif j == 3:
            cands = ctx.regs.get("cands", {})
            taken = {v for v in ctx.own_values if v is not None}
            accepts = {}
            for p in ctx.sync_ports:
                cand = cands.get(p)
                if cand is None:
                    continue
                ok = cand not in taken and all(
                    cand != c2 for q, c2 in cands.items() if q != p
                )
                accepts[p] = ok
                ctx.send(p, "acc" if ok else "dec")
            ctx.regs["accepts"] = accepts

    def decision_step(self, ctx):
        cands = ctx.regs.get("cands", {})
        accepts = ctx.regs.get("accepts", {})
        commits = {}
        for p in ctx.sync_ports:
            cand = cands.get(p)
            if cand is not None and accepts.get(p) and ctx.payload(p) == "acc":
                commits[p] = cand
        return commits

    def corrupt_regs(self, rng, degree):
        ports = range(degree)
        return {
            "props": {p: rng.randrange(self.palette) + 1 for p in ports if rng.getrandbits(1)},
            "cands": {p: rng.randrange(self.palette) + 1 for p in ports if rng.getrandbits(1)},
            "accepts": {p: bool(rng.getrandbits(1)) for p in ports if rng.getrandbits(1)},
        }

    def random_payload(self, rng):
        return rng.choice(["acc", "dec", rng.randrange(self.palette) + 1])


# -- detection procedures --


class NodeDetect:
    """Generic node detection: every node shares its output register."""

    def __init__(self, lcl: LclSpec):
        self.lcl = lcl

    def build(self, out, degree: int) -> list:
        return [out] * degree

    def verdict(self, out, fields: list) -> bool:
        if out is None:
            return True
        return self.lcl.check(out, tuple(f for f in fields if f is not None))

    def random_field(self, rng: random.Random):
        return rng.choice(self.lcl.alphabet + (None,))


class EdgeDetectBase:
    def build(self, outs: list) -> list:
        raise NotImplementedError

    def verdicts(self, outs: list, fields: list) -> list:
        raise NotImplementedError

    def random_field(self, rng: random.Random):
        raise NotImplementedError


class MmDetect(EdgeDetectBase):
    """Constant-size matching detection: output plus a has-matched-port flag."""

    def build(self, outs):
        return [
            (outs[p], any(outs[q] == MATCHED for q in range(len(outs)) if q != p))
            for p in range(len(outs))
        ]

    def verdicts(self, outs, fields):
        out = []
        for p in range(len(outs)):
            f = fields[p]
            if f is None:
                out.append(True)
                continue
            their_out, their_flag = f
            if their_out != outs[p]:
                out.append(False)  # port-inconsistent
                continue
            if outs[p] is None:
                out.append(True)
                continue
            own_flag = any(outs[q] == MATCHED for q in range(len(outs)) if q != p)
            if outs[p] == MATCHED:
                out.append(not (their_flag or own_flag))
            else:
                out.append(their_flag or own_flag)
        return out

    def random_field(self, rng):
        return (rng.choice((MATCHED, UNMATCHED, None)), bool(rng.getrandbits(1)))


class EdgeColoringDetect(EdgeDetectBase):
    """Output plus a local-duplicate flag per port."""

    def __init__(self, palette: int):
        self.palette = palette

    def build(self, outs):
        return [
            (
                outs[p],
                outs[p] is not None
                and any(outs[q] == outs[p] for q in range(len(outs)) if q != p),
            )
            for p in range(len(outs))
        ]

    def verdicts(self, outs, fields):
        res = []
        for p in range(len(outs)):
            f = fields[p]
            if f is None:
                res.append(True)
                continue
            their_out, their_dup = f
            if their_out != outs[p]:
                res.append(False)
                continue
            if outs[p] is None:
                res.append(True)
                continue
            own_dup = any(outs[q] == outs[p] for q in range(len(outs)) if q != p)
            res.append(not (their_dup or own_dup))
        return res

    def random_field(self, rng):
        return (
            rng.choice(tuple(range(1, self.palette + 1)) + (None,)),
            bool(rng.getrandbits(1)),
        )


class GenericEdgeDetect(EdgeDetectBase):
    """Each node relays its full decided port multiset (size O(delta))."""

    def __init__(self, lcl: LclSpec):
        self.lcl = lcl

    def build(self, outs):
        return [
            (
                outs[p],
                tuple(sorted(outs[q] for q in range(len(outs)) if q != p and outs[q] is not None)),
            )
            for p in range(len(outs))
        ]

    def verdicts(self, outs, fields):
        res = []
        for p in range(len(outs)):
            f = fields[p]
            if f is None:
                res.append(True)
                continue
            their_out, their_vals = f
            if their_out != outs[p]:
                res.append(False)
                continue
            if outs[p] is None:
                res.append(True)
                continue
            own = tuple(outs[q] for q in range(len(outs)) if q != p and outs[q] is not None)
            res.append(self.lcl.check(outs[p], own + tuple(their_vals)))
        return res

    def random_field(self, rng):
        vals = self.lcl.alphabet
        k = rng.randrange(3)
        return (rng.choice(vals + (None,)), tuple(rng.choice(vals) for _ in range(k)))


# -- ingredient factories (paper parameters) --


def mis_ingredients() -> tuple[MisPhase, NodeDetect]:
    return MisPhase(), NodeDetect(mis_lcl())


def coloring_ingredients(palette_size: int, delta: int) -> tuple[ColoringPhase, NodeDetect]:
    if palette_size < delta + 1:
        raise PaletteTooSmall(f"need palette > delta, got {palette_size} <= {delta}")
    return ColoringPhase(palette_size), NodeDetect(coloring_lcl(palette_size))


def incremental_coloring_ingredients(c: int, delta: int) -> tuple[IncrementalColoringPhase, NodeDetect]:
    if not 2 <= c <= delta + 2:
        raise ValueError(f"need 2 <= c <= delta + 2, got c={c}")
    return IncrementalColoringPhase(c), NodeDetect(incremental_coloring_lcl(c))


def mm_ingredients() -> tuple[MmPhase, MmDetect]:
    return MmPhase(), MmDetect()


def edge_coloring_ingredients(palette_size: int, delta: int) -> tuple[EdgeColoringPhase, EdgeColoringDetect]:
    if palette_size < 2 * delta + 1:
        raise PaletteTooSmall(f"need palette > 2*delta, got {palette_size} <= {2 * delta}")
    return EdgeColoringPhase(palette_size), EdgeColoringDetect(palette_size)


# -- direct fault-free execution of one synchronized phase --


def run_node_phase(
    phase: NodePhaseProcedure,
    g: Graph,
    c: Configuration,
    stream_of,
    deleted: Iterable = (),
) -> Configuration:
    """One invocation of the phase on the undecided subgraph minus ``deleted``.

    All undecided surviving nodes are synchronized; decided nodes only
    announce.  ``stream_of(v)`` supplies the per-node rng.
    """
    dead = set(deleted)
    live = [v for v in c.undecided() if v not in dead]
    hset = set(live)
    ports = {
        v: tuple(p for p, u in enumerate(g.neighbors(v)) if u in hset) for v in live
    }
    decided = {
        v: tuple(
            c.assignment[u] for u in g.neighbors(v) if c.assignment.get(u) is not None
        )
        for v in live
    }
    rngs = {v: stream_of(v) for v in live}
    regs = {v: phase.init_regs(rngs[v]) for v in live}
    inbox: dict = {v: {} for v in live}
    decisions: dict = {}
    for j in range(1, phase.phi):
        outpay: dict = {}
        for v in live:
            at_decision = j == phase.phi - 1
            ctx = PhaseCtx(
                ports[v], inbox[v], regs[v], rngs[v], g.delta,
                decided=decided[v] if at_decision else None,
            )
            if at_decision:
                val = phase.decision_step(ctx)
                if val is not None:
                    decisions[v] = val
            else:
                phase.working_step(j, ctx)
            outpay[v] = ctx._out
        inbox = {v: {} for v in live}
        for v in live:
            for p, payload in outpay[v].items():
                u = g.neighbors(v)[p]
                inbox[u][g.port_of(u, v)] = payload
    new = dict(c.assignment)
    new.update(decisions)
    return Configuration("node", new)


def run_edge_phase(
    phase: EdgePhaseProcedure,
    g: Graph,
    c: Configuration,
    stream_of,
    deleted: Iterable = (),
) -> Configuration:
    """One synchronized invocation for an edge problem; ``deleted`` removes
    undecided edges from the working subgraph."""
    dead = {edge_id(*e) for e in deleted}
    live_edges = {e for e in c.undecided() if e not in dead}
    employed = sorted({v for e in live_edges for v in e})
    ports = {
        v: tuple(
            p for p, u in enumerate(g.neighbors(v)) if edge_id(v, u) in live_edges
        )
        for v in employed
    }
    own = {
        v: tuple(c.assignment.get(edge_id(v, u)) for u in g.neighbors(v))
        for v in employed
    }
    rngs = {v: stream_of(v) for v in employed}
    regs = {v: phase.init_regs(rngs[v]) for v in employed}
    inbox: dict = {v: {} for v in employed}
    commits: dict = {}
    for j in range(1, phase.phi):
        outpay: dict = {}
        for v in employed:
            ctx = PhaseCtx(
                ports[v], inbox[v], regs[v], rngs[v], g.delta, own_values=own[v]
            )
            if j == phase.phi - 1:
                for p, val in phase.decision_step(ctx).items():
                    commits.setdefault(edge_id(v, g.neighbors(v)[p]), []).append(val)
            else:
                phase.working_step(j, ctx)
            outpay[v] = ctx._out
        inbox = {v: {} for v in employed}
        for v in employed:
            for p, payload in outpay[v].items():
                u = g.neighbors(v)[p]
                inbox[u][g.port_of(u, v)] = payload
    new = dict(c.assignment)
    for e, vals in commits.items():
        # both endpoints follow symmetric rules and must agree
        assert len(vals) == 2 and vals[0] == vals[1], f"asymmetric commit on {e}: {vals}"
        new[e] = vals[0]
    return Configuration("edge", new)
