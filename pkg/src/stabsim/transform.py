"""Self-stabilizing transformers for node and edge problems.

Every round a node handles, in order: wait-flag release when its step counter
sits at HOLD, detection (resetting uncontent outputs), the announcement /
working / decision step of the simulated phase keyed on the step counter, and
finally the step-counter advance.  Messages carry the (detect, phase, pps)
triple; the phase field holds NIL, an announced-bottom marker, a decided
output, or a working payload.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .algorithms import (
    EdgePhaseProcedure,
    NodePhaseProcedure,
    PhaseCtx,
    run_edge_phase,
    run_node_phase,
    validate_phase,
)
from .graph import Configuration, Graph, edge_id, random_bounded_graph
from .lcl import LclSpec, PotentialSpec, is_content, is_legal, is_strong, potential
from .pps import HOLD, advance_step, random_step


class _Bot:
    __slots__ = ()

    def __repr__(self):
        return "BOT"


BOT = _Bot()  # the announced-while-undecided marker on the phase field
NIL = None


@dataclass(frozen=True)
class IngredientSet:
    """A fault-free algorithm packaged for transformation."""

    name: str
    kind: str  # "node" | "edge"
    phase: NodePhaseProcedure
    detect: object
    lcl: LclSpec
    potential_spec: PotentialSpec
    nu: int


class TransformedAlgorithm:
    """Common surface the engine drives; subclasses do the per-round work."""

    kind: str
    name: str
    phi_effective: int
    nu: int
    lcl: LclSpec

    @property
    def radius(self) -> int:
        return self.nu + self.phi_effective + 1

    @property
    def ts_offset(self) -> int:
        return self.nu + self.phi_effective + (2 if self.kind == "node" else 3)

    @property
    def confirm_window(self) -> int:
        return 2 * self.phi_effective + 2

    def make_state(self, net, v):
        raise NotImplementedError

    def step(self, state, inbox, degree, delta):
        raise NotImplementedError

    def output_snapshot(self, state):
        raise NotImplementedError

    def extract_config(self, net) -> Configuration:
        raise NotImplementedError

    def legal(self, net) -> bool:
        raise NotImplementedError

    def monitor(self, net):
        """(graph, node-configuration, lcl, potential_spec) used for the
        strength/potential invariants; for reductions this is the simulated
        system, not the derived one."""
        raise NotImplementedError

    def corrupt_state(self, state, rng, degree):
        raise NotImplementedError

    def random_message(self, rng, degree):
        raise NotImplementedError

    def changed_elements(self, v, before, after, neighbors) -> list:
        """Element-level diff of two output snapshots of node v."""
        raise NotImplementedError

    def remap_ports(self, net, v, state, mapping) -> None:
        """Resize per-port registers after a topology change; ``mapping``
        gives, for each new port, the old port index or None (fresh)."""
        raise NotImplementedError


class _NodeState:
    __slots__ = ("rng", "out", "step", "wait", "regs", "sync", "write_reason")

    def __init__(self, rng):
        self.rng = rng
        self.out = None
        self.step = HOLD
        self.wait = False
        self.regs: dict = {}
        self.sync: tuple = ()
        self.write_reason = None


def node_core_step(phase, detect, phi, state, inbox, degree, delta):
    """One Algorithm-1 round for a single (possibly simulated) node.

    ``inbox`` holds per-port (detect, phase, pps) triples or None; returns
    the per-port outbound triples.  Mutates the state registers and sets
    state.write_reason when the output register changed.
    """
    phase_out = [NIL] * degree
    s = state.step
    state.write_reason = None
    if s is HOLD:
        state.wait = False
    if state.out is not None:
        fields = [m[0] if m is not None else None for m in inbox]
        if not detect.verdict(state.out, fields):
            state.out = None
            state.wait = True
            state.write_reason = "reset"
        else:
            for p in range(degree):
                phase_out[p] = state.out
    elif not state.wait and s is not HOLD:
        if s == 0:
            state.regs = phase.init_regs(state.rng)
            state.sync = ()
            for p in range(degree):
                phase_out[p] = BOT
        else:
            if s == 1:
                state.sync = tuple(
                    p
                    for p in range(degree)
                    if inbox[p] is not None
                    and inbox[p][2] == 0
                    and inbox[p][1] is BOT
                )
            payloads = {
                p: inbox[p][1]
                for p in state.sync
                if p < degree and inbox[p] is not None and inbox[p][1] is not NIL
            }
            if s == phi - 1:
                decided = tuple(
                    m[0] for m in inbox if m is not None and m[0] is not None
                )
                ctx = PhaseCtx(
                    state.sync, payloads, state.regs, state.rng, delta,
                    decided=decided,
                )
                val = phase.decision_step(ctx)
                if val is not None:
                    state.out = val
                    state.write_reason = "decision"
            else:
                ctx = PhaseCtx(state.sync, payloads, state.regs, state.rng, delta)
                phase.working_step(s, ctx)
                for p, payload in ctx._out.items():
                    if isinstance(p, int) and 0 <= p < degree:
                        phase_out[p] = payload
    det = detect.build(state.out, degree)
    msgs = [(det[p], phase_out[p], s) for p in range(degree)]
    state.step = advance_step(s, phi, state.rng)
    return msgs


class NodeTransformed(TransformedAlgorithm):
    """Algorithm-1 composition of Detect, Phase and the step counter."""

    kind = "node"

    def __init__(self, ing: IngredientSet):
        validate_phase(ing.phase)
        if ing.kind != "node":
            raise ValueError("node transformer needs node ingredients")
        self.name = ing.name
        self.phase = ing.phase
        self.detect = ing.detect
        self.lcl = ing.lcl
        self.potential_spec = ing.potential_spec
        self.nu = ing.nu
        self.phi = ing.phase.phi
        self.phi_effective = ing.phase.phi

    def make_state(self, net, v):
        return _NodeState(net.stream(f"n{v}"))

    def step(self, state, inbox, degree, delta):
        return node_core_step(
            self.phase, self.detect, self.phi, state, inbox, degree, delta
        )

    def output_snapshot(self, state):
        return state.out

    def extract_config(self, net) -> Configuration:
        return Configuration(
            "node", {v: net.states[v].out for v in net.graph.nodes()}
        )

    def legal(self, net) -> bool:
        return is_legal(self.lcl, net.graph, self.extract_config(net))

    def monitor(self, net):
        return net.graph, self.extract_config(net), self.lcl, self.potential_spec

    def corrupt_state(self, state, rng, degree):
        state.out = rng.choice(self.lcl.alphabet + (None,))
        state.step = random_step(self.phi, rng)
        state.wait = bool(rng.getrandbits(1))
        state.regs = self.phase.corrupt_regs(rng, degree)
        state.sync = tuple(p for p in range(degree) if rng.getrandbits(1))

    def random_message(self, rng, degree):
        kind = rng.randrange(4)
        if kind == 0:
            phase_field = NIL
        elif kind == 1:
            phase_field = BOT
        elif kind == 2:
            phase_field = rng.choice(self.lcl.alphabet)
        else:
            phase_field = self.phase.random_payload(rng)
        return (self.detect.random_field(rng), phase_field, random_step(self.phi, rng))

    def changed_elements(self, v, before, after, neighbors):
        return [(v, before, after)]

    def remap_ports(self, net, v, state, mapping):
        state.sync = ()  # port identities shifted; the running phase is void

    def load_config(self, net, cfg) -> None:
        """Install a configuration as a quiescent global state (held step
        counters, settled inboxes), e.g. an algorithm-computed legal one."""
        g = net.graph
        for v in g.nodes():
            st = net.states[v]
            st.out = cfg.assignment.get(v)
            st.step = HOLD
            st.wait = False
            st.regs = {}
            st.sync = ()
        for v in g.nodes():
            net.inboxes[v] = [
                (cfg.assignment.get(u), cfg.assignment.get(u), HOLD)
                for u in g.neighbors(v)
            ]
        net.cache.clear()
        net.touch()


class _EdgeState:
    __slots__ = ("rng", "outs", "step", "waits", "regs", "sync", "work", "write_reason")

    def __init__(self, rng, degree):
        self.rng = rng
        self.outs = [None] * degree
        self.step = HOLD
        self.waits = [False] * degree
        self.regs: dict = {}
        self.sync: tuple = ()
        self.work: tuple = ()
        self.write_reason = None


class EdgeTransformed(TransformedAlgorithm):
    """Algorithm-2 composition for edge problems: per-port outputs and wait
    flags, one step counter per node."""

    kind = "edge"

    def __init__(self, ing: IngredientSet):
        validate_phase(ing.phase)
        if ing.kind != "edge":
            raise ValueError("edge transformer needs edge ingredients")
        self.name = ing.name
        self.phase = ing.phase
        self.detect = ing.detect
        self.lcl = ing.lcl
        self.potential_spec = ing.potential_spec
        self.nu = ing.nu
        self.phi = ing.phase.phi
        self.phi_effective = ing.phase.phi

    def make_state(self, net, v):
        return _EdgeState(net.stream(f"n{v}"), net.graph.degree(v))

    def step(self, state, inbox, degree, delta):
        phase_out = [NIL] * degree
        s = state.step
        state.write_reason = None
        if s is HOLD:
            state.waits = [False] * degree
        fields = [m[0] if m is not None else None for m in inbox]
        verdicts = self.detect.verdicts(state.outs, fields)
        for p in range(degree):
            if not verdicts[p]:
                if state.outs[p] is not None:
                    state.outs[p] = None
                    state.write_reason = "reset"
                state.waits[p] = True
        if s is not HOLD:
            if s == 0:
                state.sync = ()
                state.work = tuple(
                    p
                    for p in range(degree)
                    if state.outs[p] is None and not state.waits[p]
                )
                if state.work:  # only employed nodes take part in the phase
                    state.regs = self.phase.init_regs(state.rng)
                for p in state.work:
                    phase_out[p] = BOT
            elif state.work:
                if s == 1:
                    state.sync = tuple(
                        p
                        for p in state.work
                        if p < degree
                        and inbox[p] is not None
                        and inbox[p][2] == 0
                        and inbox[p][1] is BOT
                    )
                payloads = {
                    p: inbox[p][1]
                    for p in state.sync
                    if p < degree and inbox[p] is not None and inbox[p][1] is not NIL
                }
                ctx = PhaseCtx(
                    state.sync, payloads, state.regs, state.rng, delta,
                    own_values=tuple(state.outs),
                )
                if s == self.phi - 1:
                    for p, val in self.phase.decision_step(ctx).items():
                        if (
                            isinstance(p, int)
                            and 0 <= p < degree
                            and p in state.sync
                            and state.outs[p] is None
                        ):
                            state.outs[p] = val
                            state.write_reason = "decision"
                else:
                    self.phase.working_step(s, ctx)
                    for p, payload in ctx._out.items():
                        if isinstance(p, int) and 0 <= p < degree:
                            phase_out[p] = payload
        det = self.detect.build(state.outs)
        msgs = [(det[p], phase_out[p], s) for p in range(degree)]
        state.step = advance_step(s, self.phi, state.rng)
        return msgs

    def output_snapshot(self, state):
        return tuple(state.outs)

    def extract_config(self, net) -> Configuration:
        g = net.graph
        assign = {}
        for u, v in g.edges():
            a = net.states[u].outs[g.port_of(u, v)]
            b = net.states[v].outs[g.port_of(v, u)]
            assign[(u, v)] = a if a == b else None
        return Configuration("edge", assign)

    def legal(self, net) -> bool:
        return is_legal(self.lcl, net.graph, self.extract_config(net))

    def monitor(self, net):
        return net.graph, self.extract_config(net), self.lcl, self.potential_spec

    def corrupt_state(self, state, rng, degree):
        state.outs = [rng.choice(self.lcl.alphabet + (None,)) for _ in range(degree)]
        state.step = random_step(self.phi, rng)
        state.waits = [bool(rng.getrandbits(1)) for _ in range(degree)]
        state.regs = self.phase.corrupt_regs(rng, degree)
        state.sync = tuple(p for p in range(degree) if rng.getrandbits(1))
        state.work = tuple(p for p in range(degree) if rng.getrandbits(1))

    def random_message(self, rng, degree):
        kind = rng.randrange(4)
        if kind == 0:
            phase_field = NIL
        elif kind == 1:
            phase_field = BOT
        elif kind == 2:
            phase_field = rng.choice(self.lcl.alphabet)
        else:
            phase_field = self.phase.random_payload(rng)
        return (self.detect.random_field(rng), phase_field, random_step(self.phi, rng))

    def changed_elements(self, v, before, after, neighbors):
        out = []
        for p, u in enumerate(neighbors):
            old = before[p] if p < len(before) else None
            new = after[p] if p < len(after) else None
            if old != new:
                out.append((edge_id(v, u), old, new))
        return out

    def remap_ports(self, net, v, state, mapping):
        state.outs = [
            state.outs[m] if m is not None and m < len(state.outs) else None
            for m in mapping
        ]
        state.waits = [
            state.waits[m] if m is not None and m < len(state.waits) else False
            for m in mapping
        ]
        state.sync = ()
        state.work = ()

    def load_config(self, net, cfg) -> None:
        g = net.graph
        for v in g.nodes():
            st = net.states[v]
            st.outs = [cfg.assignment.get(edge_id(v, u)) for u in g.neighbors(v)]
            st.step = HOLD
            st.waits = [False] * g.degree(v)
            st.regs = {}
            st.sync = ()
            st.work = ()
        for v in g.nodes():
            inbox = []
            for u in g.neighbors(v):
                u_outs = [cfg.assignment.get(edge_id(u, w)) for w in g.neighbors(u)]
                det = self.detect.build(u_outs)[g.port_of(u, v)]
                inbox.append((det, NIL, HOLD))
            net.inboxes[v] = inbox
        net.cache.clear()
        net.touch()


def transform_node_lcl(phase, detect, lcl, potential_spec, nu, name="") -> NodeTransformed:
    ing = IngredientSet(name or lcl.name, "node", phase, detect, lcl, potential_spec, nu)
    return NodeTransformed(ing)


def transform_edge_lcl(phase, detect, lcl, potential_spec, nu, name="") -> EdgeTransformed:
    ing = IngredientSet(name or lcl.name, "edge", phase, detect, lcl, potential_spec, nu)
    return EdgeTransformed(ing)


# -- statistical eligibility probe --


@dataclass
class ProbeReport:
    trials: int
    respectful_violations: int
    pi_zero_cases: int
    pi_zero_complete: int
    beta_hat: float | None
    beta_ci99: tuple | None
    violations_detail: list = field(default_factory=list)

    def to_jsonable(self) -> dict:
        return {
            "trials": self.trials,
            "respectful_violations": self.respectful_violations,
            "pi_zero_cases": self.pi_zero_cases,
            "pi_zero_complete": self.pi_zero_complete,
            "beta_hat": self.beta_hat,
            "beta_ci99": list(self.beta_ci99) if self.beta_ci99 else None,
        }


def _random_strong_config(ing: IngredientSet, g: Graph, rng: random.Random) -> Configuration:
    """Sample a strongly configured graph: either by rejection over random
    partial assignments or by running fault-free phases from the empty
    configuration (always reachable, hence always strong)."""
    domain = g.nodes() if ing.kind == "node" else g.edges()
    runner = run_node_phase if ing.kind == "node" else run_edge_phase
    if rng.getrandbits(1):
        for _ in range(40):
            assign = {
                x: rng.choice(ing.lcl.alphabet) if rng.random() < 0.45 else None
                for x in domain
            }
            c = Configuration(ing.kind, assign)
            if is_strong(ing.lcl, g, c):
                return c
    c = Configuration(ing.kind, {x: None for x in domain})
    for _ in range(rng.randrange(4)):
        c = runner(ing.phase, g, c, lambda v: random.Random(rng.getrandbits(63)))
    assert is_strong(ing.lcl, g, c)
    return c


def eligibility_probe(
    ing: IngredientSet,
    trials: int,
    seed: int,
    delta: int = 4,
    max_nodes: int = 20,
) -> ProbeReport:
    """Sample strongly configured instances, run one synchronized phase on a
    random undecided-deleted subgraph, and check the respectful-decisions and
    progress behavior statistically."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = random.Random(seed)
    runner = run_node_phase if ing.kind == "node" else run_edge_phase
    violations = 0
    detail: list = []
    pi0 = pi0_complete = 0
    reductions: list[float] = []
    for trial in range(trials):
        n = rng.randrange(4, max_nodes + 1)
        p = min(1.0, 0.6 * delta / max(1, n - 1))
        g = random_bounded_graph(n, p, delta, rng)
        c = _random_strong_config(ing, g, rng)
        undecided = c.undecided()
        dead = [x for x in undecided if rng.getrandbits(1)] if rng.getrandbits(1) else []
        kept = [x for x in (g.nodes() if ing.kind == "node" else g.edges()) if x not in set(dead)]
        if ing.kind == "node":
            gx = g.copy()
            for v in dead:
                gx.remove_node(v)
        else:
            gx = g.copy()
            for e in dead:
                gx.remove_edge(*e)
        cx = c.restrict(kept)
        pi_before = potential(ing.potential_spec, gx, cx)
        cprime = runner(
            ing.phase, gx, cx, lambda v: random.Random(rng.getrandbits(63))
        )
        # respectful decisions (1): content elements stay content
        for x in cx.decided():
            if is_content(ing.lcl, gx, cx, x) and not is_content(ing.lcl, gx, cprime, x):
                violations += 1
                detail.append((trial, "content-lost", x))
        # respectful decisions (2): newly decided elements are content
        newly = set(cprime.decided()) - set(cx.decided())
        for x in sorted(newly):
            if not is_content(ing.lcl, gx, cprime, x):
                violations += 1
                detail.append((trial, "new-uncontent", x))
        if pi_before == 0:
            pi0 += 1
            if cprime.is_complete():
                pi0_complete += 1
        else:
            pi_after = potential(ing.potential_spec, gx, cprime)
            reductions.append(1.0 - pi_after / pi_before)
    beta_hat = beta_ci = None
    if reductions:
        m = sum(reductions) / len(reductions)
        var = sum((r - m) ** 2 for r in reductions) / max(1, len(reductions) - 1)
        se = (var / len(reductions)) ** 0.5
        beta_hat = m
        beta_ci = (m - 2.576 * se, m + 2.576 * se)
    return ProbeReport(
        trials=trials,
        respectful_violations=violations,
        pi_zero_cases=pi0,
        pi_zero_complete=pi0_complete,
        beta_hat=beta_hat,
        beta_ci99=beta_ci,
        violations_detail=detail[:20],
    )
