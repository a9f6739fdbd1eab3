"""Graph simulations: running a node algorithm on clone graphs and on
(layered) line graphs while the real network stays the host graph.

Clone simulation: every host node runs alpha independent copies of the node
algorithm; copies of the same node form a clique (messages buffered host-
internally with one-round latency), copies of adjacent nodes are adjacent
within their layer (messages bundled onto the host edges).

Line-graph simulation: every host edge carries alpha simulated nodes of the
layered line graph.  Each simulated node has a step register mirrored at both
endpoints; the chain has 2*phi ladder states so that each simulated phase
step occupies two host rounds: the phase owner x(e) computes on even chain
values, the helper y(e) forwards two-hop payloads on odd ones.  The decision
value travels from x to y one round before both endpoints commit it, and each
endpoint re-checks the value against its own freshly decided side before
writing, so an adjacent commit that landed in between aborts the write
instead of producing an uncontent output.
"""

from __future__ import annotations

import random

from .algorithms import PhaseCtx, validate_phase
from .graph import Configuration, clone_graph, edge_id, line_graph
from .lcl import IN, OUT, is_legal
from .pps import HOLD, random_step
from .transform import (
    BOT,
    NIL,
    IngredientSet,
    TransformedAlgorithm,
    _NodeState,
    node_core_step,
)


class _CloneHostState:
    __slots__ = ("clones", "clique_buf", "write_reason")

    def __init__(self, clones, alpha):
        self.clones = clones
        # clique_buf[i][j] = message sent by clone j to clone i last round
        self.clique_buf = [dict() for _ in range(alpha)]
        self.write_reason = None


class CloneSimulated(TransformedAlgorithm):
    """Host nodes simulate alpha clones running a transformed node algorithm
    on the clone graph; the host output is derived from the clone outputs."""

    kind = "node"

    def __init__(self, ing: IngredientSet, alpha: int, map_output, host_lcl,
                 name: str, unmap_output=None):
        validate_phase(ing.phase)
        if ing.kind != "node" or alpha < 1:
            raise ValueError("clone simulation needs node ingredients and alpha >= 1")
        self.name = name
        self.ing = ing
        self.phase = ing.phase
        self.detect = ing.detect
        self.alpha = alpha
        self.map_output = map_output  # tuple of clone outputs -> host value
        self.unmap_output = unmap_output or mis_color_unmap(alpha)
        self.lcl = host_lcl
        self.potential_spec = ing.potential_spec
        self.nu = ing.nu
        self.phi = ing.phase.phi
        self.phi_effective = ing.phase.phi

    def make_state(self, net, v):
        clones = [
            _NodeState(net.stream(f"n{v}/c{i}")) for i in range(self.alpha)
        ]
        return _CloneHostState(clones, self.alpha)

    def step(self, state, inbox, degree, delta):
        alpha = self.alpha
        vdeg = degree + alpha - 1
        clone_delta = delta + alpha - 1
        per_port = [[None] * alpha for _ in range(degree)]
        new_clique = [dict() for _ in range(alpha)]
        reason = None
        for i in range(alpha):
            cst = state.clones[i]
            vinbox = [None] * vdeg
            for p in range(degree):
                bundle = inbox[p]
                if isinstance(bundle, tuple) and len(bundle) == alpha:
                    vinbox[p] = bundle[i]
            sibs = [j for j in range(alpha) if j != i]
            buf = state.clique_buf[i]
            for idx, j in enumerate(sibs):
                vinbox[degree + idx] = buf.get(j)
            msgs = node_core_step(
                self.phase, self.detect, self.phi, cst, vinbox, vdeg, clone_delta
            )
            if cst.write_reason is not None:
                reason = cst.write_reason
            for p in range(degree):
                per_port[p][i] = msgs[p]
            for idx, j in enumerate(sibs):
                new_clique[j][i] = msgs[degree + idx]
        state.clique_buf = new_clique
        state.write_reason = reason
        return [tuple(per_port[p]) for p in range(degree)]

    def output_snapshot(self, state):
        return tuple(c.out for c in state.clones)

    def _derive(self, snapshot):
        if any(o is None for o in snapshot):
            return None
        return self.map_output(snapshot)

    def extract_config(self, net) -> Configuration:
        return Configuration(
            "node",
            {
                v: self._derive(self.output_snapshot(net.states[v]))
                for v in net.graph.nodes()
            },
        )

    def legal(self, net) -> bool:
        return is_legal(self.lcl, net.graph, self.extract_config(net))

    def monitor(self, net):
        key = ("clone-monitor", self.alpha)
        if key not in net.cache:
            net.cache[key] = clone_graph(net.graph, self.alpha)
        cg, handle = net.cache[key]
        assign = {
            handle[(v, i)]: net.states[v].clones[i].out
            for v in net.graph.nodes()
            for i in range(self.alpha)
        }
        return cg, Configuration("node", assign), self.ing.lcl, self.potential_spec

    def corrupt_state(self, state, rng, degree):
        alpha = self.alpha
        vdeg = degree + alpha - 1
        for cst in state.clones:
            cst.out = rng.choice(self.ing.lcl.alphabet + (None,))
            cst.step = random_step(self.phi, rng)
            cst.wait = bool(rng.getrandbits(1))
            cst.regs = self.phase.corrupt_regs(rng, vdeg)
            cst.sync = tuple(p for p in range(vdeg) if rng.getrandbits(1))
        state.clique_buf = [
            {
                j: self._random_core_message(rng)
                for j in range(alpha)
                if j != i and rng.getrandbits(1)
            }
            for i in range(alpha)
        ]

    def _random_core_message(self, rng):
        kind = rng.randrange(4)
        if kind == 0:
            phase_field = NIL
        elif kind == 1:
            phase_field = BOT
        elif kind == 2:
            phase_field = rng.choice(self.ing.lcl.alphabet)
        else:
            phase_field = self.phase.random_payload(rng)
        return (
            rng.choice(self.ing.lcl.alphabet + (None,)),
            phase_field,
            random_step(self.phi, rng),
        )

    def random_message(self, rng, degree):
        return tuple(self._random_core_message(rng) for _ in range(self.alpha))

    def changed_elements(self, v, before, after, neighbors):
        return [(v, before, after)]

    def remap_ports(self, net, v, state, mapping):
        for cst in state.clones:
            cst.sync = ()

    def load_config(self, net, cfg) -> None:
        g = net.graph
        for v in g.nodes():
            st = net.states[v]
            outs = self.unmap_output(cfg.assignment.get(v))
            for i, cst in enumerate(st.clones):
                cst.out = outs[i]
                cst.step = HOLD
                cst.wait = False
                cst.regs = {}
                cst.sync = ()
            st.clique_buf = [
                {j: (outs[j], outs[j], HOLD) for j in range(self.alpha) if j != i}
                for i in range(self.alpha)
            ]
        for v in g.nodes():
            inbox = []
            for u in g.neighbors(v):
                uouts = self.unmap_output(cfg.assignment.get(u))
                inbox.append(tuple((uouts[i], uouts[i], HOLD) for i in range(self.alpha)))
            net.inboxes[v] = inbox
        net.cache.clear()
        net.touch()


def mis_to_color(alpha: int):
    """Clone outputs of the maximal-independent-set reduction -> color."""

    def mapper(snapshot):
        for i, o in enumerate(snapshot):
            if o == IN:
                return i + 1
        return alpha + 1

    return mapper


def mis_color_unmap(alpha: int):
    """Host color -> clone outputs (inverse of mis_to_color)."""

    def unmapper(value):
        if value is None:
            return (None,) * alpha
        if 1 <= value <= alpha:
            return tuple(IN if i == value - 1 else OUT for i in range(alpha))
        return (OUT,) * alpha

    return unmapper


# -- layered line-graph simulation --


class _EdgeLayer:
    """Registers one endpoint keeps for one simulated node (edge, layer)."""

    __slots__ = (
        "out", "step", "wait", "active", "role", "rcoin", "hrcoin",
        "peer_side", "regs", "sync", "sim_inbox", "pending_o", "phase_rng",
    )

    def __init__(self, phase_rng):
        self.out = None
        self.step = HOLD
        self.wait = False
        self.active = False
        self.role = None  # "x" | "y" | None
        self.rcoin = None
        self.hrcoin = None
        self.peer_side = ()  # last received (out, step, engaged) per far port
        self.regs: dict = {}
        self.sync: tuple = ()
        self.sim_inbox: dict = {}
        self.pending_o = None
        self.phase_rng = phase_rng


class _LineHostState:
    __slots__ = ("rng", "layers", "write_reason")

    def __init__(self, rng, layers):
        self.rng = rng
        self.layers = layers  # layers[port][layer] = _EdgeLayer
        self.write_reason = None


class LineSimulated(TransformedAlgorithm):
    """Simulate a transformed node algorithm on the alpha-layered line graph.

    With alpha = 1 this is the plain line-graph simulation; with alpha > 1
    the simulated graph is the clone graph of the line graph (clone cliques
    of an edge live across that edge's two endpoints).
    """

    kind = "edge"

    def __init__(self, ing: IngredientSet, alpha: int, map_output, host_lcl,
                 name: str, host_delta: int, unmap_output=None):
        validate_phase(ing.phase)
        if ing.kind != "node" or alpha < 1:
            raise ValueError("line simulation needs node ingredients and alpha >= 1")
        self.name = name
        self.ing = ing
        self.phase = ing.phase
        self.alpha = alpha
        self.map_output = map_output  # None => single layer passthrough
        if unmap_output is not None:
            self.unmap_output = unmap_output
        elif map_output is None:
            self.unmap_output = lambda value: (value,)
        else:
            self.unmap_output = mis_color_unmap(alpha)
        self.lcl = host_lcl
        self.potential_spec = ing.potential_spec
        self.nu = ing.nu
        self.phi = ing.phase.phi
        self.chain_len = 2 * self.phi
        self.phi_effective = 2 * self.phi
        # degree bound of the simulated graph: line graph plus clone clique
        self.sim_delta = max(1, 2 * host_delta - 2) + alpha - 1

    # - construction -

    def make_state(self, net, v):
        rng = net.stream(f"n{v}")
        layers = []
        for u in net.graph.neighbors(v):
            a, b = edge_id(v, u)
            layers.append(
                [
                    _EdgeLayer(net.stream(f"e{a}-{b}/l{i}/ph"))
                    for i in range(self.alpha)
                ]
            )
        return _LineHostState(rng, layers)

    # - per-round step -

    def step(self, state, inbox, degree, delta):
        alpha = self.alpha
        L = self.chain_len
        state.write_reason = None
        # wire records destined for each (port, layer), built as we go
        outrec: list[list[list]] = [[[] for _ in range(alpha)] for _ in range(degree)]

        # 1+2+3: chain advance, wait release, detection; per port and layer
        for p in range(degree):
            m = inbox[p]
            plrs = state.layers[p]
            for i in range(alpha):
                el = plrs[i]
                rec = None
                if isinstance(m, tuple) and len(m) == alpha:
                    rec = m[i]
                if rec is None:
                    el.step = HOLD
                    el.active = False
                    el.role = None
                else:
                    pstep = rec[0]
                    if pstep != el.step:
                        el.step = HOLD
                        el.active = False
                        el.role = None
                    elif el.step is HOLD:
                        my_r = el.rcoin if el.rcoin is not None else 0
                        their_r = rec[1] if rec[1] is not None else 0
                        if my_r ^ their_r:
                            el.step = 0
                            my_h = el.hrcoin if el.hrcoin is not None else 0
                            their_h = rec[2] if rec[2] is not None else 0
                            started = my_h != their_h
                            el.active = (
                                started and el.out is None and not el.wait
                            )
                            el.role = ("x" if my_h else "y") if el.active else None
                    elif el.step == L - 1:
                        el.step = HOLD
                        el.active = False
                        el.role = None
                    else:
                        el.step += 1
                if el.step is HOLD:
                    el.wait = False
                    el.pending_o = None
                if rec is not None:
                    el.peer_side = rec[4]
                    # detection: copy consistency, then the predicate
                    if rec[3] != el.out:
                        if el.out is not None:
                            el.out = None
                            state.write_reason = "reset"
                        el.wait = True
                        el.active = False
                        el.role = None
                    elif el.out is not None:
                        vals = self._detect_multiset(state, p, i)
                        if not self.ing.lcl.check(el.out, vals):
                            el.out = None
                            el.wait = True
                            state.write_reason = "reset"

        # 4: route incoming payload records
        for p in range(degree):
            m = inbox[p]
            if not (isinstance(m, tuple) and len(m) == alpha):
                continue
            others = [q for q in range(degree) if q != p]
            for i in range(alpha):
                rec = m[i]
                if rec is None:
                    continue
                for r in rec[5]:
                    tag = r[0]
                    if tag == "p" and len(r) == 3:
                        k = r[1]
                        if not isinstance(k, int) or not 0 <= k < len(others):
                            continue
                        p2 = others[k]
                        el2 = state.layers[p2][i]
                        if el2.role == "x" and el2.active:
                            el2.sim_inbox[("m", p)] = r[2]
                        elif el2.role == "y" and el2.active:
                            src = [q for q in range(degree) if q != p2].index(p)
                            outrec[p2][i].append(("f", src, r[2]))
                    elif tag == "f" and len(r) == 3:
                        el2 = state.layers[p][i]
                        if el2.role == "x" and el2.active:
                            el2.sim_inbox[("t", r[1])] = r[2]
                    elif tag == "q" and len(r) == 3:
                        el2 = state.layers[p][i]
                        if el2.role == "x" and el2.active:
                            el2.sim_inbox[("c", r[1])] = r[2]
                    elif tag == "o" and len(r) == 2:
                        state.layers[p][i].pending_o = r[1]

        # 5: run the simulated phase steps on even chain values (x side);
        # internal deliveries are staged so a same-host producer cannot feed
        # a consumer within the same round
        staged: list = []
        for p in range(degree):
            for i in range(alpha):
                el = state.layers[p][i]
                if not (el.active and not el.wait and el.out is None):
                    continue
                if el.role != "x" or el.step is HOLD or el.step % 2 != 0:
                    continue
                j = el.step // 2
                if j == 0:
                    el.regs = self.phase.init_regs(el.phase_rng)
                    el.sync = ()
                    el.sim_inbox = {}
                    continue
                if j == 1:
                    el.sync = self._sync_keys(state, p, i, degree)
                payloads = dict(el.sim_inbox)
                el.sim_inbox = {}
                if j == self.phi - 1:
                    decided = self._detect_multiset(state, p, i)
                    ctx = PhaseCtx(
                        el.sync, payloads, el.regs, el.phase_rng, self.sim_delta,
                        decided=decided,
                    )
                    val = self.phase.decision_step(ctx)
                    el.pending_o = val
                    if val is not None:
                        outrec[p][i].append(("o", val))
                else:
                    ctx = PhaseCtx(
                        el.sync, payloads, el.regs, el.phase_rng, self.sim_delta
                    )
                    self.phase.working_step(j, ctx)
                    self._route_emissions(state, p, i, ctx._out, outrec, staged, degree)
        for p2, i2, key, payload in staged:
            state.layers[p2][i2].sim_inbox[key] = payload

        # 6: conditional simultaneous commit at the last chain state; checks
        # run against the pre-commit registers so both endpoints agree
        commits = []
        for p in range(degree):
            for i in range(alpha):
                el = state.layers[p][i]
                if (
                    el.step is not HOLD
                    and el.step == L - 1
                    and el.active
                    and not el.wait
                    and el.out is None
                    and el.pending_o is not None
                ):
                    o = el.pending_o
                    vals = self._detect_multiset(state, p, i)
                    if self.ing.lcl.check(o, vals):
                        commits.append((el, o))
                if el.step is not HOLD and el.step == L - 1:
                    el.pending_o = None
        for el, o in commits:
            el.out = o
            state.write_reason = "decision"

        # 7: draw fresh coins for held chains and build outbound messages
        msgs = []
        for p in range(degree):
            bundle = []
            others = [q for q in range(degree) if q != p]
            for i in range(alpha):
                el = state.layers[p][i]
                if el.step is HOLD:
                    el.rcoin = state.rng.getrandbits(1)
                    el.hrcoin = state.rng.getrandbits(1)
                else:
                    el.rcoin = None
                    el.hrcoin = None
                side = tuple(
                    (
                        state.layers[q][i].out,
                        state.layers[q][i].step,
                        state.layers[q][i].active
                        and state.layers[q][i].out is None
                        and not state.layers[q][i].wait,
                    )
                    for q in others
                )
                bundle.append(
                    (el.step, el.rcoin, el.hrcoin, el.out, side, tuple(outrec[p][i]))
                )
            msgs.append(tuple(bundle))
        return msgs

    # - helpers -

    def _detect_multiset(self, state, p, i):
        """Decided outputs adjacent to (edge p, layer i) as this endpoint
        knows them: own sibling ports (fresh), clone layers (fresh), and the
        far side as last reported."""
        vals = []
        for q in range(len(state.layers)):
            if q != p:
                o = state.layers[q][i].out
                if o is not None:
                    vals.append(o)
        for i2 in range(self.alpha):
            if i2 != i:
                o = state.layers[p][i2].out
                if o is not None:
                    vals.append(o)
        for entry in state.layers[p][i].peer_side:
            if isinstance(entry, tuple) and len(entry) == 3 and entry[0] is not None:
                vals.append(entry[0])
        return tuple(vals)

    def _sync_keys(self, state, p, i, degree):
        """Simulated neighbors phase-synchronized with (edge p, layer i),
        evaluated during the chain value 2 round."""
        el = state.layers[p][i]
        keys = []
        for i2 in range(self.alpha):
            if i2 == i:
                continue
            sib = state.layers[p][i2]
            if sib.active and sib.out is None and not sib.wait and sib.step == el.step:
                keys.append(("c", i2))
        for q in range(degree):
            if q == p:
                continue
            other = state.layers[q][i]
            if (
                other.active
                and other.out is None
                and not other.wait
                and other.step == el.step
            ):
                keys.append(("m", q))
        for k, entry in enumerate(el.peer_side):
            if not (isinstance(entry, tuple) and len(entry) == 3):
                continue
            out_k, step_k, engaged_k = entry
            if engaged_k and out_k is None and step_k == el.step - 1:
                keys.append(("t", k))
        return tuple(sorted(keys))

    def _route_emissions(self, state, p, i, emissions, outrec, staged, degree):
        """Deliver the simulated node's outgoing payloads: internally (staged
        to the next round) when the recipient owner lives here, otherwise as
        wire records."""
        for key, payload in emissions.items():
            if not (isinstance(key, tuple) and len(key) == 2):
                continue
            tag, idx = key
            if tag == "c":
                if not (isinstance(idx, int) and 0 <= idx < self.alpha and idx != i):
                    continue
                el2 = state.layers[p][idx]
                if el2.role == "x" and el2.active:
                    staged.append((p, idx, ("c", i), payload))
                else:
                    outrec[p][idx].append(("q", i, payload))
            elif tag == "m":
                if not (isinstance(idx, int) and 0 <= idx < degree and idx != p):
                    continue
                el2 = state.layers[idx][i]
                if el2.role == "x" and el2.active:
                    staged.append((idx, i, ("m", p), payload))
                else:
                    src = [q for q in range(degree) if q != idx].index(p)
                    outrec[idx][i].append(("f", src, payload))
            elif tag == "t":
                if isinstance(idx, int) and idx >= 0:
                    outrec[p][i].append(("p", idx, payload))

    # - configuration plumbing -

    def output_snapshot(self, state):
        return tuple(
            tuple(el.out for el in plrs) for plrs in state.layers
        )

    def extract_config(self, net) -> Configuration:
        g = net.graph
        assign = {}
        for u, v in g.edges():
            a = net.states[u].layers[g.port_of(u, v)]
            b = net.states[v].layers[g.port_of(v, u)]
            outs = []
            consistent = True
            for i in range(self.alpha):
                if a[i].out != b[i].out:
                    consistent = False
                    break
                outs.append(a[i].out)
            if not consistent or any(o is None for o in outs):
                assign[(u, v)] = None
            elif self.map_output is None:
                assign[(u, v)] = outs[0]
            else:
                assign[(u, v)] = self.map_output(tuple(outs))
        return Configuration("edge", assign)

    def legal(self, net) -> bool:
        return is_legal(self.lcl, net.graph, self.extract_config(net))

    def monitor(self, net):
        key = ("line-monitor", self.alpha)
        if key not in net.cache:
            lg, ehandle = line_graph(net.graph)
            cg, chandle = clone_graph(lg, self.alpha)
            net.cache[key] = (lg, ehandle, cg, chandle)
        lg, ehandle, cg, chandle = net.cache[key]
        g = net.graph
        assign = {}
        for u, v in g.edges():
            a = net.states[u].layers[g.port_of(u, v)]
            b = net.states[v].layers[g.port_of(v, u)]
            for i in range(self.alpha):
                val = a[i].out if a[i].out == b[i].out else None
                assign[chandle[(ehandle[(u, v)], i)]] = val
        return cg, Configuration("node", assign), self.ing.lcl, self.potential_spec

    def corrupt_state(self, state, rng, degree):
        for p in range(degree):
            for el in state.layers[p]:
                el.out = rng.choice(self.ing.lcl.alphabet + (None,))
                el.step = random_step(self.chain_len, rng)
                el.wait = bool(rng.getrandbits(1))
                el.active = bool(rng.getrandbits(1))
                el.role = rng.choice(("x", "y", None))
                el.rcoin = rng.choice((0, 1, None))
                el.hrcoin = rng.choice((0, 1, None))
                el.peer_side = ()
                el.regs = self.phase.corrupt_regs(rng, degree + self.alpha)
                el.sync = ()
                el.sim_inbox = {}
                el.pending_o = rng.choice(self.ing.lcl.alphabet + (None,))

    def random_message(self, rng, degree):
        side_len = max(0, degree - 1)
        bundle = []
        for _ in range(self.alpha):
            side = tuple(
                (
                    rng.choice(self.ing.lcl.alphabet + (None,)),
                    random_step(self.chain_len, rng),
                    bool(rng.getrandbits(1)),
                )
                for _ in range(side_len)
            )
            bundle.append(
                (
                    random_step(self.chain_len, rng),
                    rng.choice((0, 1, None)),
                    rng.choice((0, 1, None)),
                    rng.choice(self.ing.lcl.alphabet + (None,)),
                    side,
                    (),
                )
            )
        return tuple(bundle)

    def changed_elements(self, v, before, after, neighbors):
        out = []
        for p, u in enumerate(neighbors):
            old = before[p] if p < len(before) else ()
            new = after[p] if p < len(after) else ()
            if old != new:
                out.append((edge_id(v, u), old, new))
        return out

    def remap_ports(self, net, v, state, mapping):
        nb = net.graph.neighbors(v)
        new_layers = []
        for newp, oldp in enumerate(mapping):
            if oldp is not None and oldp < len(state.layers):
                new_layers.append(state.layers[oldp])
            else:
                a, b = edge_id(v, nb[newp])
                new_layers.append(
                    [
                        _EdgeLayer(net.stream(f"e{a}-{b}/l{i}/ph"))
                        for i in range(self.alpha)
                    ]
                )
        state.layers = new_layers
        for plrs in state.layers:
            for el in plrs:
                el.sync = ()
                el.sim_inbox = {}

    def load_config(self, net, cfg) -> None:
        g = net.graph
        layer_vals = {
            e: self.unmap_output(val) for e, val in cfg.assignment.items()
        }
        for v in g.nodes():
            st = net.states[v]
            for p, u in enumerate(g.neighbors(v)):
                outs = layer_vals.get(edge_id(v, u), (None,) * self.alpha)
                for i, el in enumerate(st.layers[p]):
                    el.out = outs[i]
                    el.step = HOLD
                    el.wait = False
                    el.active = False
                    el.role = None
                    el.rcoin = None
                    el.hrcoin = None
                    el.peer_side = ()
                    el.regs = {}
                    el.sync = ()
                    el.sim_inbox = {}
                    el.pending_o = None
        for v in g.nodes():
            inbox = []
            for p, u in enumerate(g.neighbors(v)):
                bundle = []
                uothers = [w for w in g.neighbors(u) if w != v]
                for i in range(self.alpha):
                    out_i = layer_vals.get(edge_id(v, u), (None,) * self.alpha)[i]
                    side = tuple(
                        (
                            layer_vals.get(edge_id(u, w), (None,) * self.alpha)[i],
                            HOLD,
                            False,
                        )
                        for w in uothers
                    )
                    bundle.append((HOLD, None, None, out_i, side, ()))
                inbox.append(tuple(bundle))
            net.inboxes[v] = inbox
        net.cache.clear()
        net.touch()
