"""Synchronous round executor: compute, send, receive, then adversary.

A network couples a graph with per-node algorithm states.  Rounds are
deterministic given the master seed: every node owns rng streams derived from
(seed, node handle, tag), so adversary actions never perturb the draws of
untouched nodes.  Adversary batches scheduled for round t apply after the
messages of round t are delivered and before round t+1 computes.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass

from .graph import Graph, edge_id
from .lcl import potential, uncontent_elements


class Timeout(RuntimeError):
    def __init__(self, max_rounds: int):
        super().__init__(f"no stable legal configuration within {max_rounds} rounds")
        self.max_rounds = max_rounds


class KTooLarge(ValueError):
    pass


def derive_seed(master_seed: int, key: str) -> int:
    h = hashlib.sha256(f"{master_seed}/{key}".encode()).digest()
    return int.from_bytes(h[:8], "big")


@dataclass
class AdversaryAction:
    round: int
    kind: str  # corrupt | rewire | add-node | remove-node | add-edge | remove-edge
    target: object = None
    data: object = None


class Network:
    def __init__(self, graph: Graph, alg, master_seed: int, record_trace: bool = False):
        self.graph = graph
        self.alg = alg
        self.master_seed = master_seed
        self._streams: dict[str, random.Random] = {}
        self.states = {v: alg.make_state(self, v) for v in graph.nodes()}
        self.inboxes = {v: [None] * graph.degree(v) for v in graph.nodes()}
        self.node_order = graph.nodes()
        self.round = 0
        self.change_log: list = []
        self.manipulated: set = set()
        self.last_fault_round: int | None = None
        self.record_trace = record_trace
        self.trace: list = []
        self.frozen: set = set()
        self.schedule: dict[int, list[AdversaryAction]] = {}
        self.cache: dict = {}
        self._version = 0
        self._config_memo = None
        self._legal_memo = None

    def stream(self, key: str) -> random.Random:
        """Named rng stream; instances are shared per key within the network."""
        s = self._streams.get(key)
        if s is None:
            s = random.Random(derive_seed(self.master_seed, key))
            self._streams[key] = s
        return s

    def add_schedule(self, actions) -> None:
        for a in actions:
            self.schedule.setdefault(a.round, []).append(a)

    def config(self):
        if self._config_memo is None or self._config_memo[0] != self._version:
            self._config_memo = (self._version, self.alg.extract_config(self))
        return self._config_memo[1]

    def legal(self) -> bool:
        if self._legal_memo is None or self._legal_memo[0] != self._version:
            self._legal_memo = (self._version, self.alg.legal(self))
        return self._legal_memo[1]

    def touch(self) -> None:
        self._version += 1

    def t_star_b(self) -> int:
        """First quiescent round: one past the last adversary-active round."""
        return 0 if self.last_fault_round is None else self.last_fault_round + 1


def run_round(net: Network) -> list:
    """Execute one synchronous round; returns the nodes whose output changed."""
    g = net.graph
    alg = net.alg
    delta = g.delta
    frozen = net.frozen
    outboxes = {}
    changed = []
    for v in net.node_order:
        if v in frozen:
            continue
        st = net.states[v]
        before = alg.output_snapshot(st)
        msgs = alg.step(st, net.inboxes[v], g.degree(v), delta)
        after = alg.output_snapshot(st)
        if after != before:
            assert st.write_reason is not None, f"unexplained output write at node {v}"
            for elem, old, new in alg.changed_elements(v, before, after, g.neighbors(v)):
                net.change_log.append((net.round, elem, old, new, st.write_reason))
            changed.append(v)
        outboxes[v] = msgs
    for v, msgs in outboxes.items():
        nb = g.neighbors(v)
        for p, u in enumerate(nb):
            if u in frozen:
                continue
            net.inboxes[u][g.port_of(u, v)] = msgs[p]
    if changed:
        net.touch()
    batch = net.schedule.pop(net.round, None)
    if batch:
        apply_adversary(net, batch)
    if net.record_trace:
        net.trace.append(trace_row(net, changed))
    net.round += 1
    return changed


def trace_row(net: Network, changed: list) -> dict:
    g, cfg, lcl, pspec = net.alg.monitor(net)
    return {
        "round": net.round,
        "num_undecided": len(cfg.undecided()),
        "potential": potential(pspec, g, cfg),
        "num_uncontent": len(uncontent_elements(lcl, g, cfg)),
        "changed_nodes": list(changed),
    }


def run_until_stable(net: Network, max_rounds: int, confirm_window: int, on_round=None):
    """Run until the configuration is legal and unchanged for the confirm
    window; returns (stabilization round, configuration).

    The confirm rounds execute as part of the call; raises Timeout when the
    budget runs out before a confirmed stabilization.  ``on_round(net)`` is
    invoked once per visited round before the round executes.
    """
    if confirm_window < 1 or max_rounds < confirm_window:
        raise ValueError("need max_rounds >= confirm_window >= 1")
    base = net.round
    candidate = None
    cand_version = None
    confirmed = 0
    while True:
        if on_round is not None:
            on_round(net)
        if candidate is not None:
            if net._version == cand_version:
                confirmed += 1
                if confirmed >= confirm_window:
                    return candidate, net.config()
            else:
                candidate = None
        if candidate is None and net.legal():
            candidate = net.round
            cand_version = net._version
            confirmed = 0
        if net.round - base >= max_rounds:
            raise Timeout(max_rounds)
        run_round(net)


# -- the adversary --


def apply_adversary(net: Network, batch: list) -> None:
    """Apply a batch of actions atomically at end-of-round."""
    g = net.graph
    rng = net.stream("adversary")
    touched: set = set()
    topology = False
    # per-node neighbor maps before any topology edit, to remap port arrays
    old_ports = {v: {u: p for p, u in enumerate(g.neighbors(v))} for v in g.nodes()}
    for a in batch:
        if a.kind == "corrupt":
            v = a.target
            st = net.states[v]
            before = net.alg.output_snapshot(st)
            net.alg.corrupt_state(st, rng, g.degree(v))
            net.inboxes[v] = [
                net.alg.random_message(rng, g.degree(v)) for _ in range(g.degree(v))
            ]
            after = net.alg.output_snapshot(st)
            if after != before:
                for elem, old, new in net.alg.changed_elements(v, before, after, g.neighbors(v)):
                    net.change_log.append((net.round, elem, old, new, "adversary"))
            touched.add(v)
        elif a.kind == "rewire":
            v = a.target
            d = g.degree(v)
            perm = a.data
            if perm is None:
                perm = list(range(d))
                rng.shuffle(perm)
            g.permute_ports(v, perm)
            touched.add(v)
            topology = True  # port maps changed even though the edge set did not
        elif a.kind == "add-edge":
            u, v = a.target
            g.add_edge(u, v)
            touched.update((u, v))
            topology = True
        elif a.kind == "remove-edge":
            u, v = a.target
            g.remove_edge(u, v)
            touched.update((u, v))
            topology = True
        elif a.kind == "remove-node":
            v = a.target
            touched.add(v)
            touched.update(g.neighbors(v))
            g.remove_node(v)
            del net.states[v]
            del net.inboxes[v]
            topology = True
        elif a.kind == "add-node":
            v = g.add_node()
            for u in a.data or ():
                g.add_edge(v, u)
                touched.add(u)
            net.states[v] = net.alg.make_state(net, v)
            net.alg.corrupt_state(net.states[v], rng, g.degree(v))
            net.inboxes[v] = [
                net.alg.random_message(rng, g.degree(v)) for _ in range(g.degree(v))
            ]
            touched.add(v)
            topology = True
        else:
            raise ValueError(f"unknown adversary action {a.kind!r}")
    touched &= set(g.nodes()) | set(old_ports)
    if topology:
        _remap_after_topology(net, old_ports)
    net.manipulated |= touched
    net.last_fault_round = net.round
    net.cache.clear()
    net.touch()
    g.check_valid()


def _remap_after_topology(net: Network, old_ports: dict) -> None:
    g = net.graph
    net.node_order = g.nodes()
    for v in net.node_order:
        if v not in old_ports:
            continue  # freshly added, state already sized
        prev = old_ports[v]
        nb = g.neighbors(v)
        if [u for u in nb] == [u for u, _ in sorted(prev.items(), key=lambda kv: kv[1])]:
            continue
        mapping = [prev.get(u) for u in nb]  # new port -> old port or None
        old_inbox = net.inboxes[v]
        net.inboxes[v] = [
            old_inbox[m] if m is not None and m < len(old_inbox) else None
            for m in mapping
        ]
        net.alg.remap_ports(net, v, net.states[v], mapping)


def corrupt_everything(net: Network) -> None:
    """Randomize every register of every node, including inbound buffers."""
    rng = net.stream("adversary")
    g = net.graph
    for v in net.node_order:
        net.alg.corrupt_state(net.states[v], rng, g.degree(v))
        net.inboxes[v] = [
            net.alg.random_message(rng, g.degree(v)) for _ in range(g.degree(v))
        ]
    net.manipulated |= set(net.node_order)
    net.last_fault_round = net.round - 1
    net.cache.clear()
    net.touch()


def random_fault_schedule(
    g: Graph,
    k: int,
    batches: int,
    seed: int,
    start_round: int = 0,
    kinds: tuple = ("corrupt",),
) -> list[AdversaryAction]:
    """k distinct manipulated nodes spread over ``batches`` consecutive rounds."""
    if k < 1 or batches < 1:
        raise ValueError("k and batches must be >= 1")
    nodes = g.nodes()
    if k > len(nodes):
        raise KTooLarge(f"k={k} exceeds {len(nodes)} nodes")
    rng = random.Random(seed)
    chosen = rng.sample(nodes, k)
    batches = min(batches, k)
    actions = []
    per = [k // batches + (1 if i < k % batches else 0) for i in range(batches)]
    it = iter(chosen)
    for i, cnt in enumerate(per):
        for _ in range(cnt):
            v = next(it)
            kind = kinds[rng.randrange(len(kinds))]
            actions.append(AdversaryAction(start_round + i, kind, v))
    return actions


# -- locality accounting --


def locality_violations(net: Network, radius: int, since_round: int = 0) -> list:
    """Output changes at elements at distance >= radius from every manipulated
    node, per the change log (the theorem says such elements never change).
    For edges the distance is the minimum over the two endpoints.  Assumes the
    topology is unchanged since the faults (corrupt/rewire schedules)."""
    from .graph import distances_from_set

    if not net.manipulated:
        return []
    live = net.manipulated & set(net.graph.nodes())
    dist = distances_from_set(net.graph, live)
    far_default = len(net.node_order) + radius + 1

    out = []
    for (t, elem, old, new, reason) in net.change_log:
        if t < since_round or reason == "adversary":
            continue
        if isinstance(elem, tuple):
            d = min(
                dist.get(elem[0], far_default), dist.get(elem[1], far_default)
            )
        else:
            d = dist.get(elem, far_default)
        if d >= radius:
            out.append((t, elem, old, new))
    return out
