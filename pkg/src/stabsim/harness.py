"""Experiment harness: single runs, scaling sweeps, statistics and output.

A trial prepares a legal configuration by running the transformed algorithm
fault-free from the all-undecided state, installs it in a fresh network,
applies a seeded fault schedule, and measures the recovery time T from the
first quiescent round to the confirmed stabilization round, verifying
legality and the locality radius along the way.

Large sweeps on cycles use a region-restricted fast path: nodes far from
every fault are frozen as constant message sources, which is exactly what
the locality theorem predicts for them; any output change observed beyond
the locality radius is still reported as a violation (and would fail the
acceptance suite), so the shortcut never hides a counterexample.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import pps
from .engine import (
    Network,
    Timeout,
    locality_violations,
    random_fault_schedule,
    run_round,
    run_until_stable,
)
from .graph import (
    Graph,
    cycle_graph,
    distances_from_set,
    edge_id,
    grid_graph,
    parse_edge_list,
    path_graph,
    random_bounded_graph,
)
from .lcl import analyze_lcl, potential
from .pps import advance_step
from .registry import PROBLEM_NAMES, make_algorithm, make_ingredients, problem_lcl
from .transform import eligibility_probe


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    problem: str = "mis"
    params: dict = field(default_factory=dict)
    graph: dict = field(default_factory=lambda: {"generator": "cycle", "n": 64})
    delta: int = 2
    k: int = 1
    batches: int = 1
    fault_kinds: tuple = ("corrupt",)
    trials: int = 10
    seed: int = 0
    max_rounds: int = 100_000
    confirm_window: int | None = None
    k_list: tuple = ()
    workers: int = 1
    region: str = "auto"  # "on" | "off" | "auto"

    def validate(self) -> None:
        if self.problem not in PROBLEM_NAMES:
            raise ConfigError(f"unknown problem {self.problem!r}")
        for name, val in [
            ("delta", self.delta), ("trials", self.trials),
            ("batches", self.batches), ("max_rounds", self.max_rounds),
        ]:
            if int(val) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.k < 0:
            raise ConfigError("k must be >= 0")
        n = self.graph.get("n")
        if n is not None and self.k > int(n):
            raise ConfigError(f"k={self.k} exceeds n={n}")
        if self.k_list and len(set(self.k_list)) < 3:
            raise ConfigError("scale sweeps need at least 3 distinct k values")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        cfg = cls()
        for key, val in data.items():
            if not hasattr(cfg, key):
                raise ConfigError(f"unknown config field {key!r}")
            if key in ("fault_kinds", "k_list"):
                val = tuple(val)
            setattr(cfg, key, val)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return {
            "problem": self.problem,
            "params": dict(self.params),
            "graph": dict(self.graph),
            "delta": self.delta,
            "k": self.k,
            "batches": self.batches,
            "fault_kinds": list(self.fault_kinds),
            "trials": self.trials,
            "seed": self.seed,
            "max_rounds": self.max_rounds,
            "confirm_window": self.confirm_window,
            "k_list": list(self.k_list),
            "workers": self.workers,
            "region": self.region,
        }

    def hash(self) -> str:
        data = self.to_dict()
        # execution-strategy knobs do not change the experiment semantics
        data.pop("region", None)
        data.pop("workers", None)
        blob = json.dumps(data, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def build_graph_spec(spec: dict, delta: int) -> Graph:
    if "edge_list" in spec:
        with open(spec["edge_list"]) as fh:
            return parse_edge_list(fh.read(), delta)
    gen = spec.get("generator", "cycle")
    if gen == "cycle":
        return cycle_graph(int(spec["n"]))
    if gen == "path":
        return path_graph(int(spec["n"]))
    if gen == "grid":
        return grid_graph(int(spec["a"]), int(spec["b"]))
    if gen == "random":
        return random_bounded_graph(
            int(spec["n"]), float(spec.get("p", min(1.0, 1.5 * delta / int(spec["n"])))),
            delta, int(spec.get("seed", 0)),
        )
    raise ConfigError(f"unknown graph generator {gen!r}")


def prepare_initial_config(cfg: ExperimentConfig):
    """Run the transformed algorithm fault-free from the all-bottom state and
    return the confirmed legal configuration (algorithm-reachable)."""
    g = build_graph_spec(cfg.graph, cfg.delta)
    alg = make_algorithm(cfg.problem, cfg.delta, cfg.params)
    net = Network(g, alg, master_seed_for(cfg, "init"))
    window = cfg.confirm_window or alg.confirm_window
    _, stable_cfg = run_until_stable(net, cfg.max_rounds, window)
    return stable_cfg


def master_seed_for(cfg: ExperimentConfig, tag: str) -> int:
    h = hashlib.sha256(f"{cfg.seed}/{cfg.hash()}/{tag}".encode()).digest()
    return int.from_bytes(h[:8], "big")


def _fresh_network(cfg: ExperimentConfig, trial: int, k: int):
    g = build_graph_spec(cfg.graph, cfg.delta)
    alg = make_algorithm(cfg.problem, cfg.delta, cfg.params)
    seed = master_seed_for(cfg, f"trial{trial}/k{k}")
    return g, alg, Network(g, alg, seed), seed


def run_single_trial(cfg: ExperimentConfig, trial: int, init_assignment: dict,
                     k: int | None = None) -> dict:
    """One recovery trial: install the legal configuration, inject k faults,
    measure T, verify legality and the locality radius."""
    k = cfg.k if k is None else k
    g, alg, net, seed = _fresh_network(cfg, trial, k)
    from .graph import Configuration

    init = Configuration(alg.kind, dict(init_assignment))
    alg.load_config(net, init)
    window = cfg.confirm_window or alg.confirm_window
    record = {
        "trial": trial,
        "seed": seed,
        "k": k,
        "timeout": False,
        "legal": False,
        "T": None,
        "locality_violations": 0,
    }
    if k > 0:
        sched = random_fault_schedule(
            g, k, cfg.batches, seed, start_round=net.round, kinds=cfg.fault_kinds
        )
        net.add_schedule(sched)
        if _use_region(cfg, g, alg, k):
            targets = sorted({a.target for a in sched})
            return _run_region_trial(cfg, net, alg, targets, window, record)
    probe = {"u": None, "pi": None}

    def on_round(n):
        if (
            probe["u"] is None
            and n.last_fault_round is not None
            and n.round == n.t_star_b() + alg.ts_offset
        ):
            gm, cm, _, pspec = alg.monitor(n)
            probe["u"] = len(cm.undecided())
            probe["pi"] = potential(pspec, gm, cm)

    try:
        t_stable, _ = run_until_stable(net, cfg.max_rounds, window, on_round=on_round)
        record["legal"] = True
        record["T"] = max(0, t_stable - net.t_star_b())
    except Timeout:
        record["timeout"] = True
    viols = locality_violations(net, alg.radius)
    record["locality_violations"] = len(viols)
    record["undecided_at_ts"] = probe["u"]
    record["potential_at_ts"] = probe["pi"]
    return record


def _use_region(cfg: ExperimentConfig, g: Graph, alg, k: int) -> bool:
    if cfg.region == "off":
        return False
    if cfg.problem not in ("mis", "mm"):
        return False
    if set(cfg.fault_kinds) != {"corrupt"}:
        return False
    if cfg.region == "on":
        return True
    return g.num_nodes() >= 512


def _run_region_trial(cfg, net, alg, targets, window, record) -> dict:
    """Stabilize with activity tracking: only nodes near a recent output
    change or an undecided element execute rounds.

    Sound because every observable input change originates from an output
    change at an executing node (a quiescent fully-decided node repeats its
    behavior verbatim apart from its unread step counter), and the locality
    check that the acceptance suite requires still runs on the change log,
    so a locality-theorem violation fails the trial instead of hiding.
    """
    g = net.graph
    guard = alg.radius + 6
    dist = distances_from_set(g, targets)
    check_nodes = sorted(
        v for v in g.nodes() if dist.get(v, guard + 2) <= guard + 1
    )
    if alg.kind == "node":
        def snapshot():
            return {v: net.states[v].out for v in check_nodes}

        def has_bottom(v):
            return net.states[v].out is None

        def legal_zone():
            lcl = alg.lcl
            for v in check_nodes:
                o = net.states[v].out
                if o is None:
                    return False
                vals = tuple(
                    net.states[u].out
                    for u in g.neighbors(v)
                    if net.states[u].out is not None
                )
                if not lcl.check(o, vals):
                    return False
            return True
    else:
        check_edges = sorted(
            {edge_id(v, u) for v in check_nodes for u in g.neighbors(v)}
        )

        def snapshot():
            snap = {}
            for e in check_edges:
                u, v = e
                a = net.states[u].outs[g.port_of(u, v)]
                b = net.states[v].outs[g.port_of(v, u)]
                snap[e] = a if a == b else None
            return snap

        def has_bottom(v):
            return any(o is None for o in net.states[v].outs)

        def legal_zone():
            lcl = alg.lcl
            for e, o in snapshot().items():
                if o is None:
                    return False
                u, v = e
                neigh = []
                for a, b in ((u, v), (v, u)):
                    for w in g.neighbors(a):
                        if w == b:
                            continue
                        x = net.states[a].outs[g.port_of(a, w)]
                        y = net.states[w].outs[g.port_of(w, a)]
                        if x == y and x is not None:
                            neigh.append(x)
                if not lcl.check(o, tuple(neigh)):
                    return False
            return True

    quiet_for = 2 * alg.phi_effective + 4  # hysteresis before a node sleeps
    active = set(targets)
    for v in targets:
        active.update(g.neighbors(v))
    quiet: dict = {}
    last_ticked: dict = {}
    base = net.round
    candidate = None
    cand_version = None
    legal_version = None
    confirmed = 0
    while True:
        if candidate is not None:
            if net._version == cand_version:
                confirmed += 1
                if confirmed >= window:
                    record["legal"] = True
                    record["T"] = max(0, candidate - net.t_star_b())
                    break
            else:
                candidate = None
        if candidate is None and net._version != legal_version:
            legal_version = net._version
            if legal_zone():
                candidate = net.round
                cand_version = net._version
                confirmed = 0
        if net.round - base >= cfg.max_rounds:
            record["timeout"] = True
            break
        order = sorted(active)
        # a sleeping node is decided-quiescent, so the only rng it would have
        # used is its step counter: replaying the missed ticks on wake makes
        # this loop trace-identical to the full execution
        for v in order:
            skipped = net.round - last_ticked.get(v, base)
            if skipped > 0:
                st = net.states[v]
                for _ in range(skipped):
                    st.step = advance_step(st.step, alg.phi, st.rng)
        net.node_order = order
        changed = run_round(net)
        for v in order:
            last_ticked[v] = net.round
        woken = set()
        for v in changed:
            woken.add(v)
            woken.update(g.neighbors(v))
        next_active = set()
        for v in active:
            if v in woken or has_bottom(v):
                quiet[v] = 0
                next_active.add(v)
            else:
                q = quiet.get(v, 0) + 1
                quiet[v] = q
                if q < quiet_for:
                    next_active.add(v)
        for v in woken - active:
            quiet[v] = 0
            next_active.add(v)
        active = next_active
    viols = locality_violations(net, alg.radius)
    record["locality_violations"] = len(viols)
    record["undecided_at_ts"] = None
    record["potential_at_ts"] = None
    return record


def _trial_task(args) -> dict:
    cfg_data, trial, init_assignment, k = args
    cfg = ExperimentConfig.from_dict(cfg_data)
    return run_single_trial(cfg, trial, init_assignment, k)


def _run_trials(cfg: ExperimentConfig, init_assignment: dict, k: int) -> list[dict]:
    tasks = [(cfg.to_dict(), t, init_assignment, k) for t in range(cfg.trials)]
    if cfg.workers > 1 and cfg.trials > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            return list(pool.map(_trial_task, tasks))
    return [_trial_task(t) for t in tasks]


def aggregate(records: list[dict]) -> dict:
    ts = [r["T"] for r in records if r["T"] is not None]
    out = {
        "trials": len(records),
        "timeouts": sum(1 for r in records if r["timeout"]),
        "all_legal": all(r["legal"] for r in records if not r["timeout"]),
        "locality_violations": sum(r["locality_violations"] for r in records),
    }
    if ts:
        mean = sum(ts) / len(ts)
        var = sum((t - mean) ** 2 for t in ts) / max(1, len(ts) - 1)
        out.update(
            mean_T=mean,
            median_T=sorted(ts)[len(ts) // 2],
            stderr_T=(var / len(ts)) ** 0.5,
        )
    return out


def cmd_run(cfg: ExperimentConfig) -> dict:
    cfg.validate()
    init = prepare_initial_config(cfg)
    records = _run_trials(cfg, dict(init.assignment), cfg.k)
    return {
        "config_hash": cfg.hash(),
        "seed": cfg.seed,
        "problem": cfg.problem,
        "k": cfg.k,
        "records": records,
        "aggregate": aggregate(records),
    }


def fit_scaling(points: list[tuple[int, float]]) -> dict:
    """Least-squares lines of mean T against log2(k) and against k."""
    ks = np.array([k for k, _ in points], dtype=float)
    ts = np.array([t for _, t in points], dtype=float)
    logk = np.log2(np.maximum(ks, 1.0))

    def fit(xs):
        coef = np.polyfit(xs, ts, 1)
        resid = float(np.sum((np.polyval(coef, xs) - ts) ** 2))
        return {"slope": float(coef[0]), "intercept": float(coef[1]), "residual": resid}

    return {"log_fit": fit(logk), "linear_fit": fit(ks)}


def cmd_scale(cfg: ExperimentConfig) -> dict:
    cfg.validate()
    if not cfg.k_list:
        raise ConfigError("scale needs a k_list")
    init = prepare_initial_config(cfg)
    init_assignment = dict(init.assignment)
    rows = []
    for k in cfg.k_list:
        records = _run_trials(cfg, init_assignment, int(k))
        agg = aggregate(records)
        rows.append(
            {
                "k": int(k),
                "mean_T": agg.get("mean_T"),
                "stderr_T": agg.get("stderr_T"),
                "trials": agg["trials"],
                "timeouts": agg["timeouts"],
                "locality_violations": agg["locality_violations"],
                "all_legal": agg["all_legal"],
            }
        )
    fits = fit_scaling([(r["k"], r["mean_T"]) for r in rows if r["mean_T"] is not None])
    return {
        "config_hash": cfg.hash(),
        "seed": cfg.seed,
        "problem": cfg.problem,
        "rows": rows,
        "fits": fits,
    }


def cmd_mix(phi: int, warmup: int, samples: int, seed: int) -> dict:
    if samples < 1 or warmup < 1:
        raise ConfigError("samples and warmup must be >= 1")
    profile = pps.mixing_profile(phi, warmup, samples, seed)
    rows = [
        {
            "state": "h" if state is pps.HOLD else state,
            "frequency": freq,
            "stderr": se,
        }
        for state, (freq, se) in profile.items()
    ]
    return {"phi": phi, "warmup": warmup, "samples": samples, "seed": seed, "rows": rows}


def cmd_check_eligibility(problem: str, delta: int, params: dict | None = None,
                          probe_trials: int = 200, seed: int = 0) -> dict:
    params = params or {}
    lcl = problem_lcl(problem, delta, params)
    report = analyze_lcl(lcl, delta, problem=problem)
    ing = make_ingredients(problem, delta, params)
    probe = eligibility_probe(ing, probe_trials, seed, delta=min(delta, 4))
    data = report.to_jsonable()
    data["probe"] = probe.to_jsonable()
    data["probed_algorithm"] = ing.name
    return data


# -- output --


def write_csv(path: str, rows: list[dict], meta: dict) -> None:
    """Header row, comma separated, LF endings; metadata columns embedded."""
    if not rows:
        rows = [{}]
    keys = list(rows[0].keys())
    meta_keys = list(meta.keys())
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(keys + meta_keys)
    for row in rows:
        writer.writerow([_csv_cell(row.get(k)) for k in keys] +
                        [_csv_cell(meta[k]) for k in meta_keys])
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())


def _csv_cell(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return value


def write_json(path: str, data: dict) -> None:
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_trace_jsonl(path: str, trace: list[dict]) -> None:
    with open(path, "w") as fh:
        for row in trace:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
