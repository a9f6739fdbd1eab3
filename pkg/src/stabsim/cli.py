"""Command-line front end.

Subcommands: run, scale, mix, check-eligibility.  A JSON config file seeds
the experiment commands; flags override file fields.  Exit codes: 0 success,
1 config error, 2 acceptance-assertion failure, 3 timeouts present.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .harness import (
    ConfigError,
    ExperimentConfig,
    cmd_check_eligibility,
    cmd_mix,
    cmd_run,
    cmd_scale,
    write_csv,
    write_json,
)


def _load_config(args) -> ExperimentConfig:
    data = {}
    if args.config:
        with open(args.config) as fh:
            data = json.load(fh)
    overrides = {
        "problem": args.problem,
        "delta": args.delta,
        "k": getattr(args, "k", None),
        "trials": args.trials,
        "seed": args.seed,
        "batches": getattr(args, "batches", None),
        "max_rounds": args.max_rounds,
        "confirm_window": args.confirm_window,
        "workers": args.workers,
        "region": args.region,
    }
    for key, val in overrides.items():
        if val is not None:
            data[key] = val
    if getattr(args, "k_list", None):
        data["k_list"] = [int(x) for x in args.k_list.split(",")]
    if args.graph:
        data["graph"] = json.loads(args.graph)
    if args.params:
        data["params"] = json.loads(args.params)
    return ExperimentConfig.from_dict(data)


def _experiment_flags(sub, k_flag: bool):
    sub.add_argument("--config", help="JSON config file")
    sub.add_argument("--problem")
    sub.add_argument("--graph", help='graph spec JSON, e.g. \'{"generator":"cycle","n":64}\'')
    sub.add_argument("--params", help="problem parameter JSON, e.g. '{\"c\":3}'")
    sub.add_argument("--delta", type=int)
    if k_flag:
        sub.add_argument("--k", type=int)
        sub.add_argument("--batches", type=int)
    else:
        sub.add_argument("--k-list", dest="k_list", help="comma-separated k values")
        sub.add_argument("--batches", type=int)
    sub.add_argument("--trials", type=int)
    sub.add_argument("--seed", type=int)
    sub.add_argument("--max-rounds", dest="max_rounds", type=int)
    sub.add_argument("--confirm-window", dest="confirm_window", type=int)
    sub.add_argument("--workers", type=int)
    sub.add_argument("--region", choices=["on", "off", "auto"])
    sub.add_argument("--out", help="output path (.csv or .json by --format)")
    sub.add_argument("--format", choices=["csv", "json"], default="csv")
    sub.add_argument("--plot", action="store_true",
                     help="render a figure next to the output file")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="stabsim",
        description="Self-stabilizing LCL algorithm simulator and experiment harness",
    )
    subs = ap.add_subparsers(dest="command", required=True)

    run = subs.add_parser("run", help="single (problem, graph, k) experiment")
    _experiment_flags(run, k_flag=True)
    run.add_argument("--trace", help="write a JSON-lines round trace of trial 0")

    scale = subs.add_parser("scale", help="sweep over k values with fits")
    _experiment_flags(scale, k_flag=False)

    mix = subs.add_parser("mix", help="empirical step-counter distribution")
    mix.add_argument("--phi", type=int, default=4)
    mix.add_argument("--warmup", type=int, default=500)
    mix.add_argument("--samples", type=int, default=1_000_000)
    mix.add_argument("--seed", type=int, default=0)
    mix.add_argument("--out")
    mix.add_argument("--plot", action="store_true")

    chk = subs.add_parser("check-eligibility", help="structural LCL analysis")
    chk.add_argument("--problem", required=True)
    chk.add_argument("--delta", type=int, default=4)
    chk.add_argument("--params", help="problem parameter JSON")
    chk.add_argument("--probe-trials", dest="probe_trials", type=int, default=200)
    chk.add_argument("--seed", type=int, default=0)
    chk.add_argument("--out")
    return ap


def _emit(args, rows, meta, result) -> None:
    if not args.out:
        print(json.dumps(result, indent=2, sort_keys=True, default=str))
        return
    if args.format == "json":
        write_json(args.out, result)
    else:
        write_csv(args.out, rows, meta)
        stem, _ = os.path.splitext(args.out)
        write_json(stem + ".meta.json", result)
    if getattr(args, "plot", False):
        from . import plotting

        stem, _ = os.path.splitext(args.out)
        if args.command == "scale":
            plotting.render_scale(result, stem + ".png")
        elif args.command == "mix":
            plotting.render_mix(result, stem + ".png")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            cfg = _load_config(args)
            if args.trace:
                _write_trace(cfg, args.trace)
            result = cmd_run(cfg)
            meta = {"config_hash": result["config_hash"], "master_seed": result["seed"]}
            _emit(args, result["records"], meta, result)
            agg = result["aggregate"]
            print(
                f"run: {cfg.problem} k={cfg.k} trials={agg['trials']} "
                f"mean_T={agg.get('mean_T')} timeouts={agg['timeouts']} "
                f"locality_violations={agg['locality_violations']}"
            )
            if agg["timeouts"]:
                return 3
            if not agg["all_legal"] or agg["locality_violations"]:
                return 2
            return 0
        if args.command == "scale":
            cfg = _load_config(args)
            result = cmd_scale(cfg)
            meta = {"config_hash": result["config_hash"], "master_seed": result["seed"]}
            _emit(args, result["rows"], meta, result)
            print(json.dumps(result["fits"], indent=2, sort_keys=True))
            if any(r["timeouts"] for r in result["rows"]):
                return 3
            if any(not r["all_legal"] or r["locality_violations"] for r in result["rows"]):
                return 2
            return 0
        if args.command == "mix":
            result = cmd_mix(args.phi, args.warmup, args.samples, args.seed)
            args.format = "csv"
            args.command = "mix"
            _emit(args, result["rows"], {"phi": result["phi"], "seed": result["seed"]}, result)
            return 0
        if args.command == "check-eligibility":
            params = json.loads(args.params) if args.params else {}
            result = cmd_check_eligibility(
                args.problem, args.delta, params, args.probe_trials, args.seed
            )
            if args.out:
                write_json(args.out, result)
            else:
                print(json.dumps(result, indent=2, sort_keys=True))
            return 0
        raise ConfigError(f"unknown command {args.command!r}")
    except (ConfigError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _write_trace(cfg: ExperimentConfig, path: str) -> None:
    """Round trace of a single trial (trial 0) for inspection."""
    from .engine import Network, Timeout, random_fault_schedule, run_until_stable
    from .graph import Configuration
    from .harness import (
        build_graph_spec,
        master_seed_for,
        prepare_initial_config,
        write_trace_jsonl,
    )
    from .registry import make_algorithm

    init = prepare_initial_config(cfg)
    g = build_graph_spec(cfg.graph, cfg.delta)
    alg = make_algorithm(cfg.problem, cfg.delta, cfg.params)
    net = Network(g, alg, master_seed_for(cfg, "trial0/k%d" % cfg.k), record_trace=True)
    alg.load_config(net, Configuration(alg.kind, dict(init.assignment)))
    if cfg.k > 0:
        net.add_schedule(
            random_fault_schedule(g, cfg.k, cfg.batches, net.master_seed,
                                  start_round=net.round, kinds=cfg.fault_kinds)
        )
    try:
        run_until_stable(net, cfg.max_rounds, cfg.confirm_window or alg.confirm_window)
    except Timeout:
        pass
    write_trace_jsonl(path, net.trace)


if __name__ == "__main__":
    sys.exit(main())
