"""Command-line frontend wiring the pipeline end to end.

Subcommands mirror the pipeline stages so each artifact lands on disk:
gen -> prep -> train-forecast -> train-agent / tune-weights -> simulate ->
evaluate -> compare. Exit codes: 0 success, 1 validation error, 2 runtime
error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import agent as agent_mod
from . import forecast as forecast_mod
from . import optimize as optimize_mod
from . import report as report_mod
from . import simenv, trace as trace_mod
from .config import ConfigError, RunConfig, load_config


class _UsageError(SystemExit):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad usage; the CLI contract reserves 2 for runtime errors
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cloudalloc", description=__doc__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="path to the run-config JSON")
        p.add_argument("--out", default=None, help="output directory (default: config output_dir)")
        p.add_argument("--seed", type=int, default=None, help="override the config master seed")
        return p

    add("gen", "generate a synthetic tidal workload trace CSV")

    p = add("prep", "clean, resample, and normalize a trace")
    p.add_argument("--trace", required=True, help="input trace CSV")

    p = add("train-forecast", "train the LSTM demand forecaster")
    p.add_argument("--data", required=True, help="preprocessed trace CSV")
    p.add_argument("--scaler", default=None, help="scaler.json from prep (embedded in checkpoint)")

    p = add("train-agent", "train the double-DQN scheduling agent")
    p.add_argument("--data", required=True, help="preprocessed trace CSV")

    p = add("tune-weights", "PSO-tune the objective weights on simulation outcomes")
    p.add_argument("--data", required=True, help="preprocessed trace CSV")

    p = add("simulate", "run one policy over a trace")
    p.add_argument("--data", required=True, help="preprocessed trace CSV")
    p.add_argument(
        "--policy",
        choices=["static", "threshold", "dqn"],
        default="static",
        help="scheduling policy",
    )
    p.add_argument("--agent", default=None, help="agent checkpoint (required for --policy dqn)")

    p = add("evaluate", "aggregate an episode into a report with plots")
    p.add_argument("--episode", required=True, help="episode_detail.json from simulate")
    p.add_argument("--policy-name", default=None, help="label recorded in the report")

    p = sub.add_parser("compare", help="relative changes between two reports")
    p.add_argument("--baseline", required=True)
    p.add_argument("--candidate", required=True)
    p.add_argument("--out", default=None)
    return parser


def _load(args) -> tuple[RunConfig, Path]:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.trace.seed = args.seed
        cfg.forecast.train.seed = args.seed
    out = Path(args.out) if args.out else Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return cfg, out


def _require_file(path, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise ConfigError([(what, f"file not found: {p}")])
    return p


def _read_frame(path) -> trace_mod.TraceFrame:
    return trace_mod.ingest_csv(_require_file(path, "data"))


def _write_json(path, doc) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _cmd_gen(args) -> int:
    cfg, out = _load(args)
    if cfg.trace_input_path is not None:
        frame = _read_frame(cfg.trace_input_path)
    else:
        frame = trace_mod.generate_workload(cfg.trace)
    path = out / "trace.csv"
    trace_mod.write_csv(frame, path)
    print(f"wrote {path} ({frame.n_ticks} ticks)")
    return 0


def _cmd_prep(args) -> int:
    cfg, out = _load(args)
    frame = _read_frame(args.trace)
    normalized, scaler, removed = trace_mod.preprocess(frame, alpha=cfg.preprocessing_alpha)
    trace_mod.write_csv(normalized, out / "prep.csv")
    _write_json(out / "scaler.json", scaler.to_dict())
    _write_json(out / "prep_stats.json", {"removed_outliers": removed})
    print(f"wrote {out / 'prep.csv'} (removed {sum(removed.values())} outliers)")
    return 0


def _cmd_train_forecast(args) -> int:
    cfg, out = _load(args)
    frame = _read_frame(args.data)
    fc = cfg.forecast
    dataset = trace_mod.make_windows(frame, fc.window_len, fc.horizon, fc.target_metric)
    train_set, test_set = trace_mod.split_train_test(dataset, fc.split_ratio)
    model = forecast_mod.init_model(
        layer_sizes=fc.layer_sizes,
        horizon=fc.horizon,
        seed=cfg.seed,
        dense_sizes=fc.dense_sizes,
        dropout_rate=fc.dropout_rate,
    )
    if args.scaler:
        with open(_require_file(args.scaler, "scaler"), "r", encoding="utf-8") as fh:
            model.scaler = trace_mod.ScalerParams.from_dict(json.load(fh))
    model, curve = forecast_mod.train(model, train_set, fc.train)
    metrics = forecast_mod.evaluate(model, test_set)
    forecast_mod.save_model(model, out / "forecast_model.json")
    with open(out / "loss_curve.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("epoch,mean_loss\n")
        for i, loss in enumerate(curve):
            fh.write(f"{i},{repr(float(loss))}\n")
    _write_json(
        out / "forecast_metrics.json",
        {
            "rmse": metrics.rmse,
            "mape_pct": metrics.mape,
            "n_evaluated": metrics.n_evaluated,
            "n_excluded_zero_targets": metrics.n_excluded_zero_targets,
        },
    )
    print(f"trained forecaster: rmse={metrics.rmse:.4f} mape={metrics.mape:.2f}%")
    return 0


def _cmd_train_agent(args) -> int:
    cfg, out = _load(args)
    frame = _read_frame(args.data)
    q, log = agent_mod.train_agent(
        frame, cfg.cluster, cfg.constraints, cfg.reward_weights, cfg.agent, cfg.seed
    )
    agent_mod.save_agent(
        q,
        out / "agent.json",
        epsilon_final=cfg.agent.epsilon_final,
        gamma=cfg.agent.gamma,
        weights=cfg.reward_weights,
    )
    with open(out / "training_log.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("episode,return\n")
        for i, ret in enumerate(log):
            fh.write(f"{i},{repr(float(ret))}\n")
    print(f"trained agent over {len(log)} episodes; final return {log[-1]:.2f}" if log else "trained agent (0 episodes)")
    return 0


def _cmd_tune_weights(args) -> int:
    cfg, out = _load(args)
    frame = _read_frame(args.data)
    hp = cfg.agent
    short = agent_mod.AgentHyperparams(
        gamma=hp.gamma,
        buffer_capacity=hp.buffer_capacity,
        batch_size=hp.batch_size,
        sync_every=hp.sync_every,
        lr=hp.lr,
        hidden_sizes=hp.hidden_sizes,
        episodes=1,
        warmup_steps=hp.warmup_steps,
    )
    max_vms = cfg.cluster.n_nodes * int(cfg.cluster.node_cpu // cfg.cluster.vm_cores)

    def harness(triple):
        # score = normalized cost + 10 * SLA-violation rate, minimized
        w = agent_mod.RewardWeights(*triple)
        q, _ = agent_mod.train_agent(frame, cfg.cluster, cfg.constraints, w, short, cfg.seed)
        run = simenv.run_episode(
            frame,
            agent_mod.DqnPolicy(q),
            cfg.constraints,
            seed=cfg.seed,
            cfg=cfg.cluster,
            reward_weights=w,
        )
        cost = float(np.mean(run.active_vms)) / max_vms if max_vms else 0.0
        sla = report_mod.sla_rate(run.latency_ms, cfg.constraints.p99_latency_max)
        return cost + 10.0 * (1.0 - sla)

    weights, history = optimize_mod.tune_objective_weights(
        harness, cfg.objective.pso, return_history=True
    )
    _write_json(out / "objective_weights.json", {"weights": list(weights.as_tuple())})
    optimize_mod.write_tuning_log(out / "tuning_log.csv", history, weights)
    print(f"tuned weights: {weights.as_tuple()}")
    return 0


def _cmd_simulate(args) -> int:
    cfg, out = _load(args)
    frame = _read_frame(args.data)
    if args.policy == "static":
        policy = agent_mod.baseline_policy("static")
        name = "static"
    elif args.policy == "threshold":
        policy = agent_mod.baseline_policy("threshold_reactive", cfg.constraints)
        name = "threshold_reactive"
    else:
        if not args.agent:
            raise ConfigError([("agent", "--agent checkpoint required for --policy dqn")])
        q, _ = agent_mod.load_agent(_require_file(args.agent, "agent"))
        policy = agent_mod.DqnPolicy(q)
        name = "dqn"
    run = simenv.run_episode(
        frame,
        policy,
        cfg.constraints,
        seed=cfg.seed,
        cfg=cfg.cluster,
        reward_weights=cfg.reward_weights,
    )
    run.write_csv(out / "episode.csv")
    _write_json(
        out / "episode_detail.json",
        {"policy": name, "seed": cfg.seed, "trace": run.to_dict()},
    )
    print(f"simulated {len(run)} ticks under {name}")
    return 0


def _cmd_evaluate(args) -> int:
    cfg, out = _load(args)
    with open(_require_file(args.episode, "episode"), "r", encoding="utf-8") as fh:
        detail = json.load(fh)
    run = simenv.EpisodeTrace.from_dict(detail["trace"])
    rep = report_mod.build_run_report(
        run,
        sla_bound_ms=cfg.constraints.p99_latency_max,
        rates=cfg.costs,
        policy=args.policy_name or detail.get("policy", "unknown"),
        seed=detail.get("seed", cfg.seed),
    )
    path = report_mod.emit_report(rep, out, run)
    print(f"wrote {path}")
    return 0


def _cmd_compare(args) -> int:
    out = Path(args.out) if args.out else Path(".")
    out.mkdir(parents=True, exist_ok=True)

    def read_report(path, what):
        with open(_require_file(path, what), "r", encoding="utf-8") as fh:
            return report_mod.RunReport.from_dict(json.load(fh))

    baseline = read_report(args.baseline, "baseline")
    candidate = read_report(args.candidate, "candidate")
    cmp = report_mod.compare_runs(baseline, candidate)
    _write_json(out / "comparison.json", cmp.to_dict())
    for name, (b, c, r) in cmp.metrics.items():
        print(f"{name}: {b:.4g} -> {c:.4g} ({r:+.1f}%)")
    return 0


_COMMANDS = {
    "gen": _cmd_gen,
    "prep": _cmd_prep,
    "train-forecast": _cmd_train_forecast,
    "train-agent": _cmd_train_agent,
    "tune-weights": _cmd_tune_weights,
    "simulate": _cmd_simulate,
    "evaluate": _cmd_evaluate,
    "compare": _cmd_compare,
}


def run_command(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if not args.command:
        parser.print_usage(sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        for path, msg in exc.violations:
            print(f"config error: {path}: {msg}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except json.JSONDecodeError as exc:
        print(f"error: invalid JSON: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
