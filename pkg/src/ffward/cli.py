"""Command-line entry point: ``ffward <command> ...``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import bench
from .dmvf import DmvfConfig, run_dmvf
from .features import SynthConfig, apply_desync, generate_scene, identical_views, read_dataset, write_dataset
from .ffagent import RewardParams, Strategy, TrainConfig, save_policy, train
from .graph import CommGraph, read_edgelist
from .mffnet import ControllerConfig, train_dqn_controller, run_mffnet
from .netsim import CENTRAL, P2P, ChannelConfig, make_channel
from .report import RunReport
from .simkernel import SimParams

log = logging.getLogger("ffward")


def _write_report(report: RunReport, out: str | None) -> None:
    if out:
        report.write(out)
        log.info("wrote %s", out)
    else:
        sys.stdout.write(report.to_text())


def cmd_synth(a) -> int:
    cfg = SynthConfig(num_views=a.views, length=a.length, dim=a.dim, num_events=a.events,
                      event_duration=tuple(a.event_duration), overlap=a.overlap, noise_std=a.noise, seed=a.seed)
    ds = generate_scene(cfg)
    if a.identical:
        ds = identical_views(ds)
    for item in a.desync or []:
        view, _, offset = item.partition(":")
        ds = apply_desync(ds, int(view), int(offset))
    write_dataset(ds, a.out)
    log.info("wrote %s (%d views x %d frames, D=%d)", a.out, ds.num_views, ds.length, ds.dim)
    return 0


def cmd_train(a) -> int:
    ds = read_dataset(a.data)
    params = RewardParams(beta=a.beta, gamma=a.gamma)
    cfg = TrainConfig(episodes=a.episodes, seed=a.seed)
    if a.strategy == "controller":
        if not a.policies:
            raise SystemExit("--policies is required to train the controller")
        ctrl = train_dqn_controller(ds, bench.load_policies(a.policies), cfg, alpha_red=a.alpha_red)
        ctrl.save(a.out)
    else:
        save_policy(train(ds.views, Strategy.parse(a.strategy), params, cfg), a.out)
    log.info("wrote %s", a.out)
    return 0


def _channel(a, topology: str):
    return make_channel(ChannelConfig(a.loss, a.channel_seed, topology), a.transport)


def cmd_run_dmvf(a) -> int:
    ds = read_dataset(a.data)
    graph = (read_edgelist(a.graph, ds.num_views) if Path(a.graph).is_file()
             else CommGraph.named(a.graph, ds.num_views))
    cfg = DmvfConfig(period=a.period, sim=SimParams(rho=a.rho), evaluator_weight=a.evaluator_weight)
    with _channel(a, P2P) as ch:
        rep = run_dmvf(ds, graph, bench.load_policies(a.policies), cfg, ch, periods=a.periods)
    _write_report(rep, a.out)
    return 0


def cmd_run_mffnet(a) -> int:
    ds = read_dataset(a.data)
    cfg = ControllerConfig(sim=SimParams(rho=a.rho), tau=a.tau, period=a.period)
    controller = bench.load_controller(a.policies) if a.controller == "dqn" else None
    with _channel(a, CENTRAL) as ch:
        rep = run_mffnet(ds, bench.load_policies(a.policies), cfg, ch, controller=controller, periods=a.periods)
    _write_report(rep, a.out)
    return 0


def cmd_evaluate(a) -> int:
    rep = RunReport.read(a.report)
    ds = read_dataset(a.data)
    sys.stdout.write(bench.evaluate(rep, ds, a.window).to_text())
    return 0


def cmd_sweep_rho(a) -> int:
    ds = read_dataset(a.data)
    rows = bench.sweep_rho(ds, bench.load_policies(a.policies), a.rho, ControllerConfig(tau=a.tau))
    text = bench.sweep_csv(rows)
    if a.out:
        Path(a.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_bench(a) -> int:
    rows = bench.run_matrix(a.config, a.out)
    log.info("%d cells written under %s", len(rows), a.out)
    print(bench.format_table(rows))
    return 0


def cmd_report(a) -> int:
    print(bench.format_table(bench.read_comparison(a.dir)))
    return 0


def _add_channel_args(p) -> None:
    p.add_argument("--loss", type=float, default=0.0, help="packet loss probability")
    p.add_argument("--channel-seed", type=int, default=0)
    p.add_argument("--transport", choices=["inproc", "socket"], default="inproc")
    p.add_argument("--period", type=int, default=100, help="adaptation period in frames")
    p.add_argument("--periods", type=int, default=None, help="stop after this many periods")
    p.add_argument("--out", help="report file (stdout when omitted)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ffward", description="Multi-agent video fast-forwarding toolkit")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic multi-view scene")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--views", type=int, default=SynthConfig.num_views)
    p.add_argument("--length", type=int, default=SynthConfig.length)
    p.add_argument("--dim", type=int, default=SynthConfig.dim)
    p.add_argument("--events", type=int, default=SynthConfig.num_events)
    p.add_argument("--event-duration", type=int, nargs=2, metavar=("MIN", "MAX"),
                   default=list(SynthConfig.event_duration))
    p.add_argument("--overlap", type=float, default=SynthConfig.overlap)
    p.add_argument("--noise", type=float, default=SynthConfig.noise_std)
    p.add_argument("--identical", action="store_true", help="copy view 0 into every view")
    p.add_argument("--desync", action="append", metavar="VIEW:OFFSET", help="shift one view (repeatable)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a skip policy or the learned controller")
    p.add_argument("--strategy", required=True, choices=["slow", "normal", "fast", "controller"])
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--episodes", type=int, default=bench.STANDARD_EPISODES)
    p.add_argument("--beta", type=float, default=0.8)
    p.add_argument("--gamma", type=float, default=0.8)
    p.add_argument("--policies", help="policy directory (controller training only)")
    p.add_argument("--alpha-red", type=float, default=0.0, help="redundancy weight of the controller reward")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("run-dmvf", help="distributed run over a communication graph")
    p.add_argument("--data", required=True)
    p.add_argument("--graph", default="complete", help="edge-list file or complete/path/ring")
    p.add_argument("--policies", required=True)
    p.add_argument("--rho", type=float, default=0.525)
    p.add_argument("--evaluator-weight", choices=["closed_degree", "uniform"], default="closed_degree")
    _add_channel_args(p)
    p.set_defaults(func=cmd_run_dmvf)

    p = sub.add_parser("run-mffnet", help="centralized controller run")
    p.add_argument("--data", required=True)
    p.add_argument("--policies", required=True)
    p.add_argument("--rho", type=float, default=0.525)
    p.add_argument("--tau", type=float, default=0.4)
    p.add_argument("--controller", choices=["heuristic", "dqn"], default="heuristic")
    _add_channel_args(p)
    p.set_defaults(func=cmd_run_mffnet)

    p = sub.add_parser("evaluate", help="coverage and processing rate of one run report")
    p.add_argument("report")
    p.add_argument("--data", required=True)
    p.add_argument("--window", type=int, default=bench.EVAL_WINDOW)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep-rho", help="coverage/rate trade-off over match thresholds")
    p.add_argument("--data", required=True)
    p.add_argument("--policies", required=True)
    p.add_argument("--rho", type=float, nargs="+", required=True)
    p.add_argument("--tau", type=float, default=0.4)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep_rho)

    p = sub.add_parser("bench", help="run an experiment matrix from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("report", help="print the comparison table of a bench output directory")
    p.add_argument("dir")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (bench.UnknownMethodError, bench.MissingCheckpointError, FileNotFoundError, ValueError) as exc:
        print(f"ffward: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
