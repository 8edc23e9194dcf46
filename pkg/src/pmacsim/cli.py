"""Command line front end.

Subcommands:
  run         simulate one scenario, print the metrics row
  sweep-nodes repeat a scenario over several node counts
  sweep-freq  run the frequency sweeping mechanisms on the first link
  replay      re-run a recorded trace and verify it matches byte for byte

Exit codes: 0 success, 1 scenario/validation error, 2 simulation contract
violation (including replay divergence).
"""

from __future__ import annotations

import argparse
import sys

from .channel import ChannelConfigError, Medium
from .engine import SimulationError, Simulator
from .metrics import (
    MetricsRow,
    emit_csv,
    replay_trace,
    run_node_sweep,
    run_scenario,
    write_plot_data,
    write_trace,
)
from .scenario import GATEWAY, ScenarioConfig, ScenarioError, load_scenario
from .sweep import FD, INCOMPLETE, TRADITIONAL, run_fd_sweep, run_incomplete_sweep, run_traditional_sweep

SWEEP_CSV_HEADER = "mechanism,n_points,comm_count,best_up,best_down,complete"

_MECHANISM_FLAGS = {"fd": FD, "nxn": TRADITIONAL, "incomplete": INCOMPLETE}


def _row_line(row: MetricsRow) -> str:
    return (f"{row.protocol} nodes={row.node_count} seed={row.seed} "
            f"time={row.networking_time_us} us ({row.networking_time_us / 1e6:.3f} s) "
            f"establish_util={row.establish_util:.4f} data_util={row.data_util:.4f}")


def _cmd_run(args) -> int:
    cfg = _load(args)
    result = run_scenario(cfg)
    print(_row_line(result.row))
    if args.out:
        emit_csv([result.row], args.out)
        print(f"wrote {args.out}")
    if args.trace:
        write_trace(args.trace, cfg, result.trace)
        print(f"wrote {args.trace}")
    if args.plot_data:
        for p in write_plot_data([result.row], args.plot_data):
            print(f"wrote {p}")
    return 0


def _cmd_sweep_nodes(args) -> int:
    cfg = _load(args)
    counts = [int(c) for c in args.counts.split(",") if c.strip()]
    if not counts:
        raise ScenarioError("--counts must list at least one node count")
    results = run_node_sweep(cfg, counts)
    for res in results:
        print(_row_line(res.row))
    rows = [res.row for res in results]
    if args.out:
        emit_csv(rows, args.out)
        print(f"wrote {args.out}")
    if args.plot_data:
        for p in write_plot_data(rows, args.plot_data):
            print(f"wrote {p}")
    return 0


def _cmd_sweep_freq(args) -> int:
    from .scenario import build_plan, build_snr, build_topology

    cfg = _load(args)
    sim = Simulator(cfg.seed)
    topology = build_topology(cfg)
    plan = build_plan(cfg)
    snr = build_snr(cfg, topology, plan)
    medium = Medium(sim, topology, plan, snr, cfg.snr_threshold_db)
    upper = GATEWAY
    lower = topology.neighbors(GATEWAY)[0]
    probe = cfg.sweep_probe_us if cfg.sweep_probe_us is not None else cfg.preamble_slot_us

    wanted = (list(_MECHANISM_FLAGS) if args.mechanism == "all" else [args.mechanism])
    lines = [SWEEP_CSV_HEADER]
    for flag in wanted:
        mech = _MECHANISM_FLAGS[flag]
        if mech == FD:
            gen = run_fd_sweep(medium, upper, lower, probe_us=probe,
                               confirm_us=cfg.data_slot_us)
        elif mech == TRADITIONAL:
            gen = run_traditional_sweep(medium, upper, lower, probe_us=probe,
                                        retune_us=cfg.retune_us)
        else:
            gen = run_incomplete_sweep(medium, upper, lower, probe_us=probe,
                                       confirm_us=cfg.data_slot_us,
                                       retune_us=cfg.retune_us)
        res = sim.run_process(gen)
        print(f"{res.mechanism}: comm_count={res.comm_count} best_up={res.best_up} "
              f"best_down={res.best_down} complete={res.complete}")
        lines.append(f"{res.mechanism},{plan.n_points},{res.comm_count},"
                     f"{res.best_up},{res.best_down},{res.complete}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
        print(f"wrote {args.out}")
    return 0


def _cmd_replay(args) -> int:
    ok, message = replay_trace(args.trace)
    print(message)
    if not ok:
        raise SimulationError("replay diverged from the recorded trace")
    return 0


def _load(args) -> ScenarioConfig:
    cfg = load_scenario(args.scenario)
    if args.seed is not None:
        cfg = ScenarioConfig.from_dict({**cfg.to_dict(), "seed": args.seed})
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pmacsim",
        description="Network establishment simulator: preamble contention vs CSMA/CA "
                    "over frequency-division power line channels.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("scenario", help="scenario file (key = value lines)")
        p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        p.add_argument("--out", default=None, help="write a metrics CSV here")

    p_run = sub.add_parser("run", help="simulate one scenario")
    add_common(p_run)
    p_run.add_argument("--trace", default=None, help="write the full event trace here")
    p_run.add_argument("--plot-data", default=None, metavar="PREFIX",
                       help="write per-figure TSV files with this prefix")
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep-nodes", help="run a scenario over several node counts")
    add_common(p_sweep)
    p_sweep.add_argument("--counts", default="8,16,32,64,128",
                         help="comma separated node counts (default 8,16,32,64,128)")
    p_sweep.add_argument("--plot-data", default=None, metavar="PREFIX",
                         help="write per-figure TSV files with this prefix")
    p_sweep.set_defaults(func=_cmd_sweep_nodes)

    p_freq = sub.add_parser("sweep-freq", help="frequency sweeping on the first gateway link")
    add_common(p_freq)
    p_freq.add_argument("--mechanism", choices=[*_MECHANISM_FLAGS, "all"], default="all")
    p_freq.set_defaults(func=_cmd_sweep_freq)

    p_replay = sub.add_parser("replay", help="verify a recorded trace replays identically")
    p_replay.add_argument("trace", help="trace file written by run --trace")
    p_replay.set_defaults(func=_cmd_replay)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return 1
    except (SimulationError, ChannelConfigError) as exc:
        print(f"simulation error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
