"""Command-line entry point.

Subcommands: topo, gen, analyze, simulate, verify, sweep, flowstats, plot.
Exit codes: 0 success / schedulable / oracle clean; 1 unschedulable flowset or
oracle violation; 2 usage errors; 3 file or schema errors. Every artifact
records the resolved configuration and seed in its comment header, and
identical invocations produce byte-identical artifacts.

Time quantities are cycles everywhere; ``gen`` accepts a microsecond period
range that is converted at a configurable clock at parse time only.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

from . import analysis, harness, plotting, simulator, topology, traffic
from .seeds import derive_seed


def _out_path(name: str | None) -> str | None:
    if name is None:
        return None
    base = os.environ.get("RLNOC_OUT", "")
    if base and not os.path.isabs(name):
        return os.path.join(base, name)
    return name


def _write(path_str: str | None, text: str) -> None:
    if path_str is None:
        sys.stdout.write(text)
    else:
        with open(path_str, "w", encoding="utf-8") as handle:
            handle.write(text)


def _parse_pair(text: str, kind=int) -> tuple:
    parts = text.split(":")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected LO:HI, got {text!r}")
    try:
        return kind(parts[0]), kind(parts[1])
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected numbers, got {text!r}") from None


def _int_pair(text: str) -> tuple[int, int]:
    return _parse_pair(text, int)


def _float_pair(text: str) -> tuple[float, float]:
    return _parse_pair(text, float)


def _grid(text: str) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WxH, got {text!r}") from None


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rlnoc",
        description="Worst-case latency analysis and simulation of routerless "
                    "multi-ring networks-on-chip.",
        epilog="The RLNOC_OUT environment variable prefixes relative output paths.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("topo", help="generate, validate or export a topology")
    p.add_argument("--width", type=int, default=4)
    p.add_argument("--height", type=int, default=4)
    p.add_argument("--load", metavar="FILE", help="load a topology file instead of generating")
    p.add_argument("--validate", action="store_true", help="re-check all invariants")
    p.add_argument("--out", metavar="FILE", help="write the topology document")

    p = sub.add_parser("gen", help="generate a random flowset file")
    p.add_argument("--flows", type=int, required=True)
    p.add_argument("--width", type=int, default=4)
    p.add_argument("--height", type=int, default=4)
    p.add_argument("--packets", type=_int_pair, default=(16, 48), metavar="LO:HI")
    p.add_argument("--periods", type=_int_pair, default=None, metavar="LO:HI",
                   help="period range in cycles (default 1000:100000)")
    p.add_argument("--periods-us", type=_float_pair, default=None, metavar="LO:HI",
                   help="period range in microseconds, converted at --clock-ghz")
    p.add_argument("--clock-ghz", type=float, default=1.0)
    p.add_argument("--jitter", type=_float_pair, default=(0.0, 0.5), metavar="LO:HI",
                   help="release jitter as a fraction of the period")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--embed-topology", action="store_true")
    p.add_argument("--out", metavar="FILE")

    p = sub.add_parser("analyze", help="latency bounds and verdict for a flowset")
    p.add_argument("--flowset", required=True, metavar="FILE")
    p.add_argument("--topology", metavar="FILE")
    p.add_argument("--config", default="0D_IU_SI", help="profile such as 0D_IU_SI or OF_IU_II")
    p.add_argument("--ipos", choices=("tight", "coarse"), default="tight")
    p.add_argument("--diagnostics", action="store_true",
                   help="include interference sets as comment lines")
    p.add_argument("--out", metavar="FILE")

    p = sub.add_parser("simulate", help="run the cycle-accurate simulator")
    p.add_argument("--flowset", required=True, metavar="FILE")
    p.add_argument("--topology", metavar="FILE")
    p.add_argument("--config", default="0D_IU_SI",
                   help="analysis profile the hardware should match")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--horizon", type=int, default=1_000_000)
    p.add_argument("--release", choices=("sporadic", "periodic"), default="sporadic")
    p.add_argument("--trace", metavar="FILE", help="write a cycle-stamped event trace")
    p.add_argument("--out", metavar="FILE")

    p = sub.add_parser("verify", help="analyze, simulate and cross-check the bounds")
    p.add_argument("--flowset", required=True, metavar="FILE")
    p.add_argument("--topology", metavar="FILE")
    p.add_argument("--config", default="0D_IU_SI")
    p.add_argument("--ipos", choices=("tight", "coarse"), default="tight")
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--seed", type=int, default=0, help="master seed for the simulation seeds")
    p.add_argument("--horizon", type=int, default=1_000_000)
    p.add_argument("--out", metavar="FILE", help="write the violation report")

    p = sub.add_parser("sweep", help="schedulability-ratio sweep")
    p.add_argument("--profile", choices=("fast", "full"), default="fast")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--grids", type=_grid, nargs="+", default=None, metavar="WxH")
    p.add_argument("--packets", type=_int_pair, nargs="+", default=None, metavar="LO:HI")
    p.add_argument("--flows", type=int, nargs="+", default=None)
    p.add_argument("--flowsets", type=int, default=None, help="flowsets per point")
    p.add_argument("--configs", nargs="+", default=None)
    p.add_argument("--out", metavar="FILE")

    p = sub.add_parser("flowstats", help="per-flow latency statistics over schedulable flowsets")
    p.add_argument("--mode", choices=("shares", "diff"), required=True)
    p.add_argument("--config", default="0D_IU_SI",
                   help="configuration (the worse one in diff mode)")
    p.add_argument("--config-better", default=None,
                   help="better configuration for diff mode")
    p.add_argument("--flows", type=int, nargs="+", default=(25, 50, 75, 100))
    p.add_argument("--flowsets", type=int, default=1, help="flowsets per point")
    p.add_argument("--grid", type=_grid, default=(4, 4), metavar="WxH")
    p.add_argument("--packets", type=_int_pair, default=(16, 48), metavar="LO:HI")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--attempts", type=int, default=200)
    p.add_argument("--out", metavar="FILE")

    p = sub.add_parser("plot", help="render a sweep or stats CSV as SVG")
    p.add_argument("--csv", required=True, metavar="FILE")
    p.add_argument("--kind", choices=("lines", "boxwhisker"), required=True)
    p.add_argument("--out", metavar="FILE")

    return parser


def _load_flowset(args) -> traffic.Flowset:
    topo = topology.load_topology_file(args.topology) if args.topology else None
    return traffic.load_flowset_file(args.flowset, topo)


def _cmd_topo(args) -> int:
    if args.load:
        topo = topology.load_topology_file(args.load)
    else:
        topo = topology.generate_multi_ring(args.width, args.height)
    if args.validate:
        topology.validate(topo)
        print(f"topology ok: {topo.width}x{topo.height}, {len(topo.rings)} rings")
    if args.out or not args.validate:
        _write(_out_path(args.out), json.dumps(topology.topology_to_doc(topo), indent=2) + "\n")
    return 0


def _cmd_gen(args) -> int:
    if args.periods is not None and args.periods_us is not None:
        print("use either --periods or --periods-us, not both", file=sys.stderr)
        return 2
    if args.periods_us is not None:
        cycles_per_us = 1000.0 * args.clock_ghz
        periods = (int(args.periods_us[0] * cycles_per_us),
                   int(args.periods_us[1] * cycles_per_us))
    else:
        periods = args.periods or (1_000, 100_000)
    params = traffic.BenchmarkParams(
        flows_per_set=args.flows, width=args.width, height=args.height,
        packet_range=args.packets, period_range=periods,
        jitter_fraction_range=args.jitter, seed=args.seed,
    )
    flowset = traffic.generate_flowset(params)
    doc = traffic.flowset_to_doc(flowset, seed=args.seed,
                                 embed_topology=args.embed_topology)
    _write(_out_path(args.out), json.dumps(doc, indent=2) + "\n")
    return 0


def _cmd_analyze(args) -> int:
    flowset = _load_flowset(args)
    config = analysis.parse_profile(args.config, ipos_formula=args.ipos)
    result = analysis.analyze(flowset, config)
    diagnostics = traffic.interference_table(flowset) if args.diagnostics else None
    _write(_out_path(args.out),
           analysis.results_to_csv(result, config, diagnostics=diagnostics))
    if not result.schedulable:
        print(f"verdict: {result.verdict}"
              + (f" (flow {result.failing_flow})" if result.failing_flow else ""),
              file=sys.stderr)
        return 1
    return 0


def _cmd_simulate(args) -> int:
    flowset = _load_flowset(args)
    config = analysis.parse_profile(args.config)
    hw = simulator.hardware_from_config(config)
    cfg = simulator.SimConfig(seed=args.seed, horizon=args.horizon,
                              release=args.release,
                              collect_trace=args.trace is not None)
    outcome = simulator.simulate(flowset, cfg, hw)
    _write(_out_path(args.out), simulator.outcome_to_csv(outcome, cfg, hw))
    if args.trace:
        lines = [" ".join(str(part) for part in event) for event in outcome.trace]
        _write(_out_path(args.trace), "\n".join(lines) + "\n")
    return 0


def _cmd_verify(args) -> int:
    flowset = _load_flowset(args)
    config = analysis.parse_profile(args.config, ipos_formula=args.ipos)
    result = analysis.analyze(flowset, config)
    lines = [f"# config={analysis.profile_name(config)} seeds={args.seeds} "
             f"horizon={args.horizon} master_seed={args.seed}"]
    if not result.schedulable:
        lines.append(f"verdict {result.verdict}"
                     + (f" flow {result.failing_flow}" if result.failing_flow else ""))
        _write(_out_path(args.out), "\n".join(lines) + "\n")
        print("flowset is not schedulable; nothing to verify", file=sys.stderr)
        return 1
    hw = simulator.hardware_from_config(config)
    violations = 0
    for index in range(args.seeds):
        release = "sporadic" if index % 2 == 0 else "periodic"
        cfg = simulator.SimConfig(seed=derive_seed(args.seed, "sim", index),
                                  horizon=args.horizon, release=release)
        outcome = simulator.simulate(flowset, cfg, hw)
        report = simulator.oracle_check(flowset, result, outcome)
        for v in report.violations:
            violations += 1
            lines.append(f"violation seed_index={index} flow={v.flow} kind={v.kind} "
                         f"observed={v.observed} limit={v.limit}")
    lines.append(f"checked {args.seeds} runs: "
                 + ("ok" if violations == 0 else f"{violations} violations"))
    _write(_out_path(args.out), "\n".join(lines) + "\n")
    return 0 if violations == 0 else 1


def _cmd_sweep(args) -> int:
    spec = harness.FAST_PROFILE if args.profile == "fast" else harness.FULL_PROFILE
    overrides = {"master_seed": args.seed}
    if args.grids:
        overrides["grids"] = tuple(args.grids)
    if args.packets:
        overrides["packet_ranges"] = tuple(args.packets)
    if args.flows:
        overrides["flows_schedule"] = tuple(args.flows)
    if args.flowsets:
        overrides["flowsets_per_point"] = args.flowsets
    if args.configs:
        overrides["configs"] = tuple(args.configs)
    spec = replace(spec, **overrides)
    rows = harness.sweep_schedulability(spec)
    _write(_out_path(args.out), harness.sweep_to_csv(rows, spec))
    return 0


def _cmd_flowstats(args) -> int:
    config = analysis.parse_profile(args.config)
    families: dict[int, list[traffic.Flowset]] = {}
    search_config = config
    if args.mode == "diff":
        if not args.config_better:
            print("diff mode needs --config-better", file=sys.stderr)
            return 2
        better = analysis.parse_profile(args.config_better)
    for flows in args.flows:
        family = []
        for index in range(args.flowsets):
            params = traffic.BenchmarkParams(
                flows_per_set=flows, width=args.grid[0], height=args.grid[1],
                packet_range=args.packets,
            )
            flowset, _, _ = harness.find_schedulable_flowset(
                params, search_config, derive_seed(args.seed, flows, index),
                max_attempts=args.attempts,
            )
            family.append(flowset)
        families[flows] = family
    if args.mode == "shares":
        rows = harness.component_share_stats(families, config)
        note = f"shares config={analysis.profile_name(config)} seed={args.seed}"
    else:
        rows = harness.percent_difference_stats(families, config, better)
        note = (f"diff worse={analysis.profile_name(config)} "
                f"better={analysis.profile_name(better)} seed={args.seed}")
    _write(_out_path(args.out), harness.stats_to_csv(rows, note))
    return 0


def _cmd_plot(args) -> int:
    with open(args.csv, "r", encoding="utf-8") as handle:
        text = handle.read()
    _write(_out_path(args.out), plotting.render_plot(text, args.kind))
    return 0


_COMMANDS = {
    "topo": _cmd_topo,
    "gen": _cmd_gen,
    "analyze": _cmd_analyze,
    "simulate": _cmd_simulate,
    "verify": _cmd_verify,
    "sweep": _cmd_sweep,
    "flowstats": _cmd_flowstats,
    "plot": _cmd_plot,
}

_FILE_ERRORS = (OSError, json.JSONDecodeError, topology.TopologyError,
                traffic.TrafficError, plotting.PlotError,
                harness.NoSchedulableFlowsetError)


def run(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except analysis.AnalysisError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except _FILE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
