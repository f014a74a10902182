"""Command line entry point: ``fcdspeed <subcommand>``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import compare, fcdsim, pipeline, segspeed
from .pipeline import MissingArtifactError, PipelineConfig
from .roadgraph import GraphError, load_graph
from .spotbin import ProbeSet

log = logging.getLogger("fcdspeed")


def _config(args) -> PipelineConfig:
    if not args.config:
        raise SystemExit("error: --config is required for this subcommand")
    cfg = pipeline.load_config(args.config)
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.jobs is not None:
        over["jobs"] = args.jobs
    if getattr(args, "filter", None):
        over["filter"] = segspeed.FilterPolicy(interpretation=args.filter)
    if getattr(args, "normalize_freeflow", None):
        over["normalize_freeflow"] = args.normalize_freeflow == "on"
    if getattr(args, "keep_filtered", False):
        over["keep_filtered"] = True
    if getattr(args, "maxspeed_policy", None):
        over["maxspeed_policy"] = args.maxspeed_policy
    return replace(cfg, **over)


def cmd_bin(args):
    stats = pipeline.run_stage("bin", _config(args)) if not args.day else pipeline.stage_bin(_config(args), args.day)
    for day, s in stats.items():
        print(f"{day}: binned {s.n_binned} of {s.n_input} probes "
              f"({s.n_out_of_box} outside the box, {s.n_rejected} rejected)")


def cmd_aggregate(args):
    days = pipeline.run_stage("dp01", _config(args))
    print(f"aggregated {len(days)} day(s)")


def cmd_join(args):
    cfg = _config(args)
    graph = pipeline.run_stage("dp03-load", cfg)
    mapping = pipeline.run_stage("dp04", cfg)
    n = sum(len(v) for v in mapping.values())
    print(f"{len(graph)} edges, {n} directed cell entries")


def cmd_cluster(args):
    clusters = pipeline.run_stage("dp02", _config(args))
    print(f"clustered {clusters.shape[0] * clusters.shape[1] * clusters.shape[2]} directed cells")


def cmd_freeflow(args):
    ff = pipeline.run_stage("dp05", _config(args))
    print(f"free flow for {len(ff)} edges")


def cmd_speeds(args):
    written = pipeline.run_stage("dp06", _config(args))
    for day, n in written.items():
        print(f"{day}: {n} segment records")


def cmd_stage(args):
    pipeline.run_stage(args.stage, _config(args))
    print(f"{args.stage} done")


def cmd_simulate(args):
    scenario = fcdsim.load_scenario(args.scenario)
    graph = load_graph(args.graph)
    if args.config:
        grid = _config(args).grid
    else:
        from .grid import config_from_dict

        grid = config_from_dict(scenario["grid"])[0]
    fleets = scenario.get("fleets", [scenario] if "vehicles" in scenario else [])
    parts = []
    for i, f in enumerate(fleets):
        spec = fcdsim.FleetSpec.from_dict({k: v for k, v in f.items() if k not in ("grid", "day", "fleets")})
        if args.seed is not None:
            spec.seed = args.seed + i
        parts.append(fcdsim.simulate_probes(spec, graph, grid))
    probes = ProbeSet.concat(parts)
    probes.to_csv(args.out)
    print(f"wrote {len(probes)} probes to {args.out}")


def cmd_compare(args):
    a = compare.load_speed_frame(args.a)
    b = compare.load_speed_frame(args.b)
    attrs = None
    if args.graph:
        mapping = None
        if args.mapping:
            from .sjoin import read_mapping

            mapping = read_mapping(args.mapping)
        attrs = compare.edge_attributes(load_graph(args.graph), mapping)
    pairs = compare.match(a, b, hour_mean=args.hour_mean, attributes=attrs)
    stats = compare.diff_stats(pairs, args.group_by)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    compare.write_frame(stats, out / f"diff_stats_by_{args.group_by}.csv")
    hist = compare.diff_histogram(pairs)
    compare.write_frame(hist, out / "diff_histogram.csv")
    report = compare.text_report(stats, args.group_by, len(pairs))
    (out / "report.txt").write_text(report)
    if not args.no_figures:
        from . import plotting

        plotting.plot_diff_histogram(hist, out / "diff_histogram.png")
        if len(stats):
            plotting.plot_group_stats(stats, args.group_by, out / f"diff_stats_by_{args.group_by}.png")
    print(report, end="")


def cmd_demo(args):
    from .demo import format_report, run_demo

    t0 = time.perf_counter()
    summary = run_demo(args.out, seed=args.seed or 0, n_days=args.days, figures=not args.no_figures,
                       jobs=args.jobs or 1)
    print(format_report(summary), end="")
    print(f"demo finished in {time.perf_counter() - t0:.1f} s; artifacts in {args.out}")
    verdicts = [summary["spotbin_oracle"], summary["harmonic"]["verdict"], summary["harmonic"]["equal_counts_verdict"],
                summary["coverage"]["verdict"], summary["filter"]["verdict"], summary["compare_self_join"]["verdict"]]
    return 0 if all(v == "PASS" for v in verdicts) else 1


def _common(suppress: bool) -> argparse.ArgumentParser:
    # subcommands must not reset values given before the subcommand name
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=d(None), help="pipeline config JSON")
    common.add_argument("--seed", type=int, default=d(None))
    common.add_argument("--jobs", type=int, default=d(None), help="worker processes for join/cluster")
    common.add_argument("-v", "--verbose", action="store_true", default=d(False))
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common(suppress=True)
    p = argparse.ArgumentParser(prog="fcdspeed", description="GPS probe spot binning to road segment speeds",
                                parents=[_common(suppress=False)])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("bin", parents=[common], help="bin probe CSVs into movies")
    s.add_argument("--day", nargs="*", help="only these days")
    s.set_defaults(func=cmd_bin)

    s = sub.add_parser("aggregate", parents=[common], help="dp01: 5-min movies to 15-min")
    s.set_defaults(func=cmd_aggregate)

    s = sub.add_parser("join", parents=[common], help="dp03 load + dp04 spatial join")
    s.add_argument("--maxspeed-policy", choices=("mean", "max"))
    s.set_defaults(func=cmd_join)

    s = sub.add_parser("cluster", parents=[common], help="dp02: per-cell speed clusters")
    s.set_defaults(func=cmd_cluster)

    s = sub.add_parser("freeflow", parents=[common], help="dp05: per-edge free flow")
    s.set_defaults(func=cmd_freeflow)

    s = sub.add_parser("speeds", parents=[common], help="dp06: segment speeds + confidence filter")
    s.add_argument("--filter", choices=("paired", "verbatim", "off"))
    s.add_argument("--normalize-freeflow", choices=("on", "off"))
    s.add_argument("--keep-filtered", action="store_true", help="write filtered rows with filtered=1")
    s.set_defaults(func=cmd_speeds)

    s = sub.add_parser("stage", parents=[common], help="run one stage by name")
    s.add_argument("stage", choices=pipeline.STAGES)
    s.add_argument("--maxspeed-policy", choices=("mean", "max"))
    s.add_argument("--filter", choices=("paired", "verbatim", "off"))
    s.add_argument("--normalize-freeflow", choices=("on", "off"))
    s.set_defaults(func=cmd_stage)

    s = sub.add_parser("simulate", parents=[common], help="synthetic fleet probes from a scenario file")
    s.add_argument("--scenario", required=True)
    s.add_argument("--graph", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("compare", parents=[common], help="compare two segment speed CSVs")
    s.add_argument("a")
    s.add_argument("b")
    s.add_argument("--group-by", choices=compare.GROUPINGS, default="highway")
    s.add_argument("--hour-mean", action="store_true", help="average a to hourly values first")
    s.add_argument("--graph", help="graph JSON for highway/length classes")
    s.add_argument("--mapping", help="intersecting cells CSV for the complexity flag")
    s.add_argument("--out", default="compare_out")
    s.add_argument("--no-figures", action="store_true")
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("demo", parents=[common], help="synthetic end-to-end run with oracle checks")
    s.add_argument("--out", default="demo_out")
    s.add_argument("--days", type=int, default=3)
    s.add_argument("--no-figures", action="store_true")
    s.set_defaults(func=cmd_demo)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args) or 0
    except MissingArtifactError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (GraphError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
