"""End-to-end run on the synthetic city with oracle checks and a report."""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np

from . import compare, fcdsim, pipeline, segspeed, spotbin, taggr
from .grid import decode_speed
from .pipeline import Artifacts, PipelineConfig
from .roadgraph import load_graph
from .sjoin import read_mapping
from .synthetic import CITY_GRID, city_graph_dict, day_probes, demo_days

logger = logging.getLogger(__name__)

HARMONIC_TOL = 2 * decode_speed(1) + 1.0


def harmonic_checks(seed: int, n_fleets: int = 20):
    rng = np.random.default_rng([seed, 7])
    rows = []
    for i in range(n_fleets):
        speeds = rng.uniform(10, 110, int(rng.integers(3, 13)))
        hm, am = fcdsim.harmonic_mean(speeds), fcdsim.arithmetic_mean(speeds)
        binned = fcdsim.harmonic_trial(speeds, seed=int(rng.integers(2**31)))
        eq = fcdsim.harmonic_trial(speeds, readings=40, seed=int(rng.integers(2**31)))
        rows.append({
            "n_vehicles": len(speeds),
            "harmonic": hm,
            "arithmetic": am,
            "binned": binned,
            "equal_counts_binned": eq,
            "error": abs(binned - hm),
            "equal_counts_error": abs(eq - am),
        })
    return rows


def spotbin_checks(probes: spotbin.ProbeSet, seed: int, n_random: int = 5) -> bool:
    cfg, enc = CITY_GRID, pipeline.EncodingParams()
    ok = np.array_equal(spotbin.bin_probes(probes, cfg, enc).tensor, fcdsim.brute_force_bin(probes, cfg, enc).to_tensor(cfg, enc))
    rng = np.random.default_rng([seed, 11])
    for _ in range(n_random):
        n = int(rng.integers(1, 2000))
        p = spotbin.ProbeSet(
            rng.uniform(0, 86400, n),
            rng.uniform(cfg.lat_min - 0.001, cfg.lat_max + 0.001, n),
            rng.uniform(cfg.lon_min - 0.001, cfg.lon_max + 0.001, n),
            rng.uniform(0, 360, n),
            rng.uniform(0, 150, n),
        )
        ok &= np.array_equal(spotbin.bin_probes(p, cfg, enc).tensor, fcdsim.brute_force_bin(p, cfg, enc).to_tensor(cfg, enc))
    return bool(ok)


def _verdict(ok: bool) -> str:
    return "PASS" if ok else "FAIL"


def run_demo(out_dir, seed: int = 0, n_days: int = 3, figures: bool = True, jobs: int = 1) -> dict:
    out = Path(out_dir)
    inputs = out / "inputs"
    inputs.mkdir(parents=True, exist_ok=True)
    (inputs / "graph.json").write_text(json.dumps(city_graph_dict(CITY_GRID), indent=1) + "\n")
    graph = load_graph(inputs / "graph.json")

    days = demo_days(n_days)
    first_probes = None
    for i, day in enumerate(days):
        probes = day_probes(graph, CITY_GRID, seed=int(np.random.SeedSequence([seed, i]).generate_state(1)[0]))
        probes.to_csv(inputs / "probes" / f"{day}.csv")
        if first_probes is None:
            first_probes = probes

    cfg = PipelineConfig(
        grid=CITY_GRID,
        city="synthetic",
        seed=seed,
        graph_path=Path("graph.json"),
        probe_dir=Path("probes"),
        output_dir=Path("../pipeline"),
        jobs=jobs,
    )
    pipeline.save_config(cfg, inputs / "config.json")
    cfg = pipeline.load_config(inputs / "config.json")
    for stage in pipeline.STAGES:
        try:
            pipeline.run_stage(stage, cfg)
        except Exception as exc:
            raise RuntimeError(f"demo stage {stage} failed: {exc}") from exc

    art = Artifacts(cfg.output_dir)
    report_dir = out / "report"
    report_dir.mkdir(parents=True, exist_ok=True)
    summary: dict = {"seed": seed, "days": days}

    # spot binning vs the naive scan
    summary["spotbin_oracle"] = _verdict(spotbin_checks(first_probes, seed))

    # harmonic vs arithmetic mean
    rows = harmonic_checks(seed)
    max_err = max(r["error"] for r in rows)
    max_eq_err = max(r["equal_counts_error"] for r in rows)
    above = all(r["equal_counts_binned"] > r["binned"] for r in rows)
    summary["harmonic"] = {
        "verdict": _verdict(max_err <= HARMONIC_TOL),
        "max_error_kph": max_err,
        "tolerance_kph": HARMONIC_TOL,
        "equal_counts_verdict": _verdict(max_eq_err <= HARMONIC_TOL and above),
        "equal_counts_max_error_kph": max_eq_err,
    }

    # coverage by edge orientation, unfiltered records
    mapping = read_mapping(art.mapping)
    records = []
    for day in days:
        records += segspeed.segment_speeds_day(taggr.read_agg_movie(art.agg_movie(day)), mapping)
    n_slots = len(days) * (CITY_GRID.bins_per_day // cfg.agg_factor)
    coverage = fcdsim.coverage_by_class(records, graph, n_slots)
    summary["coverage"] = {**coverage, "verdict": _verdict(coverage["axis"] >= coverage["diagonal"])}

    # filtering only removes rows
    speeds_paired = sum(len(segspeed.read_speeds(art.speed_file(d))) for d in days)
    summary["filter"] = {
        "rows_off": len(records),
        "rows_paired": speeds_paired,
        "verdict": _verdict(speeds_paired <= len(records)),
    }

    # compare self-join
    a = compare.load_speed_frame(art.speed_file(days[0]))
    attrs = compare.edge_attributes(graph, mapping)
    pairs = compare.match(a, a, attributes=attrs)
    stats = compare.diff_stats(pairs, "highway")
    total = stats[stats["highway"] == "TOTAL"].iloc[0]
    self_ok = (
        len(pairs) > 0
        and total["diff_mean"] == 0 and total["diff_std"] == 0 and total["diff_median"] == 0
        and total["ape_share_lt_15"] == 1.0
        and int(stats[stats["highway"] != "TOTAL"]["count"].sum()) == int(total["count"])
    )
    summary["compare_self_join"] = {"pairs": int(len(pairs)), "verdict": _verdict(bool(self_ok))}
    compare.write_frame(stats, report_dir / "self_join_stats.csv")

    with open(report_dir / "harmonic_checks.csv", "w") as f:
        keys = list(rows[0])
        f.write(",".join(keys) + "\n")
        for r in rows:
            f.write(",".join(f"{r[k]:.6f}" if isinstance(r[k], float) else str(r[k]) for k in keys) + "\n")

    if figures:
        from . import plotting

        plotting.plot_harmonic_check(rows, report_dir / "harmonic_check.png")
        plotting.plot_coverage(coverage, report_dir / "coverage.png")

    (report_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    text = format_report(summary)
    (report_dir / "report.txt").write_text(text)
    return summary


def format_report(s: dict) -> str:
    h, c, f, j = s["harmonic"], s["coverage"], s["filter"], s["compare_self_join"]
    lines = [
        f"synthetic demo, seed {s['seed']}, days {', '.join(s['days'])}",
        f"spot binning == naive scan ............ {s['spotbin_oracle']}",
        f"harmonic-mean check ................... {h['verdict']} "
        f"(max error {h['max_error_kph']:.3f} kph, tolerance {h['tolerance_kph']:.3f})",
        f"equal readings -> arithmetic mean ..... {h['equal_counts_verdict']} "
        f"(max error {h['equal_counts_max_error_kph']:.3f} kph)",
        f"coverage axis >= diagonal ............. {c['verdict']} "
        f"(axis {c['axis']:.3f}, diagonal {c['diagonal']:.3f}, other {c['other']:.3f})",
        f"paired filter rows <= unfiltered ...... {f['verdict']} ({f['rows_paired']} <= {f['rows_off']})",
        f"compare self-join all-zero ............ {j['verdict']} ({j['pairs']} pairs)",
    ]
    return "\n".join(lines) + "\n"
