"""Stage orchestration over an output directory of canonical artifacts.

Stages and what they read/write (paths relative to the output directory):

    bin        probe CSVs              -> movies/<day>.movie
    dp01       movies/                 -> movies_15min/<day>.aggmovie
    dp03-load  graph file              -> road_graph.json, road_graph_edges.csv
    dp04       road_graph.json         -> intersecting_cells.csv
    dp02       movies_15min/           -> speed_clusters.tensor
    dp05       dp02, dp03-load, dp04   -> free_flow.csv
    dp06       dp01, dp03-load, dp04, dp05 -> speeds/speeds_<day>.csv
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional

from . import freeflow, roadgraph, segspeed, sjoin, spotbin, taggr
from .container import atomic_write_bytes
from .grid import EncodingParams, GridConfig, config_from_dict, config_to_dict

logger = logging.getLogger(__name__)

STAGES = ("bin", "dp01", "dp03-load", "dp04", "dp02", "dp05", "dp06")


class MissingArtifactError(RuntimeError):
    def __init__(self, stage: str, path):
        self.stage = stage
        self.path = Path(path)
        super().__init__(f"missing {self.path}; run stage {stage} first")


@dataclass
class PipelineConfig:
    grid: GridConfig
    encoding: EncodingParams = field(default_factory=EncodingParams)
    city: str = "city"
    join: sjoin.JoinParams = field(default_factory=sjoin.JoinParams)
    filter: segspeed.FilterPolicy = field(default_factory=segspeed.FilterPolicy)
    normalize_freeflow: bool = False
    keep_filtered: bool = False
    seed: int = 0
    agg_factor: int = 3
    clusters: int = freeflow.DEFAULT_K
    cluster_days: int = 20
    maxspeed_policy: str = "mean"
    graph_path: Optional[Path] = None
    probe_dir: Optional[Path] = None
    output_dir: Path = Path("out")
    jobs: int = 1

    @classmethod
    def from_dict(cls, d: dict, base: Path = Path(".")) -> "PipelineConfig":
        grid, enc = config_from_dict(d["grid"])
        paths = d.get("paths", {})

        def p(key):
            return (base / paths[key]) if key in paths else None

        return cls(
            grid=grid,
            encoding=enc,
            city=d.get("city", "city"),
            join=sjoin.JoinParams(**d.get("join", {})),
            filter=segspeed.FilterPolicy(interpretation=d.get("filter", "paired")),
            normalize_freeflow=bool(d.get("normalize_freeflow", False)),
            keep_filtered=bool(d.get("keep_filtered", False)),
            seed=int(d.get("seed", 0)),
            agg_factor=int(d.get("agg_factor", 3)),
            clusters=int(d.get("clusters", freeflow.DEFAULT_K)),
            cluster_days=int(d.get("cluster_days", 20)),
            maxspeed_policy=d.get("maxspeed_policy", "mean"),
            graph_path=p("graph"),
            probe_dir=p("probes"),
            output_dir=p("output") or base / "out",
            jobs=int(d.get("jobs", 1)),
        )

    def to_dict(self) -> dict:
        paths = {}
        for key, val in (("graph", self.graph_path), ("probes", self.probe_dir), ("output", self.output_dir)):
            if val is not None:
                paths[key] = str(val)
        return {
            "city": self.city,
            "grid": config_to_dict(self.grid, self.encoding),
            "join": {"step": self.join.step, "pos_margin": self.join.pos_margin, "ang_margin": self.join.ang_margin},
            "filter": self.filter.interpretation,
            "normalize_freeflow": self.normalize_freeflow,
            "keep_filtered": self.keep_filtered,
            "seed": self.seed,
            "agg_factor": self.agg_factor,
            "clusters": self.clusters,
            "cluster_days": self.cluster_days,
            "maxspeed_policy": self.maxspeed_policy,
            "paths": paths,
        }


def load_config(path) -> PipelineConfig:
    path = Path(path)
    with open(path, encoding="utf-8") as f:
        return PipelineConfig.from_dict(json.load(f), base=path.parent)


def save_config(cfg: PipelineConfig, path) -> None:
    atomic_write_bytes(path, (json.dumps(cfg.to_dict(), indent=2) + "\n").encode("utf-8"))


class Artifacts:
    def __init__(self, out: Path):
        self.out = Path(out)

    movies = property(lambda s: s.out / "movies")
    agg_movies = property(lambda s: s.out / "movies_15min")
    graph = property(lambda s: s.out / "road_graph.json")
    graph_edges = property(lambda s: s.out / "road_graph_edges.csv")
    mapping = property(lambda s: s.out / "intersecting_cells.csv")
    clusters = property(lambda s: s.out / "speed_clusters.tensor")
    free_flow = property(lambda s: s.out / "free_flow.csv")
    speeds = property(lambda s: s.out / "speeds")

    def movie(self, day):
        return self.movies / f"{day}.movie"

    def agg_movie(self, day):
        return self.agg_movies / f"{day}.aggmovie"

    def speed_file(self, day):
        return self.speeds / f"speeds_{day}.csv"

    @staticmethod
    def days_in(directory: Path, suffix: str) -> List[str]:
        return sorted(p.name[: -len(suffix)] for p in directory.glob(f"*{suffix}")) if directory.is_dir() else []


def _require(path: Path, stage: str) -> Path:
    if not path.exists():
        raise MissingArtifactError(stage, path)
    return path


def _require_days(directory: Path, suffix: str, stage: str) -> List[str]:
    days = Artifacts.days_in(directory, suffix)
    if not days:
        raise MissingArtifactError(stage, directory)
    return days


def stage_bin(cfg: PipelineConfig, days=None) -> Dict[str, spotbin.BinStats]:
    if cfg.probe_dir is None or not Path(cfg.probe_dir).is_dir():
        raise MissingArtifactError("simulate", cfg.probe_dir or "probes/")
    art = Artifacts(cfg.output_dir)
    files = sorted(Path(cfg.probe_dir).glob("*.csv"))
    if days:
        files = [f for f in files if f.stem in set(days)]
    if not files:
        raise MissingArtifactError("simulate", cfg.probe_dir)
    stats = {}
    for f in files:
        movie = spotbin.bin_probes(spotbin.ProbeSet.from_csv(f), cfg.grid, cfg.encoding, day=f.stem)
        spotbin.write_movie(movie, art.movie(f.stem))
        stats[f.stem] = movie.stats
        logger.info("binned %s: %s", f.stem, movie.stats)
    return stats


def stage_dp01(cfg: PipelineConfig) -> List[str]:
    art = Artifacts(cfg.output_dir)
    days = _require_days(art.movies, ".movie", "bin")
    for day in days:
        agg = taggr.aggregate(spotbin.read_movie(art.movie(day)), cfg.agg_factor)
        taggr.write_agg_movie(agg, art.agg_movie(day))
    return days


def stage_dp03(cfg: PipelineConfig) -> roadgraph.RoadGraph:
    if cfg.graph_path is None:
        raise MissingArtifactError("dp03-load", "graph file (paths.graph)")
    _require(Path(cfg.graph_path), "dp03-load")
    graph = roadgraph.load_graph(cfg.graph_path, cfg.maxspeed_policy)
    art = Artifacts(cfg.output_dir)
    art.out.mkdir(parents=True, exist_ok=True)
    roadgraph.save_graph(graph, art.graph)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["u", "v", "gkey", "highway", "speed_kph", "length_m"])
    for e in graph.edges:
        w.writerow([e.u, e.v, e.gkey, e.highway, repr(e.speed_kph), repr(e.length_m)])
    atomic_write_bytes(art.graph_edges, buf.getvalue().encode("utf-8"))
    return graph


def _load_graph_artifact(cfg: PipelineConfig) -> roadgraph.RoadGraph:
    art = Artifacts(cfg.output_dir)
    return roadgraph.load_graph(_require(art.graph, "dp03-load"), cfg.maxspeed_policy)


def stage_dp04(cfg: PipelineConfig):
    graph = _load_graph_artifact(cfg)
    mapping = sjoin.join_graph(graph, cfg.grid, cfg.join, jobs=cfg.jobs)
    sjoin.write_mapping(mapping, Artifacts(cfg.output_dir).mapping)
    return mapping


def stage_dp02(cfg: PipelineConfig):
    art = Artifacts(cfg.output_dir)
    days = _require_days(art.agg_movies, ".aggmovie", "dp01")
    chosen = freeflow.sample_days(days, cfg.cluster_days, cfg.seed)
    clusters = freeflow.cluster_movies(
        (taggr.read_agg_movie(art.agg_movie(d)) for d in chosen), cfg.clusters, cfg.seed, cfg.jobs
    )
    freeflow.write_clusters(clusters, art.clusters, {"days": chosen, "seed": cfg.seed})
    return clusters


def stage_dp05(cfg: PipelineConfig) -> Dict[tuple, float]:
    art = Artifacts(cfg.output_dir)
    clusters = freeflow.read_clusters(_require(art.clusters, "dp02"))
    graph = _load_graph_artifact(cfg)
    mapping = sjoin.read_mapping(_require(art.mapping, "dp04"))
    ff = {
        e.key: freeflow.free_flow_edge(mapping.get(e.key, []), clusters, e.speed_kph)
        for e in graph.edges
    }
    freeflow.write_free_flow(ff, art.free_flow)
    return ff


def stage_dp06(cfg: PipelineConfig) -> Dict[str, int]:
    art = Artifacts(cfg.output_dir)
    mapping = sjoin.read_mapping(_require(art.mapping, "dp04"))
    days = _require_days(art.agg_movies, ".aggmovie", "dp01")
    graph = _load_graph_artifact(cfg)
    limits = {e.key: e.speed_kph for e in graph.edges}
    filtering = cfg.filter.interpretation != "off"
    ff = freeflow.read_free_flow(_require(art.free_flow, "dp05")) if filtering else {}
    if cfg.normalize_freeflow:
        ff = {k: freeflow.normalize_free_flow(v, limits[k]) for k, v in ff.items()}
    written = {}
    for day in days:
        records = segspeed.segment_speeds_day(taggr.read_agg_movie(art.agg_movie(day)), mapping)
        if filtering:
            records = [
                segspeed.confidence_filter(r, ff.get(r_key(r), freeflow.DEFAULT_FREE_FLOW), cfg.filter)
                for r in records
            ]
        written[day] = segspeed.write_speeds(records, art.speed_file(day), cfg.keep_filtered)
    return written


def r_key(r) -> tuple:
    return r.u, r.v, r.gkey


_STAGE_FUNCS = {
    "bin": stage_bin,
    "dp01": stage_dp01,
    "dp02": stage_dp02,
    "dp03-load": stage_dp03,
    "dp04": stage_dp04,
    "dp05": stage_dp05,
    "dp06": stage_dp06,
}


def run_stage(stage: str, cfg: PipelineConfig):
    try:
        fn = _STAGE_FUNCS[stage]
    except KeyError:
        raise ValueError(f"unknown stage {stage!r}; choose from {STAGES}") from None
    logger.info("running %s", stage)
    return fn(cfg)


def run_all(cfg: PipelineConfig) -> None:
    for stage in STAGES:
        run_stage(stage, cfg)


def with_overrides(cfg: PipelineConfig, **kw) -> PipelineConfig:
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
