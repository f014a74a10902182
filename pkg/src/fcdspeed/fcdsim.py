"""Synthetic fleets and independent oracles.

``simulate_probes`` drives virtual vehicles at constant speed along one edge
and lets each emit ``round(c / v)`` readings, i.e. every vehicle reports at
the same rate per unit time. Binning such a fleet yields the harmonic mean
of the vehicle speeds, which ``harmonic_mean`` computes directly.

``brute_force_bin`` re-derives the spot-binned counts and mean speeds with a
naive per-probe scan, as a second path next to :mod:`fcdspeed.spotbin`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .grid import (
    N_CHANNELS,
    SECONDS_PER_DAY,
    EncodingParams,
    GridConfig,
    cell_of,
    encode_speed,
    encode_volume,
    heading_quadrant,
)
from .roadgraph import Edge, RoadGraph, build_graph
from .segspeed import segment_speed
from .sjoin import bearing, edge_bearing, intersecting_cells
from .spotbin import ProbeSet, bin_probes
from .taggr import aggregate


@dataclass(frozen=True)
class VehicleClass:
    speed_kph: float
    count: int = 1

    def __post_init__(self):
        if not self.speed_kph > 0:
            raise ValueError("vehicle speed must be positive")
        if self.count < 0:
            raise ValueError("vehicle count must be non-negative")


@dataclass
class FleetSpec:
    vehicles: List[VehicleClass]
    probe_constant: float = 120.0
    route: Optional[Tuple[int, ...]] = None  # (u, v) or (u, v, gkey); None = first edge
    window: Tuple[float, float] = (0.0, 300.0)
    readings: Optional[int] = None  # fixed readings per vehicle, overrides c / v
    angle_noise: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.probe_constant > 0:
            raise ValueError("probe_constant must be positive")
        t0, t1 = self.window
        if not (0 <= t0 < t1 <= SECONDS_PER_DAY):
            raise ValueError(f"bad time window {self.window}")

    def readings_for(self, speed_kph: float) -> int:
        if self.readings is not None:
            return int(self.readings)
        return max(1, int(math.floor(self.probe_constant / speed_kph + 0.5)))

    @property
    def speeds(self) -> List[float]:
        return [vc.speed_kph for vc in self.vehicles for _ in range(vc.count)]

    @classmethod
    def from_dict(cls, d: dict) -> "FleetSpec":
        d = dict(d)
        d["vehicles"] = [VehicleClass(**v) for v in d.get("vehicles", [])]
        route = d.get("route")
        if isinstance(route, dict):
            d["route"] = tuple(int(route[k]) for k in ("u", "v", "gkey") if k in route)
        elif route is not None:
            d["route"] = tuple(int(x) for x in route)
        if "window" in d:
            d["window"] = tuple(float(x) for x in d["window"])
        return cls(**d)


def find_route(graph: RoadGraph, route) -> Edge:
    if route is None:
        return graph.edges[0]
    for e in graph.edges:
        if e.key[: len(route)] == tuple(route):
            return e
    raise KeyError(f"route {route} not in graph")


def positions_along(geometry: Sequence[Tuple[float, float]], fractions: np.ndarray):
    """Points at arc-length fractions of a polyline (degree space), with leg bearings."""
    pts = np.asarray(geometry, dtype=np.float64)
    seg = np.hypot(np.diff(pts[:, 0]), np.diff(pts[:, 1]))
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    target = np.asarray(fractions) * cum[-1]
    leg = np.clip(np.searchsorted(cum, target, side="right") - 1, 0, len(seg) - 1)
    # skip zero-length legs
    while np.any(seg[leg] == 0):
        z = seg[leg] == 0
        leg[z] = np.minimum(leg[z] + 1, len(seg) - 1)
    local = (target - cum[leg]) / seg[leg]
    lat = pts[leg, 0] + local * (pts[leg + 1, 0] - pts[leg, 0])
    lon = pts[leg, 1] + local * (pts[leg + 1, 1] - pts[leg, 1])
    brg = np.array([bearing(tuple(pts[i]), tuple(pts[i + 1])) for i in leg])
    return lat, lon, brg


def simulate_probes(spec: FleetSpec, graph: RoadGraph, cfg: GridConfig) -> ProbeSet:
    """Readings of every vehicle, evenly spaced in time over its traversal."""
    edge = find_route(graph, spec.route)
    if not all(cfg.contains(lat, lon) for lat, lon in edge.geometry):
        raise ValueError(f"route {edge.key} leaves the bounding box")
    rng = np.random.default_rng(spec.seed)
    t0, t1 = spec.window
    parts = []
    for v in spec.speeds:
        duration = edge.length_m / (v / 3.6)
        if duration > t1 - t0:
            raise ValueError(f"a {v} kph traversal of {edge.length_m:.0f} m does not fit the window")
        start = t0 + rng.uniform(0.0, (t1 - t0) - duration)
        r = spec.readings_for(v)
        frac = (np.arange(r) + 0.5) / r
        lat, lon, brg = positions_along(edge.geometry, frac)
        if spec.angle_noise:
            brg = brg + rng.normal(0.0, spec.angle_noise, size=r)
        parts.append(ProbeSet(start + frac * duration, lat, lon, np.mod(brg, 360.0), np.full(r, float(v))))
    return ProbeSet.concat(parts)


def harmonic_mean(speeds: Iterable[float]) -> float:
    v = np.asarray(list(speeds), dtype=np.float64)
    if len(v) == 0:
        raise ValueError("harmonic mean of an empty set")
    if np.any(~(v > 0)):
        raise ValueError("harmonic mean needs positive speeds")
    return float(len(v) / np.sum(1.0 / v))


def arithmetic_mean(speeds: Iterable[float]) -> float:
    return float(np.mean(np.asarray(list(speeds), dtype=np.float64)))


@dataclass
class BruteBins:
    bins: Dict[Tuple[int, int, int, int], Tuple[int, float]] = field(default_factory=dict)
    n_out_of_box: int = 0
    n_rejected: int = 0

    def to_tensor(self, cfg: GridConfig, enc: EncodingParams = EncodingParams()) -> np.ndarray:
        out = np.zeros((cfg.bins_per_day, cfg.rows, cfg.cols, N_CHANNELS), dtype=np.uint8)
        for (t, r, c, h), (count, mean) in self.bins.items():
            vol = encode_volume(count, enc)
            out[t, r, c, 2 * h] = vol
            out[t, r, c, 2 * h + 1] = encode_speed(mean, enc) if vol > 0 else 0
        return out


def brute_force_bin(probes: ProbeSet, cfg: GridConfig, enc: EncodingParams = EncodingParams()) -> BruteBins:
    """Per-bin (count, mean clipped speed) by scanning probes one at a time."""
    collected: Dict[Tuple[int, int, int, int], List[float]] = {}
    out = BruteBins()
    for t, lat, lon, angle, v in zip(
        probes.t.tolist(), probes.lat.tolist(), probes.lon.tolist(),
        probes.angle.tolist(), probes.speed.tolist(),
    ):
        if not all(math.isfinite(x) for x in (t, lat, lon, angle, v)) or not 0 <= t < SECONDS_PER_DAY:
            out.n_rejected += 1
            continue
        rc = cell_of(lat, lon, cfg)
        if rc is None:
            out.n_out_of_box += 1
            continue
        key = (math.floor(t / cfg.bin_seconds), rc[0], rc[1], int(heading_quadrant(angle)))
        collected.setdefault(key, []).append(min(max(v, 0.0), enc.speed_cap))
    for key, speeds in collected.items():
        out.bins[key] = (len(speeds), sum(sorted(speeds)) / len(speeds))
    return out


def classify_orientation(brg: float, ang_window: float = 10.0) -> str:
    """'axis' near N/E/S/W, 'diagonal' near NE/SE/SW/NW, else 'other'."""
    d = brg % 90.0
    if min(d, 90.0 - d) <= ang_window:
        return "axis"
    if abs(d - 45.0) <= ang_window:
        return "diagonal"
    return "other"


def coverage_by_class(
    records, graph: RoadGraph, n_slots: int, ang_window: float = 10.0
) -> Dict[str, float]:
    """Fraction of (edge, slot) pairs with a speed, per orientation class.

    ``n_slots`` is the number of time slots each edge could have filled
    (bins per day times number of days).
    """
    classes = {e.key: classify_orientation(edge_bearing(e.geometry), ang_window) for e in graph.edges}
    filled = {"axis": set(), "diagonal": set(), "other": set()}
    for r in records:
        key = (r.u, r.v, r.gkey)
        if key in classes and r.has_data and not r.filtered:
            filled[classes[key]].add((key, r.day, r.t))
    out = {}
    for name in filled:
        n_edges = sum(1 for c in classes.values() if c == name)
        out[name] = len(filled[name]) / (n_edges * n_slots) if n_edges and n_slots else 0.0
    return out


def coverage_by_orientation(records, graph: RoadGraph, n_slots: int, ang_window: float = 10.0):
    cov = coverage_by_class(records, graph, n_slots, ang_window)
    return cov["axis"], cov["diagonal"]


# 3 x 3 cells; the trial edge runs east through the middle of cell (1, 1)
TRIAL_GRID = GridConfig(lat_min=48.0, lat_max=48.003, lon_min=11.0, lon_max=11.003)
TRIAL_BIN = 100


def trial_graph() -> RoadGraph:
    return build_graph({
        "nodes": [{"id": 1, "lat": 48.0015, "lon": 11.0011}, {"id": 2, "lat": 48.0015, "lon": 11.0019}],
        "edges": [{"u": 1, "v": 2, "highway": "residential"}],
    })


def harmonic_trial(
    speeds: Sequence[float],
    probe_constant: float = 6000.0,
    readings: Optional[int] = None,
    seed: int = 0,
    enc: EncodingParams = EncodingParams(),
    agg_factor: int = 3,
) -> float:
    """Segment speed after simulate -> bin -> aggregate -> segment for one fleet.

    All traversals happen inside one 5-minute bin on an edge contained in a
    single cell, so the result is one cell's binned mean speed.
    """
    cfg, graph = TRIAL_GRID, trial_graph()
    edge = graph.edges[0]
    t0 = TRIAL_BIN * cfg.bin_seconds
    spec = FleetSpec(
        vehicles=[VehicleClass(float(v)) for v in speeds],
        probe_constant=probe_constant,
        window=(float(t0), float(t0 + cfg.bin_seconds)),
        readings=readings,
        seed=seed,
    )
    movie = bin_probes(simulate_probes(spec, graph, cfg), cfg, enc)
    agg = aggregate(movie, agg_factor)
    b = TRIAL_BIN // agg_factor
    rec = segment_speed(edge.key, agg.speed[b], agg.volume[b], intersecting_cells(edge, cfg))
    return rec.median_speed_kph


def load_scenario(path) -> dict:
    with open(path, encoding="utf-8") as f:
        return json.load(f)
