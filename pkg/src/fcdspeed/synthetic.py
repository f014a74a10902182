"""Small synthetic city with daily traffic for demos and end-to-end tests."""

from __future__ import annotations

import datetime as dt
from typing import List

import numpy as np

from .grid import SECONDS_PER_DAY, EncodingParams, GridConfig
from .roadgraph import RoadGraph, build_graph
from .spotbin import ProbeSet
from .fcdsim import positions_along

CITY_GRID = GridConfig(lat_min=48.100, lat_max=48.110, lon_min=11.500, lon_max=11.510)

# lattice offsets keep streets off the cell boundaries
_LAT0, _LON0, _SPACING, _N = 0.0013, 0.0017, 0.0025, 4


def city_graph_dict(cfg: GridConfig = CITY_GRID) -> dict:
    """Two-way street lattice plus a few diagonal avenues on a 10 x 10 cell box."""
    nodes, edges = [], []

    def nid(i, j):
        return 100 + 10 * i + j

    for i in range(_N):
        for j in range(_N):
            nodes.append({
                "id": nid(i, j),
                "lat": round(cfg.lat_min + _LAT0 + _SPACING * i, 7),
                "lon": round(cfg.lon_min + _LON0 + _SPACING * j, 7),
            })
    coord = {n["id"]: (n["lat"], n["lon"]) for n in nodes}

    def add(a, b, highway, maxspeed):
        for u, v in ((a, b), (b, a)):
            edges.append({
                "u": u, "v": v,
                "geometry": [list(coord[u]), list(coord[v])],
                "highway": highway, "maxspeed": maxspeed,
            })

    for i in range(_N):
        for j in range(_N - 1):
            # east-west streets
            if i % 2 == 0:
                add(nid(i, j), nid(i, j + 1), "primary", [50, 60])
            else:
                add(nid(i, j), nid(i, j + 1), "residential", [])
            # north-south streets
            add(nid(j, i), nid(j + 1, i), "secondary", [50])
    for k in range(_N - 1):
        add(nid(k, k), nid(k + 1, k + 1), "tertiary", [])
        add(nid(k, _N - 1 - k), nid(k + 1, _N - 2 - k), "tertiary", [40])
    return {"nodes": nodes, "edges": edges}


def city_graph(cfg: GridConfig = CITY_GRID, policy: str = "mean") -> RoadGraph:
    return build_graph(city_graph_dict(cfg), policy)


def demo_days(n: int, start: str = "2021-06-01") -> List[str]:
    d0 = dt.date.fromisoformat(start)
    return [(d0 + dt.timedelta(days=i)).isoformat() for i in range(n)]


def _demand(hours: np.ndarray) -> np.ndarray:
    """Relative vehicle demand over the day, peaks at 8h and 17h."""
    return 0.08 + np.exp(-0.5 * ((hours - 8) / 1.2) ** 2) + 0.9 * np.exp(-0.5 * ((hours - 17) / 1.5) ** 2)


def _congestion(hours: np.ndarray, severity: float) -> np.ndarray:
    peak = np.exp(-0.5 * ((hours - 8) / 0.8) ** 2) + np.exp(-0.5 * ((hours - 17.5) / 1.0) ** 2)
    return 1.0 - severity * np.minimum(peak, 1.0)


def day_probes(
    graph: RoadGraph,
    cfg: GridConfig,
    seed: int,
    vehicles_per_bin: float = 0.6,
    report_interval_s: float = 5.0,
    angle_noise: float = 10.0,
    background: int = 3000,
) -> ProbeSet:
    """One day of probes: vehicles on every edge plus uniform background noise.

    Every vehicle reports at the same rate per unit time, so slow vehicles
    contribute more readings to their bin.
    """
    rng = np.random.default_rng(seed)
    bins = cfg.bins_per_day
    hours = (np.arange(bins) + 0.5) * cfg.bin_seconds / 3600.0
    demand = _demand(hours)
    parts = []
    for e in graph.edges:
        free = 0.9 * e.speed_kph
        severity = rng.uniform(0.2, 0.7)
        n_veh = rng.poisson(vehicles_per_bin * demand)
        total = int(n_veh.sum())
        if total == 0:
            continue
        b = np.repeat(np.arange(bins), n_veh)
        start = (b + rng.uniform(0, 1, total)) * cfg.bin_seconds
        speed = free * _congestion(hours[b], severity) * rng.lognormal(0.0, 0.12, total)
        speed = np.clip(speed, 3.0, None)
        duration = e.length_m / (speed / 3.6)
        r = np.maximum(1, np.floor(duration / report_interval_s + 0.5)).astype(int)
        veh = np.repeat(np.arange(total), r)
        j = np.arange(len(veh)) - np.repeat(np.cumsum(r) - r, r)
        frac = (j + rng.uniform(0, 1, len(veh))) / r[veh]
        lat, lon, brg = positions_along(e.geometry, frac)
        t = start[veh] + frac * duration[veh]
        angle = np.mod(brg + rng.normal(0.0, angle_noise, len(veh)), 360.0)
        parts.append(ProbeSet(t, lat, lon, angle, speed[veh]))
    if background:
        parts.append(ProbeSet(
            rng.uniform(0, SECONDS_PER_DAY, background),
            rng.uniform(cfg.lat_min, cfg.lat_max, background),
            rng.uniform(cfg.lon_min, cfg.lon_max, background),
            rng.uniform(0, 360, background),
            rng.uniform(5, 60, background),
        ))
    probes = ProbeSet.concat(parts)
    # spill-over past midnight is dropped like any probe outside the day
    return probes.take(probes.t < SECONDS_PER_DAY)


DEMO_ENCODING = EncodingParams()
