"""Spatial join of road edges with directed grid cells.

For every edge we list the ``(row, col, heading, fraction)`` cells it draws
data from. A cell is attached when some leg of the edge comes within
``pos_margin`` (per-axis, i.e. Chebyshev distance in degrees) of the cell
rectangle; it is tagged with the headings the leg's bearing admits under
``ang_margin``. The fraction of a directed cell is the share of the edge's
interpolation points that fall inside the cell with a matching heading, so
margin-only cells carry fraction 0.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Sequence, Tuple

import numpy as np

from .grid import GridConfig, Heading, cell_of, heading_quadrant
from .roadgraph import Edge, RoadGraph

EdgeKey = Tuple[int, int, int]

MAPPING_COLUMNS = ("u", "v", "gkey", "row", "col", "heading", "fraction")


@dataclass(frozen=True)
class JoinParams:
    step: float = 0.0001
    pos_margin: float = 0.0005
    ang_margin: float = 10.0

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("step must be positive")
        if not self.pos_margin >= 0:
            raise ValueError("pos_margin must be non-negative")
        if not 0 <= self.ang_margin < 45:
            raise ValueError("ang_margin must lie in [0, 45)")


@dataclass(frozen=True, order=True)
class CellFraction:
    row: int
    col: int
    heading: Heading
    fraction: float


def bearing(p0: Tuple[float, float], p1: Tuple[float, float]) -> float:
    """Compass bearing in degree space: 0 north, 90 east."""
    return math.degrees(math.atan2(p1[1] - p0[1], p1[0] - p0[0])) % 360.0


def edge_bearing(geometry: Sequence[Tuple[float, float]]) -> float:
    return bearing(geometry[0], geometry[-1])


def _legs(geometry):
    for a, b in zip(geometry[:-1], geometry[1:]):
        if a != b:
            yield a, b, bearing(a, b)


def interpolate(geometry: Sequence[Tuple[float, float]], step: float = 0.0001):
    """Points at most ``step`` apart along the polyline.

    Returns ``(lat, lon, bearing)`` arrays. Each leg contributes its start
    and interior points with its own bearing; the final vertex carries the
    last leg's bearing.
    """
    lats, lons, bears = [], [], []
    last = None
    for a, b, brg in _legs(geometry):
        length = math.hypot(b[0] - a[0], b[1] - a[1])
        n = max(1, math.ceil(length / step - 1e-9))
        t = np.arange(n) / n
        lats.append(a[0] + t * (b[0] - a[0]))
        lons.append(a[1] + t * (b[1] - a[1]))
        bears.append(np.full(n, brg))
        last = (b, brg)
    if last is None:
        # zero-length geometry: keep the endpoints, bearing undefined (0)
        pts = np.asarray(geometry[:1] + geometry[-1:], dtype=np.float64)
        return pts[:, 0], pts[:, 1], np.zeros(2)
    lats.append(np.array([last[0][0]]))
    lons.append(np.array([last[0][1]]))
    bears.append(np.array([last[1]]))
    return np.concatenate(lats), np.concatenate(lons), np.concatenate(bears)


def headings_for(brg: float, ang_margin: float = 10.0) -> FrozenSet[Heading]:
    """Quadrant of ``brg`` plus any neighbour whose boundary is within the margin."""
    brg = float(brg) % 360.0
    base = heading_quadrant(brg)
    below = brg - 90.0 * base.value
    out = {base}
    if below <= ang_margin:
        out.add(Heading((base.value - 1) % 4))
    if 90.0 - below <= ang_margin:
        out.add(Heading((base.value + 1) % 4))
    return frozenset(out)


def _segment_hits(p0, p1, lat_lo, lat_hi, lon_lo, lon_hi) -> np.ndarray:
    """Closed segment vs closed axis-aligned rectangles (Liang-Barsky)."""
    tmin = np.zeros(lat_lo.shape)
    tmax = np.ones(lat_lo.shape)
    ok = np.ones(lat_lo.shape, dtype=bool)
    for p, d, lo, hi in (
        (p0[0], p1[0] - p0[0], lat_lo, lat_hi),
        (p0[1], p1[1] - p0[1], lon_lo, lon_hi),
    ):
        if d == 0.0:
            ok &= (lo <= p) & (p <= hi)
        else:
            ta = (lo - p) / d
            tb = (hi - p) / d
            tmin = np.maximum(tmin, np.minimum(ta, tb))
            tmax = np.minimum(tmax, np.maximum(ta, tb))
    return ok & (tmin <= tmax)


def _leg_cells(a, b, cfg: GridConfig, margin: float) -> List[Tuple[int, int]]:
    cs = cfg.cell_size
    lo_lat, hi_lat = min(a[0], b[0]) - margin, max(a[0], b[0]) + margin
    lo_lon, hi_lon = min(a[1], b[1]) - margin, max(a[1], b[1]) + margin
    r0 = max(0, math.floor((cfg.lat_max - hi_lat) / cs) - 1)
    r1 = min(cfg.rows - 1, math.floor((cfg.lat_max - lo_lat) / cs) + 1)
    c0 = max(0, math.floor((lo_lon - cfg.lon_min) / cs) - 1)
    c1 = min(cfg.cols - 1, math.floor((hi_lon - cfg.lon_min) / cs) + 1)
    if r0 > r1 or c0 > c1:
        return []
    rr, cc = np.meshgrid(np.arange(r0, r1 + 1), np.arange(c0, c1 + 1), indexing="ij")
    rr, cc = rr.ravel(), cc.ravel()
    lat_hi = cfg.lat_max - rr * cs
    lon_lo = cfg.lon_min + cc * cs
    hit = _segment_hits(a, b, lat_hi - cs - margin, lat_hi + margin, lon_lo - margin, lon_lo + cs + margin)
    return list(zip(rr[hit].tolist(), cc[hit].tolist()))


def intersecting_cells(edge, cfg: GridConfig, jp: JoinParams = JoinParams()) -> List[CellFraction]:
    """Directed cells for an :class:`Edge` (or a bare geometry)."""
    geometry = edge.geometry if isinstance(edge, Edge) else tuple(map(tuple, edge))
    keys = set()
    for a, b, brg in _legs(geometry):
        hs = headings_for(brg, jp.ang_margin)
        for rc in _leg_cells(a, b, cfg, jp.pos_margin):
            keys.update((rc[0], rc[1], h) for h in hs)

    lat, lon, brgs = interpolate(geometry, jp.step)
    counts: Dict[Tuple[int, int, Heading], int] = {}
    for la, lo, brg in zip(lat.tolist(), lon.tolist(), brgs.tolist()):
        rc = cell_of(la, lo, cfg)
        if rc is None:
            continue
        for h in headings_for(brg, jp.ang_margin):
            k = (rc[0], rc[1], h)
            counts[k] = counts.get(k, 0) + 1
    keys.update(counts)
    n = len(lat)
    return [CellFraction(r, c, h, counts.get((r, c, h), 0) / n) for r, c, h in sorted(keys)]


def _join_chunk(args):
    edges, cfg, jp = args
    return [(e.key, intersecting_cells(e, cfg, jp)) for e in edges]


def join_graph(graph: RoadGraph, cfg: GridConfig, jp: JoinParams = JoinParams(), jobs: int = 1):
    """Intersecting cells for every edge, keyed by ``(u, v, gkey)``."""
    if jobs <= 1 or len(graph.edges) < 2 * jobs:
        return dict(_join_chunk((graph.edges, cfg, jp)))
    chunks = [graph.edges[i::jobs] for i in range(jobs)]
    out = {}
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        for part in pool.map(_join_chunk, [(c, cfg, jp) for c in chunks]):
            out.update(part)
    # restore graph order for deterministic output
    return {e.key: out[e.key] for e in graph.edges}


def write_mapping(mapping: Dict[EdgeKey, List[CellFraction]], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp")
    with open(tmp, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(MAPPING_COLUMNS)
        for (u, v, g), cells in mapping.items():
            for c in cells:
                w.writerow([u, v, g, c.row, c.col, c.heading.name, repr(c.fraction)])
    tmp.replace(path)


def read_mapping(path) -> Dict[EdgeKey, List[CellFraction]]:
    out: Dict[EdgeKey, List[CellFraction]] = {}
    with open(path, newline="") as f:
        for rec in csv.DictReader(f):
            key = (int(rec["u"]), int(rec["v"]), int(rec["gkey"]))
            out.setdefault(key, []).append(
                CellFraction(int(rec["row"]), int(rec["col"]), Heading[rec["heading"]], float(rec["fraction"]))
            )
    return out


def cell_index_arrays(cells: Iterable[CellFraction]):
    """(rows, cols, headings) int arrays of the distinct directed cells."""
    uniq = sorted({(c.row, c.col, int(c.heading)) for c in cells})
    if not uniq:
        z = np.empty(0, dtype=np.int64)
        return z, z, z
    a = np.asarray(uniq, dtype=np.int64)
    return a[:, 0], a[:, 1], a[:, 2]
