"""Portable directed road graph: nodes, edges with geometry, class and limit.

Graph file (JSON)::

    {"nodes": [{"id": 1, "lat": 52.5, "lon": 13.4}, ...],
     "edges": [{"u": 1, "v": 2, "geometry": [[lat, lon], ...],
                "highway": "residential", "maxspeed": [50, 60]}, ...]}

``geometry`` may be omitted for straight edges; ``maxspeed`` may be omitted
or empty, in which case the per-class default applies.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from importlib import resources
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .container import atomic_write_bytes

EARTH_RADIUS_M = 6_371_008.8

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF

# geometry endpoints may differ from node coordinates by float noise only
_ENDPOINT_TOL = 1e-9


class GraphError(ValueError):
    pass


class DanglingNodeError(GraphError):
    pass


class DegenerateGeometryError(GraphError):
    pass


class DuplicateEdgeError(GraphError):
    pass


class EndpointMismatchError(GraphError):
    pass


class InvalidMaxspeedError(GraphError):
    pass


def default_speed_table() -> Dict[str, float]:
    text = resources.files("fcdspeed").joinpath("data/default_maxspeeds.json").read_text()
    return {k: float(v) for k, v in json.loads(text).items()}


DEFAULT_SPEEDS = default_speed_table()


def haversine_m(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp = p2 - p1
    dl = math.radians(lon2 - lon1)
    a = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(a)))


def polyline_length_m(geometry: Sequence[Tuple[float, float]]) -> float:
    return sum(haversine_m(*a, *b) for a, b in zip(geometry[:-1], geometry[1:]))


def gkey(geometry: Sequence[Tuple[float, float]]) -> int:
    """64-bit FNV-1a hash of the little-endian coordinate doubles."""
    if len(geometry) < 2:
        raise DegenerateGeometryError("geometry needs at least two points")
    data = struct.pack(f"<{2 * len(geometry)}d", *(float(x) for pt in geometry for x in pt))
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


def resolve_maxspeed(
    raw: Iterable[float],
    highway: str,
    policy: str = "mean",
    defaults: Optional[Dict[str, float]] = None,
) -> float:
    values = [float(x) for x in raw]
    if any(not (x > 0) for x in values):
        raise InvalidMaxspeedError(f"non-positive maxspeed in {values}")
    if not values:
        table = DEFAULT_SPEEDS if defaults is None else defaults
        return float(table.get(highway, table.get("*", 50.0)))
    if policy == "mean":
        return sum(values) / len(values)
    if policy == "max":
        return max(values)
    raise ValueError(f"unknown maxspeed policy {policy!r}")


@dataclass(frozen=True)
class Edge:
    u: int
    v: int
    gkey: int
    geometry: Tuple[Tuple[float, float], ...]
    highway: str
    speed_kph: float
    length_m: float
    maxspeed_raw: Tuple[float, ...] = ()

    @property
    def key(self) -> Tuple[int, int, int]:
        return self.u, self.v, self.gkey


@dataclass
class RoadGraph:
    nodes: Dict[int, Tuple[float, float]]
    edges: List[Edge] = field(default_factory=list)

    def __post_init__(self):
        self._index = {e.key: i for i, e in enumerate(self.edges)}

    def edge(self, u: int, v: int, g: int) -> Edge:
        return self.edges[self._index[(u, v, g)]]

    def __len__(self) -> int:
        return len(self.edges)

    def to_dict(self) -> dict:
        return {
            "nodes": [{"id": n, "lat": lat, "lon": lon} for n, (lat, lon) in self.nodes.items()],
            "edges": [
                {
                    "u": e.u,
                    "v": e.v,
                    "geometry": [list(p) for p in e.geometry],
                    "highway": e.highway,
                    "maxspeed": list(e.maxspeed_raw),
                }
                for e in self.edges
            ],
        }


def _parse_maxspeed(raw) -> List[float]:
    if raw is None:
        return []
    if not isinstance(raw, (list, tuple)):
        raw = [raw]
    try:
        return [float(x) for x in raw]
    except (TypeError, ValueError) as exc:
        raise InvalidMaxspeedError(f"unparseable maxspeed {raw!r}") from exc


def build_graph(
    data: dict,
    policy: str = "mean",
    defaults: Optional[Dict[str, float]] = None,
) -> RoadGraph:
    """Validate a graph dict and resolve gkeys, lengths and speed limits."""
    nodes: Dict[int, Tuple[float, float]] = {}
    for n in data.get("nodes", []):
        nid = int(n["id"])
        if nid in nodes:
            raise GraphError(f"duplicate node id {nid}")
        nodes[nid] = (float(n["lat"]), float(n["lon"]))

    edges, seen = [], set()
    for i, e in enumerate(data.get("edges", [])):
        u, v = int(e["u"]), int(e["v"])
        for nid in (u, v):
            if nid not in nodes:
                raise DanglingNodeError(f"edge {i} references unknown node {nid}")
        geom = e.get("geometry")
        if geom is None:
            geom = [nodes[u], nodes[v]]
        geometry = tuple((float(p[0]), float(p[1])) for p in geom)
        if len(geometry) < 2:
            raise DegenerateGeometryError(f"edge {i} ({u}->{v}) has fewer than two points")
        for end, nid in ((geometry[0], u), (geometry[-1], v)):
            nlat, nlon = nodes[nid]
            if abs(end[0] - nlat) > _ENDPOINT_TOL or abs(end[1] - nlon) > _ENDPOINT_TOL:
                raise EndpointMismatchError(f"edge {i} ({u}->{v}) geometry does not end at node {nid}")
        length = polyline_length_m(geometry)
        if not length > 0:
            raise DegenerateGeometryError(f"edge {i} ({u}->{v}) has zero length")
        g = gkey(geometry)
        if (u, v, g) in seen:
            raise DuplicateEdgeError(f"duplicate edge ({u}, {v}, {g})")
        seen.add((u, v, g))
        highway = e.get("highway", "unclassified")
        if isinstance(highway, list):
            highway = highway[0]
        raw = _parse_maxspeed(e.get("maxspeed"))
        edges.append(
            Edge(
                u=u,
                v=v,
                gkey=g,
                geometry=geometry,
                highway=str(highway),
                speed_kph=resolve_maxspeed(raw, highway, policy, defaults),
                length_m=length,
                maxspeed_raw=tuple(raw),
            )
        )
    return RoadGraph(nodes=nodes, edges=edges)


def load_graph(path, policy: str = "mean", defaults: Optional[Dict[str, float]] = None) -> RoadGraph:
    with open(path, encoding="utf-8") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as exc:
            raise GraphError(f"{path}: not valid JSON: {exc}") from exc
    return build_graph(data, policy, defaults)


def save_graph(graph: RoadGraph, path) -> None:
    atomic_write_bytes(path, (json.dumps(graph.to_dict(), indent=1) + "\n").encode("utf-8"))
