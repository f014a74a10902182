"""Per-cell speed clustering and per-edge free-flow speeds."""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Dict, Iterable, List, NamedTuple, Sequence, Tuple

import numpy as np

from . import container
from .grid import N_HEADINGS

DEFAULT_K = 5
DEFAULT_QUANTILE = 0.8
DEFAULT_FREE_FLOW = 20.0
MAX_ITER = 100

FREE_FLOW_COLUMNS = ("u", "v", "gkey", "free_flow_kph")


class Cluster(NamedTuple):
    center: float  # median of the members, kph
    size: int


def _kmeans_1d(x: np.ndarray, k: int, rng: np.random.Generator) -> Tuple[np.ndarray, int]:
    """Lloyd iterations from farthest-point seeding.

    Returns the cluster index of every sample (clusters ordered by center)
    and the number of clusters, which is below ``k`` when ``x`` has fewer
    distinct values.
    """
    centers = [x[rng.integers(len(x))]]
    dist = np.abs(x - centers[0])
    while len(centers) < k:
        i = int(np.argmax(dist))
        if dist[i] == 0:
            break
        centers.append(x[i])
        np.minimum(dist, np.abs(x - x[i]), out=dist)
    c = np.sort(np.asarray(centers))
    assign = None
    for _ in range(MAX_ITER):
        new = np.argmin(np.abs(x[:, None] - c[None, :]), axis=1)
        if assign is not None and np.array_equal(new, assign):
            break
        assign = new
        for j in range(len(c)):
            members = x[assign == j]
            if len(members):
                c[j] = members.mean()
    return assign, len(c)


def cluster_cell(samples: Iterable[float], k: int = DEFAULT_K, seed=0) -> List[Cluster]:
    """k-means on 1-D speeds; each cluster is reported by its median and size.

    Always returns ``k`` clusters (zero-size padding at the end) unless there
    are no samples at all, in which case the list is empty.
    """
    x = np.asarray(list(samples) if not isinstance(samples, np.ndarray) else samples, dtype=np.float64)
    x = x[np.isfinite(x)]
    if len(x) == 0:
        return []
    assign, n_centers = _kmeans_1d(x, k, np.random.default_rng(seed))
    found = []
    for j in range(n_centers):
        members = x[assign == j]
        if len(members):
            found.append(Cluster(float(np.median(members)), int(len(members))))
    found.sort()
    return found + [Cluster(0.0, 0)] * (k - len(found))


def weighted_quantile(
    clusters: Iterable[Cluster],
    q: float = DEFAULT_QUANTILE,
    default: float = DEFAULT_FREE_FLOW,
) -> float:
    """Center of the first cluster (ascending centers) whose cumulative size share reaches ``q``."""
    cl = sorted((float(c), int(s)) for c, s in clusters if s > 0)
    if not cl:
        return float(default)
    sizes = np.array([s for _, s in cl], dtype=np.float64)
    share = np.cumsum(sizes) / sizes.sum()
    idx = int(np.searchsorted(share, q - 1e-12, side="left"))
    return cl[min(idx, len(cl) - 1)][0]


def pooled_clusters(cells, cell_clusters: np.ndarray) -> List[Cluster]:
    keys = sorted({(c.row, c.col, int(c.heading)) for c in cells})
    out = []
    for r, c, h in keys:
        for center, size in cell_clusters[r, c, h]:
            if size > 0:
                out.append(Cluster(float(center), int(size)))
    return out


def free_flow_edge(
    cells,
    cell_clusters: np.ndarray,
    speed_limit: float,
    q: float = DEFAULT_QUANTILE,
    default: float = DEFAULT_FREE_FLOW,
) -> float:
    """Volume-weighted quantile of the pooled cluster medians, clipped above at the limit."""
    return min(weighted_quantile(pooled_clusters(cells, cell_clusters), q, default), float(speed_limit))


def normalize_free_flow(ff: float, sl: float) -> float:
    if sl >= 5:
        return max(min(max(ff, 20.0), sl), 0.6 * sl)
    return max(max(ff, 20.0), 0.6 * sl)


def sample_days(days: Sequence[str], n: int = 20, seed=0) -> List[str]:
    days = sorted(days)
    if len(days) <= n:
        return days
    rng = np.random.default_rng(seed)
    return sorted(rng.choice(days, size=n, replace=False).tolist())


def _cluster_rows(args):
    speeds, row0, k, seed = args
    rows, cols = speeds.shape[:2]
    out = np.zeros((rows, cols, N_HEADINGS, k, 2))
    for r in range(rows):
        for c in range(cols):
            for h in range(N_HEADINGS):
                s = speeds[r, c, h]
                s = s[np.isfinite(s)]
                if len(s):
                    cl = cluster_cell(s, k, seed=[seed, row0 + r, c, h])
                    out[r, c, h] = np.asarray(cl, dtype=np.float64)
    return out


def cluster_movies(agg_movies, k: int = DEFAULT_K, seed: int = 0, jobs: int = 1) -> np.ndarray:
    """Cluster every directed cell over all bins of the given aggregated days.

    Returns a ``(rows, cols, 4, k, 2)`` array of ``(center, size)``. Each
    cell uses its own seed derived from ``(seed, row, col, heading)``, so
    the result does not depend on ``jobs``.
    """
    agg_movies = list(agg_movies)
    if not agg_movies:
        raise ValueError("no aggregated movies to cluster")
    # (rows, cols, 4, days*bins)
    speeds = np.concatenate([a.speed for a in agg_movies], axis=0).astype(np.float64)
    speeds = np.ascontiguousarray(np.moveaxis(speeds, 0, -1))
    rows = speeds.shape[0]
    if jobs <= 1 or rows < 2:
        return _cluster_rows((speeds, 0, k, seed))
    bounds = np.linspace(0, rows, min(jobs, rows) + 1).astype(int)
    tasks = [(speeds[a:b], int(a), k, seed) for a, b in zip(bounds[:-1], bounds[1:])]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return np.concatenate(list(pool.map(_cluster_rows, tasks)), axis=0)


def write_clusters(clusters: np.ndarray, path, meta: dict = None) -> None:
    header = {"kind": "speed_clusters", "layout": ["row", "col", "heading", "cluster", "center|size"]}
    header.update(meta or {})
    container.write_tensors(path, header, {"clusters": clusters.astype(np.float64)})


def read_clusters(path) -> np.ndarray:
    header, arrays = container.read_tensors(path)
    if header.get("kind") != "speed_clusters" or "clusters" not in arrays:
        raise container.MalformedHeaderError(f"{path} is not a speed cluster file")
    arr = arrays["clusters"]
    if arr.ndim != 5 or arr.shape[2] != N_HEADINGS or arr.shape[4] != 2:
        raise container.DimensionMismatchError(f"unexpected cluster tensor shape {arr.shape}")
    return arr


def write_free_flow(values: Dict[tuple, float], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp")
    with open(tmp, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(FREE_FLOW_COLUMNS)
        for (u, v, g), ff in values.items():
            w.writerow([u, v, g, repr(float(ff))])
    tmp.replace(path)


def read_free_flow(path) -> Dict[tuple, float]:
    with open(path, newline="") as f:
        return {
            (int(r["u"]), int(r["v"]), int(r["gkey"])): float(r["free_flow_kph"])
            for r in csv.DictReader(f)
        }
