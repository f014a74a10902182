"""Per-edge segment speeds from aggregated movies, plus confidence filtering."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .sjoin import CellFraction, cell_index_arrays

SPEED_COLUMNS = (
    "day", "t", "u", "v", "gkey", "volume",
    "median_speed_kph", "mean_speed_kph", "std_speed_kph", "filtered",
)


@dataclass(frozen=True)
class SegmentRecord:
    day: str
    t: int
    u: int
    v: int
    gkey: int
    median_speed_kph: float  # NaN when no intersecting cell had data
    mean_speed_kph: float
    std_speed_kph: float
    volume: float
    filtered: bool = False

    @property
    def has_data(self) -> bool:
        return not math.isnan(self.median_speed_kph)


@dataclass(frozen=True)
class FilterPolicy:
    """``paired`` reads the thresholds as (volume, congestion) pairs,
    ``verbatim`` evaluates the three-branch cascade literally, ``off``
    passes everything."""

    interpretation: str = "paired"
    thresholds: Tuple[Tuple[float, Optional[float]], ...] = ((5, 0.4), (3, 0.8), (1, None))

    def __post_init__(self):
        if self.interpretation not in ("paired", "verbatim", "off"):
            raise ValueError(f"unknown filter interpretation {self.interpretation!r}")
        vols = [v for v, _ in self.thresholds]
        if vols != sorted(vols, reverse=True) or len(set(vols)) != len(vols):
            raise ValueError("filter thresholds must be strictly ordered by volume")


def lower_median(values: np.ndarray) -> float:
    s = np.sort(values)
    return float(s[(len(s) - 1) // 2])


def segment_speed(
    edge_key: Tuple[int, int, int],
    speed: np.ndarray,
    volume: np.ndarray,
    cells: Iterable[CellFraction],
    day: str = "",
    t: int = 0,
    median: str = "lower",
) -> SegmentRecord:
    """Record for one edge in one aggregated bin.

    ``speed``/``volume`` are the ``(rows, cols, 4)`` slices of that bin.
    Even-count medians take the lower central value unless
    ``median="midpoint"``.
    """
    rr, cc, hh = cell_index_arrays(cells)
    s = speed[rr, cc, hh].astype(np.float64)
    ok = np.isfinite(s)
    u, v, g = edge_key
    if not ok.any():
        nan = float("nan")
        return SegmentRecord(day, t, u, v, g, nan, nan, nan, 0.0)
    s = s[ok]
    med = lower_median(s) if median == "lower" else float(np.median(s))
    return SegmentRecord(
        day, t, u, v, g,
        median_speed_kph=med,
        mean_speed_kph=float(s.mean()),
        std_speed_kph=float(s.std()),
        volume=float(volume[rr, cc, hh][ok].astype(np.float64).sum()),
    )


def segment_speeds_day(agg, mapping: Dict[tuple, List[CellFraction]], median: str = "lower") -> List[SegmentRecord]:
    """All records with data for one aggregated day, ordered by (t, edge)."""
    per_edge = []
    for key, cells in mapping.items():
        rr, cc, hh = cell_index_arrays(cells)
        if len(rr) == 0:
            continue
        s = agg.speed[:, rr, cc, hh].astype(np.float64)  # (bins, n)
        vol = agg.volume[:, rr, cc, hh].astype(np.float64)
        ok = np.isfinite(s)
        n = ok.sum(axis=1)
        if not n.any():
            continue
        srt = np.sort(np.where(ok, s, np.inf), axis=1)  # NaN-free, missing last
        if median == "lower":
            idx = np.maximum(n - 1, 0) // 2
            med = np.take_along_axis(srt, idx[:, None], axis=1)[:, 0]
        else:
            lo = np.take_along_axis(srt, (np.maximum(n - 1, 0) // 2)[:, None], axis=1)[:, 0]
            hi = np.take_along_axis(srt, (n // 2)[:, None], axis=1)[:, 0]
            med = np.where(n % 2 == 1, lo, (lo + hi) / 2)
        z = np.where(ok, s, 0.0)
        with np.errstate(invalid="ignore", divide="ignore"):
            mean = z.sum(axis=1) / n
            std = np.sqrt((np.where(ok, s - mean[:, None], 0.0) ** 2).sum(axis=1) / n)
        vsum = np.where(ok, vol, 0.0).sum(axis=1)
        per_edge.append((key, n, med, mean, std, vsum))

    records = []
    for t in range(agg.speed.shape[0]):
        for key, n, med, mean, std, vsum in per_edge:
            if n[t]:
                records.append(
                    SegmentRecord(
                        agg.day, t, *key,
                        median_speed_kph=float(med[t]),
                        mean_speed_kph=float(mean[t]),
                        std_speed_kph=float(std[t]),
                        volume=float(vsum[t]),
                    )
                )
    return records


def congestion_factor(ssp: float, ff: float) -> float:
    if not ff > 0:
        raise ValueError(f"free-flow speed must be positive, got {ff}")
    return ssp / ff


def is_filtered(ssp: float, vol: float, ff: float, policy: FilterPolicy = FilterPolicy()) -> bool:
    if policy.interpretation == "off":
        return False
    cf = congestion_factor(ssp, ff)
    if policy.interpretation == "paired":
        return any(
            vol < v_th and (cf_th is None or cf < cf_th) for v_th, cf_th in policy.thresholds
        )
    # verbatim: "if vol < 5 or cf < 0.4 / elif vol < 3 or cf < 0.8 / elif vol < 1"
    for v_th, cf_th in policy.thresholds:
        if vol < v_th or (cf_th is not None and cf < cf_th):
            return True
    return False


def confidence_filter(rec: SegmentRecord, ff: float, policy: FilterPolicy = FilterPolicy()) -> SegmentRecord:
    """Flag a record as filtered; speeds are never altered."""
    flag = is_filtered(rec.median_speed_kph, rec.volume, ff, policy)
    return replace(rec, filtered=flag) if flag != rec.filtered else rec


def _fmt(x: float) -> str:
    return "" if math.isnan(x) else repr(float(x))


def write_speeds(records: Sequence[SegmentRecord], path, keep_filtered: bool = False) -> int:
    """Write records as CSV; filtered rows are dropped unless ``keep_filtered``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp")
    n = 0
    with open(tmp, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(SPEED_COLUMNS)
        for r in records:
            if r.filtered and not keep_filtered:
                continue
            w.writerow([
                r.day, r.t, r.u, r.v, r.gkey, _fmt(r.volume),
                _fmt(r.median_speed_kph), _fmt(r.mean_speed_kph), _fmt(r.std_speed_kph),
                int(r.filtered),
            ])
            n += 1
    tmp.replace(path)
    return n


def read_speeds(path) -> List[SegmentRecord]:
    def num(s):
        return float(s) if s != "" else float("nan")

    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        missing = set(SPEED_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        return [
            SegmentRecord(
                day=r["day"], t=int(r["t"]), u=int(r["u"]), v=int(r["v"]), gkey=int(r["gkey"]),
                median_speed_kph=num(r["median_speed_kph"]),
                mean_speed_kph=num(r["mean_speed_kph"]),
                std_speed_kph=num(r["std_speed_kph"]),
                volume=num(r["volume"]),
                filtered=bool(int(r["filtered"])),
            )
            for r in reader
        ]
