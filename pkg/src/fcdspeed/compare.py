"""Compare two segment-speed sources keyed by edge and time.

Both inputs use the segment-speed CSV schema. Source ``a`` may be averaged
to hourly values first (``hour_mean``), in which case ``b.t`` is read as an
hour index.
"""

from __future__ import annotations

from collections import Counter
from pathlib import Path
from typing import Dict, Optional

import numpy as np
import pandas as pd

from .segspeed import SPEED_COLUMNS

KEY = ["day", "t", "u", "v", "gkey"]
APE_RULE_THRESHOLD = 15.0
GROUPINGS = ("highway", "length", "complexity")


def length_class(length_m: float) -> str:
    if length_m <= 100:
        return "S"
    if length_m <= 500:
        return "M"
    return "L"


def load_speed_frame(path) -> pd.DataFrame:
    df = pd.read_csv(path, dtype={"day": str})
    missing = set(SPEED_COLUMNS) - set(df.columns)
    if missing:
        raise ValueError(f"{path}: missing columns {sorted(missing)}")
    return df


def records_to_frame(records) -> pd.DataFrame:
    rows = [
        {
            "day": r.day, "t": r.t, "u": r.u, "v": r.v, "gkey": r.gkey, "volume": r.volume,
            "median_speed_kph": r.median_speed_kph, "mean_speed_kph": r.mean_speed_kph,
            "std_speed_kph": r.std_speed_kph, "filtered": int(r.filtered),
        }
        for r in records
    ]
    return pd.DataFrame(rows, columns=list(SPEED_COLUMNS))


def _usable(df: pd.DataFrame) -> pd.DataFrame:
    df = df[(df["filtered"] == 0) & df["median_speed_kph"].notna()]
    return df[KEY + ["median_speed_kph"]].astype({"t": np.int64, "u": np.int64, "v": np.int64})


def complex_edges(mapping, min_sharing: int = 5) -> set:
    """Edges with at least one (row, col) cell shared by ``min_sharing - 1`` further edges."""
    per_cell: Counter = Counter()
    cells_of_edge = {}
    for key, cells in mapping.items():
        rc = {(c.row, c.col) for c in cells}
        cells_of_edge[key] = rc
        per_cell.update(rc)
    return {k for k, rc in cells_of_edge.items() if any(per_cell[c] >= min_sharing for c in rc)}


def edge_attributes(graph, mapping=None) -> pd.DataFrame:
    cplx = complex_edges(mapping) if mapping is not None else set()
    return pd.DataFrame(
        [
            {
                "u": e.u, "v": e.v, "gkey": e.gkey, "highway": e.highway,
                "length": length_class(e.length_m), "complexity": "complex" if e.key in cplx else "simple",
            }
            for e in graph.edges
        ],
        columns=["u", "v", "gkey", "highway", "length", "complexity"],
    )


def match(
    a: pd.DataFrame,
    b: pd.DataFrame,
    hour_mean: bool = False,
    bins_per_hour: int = 4,
    attributes: Optional[pd.DataFrame] = None,
) -> pd.DataFrame:
    """Pairs of speeds available for the same edge and time slot.

    Returns columns day, t, u, v, gkey, speed_a, speed_b and, when edge
    ``attributes`` are given, highway/length/complexity.
    """
    a, b = _usable(a), _usable(b)
    if hour_mean:
        a = a.assign(t=a["t"] // bins_per_hour)
        a = a.groupby(KEY, as_index=False, sort=True)["median_speed_kph"].mean()
    a = a.rename(columns={"median_speed_kph": "speed_a"})
    b = b.rename(columns={"median_speed_kph": "speed_b"})
    pairs = a.merge(b, on=KEY, how="inner").sort_values(KEY, kind="mergesort").reset_index(drop=True)
    if attributes is not None:
        pairs = pairs.merge(attributes, on=["u", "v", "gkey"], how="left")
        pairs[["highway", "length", "complexity"]] = pairs[["highway", "length", "complexity"]].fillna("unknown")
    return pairs


def ape(pred, ref):
    """Absolute percentage error ``100 |pred - ref| / ref``."""
    pred = np.asarray(pred, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if np.any(~(ref > 0)):
        raise ValueError("reference speed must be positive")
    out = 100.0 * np.abs(pred - ref) / ref
    return float(out) if out.ndim == 0 else out


def share_within(ape_values, threshold: float = APE_RULE_THRESHOLD) -> float:
    v = np.asarray(ape_values, dtype=np.float64)
    return float(np.mean(v < threshold)) if len(v) else float("nan")


def _stats(diff: pd.Series, apes: np.ndarray) -> Dict[str, float]:
    return {
        "diff_mean": float(diff.mean()),
        "diff_std": float(diff.std(ddof=0)),
        "diff_median": float(diff.median()),
        "count": int(len(diff)),
        "ape_mean": float(np.mean(apes)),
        "ape_share_lt_15": share_within(apes),
    }


def diff_stats(pairs: pd.DataFrame, group_by: str = "highway") -> pd.DataFrame:
    """Signed diffs ``speed_a - speed_b`` summarized per group plus a TOTAL row."""
    if group_by not in GROUPINGS:
        raise ValueError(f"group_by must be one of {GROUPINGS}")
    if group_by not in pairs.columns:
        pairs = pairs.assign(**{group_by: "unknown"})
    diff = pairs["speed_a"] - pairs["speed_b"]
    apes = ape(pairs["speed_a"].to_numpy(), pairs["speed_b"].to_numpy()) if len(pairs) else np.empty(0)
    rows = []
    for name, idx in sorted(pairs.groupby(group_by).groups.items()):
        pos = pairs.index.get_indexer(idx)
        rows.append({group_by: name, **_stats(diff.iloc[pos], apes[pos])})
    if len(pairs):
        rows.append({group_by: "TOTAL", **_stats(diff, apes)})
    return pd.DataFrame(rows, columns=[group_by, "diff_mean", "diff_std", "diff_median", "count", "ape_mean", "ape_share_lt_15"])


def diff_histogram(pairs: pd.DataFrame, bins: int = 10) -> pd.DataFrame:
    """Counts of signed diffs in ``bins`` equal-width bins."""
    diff = (pairs["speed_a"] - pairs["speed_b"]).to_numpy()
    if len(diff) == 0:
        return pd.DataFrame(columns=["bin_lo", "bin_hi", "count"])
    lo, hi = float(diff.min()), float(diff.max())
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    counts, edges = np.histogram(diff, bins=bins, range=(lo, hi))
    return pd.DataFrame({"bin_lo": edges[:-1], "bin_hi": edges[1:], "count": counts})


def text_report(stats: pd.DataFrame, group_by: str, n_pairs: int) -> str:
    lines = [f"matched pairs: {n_pairs}", f"grouped by: {group_by}", ""]
    if len(stats):
        lines.append(stats.to_string(index=False, float_format=lambda x: f"{x:.3f}"))
        total = stats[stats[group_by] == "TOTAL"].iloc[0]
        lines += [
            "",
            f"share of pairs with APE < {APE_RULE_THRESHOLD:g}%: {100 * total['ape_share_lt_15']:.1f}%",
        ]
    else:
        lines.append("no matching pairs")
    return "\n".join(lines) + "\n"


def write_frame(df: pd.DataFrame, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp")
    df.to_csv(tmp, index=False, float_format="%.6f", lineterminator="\n")
    tmp.replace(path)
