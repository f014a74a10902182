"""Temporal aggregation of 5-minute movies into coarser bins."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import container
from .grid import N_HEADINGS, EncodingParams, GridConfig, decode_speed


@dataclass
class AggMovieDay:
    """Aggregated day: summed volume codes and mean decoded speeds (NaN = no data)."""

    day: str
    volume: np.ndarray  # (bins, rows, cols, 4) uint32
    speed: np.ndarray  # (bins, rows, cols, 4) float32 kph
    factor: int
    grid: Optional[GridConfig] = None

    @property
    def bins(self) -> int:
        return self.volume.shape[0]

    def __eq__(self, other):
        if not isinstance(other, AggMovieDay):
            return NotImplemented
        return (
            self.day == other.day
            and self.factor == other.factor
            and self.grid == other.grid
            and np.array_equal(self.volume, other.volume)
            and np.array_equal(self.speed, other.speed, equal_nan=True)
        )


def aggregate(m, factor: int = 3) -> AggMovieDay:
    """Sum volume codes and average valid decoded speeds over ``factor`` bins.

    Speeds of constituent bins with zero volume are dropped before the
    (unweighted) mean; an output slot without any valid bin is NaN.
    """
    tensor = m.tensor
    bins = tensor.shape[0]
    if factor < 1 or bins % factor:
        raise ValueError(f"factor {factor} does not divide {bins} bins")
    enc = getattr(m, "encoding", EncodingParams())
    out_bins = bins // factor
    spatial = tensor.shape[1:3]
    volume = np.empty((out_bins,) + spatial + (N_HEADINGS,), dtype=np.uint32)
    speed = np.empty((out_bins,) + spatial + (N_HEADINGS,), dtype=np.float32)
    # one output bin at a time keeps the float64 temporaries small
    for b in range(out_bins):
        chunk = tensor[b * factor:(b + 1) * factor]
        vol = chunk[..., 0::2].astype(np.uint32)
        valid = vol > 0
        dec = np.where(valid, decode_speed(chunk[..., 1::2], enc), 0.0)
        n = valid.sum(axis=0)
        volume[b] = vol.sum(axis=0)
        with np.errstate(invalid="ignore", divide="ignore"):
            speed[b] = np.where(n > 0, dec.sum(axis=0) / n, np.nan)
    return AggMovieDay(day=m.day, volume=volume, speed=speed, factor=factor, grid=getattr(m, "grid", None))


def write_agg_movie(a: AggMovieDay, path) -> None:
    bins, rows, cols, _ = a.volume.shape
    header = {
        "kind": "agg_movie",
        "day": a.day,
        "bins": bins,
        "rows": rows,
        "cols": cols,
        "agg_factor": a.factor,
        "heading_order": ["NE", "SE", "SW", "NW"],
    }
    if a.grid is not None:
        header["grid"] = a.grid.to_dict()
    container.write_tensors(
        path,
        header,
        {"volume": a.volume.astype(np.uint32), "speed": a.speed.astype(np.float32)},
    )


def read_agg_movie(path) -> AggMovieDay:
    header, arrays = container.read_tensors(path)
    if header.get("kind") != "agg_movie" or {"volume", "speed"} - set(arrays):
        raise container.MalformedHeaderError(f"{path} is not an aggregated movie file")
    try:
        want = (header["bins"], header["rows"], header["cols"], N_HEADINGS)
        for name in ("volume", "speed"):
            if tuple(arrays[name].shape) != want:
                raise container.DimensionMismatchError(
                    f"{name} shape {arrays[name].shape} does not match header {want}"
                )
        return AggMovieDay(
            day=header["day"],
            volume=arrays["volume"],
            speed=arrays["speed"],
            factor=int(header["agg_factor"]),
            grid=GridConfig(**header["grid"]) if "grid" in header else None,
        )
    except (KeyError, TypeError) as exc:
        raise container.MalformedHeaderError(f"incomplete aggregated movie header: {exc}") from exc
