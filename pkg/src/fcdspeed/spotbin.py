"""Spot binning of raw GPS probes into one-day traffic map movies.

A movie is a ``(bins, rows, cols, 8)`` uint8 tensor; for heading ``k`` in
NE, SE, SW, NW channel ``2k`` holds the volume code and ``2k+1`` the speed
code.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import container
from .grid import (
    CHANNEL_NAMES,
    N_CHANNELS,
    N_HEADINGS,
    SECONDS_PER_DAY,
    EncodingParams,
    GridConfig,
    cells_of,
    encode_speeds,
    encode_volumes,
    heading_quadrants,
)

logger = logging.getLogger(__name__)

PROBE_COLUMNS = ("t", "lat", "lon", "angle", "speed")


@dataclass
class ProbeSet:
    """Column-oriented GPS probes: seconds since midnight, position, angle, kph."""

    t: np.ndarray
    lat: np.ndarray
    lon: np.ndarray
    angle: np.ndarray
    speed: np.ndarray

    def __post_init__(self):
        for name in PROBE_COLUMNS:
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64).ravel())
        n = len(self.t)
        if any(len(getattr(self, c)) != n for c in PROBE_COLUMNS):
            raise ValueError("probe columns differ in length")

    def __len__(self) -> int:
        return len(self.t)

    @classmethod
    def empty(cls) -> "ProbeSet":
        return cls(*(np.empty(0) for _ in PROBE_COLUMNS))

    @classmethod
    def concat(cls, parts) -> "ProbeSet":
        parts = list(parts)
        if not parts:
            return cls.empty()
        return cls(*(np.concatenate([getattr(p, c) for p in parts]) for c in PROBE_COLUMNS))

    def take(self, idx) -> "ProbeSet":
        return ProbeSet(*(getattr(self, c)[idx] for c in PROBE_COLUMNS))

    def to_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(f".{path.name}.tmp")
        with open(tmp, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(PROBE_COLUMNS)
            for row in zip(*(getattr(self, c) for c in PROBE_COLUMNS)):
                w.writerow([repr(float(x)) for x in row])
        tmp.replace(path)

    @classmethod
    def from_csv(cls, path) -> "ProbeSet":
        with open(path, newline="") as f:
            reader = csv.DictReader(f)
            missing = set(PROBE_COLUMNS) - set(reader.fieldnames or ())
            if missing:
                raise ValueError(f"{path}: missing probe columns {sorted(missing)}")
            cols = {c: [] for c in PROBE_COLUMNS}
            for rec in reader:
                for c in PROBE_COLUMNS:
                    cols[c].append(float(rec[c]))
        return cls(**cols)


@dataclass
class BinStats:
    n_input: int = 0
    n_binned: int = 0
    n_out_of_box: int = 0
    n_rejected: int = 0  # non-finite fields or t outside the day

    def to_dict(self) -> dict:
        return dict(vars(self))


@dataclass
class RawBins:
    """Raw per-bin probe counts and summed clipped speeds before encoding."""

    counts: np.ndarray  # (bins, rows, cols, 4) int64
    speed_sums: np.ndarray  # (bins, rows, cols, 4) float64
    stats: BinStats

    @property
    def mean_speed(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.counts > 0, self.speed_sums / np.maximum(self.counts, 1), 0.0)


@dataclass
class MovieDay:
    day: str
    tensor: np.ndarray
    grid: Optional[GridConfig] = None
    encoding: EncodingParams = field(default_factory=EncodingParams)
    stats: Optional[BinStats] = None

    @property
    def volume(self) -> np.ndarray:
        return self.tensor[..., 0::2]

    @property
    def speed(self) -> np.ndarray:
        return self.tensor[..., 1::2]

    def __eq__(self, other):
        if not isinstance(other, MovieDay):
            return NotImplemented
        return (
            self.day == other.day
            and self.grid == other.grid
            and self.encoding == other.encoding
            and self.tensor.shape == other.tensor.shape
            and bool(np.array_equal(self.tensor, other.tensor))
        )


def raw_bin(probes: ProbeSet, cfg: GridConfig, enc: EncodingParams = EncodingParams()) -> RawBins:
    """Count probes and sum their clipped speeds per (bin, row, col, heading).

    Speeds are accumulated in ascending order within each bin so that the
    float sums do not depend on input order.
    """
    n = len(probes)
    finite = (
        np.isfinite(probes.t)
        & np.isfinite(probes.lat)
        & np.isfinite(probes.lon)
        & np.isfinite(probes.angle)
        & np.isfinite(probes.speed)
    )
    valid = finite & (probes.t >= 0) & (probes.t < SECONDS_PER_DAY)
    rows, cols, inside = cells_of(probes.lat, probes.lon, cfg)
    keep = valid & inside
    stats = BinStats(
        n_input=n,
        n_binned=int(keep.sum()),
        n_out_of_box=int((valid & ~inside).sum()),
        n_rejected=int((~valid).sum()),
    )
    if stats.n_rejected:
        logger.warning("rejected %d probes with non-finite fields or t outside the day", stats.n_rejected)

    shape = (cfg.bins_per_day, cfg.rows, cfg.cols, N_HEADINGS)
    tbin = np.floor(probes.t[keep] / cfg.bin_seconds).astype(np.int64)
    heading = heading_quadrants(probes.angle[keep])
    flat = np.ravel_multi_index((tbin, rows[keep], cols[keep], heading), shape)
    speed = np.clip(probes.speed[keep], 0.0, enc.speed_cap)

    order = np.lexsort((speed, flat))
    flat, speed = flat[order], speed[order]
    size = int(np.prod(shape))
    counts = np.bincount(flat, minlength=size).reshape(shape)
    sums = np.zeros(size, dtype=np.float64)
    np.add.at(sums, flat, speed)  # unbuffered, sequential in the sorted order
    return RawBins(counts=counts, speed_sums=sums.reshape(shape), stats=stats)


def encode_raw(raw: RawBins, enc: EncodingParams = EncodingParams()) -> np.ndarray:
    vol = encode_volumes(raw.counts, enc)
    speed = encode_speeds(raw.mean_speed, enc)
    speed[vol == 0] = 0
    out = np.empty(raw.counts.shape[:3] + (N_CHANNELS,), dtype=np.uint8)
    out[..., 0::2] = vol
    out[..., 1::2] = speed
    return out


def bin_probes(
    probes: ProbeSet,
    cfg: GridConfig,
    enc: EncodingParams = EncodingParams(),
    day: str = "1970-01-01",
) -> MovieDay:
    raw = raw_bin(probes, cfg, enc)
    return MovieDay(day=day, tensor=encode_raw(raw, enc), grid=cfg, encoding=enc, stats=raw.stats)


def movie_header(m: MovieDay) -> dict:
    bins, rows, cols, _ = m.tensor.shape
    header = {
        "kind": "movie",
        "day": m.day,
        "bins": bins,
        "rows": rows,
        "cols": cols,
        "channel_order": list(CHANNEL_NAMES),
        "encoding": m.encoding.to_dict(),
    }
    if m.grid is not None:
        header["grid"] = m.grid.to_dict()
    if m.stats is not None:
        header["stats"] = m.stats.to_dict()
    return header


def _check_dims(header: dict, arr: np.ndarray, channels: int) -> None:
    want = (header["bins"], header["rows"], header["cols"], channels)
    if tuple(arr.shape) != want:
        raise container.DimensionMismatchError(
            f"tensor shape {tuple(arr.shape)} does not match header {want}"
        )
    grid = header.get("grid")
    if grid is not None:
        g = GridConfig(**grid)
        if (g.bins_per_day, g.rows, g.cols) != want[:3]:
            raise container.DimensionMismatchError("grid config disagrees with tensor dimensions")


def write_movie(m: MovieDay, path) -> None:
    if m.tensor.dtype != np.uint8 or m.tensor.ndim != 4 or m.tensor.shape[3] != N_CHANNELS:
        raise container.DimensionMismatchError("movie tensor must be (bins, rows, cols, 8) uint8")
    container.write_tensors(path, movie_header(m), {"movie": m.tensor})


def read_movie(path) -> MovieDay:
    header, arrays = container.read_tensors(path)
    if header.get("kind") != "movie" or "movie" not in arrays:
        raise container.MalformedHeaderError(f"{path} is not a movie file")
    try:
        tensor = arrays["movie"]
        _check_dims(header, tensor, N_CHANNELS)
        stats = BinStats(**header["stats"]) if "stats" in header else None
        return MovieDay(
            day=header["day"],
            tensor=tensor,
            grid=GridConfig(**header["grid"]) if "grid" in header else None,
            encoding=EncodingParams.from_dict(header["encoding"]),
            stats=stats,
        )
    except (KeyError, TypeError) as exc:
        raise container.MalformedHeaderError(f"incomplete movie header: {exc}") from exc
