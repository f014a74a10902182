"""Geo-referenced grid arithmetic, heading quadrants and the 8-bit encodings.

All geometry is plain degree space. Row 0 is the northern row, col 0 the
western column.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

SECONDS_PER_DAY = 86400
N_HEADINGS = 4
N_CHANNELS = 2 * N_HEADINGS
SPEED_CAP = 120.0
CODE_MAX = 255

# Snap tolerance (in cell units) so that decimal grid lines are not lost to
# representation error, e.g. (52.854 - 52.853) / 0.001 = 0.99999...
_SNAP = 1e-9


class Heading(enum.IntEnum):
    """Heading quadrant; the value is the index into the channel layout."""

    NE = 0  # [0, 90)
    SE = 1  # [90, 180)
    SW = 2  # [180, 270)
    NW = 3  # [270, 360)

    @property
    def interval(self) -> Tuple[float, float]:
        return 90.0 * self.value, 90.0 * (self.value + 1)

    @property
    def volume_channel(self) -> int:
        return 2 * self.value

    @property
    def speed_channel(self) -> int:
        return 2 * self.value + 1


CHANNEL_NAMES = tuple(
    f"{h.name}_{kind}" for h in Heading for kind in ("volume", "speed")
)


@dataclass(frozen=True)
class GridConfig:
    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float
    cell_size: float = 0.001
    bins_per_day: int = 288

    def __post_init__(self):
        if not self.cell_size > 0:
            raise ValueError(f"cell_size must be positive, got {self.cell_size}")
        if not self.lat_max > self.lat_min:
            raise ValueError("lat_max must exceed lat_min")
        if not self.lon_max > self.lon_min:
            raise ValueError("lon_max must exceed lon_min")
        if int(self.bins_per_day) != self.bins_per_day or self.bins_per_day <= 0:
            raise ValueError("bins_per_day must be a positive integer")
        if SECONDS_PER_DAY % self.bins_per_day:
            raise ValueError("bins_per_day must divide 86400")
        if self.rows <= 0 or self.cols <= 0:
            raise ValueError("bounding box smaller than one cell")

    @property
    def rows(self) -> int:
        return int(round((self.lat_max - self.lat_min) / self.cell_size))

    @property
    def cols(self) -> int:
        return int(round((self.lon_max - self.lon_min) / self.cell_size))

    @property
    def channels(self) -> int:
        return N_CHANNELS

    @property
    def bin_seconds(self) -> int:
        return SECONDS_PER_DAY // self.bins_per_day

    @property
    def shape(self) -> Tuple[int, int, int, int]:
        return self.bins_per_day, self.rows, self.cols, N_CHANNELS

    def contains(self, lat: float, lon: float) -> bool:
        return self.lat_min <= lat <= self.lat_max and self.lon_min <= lon <= self.lon_max

    def cell_center(self, row: int, col: int) -> Tuple[float, float]:
        return (
            self.lat_max - (row + 0.5) * self.cell_size,
            self.lon_min + (col + 0.5) * self.cell_size,
        )

    def cell_bounds(self, row: int, col: int) -> Tuple[float, float, float, float]:
        """(lat_lo, lat_hi, lon_lo, lon_hi) of a cell."""
        lat_hi = self.lat_max - row * self.cell_size
        lon_lo = self.lon_min + col * self.cell_size
        return lat_hi - self.cell_size, lat_hi, lon_lo, lon_lo + self.cell_size

    def to_dict(self) -> dict:
        return {
            "lat_min": self.lat_min,
            "lat_max": self.lat_max,
            "lon_min": self.lon_min,
            "lon_max": self.lon_max,
            "cell_size": self.cell_size,
            "bins_per_day": self.bins_per_day,
        }


@dataclass(frozen=True)
class EncodingParams:
    """Volume/speed encoding constants.

    ``privacy_threshold`` and ``volume_cutoff`` bound the raw probe count
    before it is rescaled by ``255 / volume_scale_divisor``.
    """

    privacy_threshold: int = 0
    volume_cutoff: int = 255
    volume_scale_divisor: Optional[float] = None
    speed_cap: float = SPEED_CAP
    code_max: int = CODE_MAX

    def __post_init__(self):
        if self.volume_scale_divisor is None:
            object.__setattr__(self, "volume_scale_divisor", float(self.volume_cutoff))
        if not 0 <= self.privacy_threshold < self.volume_cutoff:
            raise ValueError("need 0 <= privacy_threshold < volume_cutoff")
        if not self.volume_scale_divisor > 0:
            raise ValueError("volume_scale_divisor must be positive")
        if not self.speed_cap > 0:
            raise ValueError("speed_cap must be positive")

    def to_dict(self) -> dict:
        return {
            "privacy_threshold": self.privacy_threshold,
            "volume_cutoff": self.volume_cutoff,
            "volume_scale_divisor": self.volume_scale_divisor,
            "speed_cap": self.speed_cap,
            "code_max": self.code_max,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EncodingParams":
        return cls(**d)


_GRID_KEYS = ("lat_min", "lat_max", "lon_min", "lon_max", "cell_size", "bins_per_day")
_ENC_KEYS = ("privacy_threshold", "volume_cutoff", "volume_scale_divisor")
CONFIG_KEYS = _GRID_KEYS + _ENC_KEYS


def config_from_dict(d: dict) -> Tuple[GridConfig, EncodingParams]:
    unknown = set(d) - set(CONFIG_KEYS)
    if unknown:
        raise ValueError(f"unknown grid config keys: {sorted(unknown)}")
    missing = {"lat_min", "lat_max", "lon_min", "lon_max"} - set(d)
    if missing:
        raise ValueError(f"missing grid config keys: {sorted(missing)}")
    cfg = GridConfig(**{k: d[k] for k in _GRID_KEYS if k in d})
    enc = EncodingParams(**{k: d[k] for k in _ENC_KEYS if k in d})
    return cfg, enc


def config_to_dict(cfg: GridConfig, enc: EncodingParams) -> dict:
    d = cfg.to_dict()
    d.update(
        privacy_threshold=enc.privacy_threshold,
        volume_cutoff=enc.volume_cutoff,
        volume_scale_divisor=enc.volume_scale_divisor,
    )
    return d


def load_grid_config(path) -> Tuple[GridConfig, EncodingParams]:
    """Read a grid/encoding config from a JSON file."""
    with open(path, encoding="utf-8") as f:
        return config_from_dict(json.load(f))


def save_grid_config(path, cfg: GridConfig, enc: EncodingParams) -> None:
    Path(path).write_text(json.dumps(config_to_dict(cfg, enc), indent=2) + "\n")


def cell_of(lat: float, lon: float, cfg: GridConfig) -> Optional[Tuple[int, int]]:
    """Grid cell containing a point, or None outside the bounding box.

    Points on an interior grid line go to the larger index; the southern and
    eastern outer edges clamp into the last row/col.
    """
    if not (math.isfinite(lat) and math.isfinite(lon)) or not cfg.contains(lat, lon):
        return None
    row = math.floor((cfg.lat_max - lat) / cfg.cell_size + _SNAP)
    col = math.floor((lon - cfg.lon_min) / cfg.cell_size + _SNAP)
    return min(row, cfg.rows - 1), min(col, cfg.cols - 1)


def cells_of(lat: np.ndarray, lon: np.ndarray, cfg: GridConfig):
    """Vectorized :func:`cell_of`. Returns (rows, cols, inside_mask)."""
    lat = np.asarray(lat, dtype=np.float64)
    lon = np.asarray(lon, dtype=np.float64)
    with np.errstate(invalid="ignore"):
        inside = (
            np.isfinite(lat)
            & np.isfinite(lon)
            & (lat >= cfg.lat_min)
            & (lat <= cfg.lat_max)
            & (lon >= cfg.lon_min)
            & (lon <= cfg.lon_max)
        )
    lat_s = np.where(inside, lat, cfg.lat_max)
    lon_s = np.where(inside, lon, cfg.lon_min)
    rows = np.floor((cfg.lat_max - lat_s) / cfg.cell_size + _SNAP).astype(np.int64)
    cols = np.floor((lon_s - cfg.lon_min) / cfg.cell_size + _SNAP).astype(np.int64)
    np.minimum(rows, cfg.rows - 1, out=rows)
    np.minimum(cols, cfg.cols - 1, out=cols)
    return rows, cols, inside


def normalize_angle(angle):
    return np.mod(angle, 360.0) if isinstance(angle, np.ndarray) else float(angle) % 360.0


def heading_quadrant(angle: float) -> Heading:
    a = normalize_angle(angle)
    # a % 360 can round up to exactly 360 for tiny negative inputs
    return Heading(min(math.floor(a / 90.0), 3))


def heading_quadrants(angles: np.ndarray) -> np.ndarray:
    a = np.mod(np.asarray(angles, dtype=np.float64), 360.0)
    return np.minimum(np.floor(a / 90.0), 3).astype(np.int64)


def _round_half_up(x):
    return np.floor(x + 0.5)


def encode_speed(v: float, p: EncodingParams = EncodingParams()) -> int:
    """Speed code in 1..255 for a (mean) speed in kph."""
    clipped = min(max(float(v), 0.0), p.speed_cap)
    code = int(math.floor(clipped * p.code_max / p.speed_cap + 0.5))
    return max(code, 1)


def encode_speeds(v: np.ndarray, p: EncodingParams = EncodingParams()) -> np.ndarray:
    clipped = np.clip(np.asarray(v, dtype=np.float64), 0.0, p.speed_cap)
    code = _round_half_up(clipped * p.code_max / p.speed_cap)
    return np.maximum(code, 1).astype(np.uint8)


def decode_speed(code, p: EncodingParams = EncodingParams()):
    """kph for a speed code; works on scalars and arrays."""
    if isinstance(code, np.ndarray):
        return code.astype(np.float64) * p.speed_cap / p.code_max
    return float(code) * p.speed_cap / p.code_max


def encode_volume(count: int, p: EncodingParams = EncodingParams()) -> int:
    capped = min(max(count - p.privacy_threshold, 0), p.volume_cutoff)
    code = int(math.floor(capped * p.code_max / p.volume_scale_divisor + 0.5))
    return min(code, p.code_max)


def encode_volumes(count: np.ndarray, p: EncodingParams = EncodingParams()) -> np.ndarray:
    capped = np.clip(np.asarray(count, dtype=np.int64) - p.privacy_threshold, 0, p.volume_cutoff)
    code = _round_half_up(capped.astype(np.float64) * p.code_max / p.volume_scale_divisor)
    return np.minimum(code, p.code_max).astype(np.uint8)
