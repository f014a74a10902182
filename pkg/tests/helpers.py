"""Builders shared by several test modules."""

import numpy as np

from fcdspeed.grid import GridConfig
from fcdspeed.spotbin import MovieDay


def random_movie(rng, cfg: GridConfig, p_zero=0.6, stray_speed=True, day="d"):
    """Random code tensor; with ``stray_speed`` some zero-volume slots carry a speed code."""
    shape = cfg.shape
    t = np.zeros(shape, dtype=np.uint8)
    vol = rng.integers(1, 256, shape[:3] + (4,)).astype(np.uint8)
    vol[rng.random(vol.shape) < p_zero] = 0
    spd = rng.integers(1, 256, vol.shape).astype(np.uint8)
    if not stray_speed:
        spd[vol == 0] = 0
    t[..., 0::2] = vol
    t[..., 1::2] = spd
    return MovieDay(day, t, cfg)
