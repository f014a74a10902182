import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fcdspeed.grid import (
    GridConfig,
    EncodingParams,
    Heading,
    cell_of,
    cells_of,
    decode_speed,
    encode_speed,
    encode_speeds,
    encode_volume,
    encode_volumes,
    heading_quadrant,
    heading_quadrants,
    load_grid_config,
)


def test_berlin_dimensions(berlin):
    assert (berlin.rows, berlin.cols) == (495, 436)
    assert berlin.shape == (288, 495, 436, 8)
    assert berlin.bin_seconds == 300


@pytest.mark.parametrize("kw", [
    dict(lat_min=1, lat_max=1, lon_min=0, lon_max=1),
    dict(lat_min=0, lat_max=1, lon_min=2, lon_max=1),
    dict(lat_min=0, lat_max=1, lon_min=0, lon_max=1, cell_size=0),
    dict(lat_min=0, lat_max=1, lon_min=0, lon_max=1, bins_per_day=7),
])
def test_invalid_grid(kw):
    with pytest.raises(ValueError):
        GridConfig(**kw)


def test_cell_of_examples(berlin):
    assert cell_of(52.854 - 0.0005, 13.189 + 0.0005, berlin) == (0, 0)
    assert cell_of(berlin.lat_min, berlin.lon_min, berlin) == (berlin.rows - 1, 0)
    # row = floor((52.854 - 52.5005) / 0.001), col = floor((13.4005 - 13.189) / 0.001)
    assert cell_of(52.5005, 13.4005, berlin) == (353, 211)


def test_cell_of_outside(berlin):
    assert cell_of(52.9, 13.3, berlin) is None
    assert cell_of(52.5, 13.0, berlin) is None
    assert cell_of(float("nan"), 13.3, berlin) is None


def test_boundaries_go_to_larger_index(small_grid):
    g = small_grid
    # interior grid line between row 0 and row 1
    assert cell_of(g.lat_max - g.cell_size, g.lon_min + 0.0005, g)[0] == 1
    assert cell_of(g.lat_min + 0.0005, g.lon_min + g.cell_size, g)[1] == 1
    # outer maxima clamp inward
    assert cell_of(g.lat_max, g.lon_max, g) == (0, g.cols - 1)


def test_centers_round_trip(berlin):
    for r in range(berlin.rows):
        for c in range(0, berlin.cols, 7):
            assert cell_of(*berlin.cell_center(r, c), berlin) == (r, c)


def test_vectorized_matches_scalar(small_grid, rng):
    g = small_grid
    lat = rng.uniform(g.lat_min - 0.002, g.lat_max + 0.002, 5000)
    lon = rng.uniform(g.lon_min - 0.002, g.lon_max + 0.002, 5000)
    # include exact grid lines
    lat[:100] = g.lat_max - g.cell_size * rng.integers(0, g.rows + 1, 100)
    rows, cols, inside = cells_of(lat, lon, g)
    for i in range(len(lat)):
        rc = cell_of(lat[i], lon[i], g)
        assert (rc is not None) == inside[i]
        if rc is not None:
            assert rc == (rows[i], cols[i])


def test_heading_examples():
    assert heading_quadrant(45) == Heading.NE
    assert heading_quadrant(0) == Heading.NE
    assert heading_quadrant(270) == Heading.NW
    assert heading_quadrant(90) == Heading.SE
    assert heading_quadrant(-10) == Heading.NW
    assert heading_quadrant(360) == Heading.NE


def test_headings_partition():
    hits = {h: 0 for h in Heading}
    for a in range(360):
        h = heading_quadrant(a)
        lo, hi = h.interval
        assert lo <= a < hi
        hits[h] += 1
    assert all(n == 90 for n in hits.values())
    assert list(heading_quadrants(np.arange(360))) == [int(heading_quadrant(a)) for a in range(360)]


def test_channel_layout():
    assert [h.volume_channel for h in Heading] == [0, 2, 4, 6]
    assert [h.speed_channel for h in Heading] == [1, 3, 5, 7]


def test_encode_speed_examples():
    assert encode_speed(120) == 255
    assert encode_speed(90) == 191  # round(90 * 255 / 120) = round(191.25)
    assert encode_speed(0) == 1
    assert encode_speed(500) == 255


def test_encode_speed_round_trip_scan():
    v = np.arange(0, 20001) / 100.0
    err = np.abs(decode_speed(encode_speeds(v)) - np.clip(v, 0, 120))
    assert err.max() <= 120 / 255


@given(st.floats(0, 200), st.floats(0, 200))
def test_encode_speed_monotone(a, b):
    lo, hi = sorted((a, b))
    assert encode_speed(lo) <= encode_speed(hi)
    assert encode_speed(a) == int(encode_speeds(np.array([a]))[0])


def test_encode_volume_examples():
    assert encode_volume(0, EncodingParams()) == 0
    assert encode_volume(1, EncodingParams(privacy_threshold=2)) == 0
    # round(clip(10 - 2, 0, 255) * 255 / 255) = 8
    assert encode_volume(10, EncodingParams(privacy_threshold=2)) == 8
    assert encode_volume(10_000, EncodingParams()) == 255


@settings(max_examples=200)
@given(st.integers(0, 1000), st.integers(0, 1000), st.integers(0, 20), st.integers(21, 300), st.floats(1, 500))
def test_encode_volume_monotone(a, b, theta, kappa, co):
    p = EncodingParams(privacy_threshold=theta, volume_cutoff=kappa, volume_scale_divisor=co)
    lo, hi = sorted((a, b))
    assert encode_volume(lo, p) <= encode_volume(hi, p) <= 255
    if hi < theta:
        assert encode_volume(hi, p) == 0
    assert encode_volume(a, p) == int(encode_volumes(np.array([a]), p)[0])


def test_encoding_params_validation():
    with pytest.raises(ValueError):
        EncodingParams(privacy_threshold=300)
    with pytest.raises(ValueError):
        EncodingParams(volume_scale_divisor=0)
    assert EncodingParams(volume_cutoff=100).volume_scale_divisor == 100


def test_config_file(tmp_path):
    path = tmp_path / "grid.json"
    path.write_text(json.dumps({
        "lat_min": 52.359, "lat_max": 52.854, "lon_min": 13.189, "lon_max": 13.625,
        "cell_size": 0.001, "bins_per_day": 288, "privacy_threshold": 1,
        "volume_cutoff": 200, "volume_scale_divisor": 100,
    }))
    cfg, enc = load_grid_config(path)
    assert cfg.rows == 495 and enc.volume_scale_divisor == 100 and enc.privacy_threshold == 1
    path.write_text(json.dumps({"lat_min": 0, "lat_max": 1, "lon_min": 0, "lon_max": 1, "bogus": 1}))
    with pytest.raises(ValueError, match="unknown"):
        load_grid_config(path)
