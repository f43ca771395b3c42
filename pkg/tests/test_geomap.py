import io
import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from offroad_planner.errors import UnsupportedGeometry
from offroad_planner.geomap import (CellClass, GeoFeature, GeoTransform,
                                    apply_area_overlay, apply_overlays,
                                    cells_in_polygon, downsample, geo_to_pixel,
                                    load_geojson_features, load_map_cache,
                                    pixel_to_geo, rasterize_features,
                                    read_geotiff_meta, read_world_file,
                                    save_map_cache, slice_corners, slice_map,
                                    winding_numbers)
from conftest import FLAT, blank_map, map_from_grid
from oracles import dist_point_segment, point_in_polygon_raycast, winding_number_scalar


# ---------------------------------------------------------------------------
# geo <-> pixel
# ---------------------------------------------------------------------------

def test_origin_maps_to_pixel_origin():
    t = GeoTransform(12.5, -3.0, 2e-5, -2e-5)
    assert geo_to_pixel(12.5, -3.0, t) == (0.0, 0.0)
    assert pixel_to_geo(0.0, 0.0, t) == (12.5, -3.0)


def test_linear_offset():
    t = GeoTransform(12.5, -3.0, 2e-5, -2e-5)
    x, y = geo_to_pixel(12.5 + 10 * t.pixel_width, -3.0, t)
    assert (x, y) == pytest.approx((10.0, 0.0))


def test_hand_evaluated_transform():
    t = GeoTransform(30.0, 56.0, 1e-5, -1e-5)
    assert geo_to_pixel(30.00025, 55.99950, t) == pytest.approx((25.0, 50.0))
    assert pixel_to_geo(25.0, 50.0, t) == pytest.approx((30.00025, 55.99950))


def test_roundtrip_many_random_pixels(rng):
    t = GeoTransform(30.0, 56.0, 1e-5, -1e-5)
    xs = rng.uniform(0, 25000, size=1000)
    ys = rng.uniform(0, 6000, size=1000)
    lon, lat = pixel_to_geo(xs, ys, t)
    bx, by = geo_to_pixel(lon, lat, t)
    lon2, lat2 = pixel_to_geo(bx, by, t)
    assert np.max(np.abs(lon2 - lon)) < 1e-9
    assert np.max(np.abs(lat2 - lat)) < 1e-9


def test_zero_pixel_size_rejected():
    with pytest.raises(ValueError):
        GeoTransform(0.0, 0.0, 0.0, -1e-5)


# ---------------------------------------------------------------------------
# winding numbers / rasterization
# ---------------------------------------------------------------------------

@given(st.integers(3, 8), st.integers(0, 10_000))
@settings(max_examples=60, deadline=None)
def test_winding_matches_scalar_oracle(n_verts, seed):
    rng = np.random.default_rng(seed)
    poly = rng.uniform(0, 20, size=(n_verts, 2))
    xs, ys = np.meshgrid(np.arange(20, dtype=float), np.arange(20, dtype=float))
    wn = winding_numbers(xs, ys, poly)
    for x, y in [(3.0, 3.0), (10.0, 10.0), (17.0, 5.0)]:
        assert wn[int(y), int(x)] == winding_number_scalar(x, y, poly)


def test_rasterize_empty_feature_list():
    m = blank_map(10, 10)
    out = rasterize_features(m, [])
    assert np.array_equal(out.cells, m.cells)


def test_rasterize_square_polygon_covers_exact_cells():
    m = blank_map(8, 8)
    # geo polygon covering cell centers (1,1)-(2,2) in pixel space
    px_ring = [(0.6, 0.6), (2.4, 0.6), (2.4, 2.4), (0.6, 2.4)]
    ring = [pixel_to_geo(x, y, m.transform) for x, y in px_ring]
    out = rasterize_features(m, [GeoFeature("polygon", tuple(ring), CellClass.OBSTACLE)])
    expected = {
        (x, y)
        for x in range(8) for y in range(8)
        if point_in_polygon_raycast(x, y, px_ring)
    }
    assert expected == {(1, 1), (1, 2), (2, 1), (2, 2)}
    got = {(x, y) for x in range(8) for y in range(8)
           if out.cell_at(x, y) == CellClass.OBSTACLE}
    assert got == expected


def test_rasterize_trail_polyline():
    m = blank_map(8, 8)
    line = [pixel_to_geo(0, 0, m.transform), pixel_to_geo(4, 0, m.transform)]
    out = rasterize_features(m, [GeoFeature("line", tuple(line), CellClass.TRAIL, width_px=1.0)])
    expected = {
        (x, y)
        for x in range(8) for y in range(8)
        if dist_point_segment(x, y, 0, 0, 4, 0) <= 0.5
    }
    assert expected == {(x, 0) for x in range(5)}
    got = {(x, y) for x in range(8) for y in range(8)
           if out.cell_at(x, y) == CellClass.TRAIL}
    assert got == expected


def test_rasterize_is_idempotent():
    m = blank_map(12, 12)
    feats = [
        GeoFeature("polygon", tuple(pixel_to_geo(x, y, m.transform)
                                    for x, y in [(1, 1), (6, 1), (6, 6), (1, 6)]),
                   CellClass.WATER),
        GeoFeature("line", tuple(pixel_to_geo(x, y, m.transform)
                                 for x, y in [(0, 8), (11, 8)]), CellClass.TRAIL, 3.0),
    ]
    once = rasterize_features(m, feats)
    twice = rasterize_features(once, feats)
    assert np.array_equal(once.cells, twice.cells)


def test_rasterize_later_features_overwrite():
    m = blank_map(6, 6)
    square = tuple(pixel_to_geo(x, y, m.transform) for x, y in [(-0.5, -0.5), (5.5, -0.5), (5.5, 5.5), (-0.5, 5.5)])
    out = rasterize_features(m, [
        GeoFeature("polygon", square, CellClass.OBSTACLE),
        GeoFeature("polygon", square, CellClass.WATER),
    ])
    assert out.cell_at(2, 2) == CellClass.WATER


def test_rasterize_unsupported_geometry_reports_index():
    m = blank_map(4, 4)
    feats = [GeoFeature("line", ((0, 0), (1e-5, 0)), CellClass.TRAIL),
             GeoFeature("blob", ((0, 0),), CellClass.OBSTACLE)]
    with pytest.raises(UnsupportedGeometry) as err:
        rasterize_features(m, feats)
    assert err.value.feature_index == 1


# ---------------------------------------------------------------------------
# area overlays
# ---------------------------------------------------------------------------

def test_restricted_triangle_hits_single_cell():
    m = blank_map(12, 12)
    tri = [(4.6, 4.6), (5.4, 4.6), (5.0, 5.4)]
    out = apply_area_overlay(m, tri, "restricted")
    expected = {(x, y) for x in range(12) for y in range(12)
                if winding_number_scalar(x, y, tri) != 0}
    assert expected == {(5, 5)}
    got = {(x, y) for x in range(12) for y in range(12)
           if out.cell_at(x, y) == CellClass.OBSTACLE}
    assert got == expected


def test_passable_square_reopens_obstacles():
    grid = np.full((6, 6), int(CellClass.OBSTACLE), dtype=np.uint8)
    m = map_from_grid(grid)
    out = apply_area_overlay(m, [(-0.5, -0.5), (5.5, -0.5), (5.5, 5.5), (-0.5, 5.5)], "passable")
    assert out.traversable_mask().all()
    assert out.cell_at(3, 3) == CellClass.PASSABLE_OVERRIDE


def test_concave_c_shape_leaves_notch_untouched():
    m = blank_map(20, 20)
    c_shape = [(2, 2), (14, 2), (14, 6), (6, 6), (6, 12), (14, 12), (14, 16), (2, 16)]
    out = apply_area_overlay(m, c_shape, "restricted")
    # the notch interior (right of x=6, between the arms) must stay FREE
    for x, y in [(10, 9), (12, 8), (13, 10)]:
        assert not point_in_polygon_raycast(x, y, c_shape)
        assert out.cell_at(x, y) == CellClass.FREE
    # the arms are restricted
    for x, y in [(10, 4), (10, 14), (4, 9)]:
        assert point_in_polygon_raycast(x, y, c_shape)
        assert out.cell_at(x, y) == CellClass.OBSTACLE


@given(st.integers(0, 10_000))
@settings(max_examples=25, deadline=None)
def test_overlay_matches_raycast_oracle_on_random_polygons(seed):
    rng = np.random.default_rng(seed)
    w = h = 40
    m = blank_map(w, h)
    # star-shaped polygon around a center: simple (non-self-intersecting)
    cx, cy = rng.uniform(8, 32, size=2)
    angles = np.sort(rng.uniform(0, 2 * math.pi, size=rng.integers(3, 9)))
    radii = rng.uniform(2, 12, size=len(angles))
    poly = [(cx + r * math.cos(a), cy + r * math.sin(a)) for a, r in zip(angles, radii)]
    try:
        out = apply_area_overlay(m, poly, "restricted")
    except ValueError:
        return  # degenerate polygon; rejection is the contract
    for x in range(0, w, 3):
        for y in range(0, h, 3):
            expected = point_in_polygon_raycast(x, y, poly)
            got = out.cell_at(x, y) == CellClass.OBSTACLE
            # boundary-grazing centers may legitimately differ between
            # even-odd and winding; skip samples too close to an edge
            edge_d = min(dist_point_segment(x, y, *poly[i], *poly[(i + 1) % len(poly)])
                         for i in range(len(poly)))
            if edge_d > 1e-6:
                assert got == expected, (x, y, poly)


def test_degenerate_polygon_rejected():
    m = blank_map(5, 5)
    with pytest.raises(ValueError):
        apply_area_overlay(m, [(1, 1), (2, 2), (3, 3)], "restricted")
    with pytest.raises(ValueError):
        apply_area_overlay(m, [(1, 1), (2, 2)], "restricted")


def test_restricted_wins_over_passable():
    grid = np.full((8, 8), int(CellClass.OBSTACLE), dtype=np.uint8)
    m = map_from_grid(grid)
    square = [(-0.5, -0.5), (7.5, -0.5), (7.5, 7.5), (-0.5, 7.5)]
    out = apply_overlays(m, [(square, "restricted"), (square, "passable")])
    assert not out.is_traversable(4, 4)
    out2 = apply_overlays(m, [(square, "passable"), (square, "restricted")])
    assert not out2.is_traversable(4, 4)


# ---------------------------------------------------------------------------
# downsampling
# ---------------------------------------------------------------------------

def test_downsample_paper_dimensions():
    m = blank_map(25000, 6000)
    out = downsample(m, 8)
    assert (out.width, out.height) == (3125, 750)


def test_downsample_identity():
    m = blank_map(7, 5)
    m.grid[2, 3] = int(CellClass.TRAIL)
    out = downsample(m, 1)
    assert np.array_equal(out.cells, m.cells)
    assert (out.width, out.height) == (7, 5)


def test_downsample_single_obstacle():
    grid = np.zeros((4, 4), dtype=np.uint8)
    grid[3, 3] = int(CellClass.OBSTACLE)
    out = downsample(map_from_grid(grid), 2)
    assert (out.width, out.height) == (2, 2)
    assert out.cell_at(1, 1) == CellClass.OBSTACLE
    assert out.cell_at(0, 0) == CellClass.FREE


def test_downsample_zero_size_rejected():
    with pytest.raises(ValueError):
        downsample(blank_map(4, 4), 5)


@given(st.integers(0, 10_000), st.floats(1.0, 4.0))
@settings(max_examples=40, deadline=None)
def test_downsample_is_conservative(seed, d_f):
    rng = np.random.default_rng(seed)
    grid = rng.choice(
        [int(CellClass.FREE), int(CellClass.OBSTACLE), int(CellClass.TRAIL)],
        size=(12, 15), p=[0.6, 0.25, 0.15]).astype(np.uint8)
    m = map_from_grid(grid)
    try:
        out = downsample(m, d_f)
    except ValueError:
        return
    trav_in = m.traversable_mask()
    trav_out = out.traversable_mask()
    for y in range(m.height):
        for x in range(m.width):
            ox, oy = int(x / d_f), int(y / d_f)
            if ox < out.width and oy < out.height and not trav_in[y, x]:
                assert not trav_out[oy, ox]


# ---------------------------------------------------------------------------
# slicing
# ---------------------------------------------------------------------------

def test_slice_corner_formulas_hand_case():
    d1, d2, d3, d4, u, v = slice_corners((0, 0), (10, 0), 2, 2)
    assert np.allclose(d1, (-2, 2), atol=1e-9)
    assert np.allclose(d2, (-2, -2), atol=1e-9)
    assert np.allclose(d3, (12, -2), atol=1e-9)
    assert np.allclose(d4, (12, 2), atol=1e-9)


def test_slice_corner_formulas_zero_margin():
    d1, d2, d3, d4, _, _ = slice_corners((0, 0), (10, 10), 0, 0)
    assert np.allclose(d1, (0, 0), atol=1e-9)
    assert np.allclose(d2, (0, 0), atol=1e-9)
    assert np.allclose(d3, (10, 10), atol=1e-9)
    assert np.allclose(d4, (10, 10), atol=1e-9)


@given(st.integers(0, 10_000))
@settings(max_examples=30, deadline=None)
def test_slice_corners_satisfy_formulas(seed):
    rng = np.random.default_rng(seed)
    s = rng.uniform(0, 50, 2)
    t = rng.uniform(0, 50, 2)
    if np.hypot(*(t - s)) < 5:
        return
    d_x, d_y = rng.uniform(1, 30, 2)
    sl = slice_map(blank_map(60, 60), s, t, d_x, d_y)
    u = (t - s) / np.hypot(*(t - s))
    v = np.array([-u[1], u[0]])
    assert np.allclose(sl.d1, s + v * d_y - u * d_x, atol=1e-9)
    assert np.allclose(sl.d2, s - v * d_y - u * d_x, atol=1e-9)
    assert np.allclose(sl.d3, t - v * d_y + u * d_x, atol=1e-9)
    assert np.allclose(sl.d4, t + v * d_y + u * d_x, atol=1e-9)


def test_slice_roundtrip_identity(rng):
    sl = slice_map(blank_map(80, 80), (10, 20), (60, 50), 15, 10)
    for _ in range(50):
        x, y = rng.uniform(0, 80, 2)
        sx, sy = sl.to_slice(x, y)
        bx, by = sl.to_parent(sx, sy)
        assert math.hypot(bx - x, by - y) < 0.5


def test_slice_traversable_cells_map_to_traversable_parents(rng):
    grid = rng.choice([0, 1], size=(60, 60), p=[0.7, 0.3]).astype(np.uint8)
    m = map_from_grid(grid)
    sl = slice_map(m, (5, 8), (50, 40), 12, 9)
    sub = sl.submap
    trav = sub.traversable_mask()
    for j in range(sub.height):
        for i in range(sub.width):
            if trav[j, i]:
                px, py = sl.to_parent(i, j)
                assert m.is_traversable(int(round(px)), int(round(py)))


def test_slice_coincident_endpoints_fallback_box():
    m = blank_map(50, 50)
    sl = slice_map(m, (25, 25), (26, 25), 10, 6)  # separation below threshold
    assert sl.rotation == 0.0
    assert sl.submap.width >= 20 and sl.submap.height >= 20


def test_slice_outside_parent_is_obstacle():
    m = blank_map(20, 20)
    sl = slice_map(m, (2, 10), (18, 10), 10, 5)  # extends past both x-edges
    sub = sl.submap
    # slice cell mapping to parent x < 0 must be an obstacle
    sx, sy = sl.to_slice(-5.0, 10.0)
    assert sub.cell_at(int(round(sx)), int(round(sy))) == CellClass.OBSTACLE


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

def test_map_cache_roundtrip(tmp_path):
    m = blank_map(9, 7)
    m.grid[3, 4] = int(CellClass.TRAIL)
    m.grid[0, 0] = int(CellClass.WATER)
    path = tmp_path / "map.bin"
    save_map_cache(m, path)
    raw = path.read_bytes()
    assert raw[:4] == b"OFRM"
    w, h = struct.unpack("<II", raw[4:12])
    assert (w, h) == (9, 7)
    back = load_map_cache(path)
    assert np.array_equal(back.cells, m.cells)
    assert back.transform == m.transform


def test_world_file(tmp_path):
    p = tmp_path / "map.wld"
    p.write_text("1e-05\n0\n0\n-1e-05\n30.000005\n55.999995\n")
    w, h, t = read_world_file(p, 100, 80)
    assert (w, h) == (100, 80)
    assert t.x_origin == pytest.approx(30.0)
    assert t.y_origin == pytest.approx(56.0)
    assert t.pixel_width == pytest.approx(1e-5)


def _tiny_geotiff(width, height, scale, tiepoint):
    # classic little-endian TIFF with just the tags the reader needs
    entries = []
    extra = b""
    base = 8 + 2 + 12 * 4 + 4  # header + count + 4 entries + next-IFD

    def add(tag, tag_type, values, fmt):
        nonlocal extra
        count = len(values)
        packed = struct.pack("<" + fmt * count, *values)
        if len(packed) <= 4:
            entries.append(struct.pack("<HHI", tag, tag_type, count) + packed.ljust(4, b"\0"))
        else:
            entries.append(struct.pack("<HHII", tag, tag_type, count, base + len(extra)))
            extra += packed

    add(256, 3, [width], "H")
    add(257, 3, [height], "H")
    add(33550, 12, list(scale), "d")
    add(33922, 12, list(tiepoint), "d")
    header = struct.pack("<2sHI", b"II", 42, 8)
    ifd = struct.pack("<H", len(entries)) + b"".join(entries) + struct.pack("<I", 0)
    return header + ifd + extra


def test_geotiff_metadata(tmp_path):
    data = _tiny_geotiff(120, 90, (1e-5, 1e-5, 0.0), (0, 0, 0, 30.0, 56.0, 0.0))
    p = tmp_path / "map.tif"
    p.write_bytes(data)
    w, h, t = read_geotiff_meta(p)
    assert (w, h) == (120, 90)
    assert t.pixel_width == pytest.approx(1e-5)
    assert t.pixel_height == pytest.approx(-1e-5)
    assert t.x_origin == pytest.approx(30.0)
    assert t.y_origin == pytest.approx(56.0)


def test_geojson_features():
    doc = {
        "type": "FeatureCollection",
        "features": [
            {"type": "Feature", "properties": {"class": "trail"},
             "geometry": {"type": "LineString", "coordinates": [[30.0, 56.0], [30.001, 56.0]]}},
            {"type": "Feature", "properties": {"class": "building"},
             "geometry": {"type": "Polygon",
                          "coordinates": [[[30.0, 56.0], [30.0001, 56.0],
                                           [30.0001, 55.9999], [30.0, 55.9999]]]}},
            {"type": "Feature", "properties": {"class": "unknown"},
             "geometry": {"type": "Point", "coordinates": [30.0, 56.0]}},
        ],
    }
    feats = load_geojson_features(doc)
    assert len(feats) == 2
    assert feats[0].kind == "line" and feats[0].cell_class == CellClass.TRAIL
    assert feats[1].kind == "polygon" and feats[1].cell_class == CellClass.OBSTACLE


def test_geojson_unsupported_geometry():
    doc = {"type": "FeatureCollection", "features": [
        {"type": "Feature", "properties": {"class": "water"},
         "geometry": {"type": "GeometryCollection", "geometries": []}},
    ]}
    with pytest.raises(UnsupportedGeometry) as err:
        load_geojson_features(doc)
    assert err.value.feature_index == 0
