"""Pixel-coordinate intermediate map: construction, overlays, downsampling, slicing.

The map is a flattened row-major grid of cell classes plus an affine
(axis-aligned) geo transform. All planners work in pixel coordinates and
project back to lon/lat only at the edges of the pipeline.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, Sequence

import numpy as np

from .errors import UnsupportedGeometry

CACHE_MAGIC = b"OFRM"


class CellClass(IntEnum):
    FREE = 0
    OBSTACLE = 1
    TRAIL = 2
    WATER = 3
    RESTRICTED = 4
    PASSABLE_OVERRIDE = 5


TRAVERSABLE = frozenset({CellClass.FREE, CellClass.TRAIL, CellClass.PASSABLE_OVERRIDE})

# uint8 lookup: 1 where the class can be driven on
_TRAVERSABLE_LUT = np.zeros(256, dtype=bool)
for _c in TRAVERSABLE:
    _TRAVERSABLE_LUT[int(_c)] = True

# GeoJSON "class" property -> cell class
FEATURE_CLASSES = {
    "trail": CellClass.TRAIL,
    "river": CellClass.WATER,
    "water": CellClass.WATER,
    "building": CellClass.OBSTACLE,
    "tree": CellClass.OBSTACLE,
    "restricted": CellClass.RESTRICTED,
}

DEFAULT_TRAIL_WIDTH_PX = 3.0
MIN_SLICE_SEPARATION_PX = 4.0


@dataclass(frozen=True)
class GeoTransform:
    """Axis-aligned affine transform between EPSG:4326 and pixel coordinates."""

    x_origin: float
    y_origin: float
    pixel_width: float
    pixel_height: float
    crs_id: str = "EPSG:4326"

    def __post_init__(self):
        if self.pixel_width == 0 or self.pixel_height == 0:
            raise ValueError("pixel_width and pixel_height must be nonzero")


def geo_to_pixel(lon, lat, t: GeoTransform):
    """Project lon/lat (degrees) to real-valued pixel coordinates.

    Accepts scalars or numpy arrays; out-of-map coordinates are returned
    as-is, bounds are the caller's concern.
    """
    x_pix = (lon - t.x_origin) / t.pixel_width
    y_pix = (lat - t.y_origin) / t.pixel_height
    return x_pix, y_pix


def pixel_to_geo(x_pix, y_pix, t: GeoTransform):
    """Exact algebraic inverse of :func:`geo_to_pixel`."""
    lon = t.x_origin + x_pix * t.pixel_width
    lat = t.y_origin + y_pix * t.pixel_height
    return lon, lat


@dataclass
class IntermediateMap:
    """Flattened traversability grid with geo metadata.

    ``cells`` is row-major with index(x, y) = y * width + x. Instances are
    treated as immutable after construction; operations that change cell
    content return a new map sharing the transform.
    """

    width: int
    height: int
    cells: np.ndarray
    transform: GeoTransform

    def __post_init__(self):
        self.cells = np.ascontiguousarray(self.cells, dtype=np.uint8).reshape(-1)
        if self.cells.size != self.width * self.height:
            raise ValueError(
                f"cells length {self.cells.size} != width*height {self.width * self.height}"
            )

    @classmethod
    def blank(cls, width: int, height: int, transform: GeoTransform,
              fill: CellClass = CellClass.FREE) -> "IntermediateMap":
        cells = np.full(width * height, int(fill), dtype=np.uint8)
        return cls(width, height, cells, transform)

    @property
    def grid(self) -> np.ndarray:
        """2D (height, width) view of the flattened cells."""
        return self.cells.reshape(self.height, self.width)

    def index(self, x: int, y: int) -> int:
        return y * self.width + x

    def in_bounds(self, x, y):
        return (0 <= x) & (x < self.width) & (0 <= y) & (y < self.height)

    def cell_at(self, x: int, y: int) -> CellClass:
        return CellClass(self.cells[y * self.width + x])

    def is_traversable(self, x: int, y: int) -> bool:
        if not (0 <= x < self.width and 0 <= y < self.height):
            return False
        return bool(_TRAVERSABLE_LUT[self.cells[y * self.width + x]])

    def traversable_mask(self) -> np.ndarray:
        """Boolean (height, width) array, True on drivable cells.

        Cached: maps are treated as immutable once queried. Code that
        mutates ``grid`` in place must call :meth:`invalidate_masks`.
        """
        cached = getattr(self, "_trav_mask", None)
        if cached is None:
            cached = _TRAVERSABLE_LUT[self.grid]
            self._trav_mask = cached
        return cached

    def invalidate_masks(self) -> None:
        self._trav_mask = None

    def copy(self) -> "IntermediateMap":
        return IntermediateMap(self.width, self.height, self.cells.copy(), self.transform)

    def window(self, x0: int, y0: int, x1: int, y1: int) -> "IntermediateMap":
        """Axis-aligned copy of the [x0, x1) x [y0, y1) cell window."""
        return IntermediateMap(x1 - x0, y1 - y0,
                               self.grid[y0:y1, x0:x1].copy().ravel(), self.transform)

    def geo_to_pixel(self, lon, lat):
        return geo_to_pixel(lon, lat, self.transform)

    def pixel_to_geo(self, x_pix, y_pix):
        return pixel_to_geo(x_pix, y_pix, self.transform)

    def meters_per_pixel(self) -> float:
        """Ground scale at the map's mid-latitude, averaged over both axes."""
        t = self.transform
        lat_mid = t.y_origin + t.pixel_height * self.height / 2.0
        m_per_deg_lat = 111_320.0
        m_per_deg_lon = m_per_deg_lat * math.cos(math.radians(lat_mid))
        sx = abs(t.pixel_width) * m_per_deg_lon
        sy = abs(t.pixel_height) * m_per_deg_lat
        return (sx + sy) / 2.0


@dataclass(frozen=True)
class GeoFeature:
    """A single vector feature in the map's CRS (lon/lat vertex lists)."""

    kind: str  # "polygon" | "line" | "point"
    coordinates: tuple  # polygon: ring of (lon, lat); line: polyline; point: (lon, lat)
    cell_class: CellClass
    width_px: float = DEFAULT_TRAIL_WIDTH_PX


# ---------------------------------------------------------------------------
# point-in-polygon via winding numbers (vectorized over sample points)
# ---------------------------------------------------------------------------

def winding_numbers(px: np.ndarray, py: np.ndarray, polygon: np.ndarray) -> np.ndarray:
    """Integer winding number of each (px, py) sample w.r.t. a closed polygon.

    ``polygon`` is (M, 2) without a repeated closing vertex. Works for convex
    and concave rings; samples exactly on an edge may land on either side.
    """
    poly = np.asarray(polygon, dtype=np.float64)
    wn = np.zeros(px.shape, dtype=np.int64)
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        # cross > 0: sample left of the directed edge
        cross = (x2 - x1) * (py - y1) - (px - x1) * (y2 - y1)
        upward = (y1 <= py) & (py < y2) & (cross > 0)
        downward = (y2 <= py) & (py < y1) & (cross < 0)
        wn += upward.astype(np.int64)
        wn -= downward.astype(np.int64)
    return wn


def _polygon_area(polygon: np.ndarray) -> float:
    poly = np.asarray(polygon, dtype=np.float64)
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def cells_in_polygon(width: int, height: int, polygon: np.ndarray):
    """(xs, ys) of cells whose centers have nonzero winding number."""
    poly = np.asarray(polygon, dtype=np.float64)
    x0 = max(0, int(math.floor(poly[:, 0].min())))
    x1 = min(width - 1, int(math.ceil(poly[:, 0].max())))
    y0 = max(0, int(math.floor(poly[:, 1].min())))
    y1 = min(height - 1, int(math.ceil(poly[:, 1].max())))
    if x1 < x0 or y1 < y0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    xs, ys = np.meshgrid(np.arange(x0, x1 + 1), np.arange(y0, y1 + 1))
    wn = winding_numbers(xs.astype(np.float64), ys.astype(np.float64), poly)
    inside = wn != 0
    return xs[inside].ravel(), ys[inside].ravel()


def cells_near_polyline(width: int, height: int, polyline: np.ndarray, half_width: float):
    """(xs, ys) of cells whose centers lie within ``half_width`` of the polyline."""
    pts = np.asarray(polyline, dtype=np.float64)
    hit_x: list[np.ndarray] = []
    hit_y: list[np.ndarray] = []
    for i in range(len(pts) - 1):
        ax, ay = pts[i]
        bx, by = pts[i + 1]
        x0 = max(0, int(math.floor(min(ax, bx) - half_width)))
        x1 = min(width - 1, int(math.ceil(max(ax, bx) + half_width)))
        y0 = max(0, int(math.floor(min(ay, by) - half_width)))
        y1 = min(height - 1, int(math.ceil(max(ay, by) + half_width)))
        if x1 < x0 or y1 < y0:
            continue
        xs, ys = np.meshgrid(np.arange(x0, x1 + 1), np.arange(y0, y1 + 1))
        dx, dy = bx - ax, by - ay
        seg_len2 = dx * dx + dy * dy
        if seg_len2 == 0:
            t = np.zeros_like(xs, dtype=np.float64)
        else:
            t = np.clip(((xs - ax) * dx + (ys - ay) * dy) / seg_len2, 0.0, 1.0)
        d2 = (xs - (ax + t * dx)) ** 2 + (ys - (ay + t * dy)) ** 2
        near = d2 <= half_width * half_width
        hit_x.append(xs[near].ravel())
        hit_y.append(ys[near].ravel())
    if len(pts) == 1:
        return cells_near_polyline(width, height, np.vstack([pts, pts]), half_width)
    if not hit_x:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    return np.concatenate(hit_x), np.concatenate(hit_y)


# ---------------------------------------------------------------------------
# rasterization and overlays
# ---------------------------------------------------------------------------

def rasterize_features(imap: IntermediateMap, features: Sequence[GeoFeature]) -> IntermediateMap:
    """Burn vector features into a copy of the map, in list order.

    Polygon membership is decided by cell-center winding number; line
    features mark every cell whose center lies within width/2 of the
    polyline. Later features overwrite earlier ones.
    """
    out = imap.copy()
    grid = out.grid
    t = imap.transform
    for idx, feat in enumerate(features):
        if feat.kind == "polygon":
            ring = np.asarray(feat.coordinates, dtype=np.float64)
            px, py = geo_to_pixel(ring[:, 0], ring[:, 1], t)
            xs, ys = cells_in_polygon(imap.width, imap.height, np.column_stack([px, py]))
        elif feat.kind == "line":
            line = np.asarray(feat.coordinates, dtype=np.float64)
            px, py = geo_to_pixel(line[:, 0], line[:, 1], t)
            xs, ys = cells_near_polyline(
                imap.width, imap.height, np.column_stack([px, py]), feat.width_px / 2.0
            )
        elif feat.kind == "point":
            lon, lat = feat.coordinates
            px, py = geo_to_pixel(lon, lat, t)
            xs, ys = cells_near_polyline(
                imap.width, imap.height,
                np.array([[px, py], [px, py]]), feat.width_px / 2.0,
            )
        else:
            raise UnsupportedGeometry(
                f"feature {idx}: unsupported geometry kind {feat.kind!r}", feature_index=idx
            )
        grid[ys, xs] = int(feat.cell_class)
    return out


def apply_area_overlay(imap: IntermediateMap, polygon, kind: str) -> IntermediateMap:
    """Force cells inside a pixel-space polygon to OBSTACLE or PASSABLE_OVERRIDE.

    ``kind`` is "restricted" or "passable". Membership uses nonzero winding
    number of the cell center, so concave polygons behave correctly.
    """
    poly = np.asarray(polygon, dtype=np.float64)
    if poly.ndim != 2 or len(poly) < 3:
        raise ValueError("overlay polygon needs at least 3 vertices")
    if abs(_polygon_area(poly)) < 1e-12:
        raise ValueError("degenerate overlay polygon (zero area)")
    kind = kind.lower()
    if kind == "restricted":
        value = int(CellClass.OBSTACLE)
    elif kind == "passable":
        value = int(CellClass.PASSABLE_OVERRIDE)
    else:
        raise ValueError(f"unknown overlay kind {kind!r}")
    out = imap.copy()
    xs, ys = cells_in_polygon(imap.width, imap.height, poly)
    out.grid[ys, xs] = value
    return out


def apply_overlays(imap: IntermediateMap, overlays: Iterable[tuple]) -> IntermediateMap:
    """Apply (polygon, kind) overlays with restricted taking precedence.

    Passable polygons are burned first so that any overlapping restricted
    polygon wins, regardless of the order the operator drew them in.
    """
    overlays = list(overlays)
    out = imap
    for poly, kind in [o for o in overlays if o[1].lower() == "passable"]:
        out = apply_area_overlay(out, poly, kind)
    for poly, kind in [o for o in overlays if o[1].lower() == "restricted"]:
        out = apply_area_overlay(out, poly, kind)
    return out


def downsample(imap: IntermediateMap, d_f: float) -> IntermediateMap:
    """Reduce resolution by ``d_f``, conservatively.

    An output cell is non-traversable iff any covered input cell is; it is
    TRAIL iff any covered cell is TRAIL and none is non-traversable.
    """
    if d_f < 1:
        raise ValueError("downsampling factor must be >= 1")
    out_w = int(imap.width / d_f)
    out_h = int(imap.height / d_f)
    if out_w <= 0 or out_h <= 0:
        raise ValueError(f"downsampling factor {d_f} collapses the map to zero size")

    grid = imap.grid
    nontrav = ~_TRAVERSABLE_LUT[grid]
    trail = grid == int(CellClass.TRAIL)

    if float(d_f).is_integer():
        f = int(d_f)
        blk_nt = nontrav[: out_h * f, : out_w * f].reshape(out_h, f, out_w, f)
        blk_tr = trail[: out_h * f, : out_w * f].reshape(out_h, f, out_w, f)
        any_nt = blk_nt.any(axis=(1, 3))
        any_tr = blk_tr.any(axis=(1, 3))
    else:
        ox = (np.arange(imap.width) / d_f).astype(np.int64)
        oy = (np.arange(imap.height) / d_f).astype(np.int64)
        keep_x = ox < out_w
        keep_y = oy < out_h
        flat_idx = (oy[keep_y, None] * out_w + ox[None, keep_x]).ravel()
        n_out = out_w * out_h
        any_nt = np.bincount(flat_idx, weights=nontrav[keep_y][:, keep_x].ravel(),
                             minlength=n_out) > 0
        any_tr = np.bincount(flat_idx, weights=trail[keep_y][:, keep_x].ravel(),
                             minlength=n_out) > 0
        any_nt = any_nt.reshape(out_h, out_w)
        any_tr = any_tr.reshape(out_h, out_w)

    out_grid = np.full((out_h, out_w), int(CellClass.FREE), dtype=np.uint8)
    out_grid[any_tr] = int(CellClass.TRAIL)
    out_grid[any_nt] = int(CellClass.OBSTACLE)

    t = imap.transform
    out_t = GeoTransform(t.x_origin, t.y_origin, t.pixel_width * d_f,
                         t.pixel_height * d_f, t.crs_id)
    return IntermediateMap(out_w, out_h, out_grid.ravel(), out_t)


# ---------------------------------------------------------------------------
# oriented map slices
# ---------------------------------------------------------------------------

@dataclass
class MapSlice:
    """Oriented sub-rectangle of a parent map, resampled onto its own grid.

    Slice coordinates: x runs along the start->target direction, y along its
    left normal, origin at corner d2. ``to_parent``/``to_slice`` convert
    positions; headings differ by ``rotation``.
    """

    d1: np.ndarray
    d2: np.ndarray
    d3: np.ndarray
    d4: np.ndarray
    submap: IntermediateMap
    origin: np.ndarray  # parent coords of slice pixel (0, 0)
    rotation: float     # radians, slice x-axis direction in the parent frame

    def to_parent(self, x, y):
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        return (self.origin[0] + c * x - s * y,
                self.origin[1] + s * x + c * y)

    def to_slice(self, x, y):
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        dx, dy = x - self.origin[0], y - self.origin[1]
        return (c * dx + s * dy, -s * dx + c * dy)


def slice_corners(s_xy, t_xy, d_x: float, d_y: float):
    """Corner formulas for the oriented slice (no clamping)."""
    s = np.asarray(s_xy, dtype=np.float64)
    t = np.asarray(t_xy, dtype=np.float64)
    diff = t - s
    norm = float(np.hypot(diff[0], diff[1]))
    u = diff / norm
    v = np.array([-u[1], u[0]])
    d1 = s + v * d_y - u * d_x
    d2 = s - v * d_y - u * d_x
    d3 = t - v * d_y + u * d_x
    d4 = t + v * d_y + u * d_x
    return d1, d2, d3, d4, u, v


def slice_map(imap: IntermediateMap, s_xy, t_xy, d_x: float, d_y: float,
              min_separation: float = MIN_SLICE_SEPARATION_PX) -> MapSlice:
    """Extract the oriented rectangle around the s->t segment.

    Cells that fall outside the parent map come back as OBSTACLE. When s and
    t are closer than ``min_separation`` the slice degrades to an
    axis-aligned box of side 2*max(d_x, d_y) centered at s.
    """
    if d_x < 0 or d_y < 0:
        raise ValueError("slice offsets must be nonnegative")
    s = np.asarray(s_xy, dtype=np.float64)
    t = np.asarray(t_xy, dtype=np.float64)
    dist = float(np.hypot(*(t - s)))

    if dist < min_separation:
        half = max(d_x, d_y, min_separation)
        d2 = s + np.array([-half, -half])
        d1 = s + np.array([-half, half])
        d3 = s + np.array([half, -half])
        d4 = s + np.array([half, half])
        rotation = 0.0
        len_u, len_v = 2 * half, 2 * half
    else:
        d1, d2, d3, d4, u, v = slice_corners(s, t, d_x, d_y)
        rotation = math.atan2(u[1], u[0])
        len_u = dist + 2 * d_x
        len_v = 2 * d_y

    sub_w = int(math.ceil(len_u)) + 1
    sub_h = int(math.ceil(len_v)) + 1

    cos_r, sin_r = math.cos(rotation), math.sin(rotation)
    ix, iy = np.meshgrid(np.arange(sub_w), np.arange(sub_h))
    px = d2[0] + cos_r * ix - sin_r * iy
    py = d2[1] + sin_r * ix + cos_r * iy

    parent = imap.grid
    trav = imap.traversable_mask()

    # nearest-neighbor class, conservative traversability over the 2x2
    # parent cells the sample straddles
    nearest_x = np.clip(np.rint(px).astype(np.int64), 0, imap.width - 1)
    nearest_y = np.clip(np.rint(py).astype(np.int64), 0, imap.height - 1)
    in_parent = (px >= -0.5) & (px <= imap.width - 0.5) & \
                (py >= -0.5) & (py <= imap.height - 0.5)

    fx = np.clip(np.floor(px).astype(np.int64), 0, imap.width - 1)
    fy = np.clip(np.floor(py).astype(np.int64), 0, imap.height - 1)
    cx = np.clip(fx + 1, 0, imap.width - 1)
    cy = np.clip(fy + 1, 0, imap.height - 1)
    all_trav = trav[fy, fx] & trav[fy, cx] & trav[cy, fx] & trav[cy, cx]

    sub = np.full((sub_h, sub_w), int(CellClass.OBSTACLE), dtype=np.uint8)
    nearest_cls = parent[nearest_y, nearest_x]
    ok = in_parent & all_trav
    sub[ok] = nearest_cls[ok]
    # keep the specific blocking class where the nearest source is the blocker
    blocked_near = in_parent & ~all_trav & ~trav[nearest_y, nearest_x]
    sub[blocked_near] = nearest_cls[blocked_near]

    submap = IntermediateMap(sub_w, sub_h, sub.ravel(), imap.transform)
    return MapSlice(d1=np.asarray(d1), d2=np.asarray(d2), d3=np.asarray(d3),
                    d4=np.asarray(d4), submap=submap,
                    origin=np.asarray(d2, dtype=np.float64), rotation=rotation)


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

def save_map_cache(imap: IntermediateMap, path) -> None:
    """Binary cache: magic, u32 w/h, 8 LE f64 transform values, cell bytes.

    Transform slots: x_origin, y_origin, pixel_width, pixel_height, two
    reserved zeros (rotation terms), EPSG code, reserved zero.
    """
    t = imap.transform
    try:
        epsg = float(t.crs_id.split(":")[1])
    except (IndexError, ValueError):
        epsg = 0.0
    with open(path, "wb") as f:
        f.write(CACHE_MAGIC)
        f.write(struct.pack("<II", imap.width, imap.height))
        f.write(struct.pack("<8d", t.x_origin, t.y_origin, t.pixel_width,
                            t.pixel_height, 0.0, 0.0, epsg, 0.0))
        f.write(imap.cells.tobytes())


def load_map_cache(path) -> IntermediateMap:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != CACHE_MAGIC:
            raise ValueError(f"bad map cache magic {magic!r}")
        width, height = struct.unpack("<II", f.read(8))
        vals = struct.unpack("<8d", f.read(64))
        cells = np.frombuffer(f.read(width * height), dtype=np.uint8)
    if cells.size != width * height:
        raise ValueError("truncated map cache")
    crs = f"EPSG:{int(vals[6])}" if vals[6] else "EPSG:4326"
    t = GeoTransform(vals[0], vals[1], vals[2], vals[3], crs)
    return IntermediateMap(width, height, cells.copy(), t)


def read_world_file(path, width: int, height: int) -> tuple[int, int, GeoTransform]:
    """Six-line ESRI world file; origin converted from pixel-center to corner."""
    with open(path) as f:
        lines = [line.strip() for line in f if line.strip()]
    if len(lines) < 6:
        raise ValueError("world file needs 6 numeric lines")
    a, d, b, e, c, fval = (float(v) for v in lines[:6])
    if d != 0 or b != 0:
        raise ValueError("rotated/sheared world files are not supported")
    t = GeoTransform(c - a / 2.0, fval - e / 2.0, a, e)
    return width, height, t


def read_geotiff_meta(path) -> tuple[int, int, GeoTransform]:
    """Read dimensions + affine metadata from a GeoTIFF header.

    Only the tags needed for the geo transform are parsed (no raster
    decoding): ImageWidth/Length, ModelPixelScale + ModelTiepoint or
    ModelTransformation, and the geographic/projected CRS geo-keys.
    """
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 8:
        raise ValueError("not a TIFF file")
    order = data[:2]
    if order == b"II":
        bo = "<"
    elif order == b"MM":
        bo = ">"
    else:
        raise ValueError("not a TIFF file")
    magic, ifd_off = struct.unpack(bo + "HI", data[2:8])
    if magic != 42:
        raise ValueError("not a classic TIFF file")

    type_sizes = {1: 1, 2: 1, 3: 2, 4: 4, 5: 8, 11: 4, 12: 8}

    def read_values(tag_type, count, value_field):
        size = type_sizes.get(tag_type)
        if size is None:
            return None
        total = size * count
        raw = value_field[:total] if total <= 4 else \
            data[struct.unpack(bo + "I", value_field)[0]:][:total]
        if tag_type in (3,):
            return struct.unpack(bo + f"{count}H", raw)
        if tag_type in (4,):
            return struct.unpack(bo + f"{count}I", raw)
        if tag_type == 12:
            return struct.unpack(bo + f"{count}d", raw)
        if tag_type == 11:
            return struct.unpack(bo + f"{count}f", raw)
        return raw

    n_entries = struct.unpack(bo + "H", data[ifd_off:ifd_off + 2])[0]
    tags = {}
    for i in range(n_entries):
        off = ifd_off + 2 + i * 12
        tag, tag_type, count = struct.unpack(bo + "HHI", data[off:off + 8])
        vals = read_values(tag_type, count, data[off + 8:off + 12])
        if vals is not None:
            tags[tag] = vals

    width = int(tags.get(256, (0,))[0])
    height = int(tags.get(257, (0,))[0])
    if not width or not height:
        raise ValueError("TIFF is missing image dimensions")

    if 34264 in tags and len(tags[34264]) >= 8:
        m = tags[34264]
        if m[1] != 0 or m[4] != 0:
            raise ValueError("rotated GeoTIFF transforms are not supported")
        pw, xo, ph, yo = m[0], m[3], m[5], m[7]
    elif 33550 in tags and 33922 in tags:
        sx, sy = tags[33550][0], tags[33550][1]
        ti = tags[33922]
        i0, j0, gx, gy = ti[0], ti[1], ti[3], ti[4]
        pw, ph = sx, -sy
        xo = gx - i0 * sx
        yo = gy + j0 * sy
    else:
        raise ValueError("GeoTIFF is missing ModelPixelScale/Tiepoint metadata")

    crs = "EPSG:4326"
    if 34735 in tags:
        keys = tags[34735]
        for k in range(4, len(keys) - 3, 4):
            key_id, loc, cnt, val = keys[k:k + 4]
            if key_id in (2048, 3072) and loc == 0:
                crs = f"EPSG:{val}"
    return width, height, GeoTransform(float(xo), float(yo), float(pw), float(ph), crs)


def load_geojson_features(source, trail_width_px: float = DEFAULT_TRAIL_WIDTH_PX,
                          point_width_px: float = 2.0) -> list[GeoFeature]:
    """Parse an RFC 7946 FeatureCollection into rasterizable features.

    The "class" property selects the cell class; unknown classes are
    skipped, unsupported geometry kinds raise with the feature index.
    """
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source) as f:
            doc = json.load(f)
    elif isinstance(source, dict):
        doc = source
    else:
        doc = json.load(source)
    if doc.get("type") != "FeatureCollection":
        raise ValueError("expected a GeoJSON FeatureCollection")

    out: list[GeoFeature] = []
    for idx, feat in enumerate(doc.get("features", [])):
        props = feat.get("properties") or {}
        cls = FEATURE_CLASSES.get(str(props.get("class", "")).lower())
        if cls is None:
            continue
        geom = feat.get("geometry") or {}
        gtype = geom.get("type")
        coords = geom.get("coordinates")
        width = trail_width_px if cls == CellClass.TRAIL else \
            float(props.get("width_px", trail_width_px))
        if gtype == "Polygon":
            out.append(GeoFeature("polygon", tuple(map(tuple, coords[0])), cls))
        elif gtype == "MultiPolygon":
            for ring in coords:
                out.append(GeoFeature("polygon", tuple(map(tuple, ring[0])), cls))
        elif gtype == "LineString":
            out.append(GeoFeature("line", tuple(map(tuple, coords)), cls, width))
        elif gtype == "MultiLineString":
            for line in coords:
                out.append(GeoFeature("line", tuple(map(tuple, line)), cls, width))
        elif gtype == "Point":
            out.append(GeoFeature("point", tuple(coords), cls, point_width_px))
        else:
            raise UnsupportedGeometry(
                f"feature {idx}: unsupported GeoJSON geometry {gtype!r}", feature_index=idx
            )
    return out
