"""Synthetic map generation for tests, benchmarks, and demos."""

from __future__ import annotations

import math

import numpy as np

from .geomap import (CellClass, GeoTransform, IntermediateMap,
                     cells_near_polyline)

DEFAULT_TRANSFORM = GeoTransform(30.0, 56.0, 1e-5, -1e-5)


def chaikin(points: np.ndarray, iterations: int = 3) -> np.ndarray:
    """Corner-cutting subdivision; keeps endpoints, smooths everything else."""
    pts = np.asarray(points, dtype=np.float64)
    for _ in range(iterations):
        if len(pts) < 3:
            break
        q = 0.75 * pts[:-1] + 0.25 * pts[1:]
        r = 0.25 * pts[:-1] + 0.75 * pts[1:]
        mid = np.empty((2 * (len(pts) - 1), 2))
        mid[0::2] = q
        mid[1::2] = r
        pts = np.vstack([pts[:1], mid, pts[-1:]])
    return pts


def _random_trail(rng, width, height, n_waypoints=6):
    """Smooth polyline crossing the map between two random border points."""
    side = rng.integers(0, 2)
    if side == 0:  # left -> right
        a = np.array([0.0, rng.uniform(0.15, 0.85) * height])
        b = np.array([width - 1.0, rng.uniform(0.15, 0.85) * height])
    else:  # bottom -> top
        a = np.array([rng.uniform(0.15, 0.85) * width, 0.0])
        b = np.array([rng.uniform(0.15, 0.85) * width, height - 1.0])
    ts = np.linspace(0, 1, n_waypoints)[:, None]
    base = a + ts * (b - a)
    jitter = rng.normal(0, 0.12 * min(width, height), size=(n_waypoints, 2))
    jitter[0] = jitter[-1] = 0
    way = np.clip(base + jitter, [1, 1], [width - 2, height - 2])
    return chaikin(way, 4)


def _stamp_disks(grid, rng, count, r_lo, r_hi, value, avoid_mask=None, margin=4):
    h, w = grid.shape
    for _ in range(count):
        r = rng.uniform(r_lo, r_hi)
        cx = rng.uniform(r, w - 1 - r)
        cy = rng.uniform(r, h - 1 - r)
        x0, x1 = int(cx - r - 1), int(cx + r + 2)
        y0, y1 = int(cy - r - 1), int(cy + r + 2)
        ys, xs = np.mgrid[y0:y1, x0:x1]
        disk = (xs - cx) ** 2 + (ys - cy) ** 2 <= r * r
        if avoid_mask is not None:
            pad = (xs - cx) ** 2 + (ys - cy) ** 2 <= (r + margin) ** 2
            if avoid_mask[y0:y1, x0:x1][pad].any():
                continue
        grid[y0:y1, x0:x1][disk] = value


def make_synthetic_map(width: int, height: int, *, seed: int = 0,
                       n_trails: int = 3, n_trees: int | None = None,
                       n_buildings: int | None = None, water: bool = False,
                       trail_width_px: float = 3.0,
                       transform: GeoTransform = DEFAULT_TRANSFORM,
                       keep_trail_clearance: float = 6.0) -> IntermediateMap:
    """Random off-road scene: scattered obstacles plus smooth trails.

    Obstacles keep a small clearance from trails so the trail graph stays
    connected; everything is deterministic in the seed.
    """
    rng = np.random.default_rng(seed)
    grid = np.full((height, width), int(CellClass.FREE), dtype=np.uint8)

    trails = [_random_trail(rng, width, height) for _ in range(n_trails)]
    # connect trails pairwise so the network forms one component
    for i in range(len(trails) - 1):
        a = trails[i][len(trails[i]) // 2]
        b = trails[i + 1][len(trails[i + 1]) // 2]
        link = chaikin(np.vstack([a, (a + b) / 2 + rng.normal(0, 8, 2), b]), 3)
        trails.append(np.clip(link, [1, 1], [width - 2, height - 2]))

    trail_mask = np.zeros((height, width), dtype=bool)
    for line in trails:
        xs, ys = cells_near_polyline(width, height, line,
                                     trail_width_px / 2.0 + keep_trail_clearance)
        trail_mask[ys, xs] = True

    area = width * height
    if n_trees is None:
        n_trees = max(4, area // 6000)
    if n_buildings is None:
        n_buildings = max(1, area // 60000)

    _stamp_disks(grid, rng, n_trees, 2.0, 5.0, int(CellClass.OBSTACLE),
                 avoid_mask=trail_mask, margin=0)
    for _ in range(n_buildings):
        bw = rng.integers(6, 18)
        bh = rng.integers(6, 18)
        x0 = rng.integers(1, max(2, width - bw - 1))
        y0 = rng.integers(1, max(2, height - bh - 1))
        if trail_mask[y0:y0 + bh, x0:x0 + bw].any():
            continue
        grid[y0:y0 + bh, x0:x0 + bw] = int(CellClass.OBSTACLE)
    if water:
        _stamp_disks(grid, rng, max(1, area // 400000), 12.0, 30.0,
                     int(CellClass.WATER), avoid_mask=trail_mask, margin=0)

    for line in trails:
        xs, ys = cells_near_polyline(width, height, line, trail_width_px / 2.0)
        grid[ys, xs] = int(CellClass.TRAIL)

    return IntermediateMap(width, height, grid.ravel(), transform)


def demo_map(width: int = 320, height: int = 220, seed: int = 7) -> IntermediateMap:
    """Small fixture used by the service tests, the CLI demo, and the UI."""
    return make_synthetic_map(width, height, seed=seed, n_trails=2,
                              n_trees=18, n_buildings=3)


def random_traversable_pairs(imap: IntermediateMap, count: int,
                             min_displacement_px: float, seed: int = 0,
                             near_trails: float | None = None,
                             min_clearance: float | None = None) -> list[tuple]:
    """Seeded (start, target) pixel pairs, each pair at least the given span apart."""
    rng = np.random.default_rng(seed)
    trav = imap.traversable_mask()
    ys, xs = np.nonzero(trav)
    if near_trails is not None:
        trail = imap.grid == int(CellClass.TRAIL)
        from scipy.ndimage import distance_transform_edt
        dist = distance_transform_edt(~trail)
        keep = dist[ys, xs] <= near_trails
        xs, ys = xs[keep], ys[keep]
    if min_clearance is not None:
        from scipy.ndimage import distance_transform_edt
        clear = distance_transform_edt(trav)
        keep = clear[ys, xs] >= min_clearance
        xs, ys = xs[keep], ys[keep]
    if len(xs) == 0:
        raise ValueError("map has no eligible traversable cells")
    pairs = []
    guard = count * 2000
    while len(pairs) < count and guard:
        guard -= 1
        i, j = rng.integers(0, len(xs), size=2)
        dx, dy = float(xs[i] - xs[j]), float(ys[i] - ys[j])
        if math.hypot(dx, dy) >= min_displacement_px:
            pairs.append(((int(xs[i]), int(ys[i])), (int(xs[j]), int(ys[j]))))
    if len(pairs) < count:
        raise ValueError("could not generate enough pairs at the requested displacement")
    return pairs
