"""Trail indexing, goal-pose selection, wavefront distance maps, trail Dijkstra.

Long-range planning runs on the off-road trail cells of a downsampled map;
results are lifted back to full resolution through a KD-tree of the
original trail points.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import NoTrailNearStart, NoTrailPath
from .geomap import CellClass, IntermediateMap, downsample
from .paths import Pose, as_points, path_length

SQRT2 = math.sqrt(2.0)

# 8-connected steps and their costs
_STEPS = [(-1, -1, SQRT2), (0, -1, 1.0), (1, -1, SQRT2),
          (-1, 0, 1.0), (1, 0, 1.0),
          (-1, 1, SQRT2), (0, 1, 1.0), (1, 1, SQRT2)]

DEFAULT_SNAP_RADIUS_CELLS = 3.0


def _trail_steps(mask: np.ndarray, x: int, y: int):
    """8-connected steps between trail cells, no diagonal corner cutting."""
    h, w = mask.shape
    for dx, dy, cost in _STEPS:
        nx, ny = x + dx, y + dy
        if not (0 <= nx < w and 0 <= ny < h) or not mask[ny, nx]:
            continue
        if dx != 0 and dy != 0 and not (mask[y, nx] and mask[ny, x]):
            continue
        yield nx, ny, cost


class PointIndex:
    """Rectangle queries over a fixed point set (KD-tree under the hood).

    ``covered_by`` returns points strictly inside the query polygon;
    ``intersected_by`` also accepts points on (within ``tol`` of) the
    boundary.
    """

    def __init__(self, points: np.ndarray):
        self.points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        self._tree = cKDTree(self.points) if len(self.points) else None

    def __len__(self) -> int:
        return len(self.points)

    def _candidates(self, center, radius):
        if self._tree is None:
            return np.empty(0, dtype=np.int64)
        return np.asarray(self._tree.query_ball_point(center, radius), dtype=np.int64)

    def _rect_coords(self, rect):
        center, u, v, half_u, half_v = rect
        idx = self._candidates(center, math.hypot(half_u, half_v) + 1e-9)
        if len(idx) == 0:
            return idx, None, None
        rel = self.points[idx] - center
        cu = rel @ u
        cv = rel @ v
        return idx, np.abs(cu), np.abs(cv)

    def covered_by(self, rect, tol: float = 1e-9) -> np.ndarray:
        idx, au, av = self._rect_coords(rect)
        if len(idx) == 0:
            return idx
        center, u, v, half_u, half_v = rect
        return idx[(au < half_u - tol) & (av < half_v - tol)]

    def intersected_by(self, rect, tol: float = 1e-9) -> np.ndarray:
        idx, au, av = self._rect_coords(rect)
        if len(idx) == 0:
            return idx
        center, u, v, half_u, half_v = rect
        return idx[(au <= half_u + tol) & (av <= half_v + tol)]


def oriented_rect(center, half_main: float, half_side: float, main_dir):
    """Query rectangle: (center, unit main axis, unit side axis, half extents)."""
    c = np.asarray(center, dtype=np.float64)
    d = np.asarray(main_dir, dtype=np.float64)
    norm = float(np.hypot(*d))
    u = d / norm if norm > 1e-12 else np.array([1.0, 0.0])
    v = np.array([-u[1], u[0]])
    return (c, u, v, float(half_main), float(half_side))


@dataclass
class GoalPoseQuery:
    """Inputs of the closest-valid-pose search around one goal."""

    g_o: Pose
    poly_md: float = 50.0
    poly_sd: float = 50.0
    poly_md_max: float = 800.0
    poly_sd_max: float = 800.0
    md_i: float = 50.0
    sd_i: float = 50.0
    dbscan_eps: float = 10.0
    dbscan_min_pts: int = 3
    main_dir: tuple = (1.0, 0.0)

    def __post_init__(self):
        if not (0 < self.poly_md <= self.poly_md_max):
            raise ValueError("poly_md must be in (0, poly_md_max]")
        if not (0 < self.poly_sd <= self.poly_sd_max):
            raise ValueError("poly_sd must be in (0, poly_sd_max]")
        if self.md_i <= 0 or self.sd_i <= 0:
            raise ValueError("polygon increments must be positive")


@dataclass
class DistanceField:
    """Wavefront distances over the trail cells of one map resolution."""

    values: np.ndarray  # flattened, +inf off-trail/unreached
    width: int
    height: int
    source: Pose
    source_cell: tuple

    @property
    def grid(self) -> np.ndarray:
        return self.values.reshape(self.height, self.width)

    def value_at(self, x: int, y: int) -> float:
        return float(self.values[y * self.width + x])


class TrailNetwork:
    """Indexed off-road trail points of a map, at full and downsampled scale."""

    def __init__(self, imap: IntermediateMap, d_f: float = 8.0):
        self.map = imap
        self.d_f = float(d_f)
        ys, xs = np.nonzero(imap.grid == int(CellClass.TRAIL))
        self.points = np.column_stack([xs, ys]).astype(np.float64)
        self.index = PointIndex(self.points)
        self.kdtree_full = cKDTree(self.points) if len(self.points) else None

        self.down_map = downsample(imap, d_f)
        down = np.floor(self.points / d_f).astype(np.int64)
        if len(down):
            down = down[(down[:, 0] < self.down_map.width) & (down[:, 1] < self.down_map.height)]
            down = np.unique(down, axis=0)
        self.down_points = down.astype(np.float64)
        self.kdtree_down = cKDTree(self.down_points) if len(self.down_points) else None

        self._trail_mask_full = imap.grid == int(CellClass.TRAIL)
        self._trail_mask_down = self.down_map.grid == int(CellClass.TRAIL)

    def __len__(self) -> int:
        return len(self.points)

    def rebuilt_for(self, imap: IntermediateMap) -> "TrailNetwork":
        """Network valid for an overlaid variant of the source map.

        Restricted overlays can erase trail cells, so the point set is
        re-extracted; geometry-identical maps share nothing mutable.
        """
        return TrailNetwork(imap, self.d_f)

    def neighbors(self, x: int, y: int):
        """Adjacent trail cells at full resolution (no corner cutting)."""
        yield from _trail_steps(self._trail_mask_full, x, y)

    def nearest_trail_point(self, xy, max_dist: float = np.inf):
        if self.kdtree_full is None:
            return None
        dist, idx = self.kdtree_full.query(xy)
        if dist > max_dist:
            return None
        return self.points[idx]

    def trail_heading(self, xy, radius: float = 6.0) -> float:
        """Dominant direction of the trail points near ``xy`` (principal axis)."""
        if self.kdtree_full is None:
            return 0.0
        idx = self.kdtree_full.query_ball_point(np.asarray(xy, dtype=np.float64), radius)
        if len(idx) < 2:
            return 0.0
        pts = self.points[idx]
        centered = pts - pts.mean(axis=0)
        cov = centered.T @ centered
        w, vec = np.linalg.eigh(cov)
        d = vec[:, -1]
        return math.atan2(d[1], d[0])


def dbscan(points, eps: float, min_pts: int) -> list[np.ndarray]:
    """Density clustering; noise points come back as singleton clusters.

    Returns a list of (k, 2) arrays. Keeping noise as singletons means an
    isolated trail stub next to the goal still yields a candidate pose.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if min_pts < 1:
        raise ValueError("min_pts must be >= 1")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    n = len(pts)
    if n == 0:
        return []
    tree = cKDTree(pts)
    neighborhoods = tree.query_ball_point(pts, eps)
    labels = np.full(n, -1, dtype=np.int64)
    cluster = 0
    for i in range(n):
        if labels[i] != -1:
            continue
        if len(neighborhoods[i]) < min_pts:
            continue
        labels[i] = cluster
        frontier = [j for j in neighborhoods[i] if labels[j] == -1]
        for j in frontier:
            labels[j] = cluster
        while frontier:
            j = frontier.pop()
            if len(neighborhoods[j]) >= min_pts:
                for q in neighborhoods[j]:
                    if labels[q] == -1:
                        labels[q] = cluster
                        frontier.append(q)
        cluster += 1
    clusters = [pts[labels == c] for c in range(cluster)]
    clusters.extend(pts[i:i + 1] for i in range(n) if labels[i] == -1)
    return clusters


def find_closest_poses(net: TrailNetwork, q: GoalPoseQuery) -> list[Pose]:
    """Closest valid trail poses around a goal (grown-polygon search).

    Grows the query rectangle until the spatial index reports strictly
    covered trail points, clusters them, and returns the per-cluster point
    nearest to the goal. Falls back to boundary-intersecting queries, and
    finally to the goal itself, so the result is never empty.
    """
    center = q.g_o.xy
    covered = np.empty(0, dtype=np.int64)

    md, sd = q.poly_md, q.poly_sd
    while md <= q.poly_md_max and sd <= q.poly_sd_max:
        rect = oriented_rect(center, md, sd, q.main_dir)
        covered = net.index.covered_by(rect)
        if len(covered):
            break
        md += q.md_i
        sd += q.sd_i

    if not len(covered):
        md, sd = q.poly_md, q.poly_sd
        while md <= q.poly_md_max and sd <= q.poly_sd_max:
            rect = oriented_rect(center, md, sd, q.main_dir)
            intersected = net.index.intersected_by(rect)
            if len(intersected):
                if len(intersected) > 1:
                    return [_trail_pose(net, p) for p in net.points[intersected]]
                covered = intersected
                break
            md += q.md_i
            sd += q.sd_i

    if len(covered):
        clusters = dbscan(net.points[covered], q.dbscan_eps, q.dbscan_min_pts)
        poses = []
        for cluster in clusters:
            d2 = np.sum((cluster - center) ** 2, axis=1)
            poses.append(_trail_pose(net, cluster[int(np.argmin(d2))]))
        return poses

    return [Pose(q.g_o.x, q.g_o.y, q.g_o.theta)]


def _trail_pose(net: TrailNetwork, xy) -> Pose:
    return Pose(float(xy[0]), float(xy[1]), net.trail_heading(xy))


def wavefront_distance(imap: IntermediateMap, start: Pose,
                       snap_radius: float = DEFAULT_SNAP_RADIUS_CELLS) -> DistanceField:
    """Wavefront sweep over TRAIL cells from ``start`` (snapped if needed).

    8-connected, axial cost 1, diagonal cost sqrt(2); cells the front never
    reaches stay at +inf.
    """
    trail = imap.grid == int(CellClass.TRAIL)
    w, h = imap.width, imap.height
    sx, sy = int(round(start.x)), int(round(start.y))
    if not (0 <= sx < w and 0 <= sy < h) or not trail[sy, sx]:
        ys, xs = np.nonzero(trail)
        if len(xs) == 0:
            raise NoTrailNearStart("map has no trail cells")
        d2 = (xs - start.x) ** 2 + (ys - start.y) ** 2
        best = int(np.argmin(d2))
        if d2[best] > snap_radius * snap_radius:
            raise NoTrailNearStart(
                f"no trail cell within {snap_radius} cells of ({start.x:.1f}, {start.y:.1f})"
            )
        sx, sy = int(xs[best]), int(ys[best])

    dist = np.full(w * h, np.inf)
    src = sy * w + sx
    dist[src] = 0.0
    heap = [(0.0, src)]
    while heap:
        d, idx = heapq.heappop(heap)
        if d > dist[idx]:
            continue
        x, y = idx % w, idx // w
        for nx, ny, cost in _trail_steps(trail, x, y):
            nidx = ny * w + nx
            nd = d + cost
            if nd < dist[nidx]:
                dist[nidx] = nd
                heapq.heappush(heap, (nd, nidx))
    return DistanceField(values=dist, width=w, height=h, source=start, source_cell=(sx, sy))


def _snap_to_trail_cell(imap: IntermediateMap, pose: Pose, snap_radius: float):
    field_mask = imap.grid == int(CellClass.TRAIL)
    x, y = int(round(pose.x)), int(round(pose.y))
    if 0 <= x < imap.width and 0 <= y < imap.height and field_mask[y, x]:
        return x, y
    ys, xs = np.nonzero(field_mask)
    if len(xs) == 0:
        return None
    d2 = (xs - pose.x) ** 2 + (ys - pose.y) ** 2
    best = int(np.argmin(d2))
    if d2[best] > snap_radius * snap_radius:
        return None
    return int(xs[best]), int(ys[best])


def dijkstra_trail_path(net_or_map, field: DistanceField | None, s: Pose, t: Pose,
                        snap_radius: float = DEFAULT_SNAP_RADIUS_CELLS):
    """Minimum-cost 8-connected path between two trail cells.

    When ``field`` is a wavefront from ``s``, the path is recovered by
    steepest descent from ``t`` (exact, since the field holds true
    distances); otherwise a fresh Dijkstra runs. Returns (path, length).
    """
    imap = net_or_map.down_map if isinstance(net_or_map, TrailNetwork) else net_or_map
    s_cell = _snap_to_trail_cell(imap, s, snap_radius)
    t_cell = _snap_to_trail_cell(imap, t, snap_radius)
    if s_cell is None or t_cell is None:
        raise NoTrailPath("start or target cannot be snapped to a trail cell")

    if field is None or field.source_cell != s_cell:
        field = wavefront_distance(imap, Pose(*s_cell), snap_radius)

    w = imap.width
    values = field.values
    if not np.isfinite(values[t_cell[1] * w + t_cell[0]]):
        raise NoTrailPath("start and target trails are disconnected")

    trail = imap.grid == int(CellClass.TRAIL)
    path = [t_cell]
    x, y = t_cell
    guard = imap.width * imap.height + 8
    while (x, y) != s_cell and guard:
        guard -= 1
        here = values[y * w + x]
        best = None
        best_val = here
        for nx, ny, cost in _trail_steps(trail, x, y):
            v = values[ny * w + nx]
            # exact predecessor on a shortest path
            if v + cost <= here + 1e-9 and v < best_val:
                best_val = v
                best = (nx, ny)
        if best is None:
            raise NoTrailPath("descent stalled; inconsistent distance field")
        x, y = best
        path.append(best)
    path.reverse()
    pts = np.asarray(path, dtype=np.float64)
    return pts, path_length(pts)


def upsample_trail_path(net: TrailNetwork, down_path: np.ndarray) -> np.ndarray:
    """Lift a downsampled trail path back to full-resolution trail cells.

    Each point is scaled by d_f and snapped to the nearest full-resolution
    trail point via the KD-tree correspondence; consecutive snapped points
    are then bridged along the trail so the result stays 8-connected.
    """
    if net.kdtree_full is None:
        raise NoTrailPath("empty trail network")
    scaled = as_points(down_path) * net.d_f
    _, idx = net.kdtree_full.query(scaled)
    snapped = net.points[np.atleast_1d(idx)]
    # drop consecutive duplicates after snapping
    keep = np.ones(len(snapped), dtype=bool)
    keep[1:] = np.any(np.diff(snapped, axis=0) != 0, axis=1)
    snapped = snapped[keep]

    # snap jitter (up to half a downsampled cell) can order points backward
    # along the trail; points that barely advance would make the bridged
    # path double back on itself
    if len(snapped) > 2:
        stride = max(2.0, 0.75 * net.d_f)
        kept = [snapped[0]]
        for p in snapped[1:-1]:
            if np.hypot(*(p - kept[-1])) >= stride:
                kept.append(p)
        kept.append(snapped[-1])
        snapped = np.asarray(kept)

    out = [snapped[0]]
    for nxt in snapped[1:]:
        prev = out[-1]
        bridge = _bridge_on_trail(net, (int(prev[0]), int(prev[1])),
                                  (int(nxt[0]), int(nxt[1])))
        if bridge is None:
            out.append(nxt)
        else:
            out.extend(np.asarray(bridge[1:], dtype=np.float64))
    return np.asarray(out, dtype=np.float64)


def _bridge_on_trail(net: TrailNetwork, a: tuple, b: tuple, max_radius: float = 64.0):
    """Short A* over full-resolution trail cells, confined near the a-b segment."""
    if a == b:
        return [a]
    ax, ay = a
    bx, by = b
    lo_x, hi_x = min(ax, bx) - max_radius, max(ax, bx) + max_radius
    lo_y, hi_y = min(ay, by) - max_radius, max(ay, by) + max_radius
    mask = net._trail_mask_full

    def h(x, y):
        dx, dy = abs(x - bx), abs(y - by)
        return max(dx, dy) + (SQRT2 - 1) * min(dx, dy)

    start = a
    g = {start: 0.0}
    came: dict = {}
    heap = [(h(*start), 0.0, start)]
    budget = int(16 * max_radius * max_radius)
    while heap and budget:
        budget -= 1
        f, gv, cur = heapq.heappop(heap)
        if cur == b:
            path = [cur]
            while cur in came:
                cur = came[cur]
                path.append(cur)
            path.reverse()
            return path
        if gv > g.get(cur, np.inf):
            continue
        x, y = cur
        for nx, ny, cost in _trail_steps(mask, x, y):
            if not (lo_x <= nx <= hi_x and lo_y <= ny <= hi_y):
                continue
            ng = gv + cost
            if ng < g.get((nx, ny), np.inf):
                g[(nx, ny)] = ng
                came[(nx, ny)] = cur
                heapq.heappush(heap, (ng + h(nx, ny), ng, (nx, ny)))
    return None


def select_optimal_pair(candidates_s: list[Pose], candidates_t: list[Pose],
                        net: TrailNetwork,
                        snap_radius: float = DEFAULT_SNAP_RADIUS_CELLS):
    """Pick the (start, target) candidate pair with the shortest trail path.

    Distances are evaluated at downsampled resolution (one wavefront per
    start candidate); the winning path is lifted back to full resolution.
    Returns (s_pose, t_pose, full_res_path).
    """
    if not candidates_s or not candidates_t:
        raise NoTrailPath("no candidate poses to connect")
    d_f = net.d_f
    best = None  # (length, si, ti, field)
    for si, s_cand in enumerate(candidates_s):
        s_down = Pose(s_cand.x / d_f, s_cand.y / d_f, s_cand.theta)
        cell = _snap_to_trail_cell(net.down_map, s_down, snap_radius)
        if cell is None:
            continue
        field = wavefront_distance(net.down_map, Pose(*cell), snap_radius)
        for ti, t_cand in enumerate(candidates_t):
            t_down = Pose(t_cand.x / d_f, t_cand.y / d_f, t_cand.theta)
            t_cell = _snap_to_trail_cell(net.down_map, t_down, snap_radius)
            if t_cell is None:
                continue
            val = field.value_at(*t_cell)
            if np.isfinite(val) and (best is None or val < best[0]):
                best = (val, si, ti, field)
    if best is None:
        raise NoTrailPath("no candidate pair is connected on the trail network")

    _, si, ti, field = best
    s_cand, t_cand = candidates_s[si], candidates_t[ti]
    down_path, _ = dijkstra_trail_path(
        net.down_map, field,
        Pose(s_cand.x / d_f, s_cand.y / d_f), Pose(t_cand.x / d_f, t_cand.y / d_f),
        snap_radius,
    )
    full_path = upsample_trail_path(net, down_path)
    s_pose = Pose(full_path[0][0], full_path[0][1], net.trail_heading(full_path[0]))
    t_pose = Pose(full_path[-1][0], full_path[-1][1], net.trail_heading(full_path[-1]))
    return s_pose, t_pose, full_path


def distance_field_to_pgm(field: DistanceField) -> bytes:
    """16-bit binary PGM; +inf encodes as 65535, finite values clamp to 65534."""
    vals = field.grid
    out = np.where(np.isfinite(vals), np.clip(np.rint(vals), 0, 65534), 65535)
    return _pgm16_bytes(out.astype(np.uint16))


def _pgm16_bytes(img: np.ndarray) -> bytes:
    h, w = img.shape
    header = f"P5\n{w} {h}\n65535\n".encode()
    return header + img.astype(">u2").tobytes()
