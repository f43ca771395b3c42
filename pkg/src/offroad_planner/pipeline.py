"""End-to-end planning flow: snap to trails, plan, repair, smooth, project.

A plan request arrives in geographic coordinates; the pipeline applies the
session's area overlays, finds optimal trail entry/exit poses, plans the
trail and off-trail segments, repairs kinematically infeasible corners, and
smooths the result with the repaired joints frozen.
"""

from __future__ import annotations

import math
import resource
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.ndimage import distance_transform_edt

from . import grid_search
from .errors import InvalidRequest, NoGridPath, NoTrailPath, PlanningError
from .geomap import CellClass, IntermediateMap, apply_overlays, downsample
from .kino import HybridAStarConfig, KinematicModel, repair_path
from .paths import (Pose, as_points, dedupe_consecutive, densify, path_length,
                    resample_uniform, simplify_path)
from .smooth import (SmoothingParams, build_voronoi_field, curvature_profile,
                     smooth_path)
from .trails import (GoalPoseQuery, TrailNetwork, find_closest_poses,
                     select_optimal_pair)

MODE_TRAIL_PREFERRED = "trail_preferred"
MODE_DIRECT = "direct"

SEGMENT_OFFROAD_START = "OFFROAD_START"
SEGMENT_TRAIL = "TRAIL"
SEGMENT_OFFROAD_END = "OFFROAD_END"


@dataclass
class PlannerParams:
    """Tunables shared by every stage of one plan."""

    goal_poly_init_px: float = 50.0
    goal_poly_max_px: float = 800.0
    goal_poly_increment_px: float = 50.0
    dbscan_eps_px: float = 10.0
    dbscan_min_pts: int = 3
    snap_radius_cells: float = 3.0
    inflation_radius_px: float = 0.0
    voronoi_alpha: float = 10.0
    voronoi_d_o_max: float = 30.0
    smooth_window_margin_px: float = 48.0
    smoothing: SmoothingParams = field(default_factory=SmoothingParams)
    hybrid: HybridAStarConfig = field(
        default_factory=lambda: HybridAStarConfig(max_expansions=20_000))


@dataclass
class PlanRequest:
    start: tuple  # (lon, lat, heading)
    target: tuple
    model: KinematicModel | None = None
    mode: str = MODE_TRAIL_PREFERRED
    planner: str = "jps"
    overlays: list = field(default_factory=list)  # (pixel polygon, kind)
    params: PlannerParams = field(default_factory=PlannerParams)

    def __post_init__(self):
        if tuple(self.start[:2]) == tuple(self.target[:2]):
            raise InvalidRequest("start and target must differ")
        if self.mode not in (MODE_TRAIL_PREFERRED, MODE_DIRECT):
            raise InvalidRequest(f"unknown mode {self.mode!r}")
        if self.planner not in ("jps", "astar"):
            raise InvalidRequest(f"unknown planner {self.planner!r}")


@dataclass
class PlanMetrics:
    length_m: float
    max_curvature_per_m: float
    csd_per_m: float
    mod_m: float  # +inf when the map has no obstacles near the path
    timings_ms: dict
    peak_memory_bytes: int


@dataclass
class PlanResult:
    segments: list  # (kind, (N, 2) pixel array)
    path_px: np.ndarray
    path_geo: np.ndarray
    metrics: PlanMetrics
    trail_entry: Pose | None
    trail_exit: Pose | None
    repaired_segments: int
    mode_used: str
    planner_used: str

    def to_geojson(self) -> dict:
        return {
            "type": "Feature",
            "geometry": {
                "type": "LineString",
                "coordinates": [[float(lon), float(lat)] for lon, lat in self.path_geo],
            },
            "properties": {
                "length_m": self.metrics.length_m,
                "max_curvature_per_m": self.metrics.max_curvature_per_m,
                "csd_per_m": self.metrics.csd_per_m,
                "mod_m": None if math.isinf(self.metrics.mod_m) else self.metrics.mod_m,
                "mode": self.mode_used,
                "planner": self.planner_used,
            },
        }


def _grid_plan(kind: str, imap: IntermediateMap, s: Pose, t: Pose):
    """Grid search on a window around the endpoints, doubling on failure.

    Slicing the search region keeps JPS preprocessing proportional to the
    segment, not the (possibly enormous) map; a path that needs to leave
    the window is found after the window grows.
    """
    planner = grid_search.astar if kind == "astar" else grid_search.jps
    margin = max(64.0, 0.5 * math.hypot(t.x - s.x, t.y - s.y))
    while True:
        x0 = max(0, int(min(s.x, t.x) - margin))
        x1 = min(imap.width, int(max(s.x, t.x) + margin) + 1)
        y0 = max(0, int(min(s.y, t.y) - margin))
        y1 = min(imap.height, int(max(s.y, t.y) + margin) + 1)
        full = (x0 == 0 and y0 == 0 and x1 == imap.width and y1 == imap.height)
        sub = imap if full else imap.window(x0, y0, x1, y1)
        try:
            gp = planner(sub, Pose(s.x - x0, s.y - y0, s.theta),
                         Pose(t.x - x0, t.y - y0, t.theta))
            if not full:
                gp.points = gp.points + np.array([x0, y0])
                if gp.waypoints is not None:
                    gp.waypoints = gp.waypoints + np.array([x0, y0])
            return gp
        except NoGridPath:
            if full:
                raise
            margin *= 2.0


_EXACT_MOD_MAX_CELLS = 4_000_000
_FIELD_WINDOW_MAX_CELLS = 16_000_000


def _windowed_mod(imap: IntermediateMap, pts: np.ndarray, margin: float) -> float:
    """Min obstacle distance sampled on a window around the path.

    Values below the margin are exact; a clearance beyond the margin is
    reported as the margin itself (obstacles outside the window cannot be
    closer than that).
    """
    x0 = max(0, int(pts[:, 0].min() - margin))
    x1 = min(imap.width, int(pts[:, 0].max() + margin) + 1)
    y0 = max(0, int(pts[:, 1].min() - margin))
    y1 = min(imap.height, int(pts[:, 1].max() + margin) + 1)
    window = imap.traversable_mask()[y0:y1, x0:x1]
    if window.all():
        if imap.traversable_mask().all():
            return math.inf
        return float(margin)
    dist = distance_transform_edt(window)
    xi = np.clip(np.rint(pts[:, 0]).astype(np.int64) - x0, 0, window.shape[1] - 1)
    yi = np.clip(np.rint(pts[:, 1]).astype(np.int64) - y0, 0, window.shape[0] - 1)
    mod = float(dist[yi, xi].min())
    return min(mod, float(margin)) if mod >= margin else mod


def _path_mod_px(imap: IntermediateMap, pts: np.ndarray, margin: float,
                 down_map: IntermediateMap | None = None) -> float:
    """MOD in pixels: exact on desk-scale maps, downsampled on huge ones."""
    if imap.width * imap.height <= _EXACT_MOD_MAX_CELLS:
        return _windowed_mod(imap, pts, margin)
    if down_map is None:
        down_map = downsample(imap, 8.0)
    scale = imap.width / down_map.width
    trav = down_map.traversable_mask()
    if trav.all():
        return math.inf
    dist = distance_transform_edt(trav)
    xi = np.clip(np.rint(pts[:, 0] / scale).astype(np.int64), 0, down_map.width - 1)
    yi = np.clip(np.rint(pts[:, 1] / scale).astype(np.int64), 0, down_map.height - 1)
    return float(dist[yi, xi].min()) * scale


def _voronoi_window(imap: IntermediateMap, pts: np.ndarray, params: PlannerParams):
    """Voronoi field restricted to the path neighborhood (memory bound).

    Oversized windows (long direct paths) fall back to a coarser grid so
    the field never dominates memory; the grid records its cell size.
    """
    margin = max(params.smooth_window_margin_px, params.voronoi_d_o_max + 2)
    x0 = max(0, int(pts[:, 0].min() - margin))
    x1 = min(imap.width, int(pts[:, 0].max() + margin) + 1)
    y0 = max(0, int(pts[:, 1].min() - margin))
    y1 = min(imap.height, int(pts[:, 1].max() + margin) + 1)
    sub = imap.window(x0, y0, x1, y1)
    cell_size = 1.0
    alpha, d_o_max = params.voronoi_alpha, params.voronoi_d_o_max
    cells = sub.width * sub.height
    if cells > _FIELD_WINDOW_MAX_CELLS:
        factor = math.ceil(math.sqrt(cells / _FIELD_WINDOW_MAX_CELLS))
        sub = downsample(sub, float(factor))
        cell_size = float(factor)
        alpha = max(1.0, alpha / factor)
        d_o_max = max(2.0, d_o_max / factor)
    try:
        return build_voronoi_field(sub, alpha, d_o_max,
                                   origin_x=x0, origin_y=y0, cell_size=cell_size)
    except ValueError:
        # all-free or all-obstacle window: a flat zero field
        zeros = np.zeros((sub.height, sub.width))
        from .smooth import VoronoiFieldGrid
        return VoronoiFieldGrid(d_o=np.full_like(zeros, np.inf), d_v=np.full_like(zeros, np.inf),
                                v=zeros, alpha_field=alpha, d_o_max=d_o_max,
                                origin_x=x0, origin_y=y0, cell_size=cell_size)


def _locate(pts: np.ndarray, xy, tol: float = 1e-9):
    d = np.hypot(pts[:, 0] - xy[0], pts[:, 1] - xy[1])
    i = int(np.argmin(d))
    return i if d[i] <= tol else None


def _locate_nearest(pts: np.ndarray, xy) -> int:
    return int(np.argmin(np.hypot(pts[:, 0] - xy[0], pts[:, 1] - xy[1])))


def plan(request: PlanRequest, base_map: IntermediateMap,
         net: TrailNetwork | None = None) -> PlanResult:
    """Run the full planning flow for one request."""
    timings: dict[str, float] = {}
    rss_before = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss * 1024
    t_total = time.perf_counter()
    params = request.params

    t0 = time.perf_counter()
    if request.overlays:
        imap = apply_overlays(base_map, request.overlays)
        work_net = net.rebuilt_for(imap) if net is not None else None
    else:
        imap = base_map
        work_net = net
    if params.inflation_radius_px > 0:
        imap = grid_search.inflate_obstacles(imap, params.inflation_radius_px)
        work_net = work_net.rebuilt_for(imap) if work_net is not None else None
    timings["overlays"] = (time.perf_counter() - t0) * 1000

    sx, sy = imap.geo_to_pixel(request.start[0], request.start[1])
    tx, ty = imap.geo_to_pixel(request.target[0], request.target[1])
    if not (0 <= sx < imap.width and 0 <= sy < imap.height):
        raise InvalidRequest(f"start pixel ({sx:.1f}, {sy:.1f}) is outside the map")
    if not (0 <= tx < imap.width and 0 <= ty < imap.height):
        raise InvalidRequest(f"target pixel ({tx:.1f}, {ty:.1f}) is outside the map")
    s_o = Pose(sx, sy, request.start[2] if len(request.start) > 2 else 0.0)
    t_o = Pose(tx, ty, request.target[2] if len(request.target) > 2 else 0.0)

    model = request.model or KinematicModel.for_map(imap, wheelbase_m=2.5, phi_max=0.6)

    mode_used = request.mode
    trail_entry = trail_exit = None
    trail_pts = None

    if request.mode == MODE_TRAIL_PREFERRED and work_net is not None and len(work_net):
        t0 = time.perf_counter()
        to_target = (t_o.x - s_o.x, t_o.y - s_o.y)
        q_s = GoalPoseQuery(
            g_o=s_o, poly_md=params.goal_poly_init_px, poly_sd=params.goal_poly_init_px,
            poly_md_max=params.goal_poly_max_px, poly_sd_max=params.goal_poly_max_px,
            md_i=params.goal_poly_increment_px, sd_i=params.goal_poly_increment_px,
            dbscan_eps=params.dbscan_eps_px, dbscan_min_pts=params.dbscan_min_pts,
            main_dir=to_target,
        )
        q_t = replace(q_s, g_o=t_o, main_dir=(-to_target[0], -to_target[1]))
        cand_s = find_closest_poses(work_net, q_s)
        cand_t = find_closest_poses(work_net, q_t)
        timings["snap"] = (time.perf_counter() - t0) * 1000

        t0 = time.perf_counter()
        try:
            trail_entry, trail_exit, trail_pts = select_optimal_pair(
                cand_s, cand_t, work_net, params.snap_radius_cells)
        except NoTrailPath:
            mode_used = MODE_DIRECT
        timings["trail"] = (time.perf_counter() - t0) * 1000
    else:
        mode_used = MODE_DIRECT

    t0 = time.perf_counter()
    pieces: list[np.ndarray] = []
    if mode_used == MODE_DIRECT or trail_pts is None:
        mode_used = MODE_DIRECT
        gp = _grid_plan(request.planner, imap, s_o, t_o)
        pieces.append(gp.points.astype(np.float64))
        trail_entry = trail_exit = None
    else:
        head = _grid_plan(request.planner, imap, s_o, trail_entry)
        tail = _grid_plan(request.planner, imap, trail_exit, t_o)
        pieces.append(head.points.astype(np.float64))
        pieces.append(trail_pts)
        pieces.append(tail.points.astype(np.float64))
    timings["grid_search"] = (time.perf_counter() - t0) * 1000

    # collapse cell-level stair-steps to waypoint polylines per piece, so
    # the trail entry/exit joints survive as piece endpoints
    simplified = [simplify_path(p, tolerance=1.0, imap=imap) for p in pieces if len(p)]
    combined = dedupe_consecutive(np.vstack(simplified))

    t0 = time.perf_counter()
    # a corner that stays unrepairable after one slice doubling is kept
    # rather than failing the whole plan
    repaired, joints = repair_path(combined, imap, model, params.hybrid,
                                   max_slice_growths=1, on_failure="keep")
    timings["repair"] = (time.perf_counter() - t0) * 1000

    t0 = time.perf_counter()
    smoothing = replace(params.smoothing, k_max=model.k_max_px)

    def smooth_piece(piece: np.ndarray, piece_frozen) -> np.ndarray:
        if len(piece) < 3:
            return densify(piece, smoothing.max_spacing)
        vfield = _voronoi_window(imap, piece, params)
        return smooth_path(piece, imap, vfield, smoothing, frozen=piece_frozen)

    def snap_out_of_connection(idx, side):
        # a split inside a repaired connection would mix sampling densities
        # at the piece junction; move it to the connection's boundary joint
        if idx is None or len(joints) % 2:
            return idx
        for a, b in zip(joints[0::2], joints[1::2]):
            if a < idx < b:
                return b if side == "end" else a
        return idx

    entry_idx = _locate_nearest(repaired, (trail_entry.x, trail_entry.y)) \
        if trail_entry is not None else None
    exit_idx = _locate_nearest(repaired, (trail_exit.x, trail_exit.y)) \
        if trail_exit is not None else None
    entry_idx = snap_out_of_connection(entry_idx, side="end")
    exit_idx = snap_out_of_connection(exit_idx, side="start")

    ext = 2  # frozen trail vertices shared with each smoothed piece, so the
    #          junction turn sits inside the piece's curvature-capped profile
    if entry_idx is not None and exit_idx is not None \
            and entry_idx + ext <= exit_idx - ext:
        # only the off-trail segments are smoothed (the trail stretch is
        # already repaired and follows the trail); the middle is densified
        # so the output keeps its spacing contract
        h_end = entry_idx + ext
        t_start = exit_idx - ext
        head_frozen = sorted({k for k in joints if k <= h_end}
                             | set(range(entry_idx, h_end + 1)))
        head = smooth_piece(repaired[: h_end + 1], head_frozen)
        mid = densify(repaired[h_end: t_start + 1], smoothing.max_spacing)
        tail_frozen = sorted({k - t_start for k in joints if k >= t_start}
                             | set(range(0, exit_idx - t_start + 1)))
        tail = smooth_piece(repaired[t_start:], tail_frozen)
        parts = [head]
        if len(mid) > 1:
            parts.append(mid[1:])
        if len(tail) > 1:
            parts.append(tail[1:])
        smoothed = np.vstack(parts)
    else:
        smoothed = smooth_piece(repaired, sorted(set(joints)))
    # one uniform spacing across the whole output: mixing sampling densities
    # at piece boundaries would re-measure the same geometry as curvature
    # spikes
    smoothed = resample_uniform(dedupe_consecutive(smoothed), smoothing.max_spacing)
    timings["smooth"] = (time.perf_counter() - t0) * 1000

    t0 = time.perf_counter()
    segments = _split_segments(smoothed, trail_entry, trail_exit)
    lon, lat = imap.pixel_to_geo(smoothed[:, 0], smoothed[:, 1])
    path_geo = np.column_stack([lon, lat])

    m_per_px = imap.meters_per_pixel()
    curv = curvature_profile(smoothed) if len(smoothed) >= 3 else np.zeros(1)
    metrics = PlanMetrics(
        length_m=path_length(smoothed) * m_per_px,
        max_curvature_per_m=float(np.max(np.abs(curv))) / m_per_px,
        csd_per_m=float(np.std(curv)) / m_per_px,
        mod_m=_path_mod_px(imap, smoothed, params.smooth_window_margin_px,
                           work_net.down_map if work_net is not None else None) * m_per_px,
        timings_ms=timings,
        peak_memory_bytes=0,
    )
    timings["project"] = (time.perf_counter() - t0) * 1000
    timings["total"] = (time.perf_counter() - t_total) * 1000
    rss_after = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss * 1024
    metrics.peak_memory_bytes = max(0, rss_after - rss_before)

    return PlanResult(
        segments=segments, path_px=smoothed, path_geo=path_geo, metrics=metrics,
        trail_entry=trail_entry, trail_exit=trail_exit,
        repaired_segments=len(joints) // 2, mode_used=mode_used,
        planner_used=request.planner,
    )


def _split_segments(pts: np.ndarray, entry: Pose | None, exit_: Pose | None) -> list:
    if entry is None or exit_ is None:
        return [(SEGMENT_OFFROAD_START, pts)]
    # joints may have been absorbed by repair/smoothing; split at the
    # nearest remaining path point so segments still chain exactly
    i = _locate_nearest(pts, (entry.x, entry.y))
    j = _locate_nearest(pts, (exit_.x, exit_.y))
    if i > j:
        return [(SEGMENT_OFFROAD_START, pts)]
    segments = []
    if i > 0:
        segments.append((SEGMENT_OFFROAD_START, pts[: i + 1]))
    if j > i:
        segments.append((SEGMENT_TRAIL, pts[i: j + 1]))
    if j < len(pts) - 1:
        segments.append((SEGMENT_OFFROAD_END, pts[j:]))
    if not segments:
        segments.append((SEGMENT_OFFROAD_START, pts))
    return segments


class PlanContext:
    """One map + trail network serving a session of (re)plan calls.

    Overlay rasterization is the only cached piece, keyed by the canonical
    overlay list, so replanning with the same overlays reuses the layer and
    a replan is always identical to a fresh plan.
    """

    def __init__(self, base_map: IntermediateMap, net: TrailNetwork | None = None,
                 d_f: float = 8.0):
        self.base_map = base_map
        self.net = net if net is not None else TrailNetwork(base_map, d_f)
        self.last_request: PlanRequest | None = None
        self._overlay_cache: dict = {}

    @staticmethod
    def _overlay_key(overlays) -> bytes:
        parts = []
        for poly, kind in overlays:
            arr = np.asarray(poly, dtype=np.float64)
            parts.append(kind.encode() + arr.tobytes())
        return b"|".join(parts)

    def plan(self, request: PlanRequest) -> PlanResult:
        key = self._overlay_key(request.overlays)
        if key not in self._overlay_cache:
            if request.overlays:
                overlaid = apply_overlays(self.base_map, request.overlays)
                self._overlay_cache[key] = (overlaid, self.net.rebuilt_for(overlaid))
            else:
                self._overlay_cache[key] = (self.base_map, self.net)
        imap, net = self._overlay_cache[key]
        bare = replace(request, overlays=[])
        self.last_request = request
        return plan(bare, imap, net)

    def replan_with_overlays(self, new_overlays: list) -> PlanResult:
        if self.last_request is None:
            raise InvalidRequest("no base plan to replan from")
        request = replace(self.last_request, overlays=list(new_overlays))
        return self.plan(request)
