"""Bicycle-model feasibility checks and Hybrid A* repair of sharp corners.

A vertex is infeasible when the circle through it and its neighbors is
tighter than the vehicle's minimum turning radius. Around each such vertex
the repair anchors Q1/Q2 are placed at the tangent points of the inscribed
circle, the map is sliced, and Hybrid A* replans just that stretch.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import SliceExhausted
from .geomap import IntermediateMap, MapSlice, slice_map
from .paths import Pose, as_points, dedupe_consecutive, resample_uniform

TWO_PI = 2.0 * math.pi
ANGLE_EPS = 1e-4          # guards s(alpha) when the corner degenerates
CURVATURE_MARGIN = 1.05   # discrete-curvature slack on polyline arcs
TRIGGER_TOLERANCE = 1.05  # matches the discrete-curvature slack; repaired
#                           arcs and splice junctions are not re-flagged
ENDPOINT_SNAP_PX = 1.0    # repair anchors snap onto vertices this close
MIN_INTERVAL_GAP = 1.0    # intervals separated by less than this merge too
INITIAL_SLICE_OFFSET_PX = 100.0


@dataclass(frozen=True)
class KinematicModel:
    """Bicycle model: wheelbase and steering limit fix the turning radius."""

    wheelbase_m: float
    phi_max: float
    meters_per_pixel: float = 1.0

    def __post_init__(self):
        if self.wheelbase_m <= 0:
            raise ValueError("wheelbase must be positive")
        if not (0 < self.phi_max < math.pi / 2):
            raise ValueError("max steering angle must be in (0, pi/2)")
        if self.meters_per_pixel <= 0:
            raise ValueError("meters_per_pixel must be positive")

    @property
    def rho_min_m(self) -> float:
        return self.wheelbase_m / math.tan(self.phi_max)

    @property
    def k_max_m(self) -> float:
        return 1.0 / self.rho_min_m

    @property
    def rho_min_px(self) -> float:
        return self.rho_min_m / self.meters_per_pixel

    @property
    def k_max_px(self) -> float:
        return self.meters_per_pixel / self.rho_min_m

    @classmethod
    def for_map(cls, imap: IntermediateMap, wheelbase_m: float, phi_max: float) -> "KinematicModel":
        return cls(wheelbase_m, phi_max, imap.meters_per_pixel())


def min_turning_radius(model: KinematicModel) -> float:
    """Minimum turning radius in meters: wheelbase / tan(max steering)."""
    return model.rho_min_m


def vertex_offset_distance(alpha: float, rho_min: float, eps: float = ANGLE_EPS) -> float:
    """Distance from a corner vertex to the inscribed circle's center."""
    return rho_min / (math.sin(alpha / 2.0) + eps)


def menger_curvature(p, q, r) -> float:
    """Curvature of the circle through three points (0 when collinear)."""
    p, q, r = (np.asarray(v, dtype=np.float64) for v in (p, q, r))
    a = np.hypot(*(q - p))
    b = np.hypot(*(r - q))
    c = np.hypot(*(r - p))
    if a * b * c == 0:
        return math.inf
    cross = abs((q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]))
    return 2.0 * cross / (a * b * c)


@dataclass
class InfeasibleVertex:
    """A too-sharp corner plus the geometry used to repair it."""

    Q: Pose
    alpha: float
    s: float
    Q1: Pose
    Q2: Pose
    A: np.ndarray
    interval: tuple  # (arc-length start, arc-length end) along the path


def _pose_at_arc(pts: np.ndarray, cum: np.ndarray, arc: float,
                 side: str = "after") -> Pose:
    """Point on the polyline at the given arc length.

    When the position falls exactly on a vertex, ``side`` picks whether the
    heading comes from the incoming ("before") or outgoing ("after")
    segment; anywhere else both agree.
    """
    arc = float(np.clip(arc, 0.0, cum[-1]))
    i = int(np.searchsorted(cum, arc, side="right" if side == "after" else "left") - 1)
    i = min(max(i, 0), len(pts) - 2)
    seg = pts[i + 1] - pts[i]
    seg_len = float(np.hypot(*seg))
    t = 0.0 if seg_len == 0 else (arc - cum[i]) / seg_len
    xy = pts[i] + seg * t
    return Pose(float(xy[0]), float(xy[1]), math.atan2(seg[1], seg[0]))


def find_infeasible_vertices(path, model: KinematicModel,
                             step_ref: float = 1.0) -> list[InfeasibleVertex]:
    """Corners too sharp for the model's k_max.

    A vertex is flagged when the circumscribed-arc curvature of its
    (P, Q, R) triple exceeds k_max, or when its heading change spread over
    one ``step_ref``-sized step would: a waypoint corner keeps the same
    turn no matter how long its arms are, and downstream densification
    re-measures it at roughly unit steps.
    Overlapping repair intervals collapse into one record spanning the
    union; the reported vertex geometry comes from the sharpest corner in
    the run.
    """
    pts = dedupe_consecutive(as_points(path))
    if len(pts) < 3:
        return []
    rho = model.rho_min_px
    k_max = model.k_max_px
    seg_lens = np.hypot(*np.diff(pts, axis=0).T)
    cum = np.concatenate([[0.0], np.cumsum(seg_lens)])

    raw = []
    for i in range(1, len(pts) - 1):
        p, q, r = pts[i - 1], pts[i], pts[i + 1]
        qp = p - q
        qr = r - q
        k = menger_curvature(p, q, r)
        turn = math.pi - math.acos(float(np.clip(
            np.dot(qp, qr) / (np.hypot(*qp) * np.hypot(*qr)), -1.0, 1.0)))
        k_disc = turn / min(np.hypot(*qp), np.hypot(*qr), step_ref)
        k_flag = k_max * TRIGGER_TOLERANCE
        if not (k > k_flag or k_disc > k_flag):
            continue
        alpha = math.pi - turn
        k = max(k, k_disc)
        s = vertex_offset_distance(alpha, rho)
        # signed turn from QR toward QP; half of it points down the bisector
        delta = math.atan2(qr[0] * qp[1] - qr[1] * qp[0], float(np.dot(qr, qp)))
        unit_qr = qr / np.hypot(*qr)
        half = delta / 2.0
        bis = np.array([
            unit_qr[0] * math.cos(half) - unit_qr[1] * math.sin(half),
            unit_qr[0] * math.sin(half) + unit_qr[1] * math.cos(half),
        ])
        center = pts[i] + s * bis
        tan_half = math.tan(alpha / 2.0)
        t_len = rho * 10.0 if tan_half < 1e-9 else rho / tan_half
        lo = float(cum[i] - t_len)
        hi = float(cum[i] + t_len)
        raw.append((lo, hi, i, alpha, s, center, k))

    if not raw:
        return []

    total = float(cum[-1])

    def snap(pos: float) -> float:
        # anchors a hair away from a vertex leave micro-steps behind that
        # read as huge discrete curvature; land exactly on the vertex
        j = int(np.argmin(np.abs(cum - pos)))
        return float(cum[j]) if abs(cum[j] - pos) < ENDPOINT_SNAP_PX else pos

    snapped = []
    for lo, hi, i, alpha, s, center, k in raw:
        lo2 = snap(max(0.0, lo))
        hi2 = snap(min(total, hi))
        if hi2 - lo2 < 1e-9:
            lo2, hi2 = max(0.0, lo), min(total, hi)
        snapped.append((lo2, hi2, i, alpha, s, center, k))

    # merge overlapping intervals; sub-pixel gaps merge too, a sliver that
    # short cannot hold real geometry between two connections
    merged = []
    snapped.sort(key=lambda r: r[0])
    group = [snapped[0]]
    group_hi = snapped[0][1]
    for item in snapped[1:]:
        if item[0] <= group_hi + MIN_INTERVAL_GAP:
            group.append(item)
            group_hi = max(group_hi, item[1])
        else:
            merged.append(group)
            group = [item]
            group_hi = item[1]
    merged.append(group)

    out = []
    for group in merged:
        lo = max(0.0, min(g[0] for g in group))
        hi = min(total, max(g[1] for g in group))
        sharpest = max(group, key=lambda g: g[6])
        _, _, i, alpha, s, center, _ = sharpest
        q_pose = _pose_at_arc(pts, cum, cum[i])
        q_pose = Pose(float(pts[i][0]), float(pts[i][1]), q_pose.theta)
        out.append(InfeasibleVertex(
            Q=q_pose, alpha=alpha, s=s,
            Q1=_pose_at_arc(pts, cum, lo, side="before"),
            Q2=_pose_at_arc(pts, cum, hi, side="after"),
            A=center, interval=(lo, hi),
        ))
    return out


# ---------------------------------------------------------------------------
# Dubins paths (heuristic lower bound + analytic goal expansion)
# ---------------------------------------------------------------------------

def _mod2pi(x: float) -> float:
    return x - TWO_PI * math.floor(x / TWO_PI)


def _arc(x: float) -> float:
    """Arc segment angle in [0, 2pi); -1e-17 noise must not become 2pi."""
    v = _mod2pi(x)
    return 0.0 if v > TWO_PI - 1e-9 else v


def _dubins_candidates(alpha: float, beta: float, d: float):
    sa, sb = math.sin(alpha), math.sin(beta)
    ca, cb = math.cos(alpha), math.cos(beta)
    c_ab = math.cos(alpha - beta)
    # tangent configurations sit numerically at p_sq == 0; don't lose them
    # to a -1e-16 rounding error
    neg_tol = -1e-9

    p_sq = 2 + d * d - 2 * c_ab + 2 * d * (sa - sb)
    if p_sq >= neg_tol:
        p = math.sqrt(max(p_sq, 0.0))
        tmp = math.atan2(cb - ca, d + sa - sb)
        yield (_arc(-alpha + tmp), p, _arc(beta - tmp), "LSL")

    p_sq = 2 + d * d - 2 * c_ab + 2 * d * (sb - sa)
    if p_sq >= neg_tol:
        p = math.sqrt(max(p_sq, 0.0))
        tmp = math.atan2(ca - cb, d - sa + sb)
        yield (_arc(alpha - tmp), p, _arc(-beta + tmp), "RSR")

    p_sq = -2 + d * d + 2 * c_ab + 2 * d * (sa + sb)
    if p_sq >= neg_tol:
        p = math.sqrt(max(p_sq, 0.0))
        tmp = math.atan2(-ca - cb, d + sa + sb) - math.atan2(-2.0, p)
        yield (_arc(-alpha + tmp), p, _arc(-_mod2pi(beta) + tmp), "LSR")

    p_sq = d * d - 2 + 2 * c_ab - 2 * d * (sa + sb)
    if p_sq >= neg_tol:
        p = math.sqrt(max(p_sq, 0.0))
        tmp = math.atan2(ca + cb, d - sa - sb) - math.atan2(2.0, p)
        yield (_arc(alpha - tmp), p, _arc(beta - tmp), "RSL")

    tmp = (6.0 - d * d + 2 * c_ab + 2 * d * (sa - sb)) / 8.0
    if abs(tmp) <= 1.0:
        p = _mod2pi(TWO_PI - math.acos(tmp))
        t = _arc(alpha - math.atan2(ca - cb, d - sa + sb) + p / 2.0)
        yield (t, p, _arc(alpha - beta - t + p), "RLR")

    tmp = (6.0 - d * d + 2 * c_ab + 2 * d * (sb - sa)) / 8.0
    if abs(tmp) <= 1.0:
        p = _mod2pi(TWO_PI - math.acos(tmp))
        t = _arc(-alpha - math.atan2(ca - cb, d + sa - sb) + p / 2.0)
        yield (t, p, _arc(_mod2pi(beta) - alpha - t + _mod2pi(p)), "LRL")


def dubins_path(q0: Pose, q1: Pose, rho: float):
    """Shortest forward-only path between poses; (length, segments, word).

    Segment lengths are in world units; arc segments turn at radius rho.
    """
    dx = q1.x - q0.x
    dy = q1.y - q0.y
    big_d = math.hypot(dx, dy)
    d = big_d / rho
    theta = math.atan2(dy, dx) if big_d > 1e-12 else 0.0
    alpha = _mod2pi(q0.theta - theta)
    beta = _mod2pi(q1.theta - theta)

    best = None
    for t, p, q, word in _dubins_candidates(alpha, beta, d):
        cost = t + p + q
        if best is None or cost < best[0]:
            best = (cost, (t, p, q), word)
    if best is None:
        return math.inf, None, None
    cost, segs, word = best
    return cost * rho, tuple(seg * rho for seg in segs), word


def dubins_length(q0: Pose, q1: Pose, rho: float) -> float:
    return dubins_path(q0, q1, rho)[0]


def _advance(x: float, y: float, th: float, mode: str, dist: float, rho: float):
    if mode == "S":
        return x + dist * math.cos(th), y + dist * math.sin(th), th
    steer = 1.0 if mode == "L" else -1.0
    delta = steer * dist / rho
    nth = th + delta
    nx = x + steer * rho * (math.sin(nth) - math.sin(th))
    ny = y - steer * rho * (math.cos(nth) - math.cos(th))
    return nx, ny, nth


def sample_dubins(q0: Pose, segments, word: str, rho: float, spacing: float = 0.5):
    """Poses along a Dubins solution, spacing <= ``spacing``, endpoint included."""
    out = [(q0.x, q0.y, q0.theta)]
    x, y, th = q0.x, q0.y, q0.theta
    for seg_len, mode in zip(segments, word):
        if seg_len < 1e-12:
            continue
        n = max(1, int(math.ceil(seg_len / spacing)))
        for k in range(1, n + 1):
            sx, sy, sth = _advance(x, y, th, mode, seg_len * k / n, rho)
            out.append((sx, sy, sth))
        x, y, th = out[-1]
    return out


# ---------------------------------------------------------------------------
# Hybrid A*
# ---------------------------------------------------------------------------

@dataclass
class HybridAStarConfig:
    theta_bins: int = 72
    step_px: float = 2.0
    collision_spacing: float = 0.5
    allow_reverse: bool = False
    reverse_penalty: float = 2.0
    steer_change_penalty: float = 0.05
    max_expansions: int = 200_000
    goal_xy_tol: float = 1.0
    shot_period: int = 8          # analytic goal connection every Nth pop
    dubins_heuristic_range: float = 6.0  # use the Dubins bound within this many rho


def hybrid_astar(mslice: MapSlice, q1: Pose, q2: Pose, model: KinematicModel,
                 config: HybridAStarConfig | None = None) -> np.ndarray:
    """Kinematically feasible path from q1 to q2 within a map slice.

    Lattice over (x, y, heading) with straight / max-left / max-right arc
    primitives; a collision-checked Dubins connection closes the final gap
    so the returned path meets q2's pose exactly. Poses are in parent-map
    coordinates; raises SliceExhausted when the slice has no solution.
    """
    cfg = config or HybridAStarConfig()
    sub = mslice.submap
    rho = model.rho_min_px
    trav = sub.traversable_mask()
    w, h = sub.width, sub.height

    sx, sy = mslice.to_slice(q1.x, q1.y)
    gx, gy = mslice.to_slice(q2.x, q2.y)
    start = (sx, sy, q1.theta - mslice.rotation)
    goal = Pose(gx, gy, q2.theta - mslice.rotation)

    def free(x: float, y: float) -> bool:
        ix, iy = int(round(x)), int(round(y))
        return 0 <= ix < w and 0 <= iy < h and bool(trav[iy, ix])

    if not free(sx, sy):
        raise SliceExhausted("start pose is not traversable in the slice")
    if not free(gx, gy):
        raise SliceExhausted("goal pose is not traversable in the slice")

    def motion_free(x, y, th, mode, length) -> bool:
        n = max(1, int(math.ceil(length / cfg.collision_spacing)))
        for k in range(1, n + 1):
            px, py, _ = _advance(x, y, th, mode, length * k / n, rho)
            if not free(px, py):
                return False
        return True

    def dubins_shot(x, y, th):
        length, segs, word = dubins_path(Pose(x, y, th), goal, rho)
        if segs is None:
            return None
        samples = sample_dubins(Pose(x, y, th), segs, word, rho, cfg.collision_spacing)
        for px, py, _ in samples:
            if not free(px, py):
                return None
        return samples

    bin_w = TWO_PI / cfg.theta_bins

    def state_key(x, y, th):
        return (int(round(x)), int(round(y)), int(_mod2pi(th) / bin_w) % cfg.theta_bins)

    def heuristic(x, y, th):
        # Euclidean everywhere (admissible); the Dubins bound only pays for
        # itself near the goal, where it is substantially tighter
        eu = math.hypot(gx - x, gy - y)
        if cfg.allow_reverse or eu > cfg.dubins_heuristic_range * rho:
            return eu
        return max(eu, dubins_length(Pose(x, y, th), goal, rho))

    modes = [("S", 0.0), ("L", 1.0), ("R", -1.0)]
    if cfg.allow_reverse:
        modes += [("S-", 0.0)]

    g_best: dict[tuple, float] = {state_key(*start): 0.0}
    parents: dict[tuple, tuple] = {}
    states: dict[tuple, tuple] = {state_key(*start): start}
    counter = 0
    heap = [(heuristic(*start), 0, 0.0, start, None, None)]
    expansions = 0
    # hopeless instances should fail in time proportional to the slice
    max_expansions = min(cfg.max_expansions, 3000 + (w * h) // 4)
    pops = 0

    while heap:
        f, _, gv, state, parent_key, via = heapq.heappop(heap)
        key = state_key(*state)
        if gv > g_best.get(key, math.inf) + 1e-12:
            continue
        if parent_key is not None and key not in parents:
            parents[key] = (parent_key, via)
            states[key] = state
        x, y, th = state

        if pops % cfg.shot_period == 0 or \
                math.hypot(gx - x, gy - y) <= 2 * cfg.step_px:
            shot = dubins_shot(x, y, th)
            if shot is not None:
                return _assemble(mslice, parents, states, key, shot, rho, cfg)
        pops += 1

        expansions += 1
        if expansions > max_expansions:
            break

        for mode, steer in modes:
            reverse = mode.endswith("-")
            m = mode[0]
            length = cfg.step_px
            if reverse:
                nx, ny, nth = _advance(x, y, th + math.pi, m, length, rho)
                nth -= math.pi
            else:
                if not motion_free(x, y, th, m, length):
                    continue
                nx, ny, nth = _advance(x, y, th, m, length, rho)
            if reverse and not motion_free(x, y, th + math.pi, m, length):
                continue
            cost = length * (cfg.reverse_penalty if reverse else 1.0)
            if via is not None and via[0] != mode:
                cost += cfg.steer_change_penalty
            ng = gv + cost
            nkey = state_key(nx, ny, nth)
            if ng < g_best.get(nkey, math.inf) - 1e-9:
                g_best[nkey] = ng
                counter += 1
                heapq.heappush(
                    heap,
                    (ng + heuristic(nx, ny, nth), counter, ng, (nx, ny, nth), key, (mode, length)),
                )
    raise SliceExhausted("hybrid A* exhausted the slice without reaching the goal")


def _assemble(mslice: MapSlice, parents, states, key, shot, rho, cfg) -> np.ndarray:
    chain = []
    while key in parents:
        parent_key, via = parents[key]
        chain.append((states[key], via))
        key = parent_key
    chain.reverse()

    pts = []
    if chain:
        first_state = states[key]
        x, y, th = first_state
        pts.append((x, y))
        for state, via in chain:
            mode, length = via
            m = mode[0]
            reverse = mode.endswith("-")
            n = max(1, int(math.ceil(length / cfg.collision_spacing)))
            for k in range(1, n + 1):
                if reverse:
                    px, py, _ = _advance(x, y, th + math.pi, m, length * k / n, rho)
                else:
                    px, py, _ = _advance(x, y, th, m, length * k / n, rho)
                pts.append((px, py))
            x, y, th = state
    for px, py, _ in shot:
        pts.append((px, py))

    parent_pts = [mslice.to_parent(px, py) for px, py in pts]
    return resample_uniform(np.asarray(parent_pts, dtype=np.float64), 0.5)


def _direct_dubins(imap: IntermediateMap, q1: Pose, q2: Pose, rho: float,
                   max_length: float = math.inf):
    """Collision-free Dubins connection on the parent map, or None."""
    length, segs, word = dubins_path(q1, q2, rho)
    if segs is None or length > max_length:
        return None
    samples = sample_dubins(q1, segs, word, rho, spacing=0.5)
    for x, y, _ in samples:
        if not imap.is_traversable(int(round(x)), int(round(y))):
            return None
    # degenerate Dubins words leave sub-pixel steps behind; re-space them
    # so the splice cannot read heading noise as curvature spikes
    return resample_uniform(np.asarray([(x, y) for x, y, _ in samples]), 0.5)


def _carve_pose_cells(mslice: MapSlice, imap: IntermediateMap, poses):
    """Re-open slice cells under poses whose true parent cells are drivable.

    The conservative slice resample can block a pose that sits within a
    pixel of an obstacle even though its own cell is traversable.
    """
    sub = mslice.submap
    for pose in poses:
        sx, sy = mslice.to_slice(pose.x, pose.y)
        ix, iy = int(round(sx)), int(round(sy))
        if not (0 <= ix < sub.width and 0 <= iy < sub.height):
            continue
        if sub.is_traversable(ix, iy):
            continue
        px, py = int(round(pose.x)), int(round(pose.y))
        if imap.is_traversable(px, py):
            sub.grid[iy, ix] = int(imap.grid[py, px])


def repair_path(path, imap: IntermediateMap, model: KinematicModel,
                config: HybridAStarConfig | None = None,
                initial_offset_px: float = INITIAL_SLICE_OFFSET_PX,
                max_slice_growths: int | None = None,
                on_failure: str = "raise"):
    """Replace every infeasible stretch of the path with a feasible segment.

    Each repair interval first tries the analytic connection at exactly
    rho_min (retrying with anchors pushed outward for more approach room),
    then Hybrid A* over map slices that start at the default 100-px offset
    and double on failure. Returns (repaired_path, joints) where joints are
    the indices of the spliced Q1/Q2 anchors; untouched stretches are
    preserved verbatim.

    ``max_slice_growths`` bounds the doubling ladder (None: until the slice
    swallows the map). ``on_failure="keep"`` splices the original corner
    back instead of raising SliceExhausted.
    """
    pts = dedupe_consecutive(as_points(path))
    vertices = find_infeasible_vertices(pts, model)
    if not vertices:
        return pts.copy(), []

    rho = model.rho_min_px
    seg_lens = np.hypot(*np.diff(pts, axis=0).T)
    cum = np.concatenate([[0.0], np.cumsum(seg_lens)])
    total = float(cum[-1])
    map_diag = math.hypot(imap.width, imap.height)

    out: list[tuple] = []  # (xy, is_joint)

    def emit(xy, joint=False):
        if out and math.hypot(out[-1][0][0] - xy[0], out[-1][0][1] - xy[1]) <= 1e-3:
            if joint:
                out[-1] = (out[-1][0], True)
            return
        out.append((np.asarray(xy, dtype=np.float64), joint))

    def solve_interval(seg_idx, lo, hi, next_lo, cursor):
        """(q1, q2, lo_used, hi_used, connection) for one interval, or None."""
        # analytic fast path: prefer the widest arc the stretch can host
        # (gentler curvature), widening the anchors when the corner is boxed
        # in; a radius too large for the gap yields a loopy connection and
        # is rejected by the length guard
        for radius in (4.0 * rho, 2.0 * rho, rho):
            for widen in (0.0, rho, 2.0 * rho):
                lo_w = max(lo - widen, cursor + 0.5, 0.0)
                hi_w = min(hi + widen, next_lo - 0.5, total)
                if hi_w - lo_w < 1e-9:
                    continue
                q1 = _pose_at_arc(pts, cum, lo_w, side="before")
                q2 = _pose_at_arc(pts, cum, hi_w, side="after")
                conn = _direct_dubins(imap, q1, q2, radius,
                                      max_length=1.5 * (hi_w - lo_w) + 4.0)
                if conn is not None:
                    return q1, q2, lo_w, hi_w, conn

        q1 = _pose_at_arc(pts, cum, lo, side="before")
        q2 = _pose_at_arc(pts, cum, hi, side="after")
        d = initial_offset_px
        growths = 0
        while True:
            mslice = slice_map(imap, q1.xy, q2.xy, d, d)
            _carve_pose_cells(mslice, imap, (q1, q2))
            try:
                conn = hybrid_astar(mslice, q1, q2, model, config)
                return q1, q2, lo, hi, conn
            except SliceExhausted:
                growths += 1
                exhausted = d > map_diag or \
                    (max_slice_growths is not None and growths > max_slice_growths)
                if exhausted:
                    if on_failure == "keep":
                        return None
                    raise SliceExhausted(
                        f"repair segment {seg_idx} is unsolvable even on the full map",
                        segment_index=seg_idx,
                    ) from None
                d *= 2.0

    cursor = -1.0  # arc length emitted so far
    for seg_idx, vert in enumerate(vertices):
        lo, hi = vert.interval
        next_lo = vertices[seg_idx + 1].interval[0] if seg_idx + 1 < len(vertices) \
            else total + 1.0
        solved = solve_interval(seg_idx, lo, hi, next_lo, max(cursor, 0.0))
        if solved is None:
            # unrepairable corner kept as-is; the caller asked not to fail
            for p in pts[(cum > cursor) & (cum <= hi + 1e-9)]:
                emit(p)
            cursor = hi + 1e-9
            continue
        q1, q2, lo_used, hi_used, conn = solved

        # a 1-px exclusion zone around the anchors: an original vertex
        # surviving a fraction of a pixel past the interval would turn into
        # a curvature spike at the splice
        for p in pts[(cum > cursor) & (cum < lo_used - 1.0)]:
            emit(p)

        emit((q1.x, q1.y), joint=True)
        for p in conn[1:-1]:
            emit(p)
        emit((q2.x, q2.y), joint=True)
        cursor = hi_used + 1.0

    for p in pts[cum > cursor]:
        emit(p)

    result = np.array([xy for xy, _ in out])
    joint_idx = [i for i, (_, j) in enumerate(out) if j]
    return result, joint_idx
