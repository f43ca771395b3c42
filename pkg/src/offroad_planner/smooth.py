"""Voronoi-field obstacle cost and gradient-based path smoothing.

The smoother minimizes J = lambda_o * J_o + lambda_k * J_k + lambda_s * J_s
over the free vertices of a densified path: obstacle proximity through the
Voronoi field, curvature overshoot beyond the vehicle limit, and uneven
vertex spacing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.ndimage import distance_transform_edt

from .geomap import IntermediateMap
from .paths import as_points, dedupe_consecutive

DEFAULT_ALPHA = 10.0
DEFAULT_D_O_MAX = 30.0
VORONOI_SITE_SEPARATION = 2.0
VORONOI_EQUIDISTANT_TOL = 1.0


@dataclass
class VoronoiFieldGrid:
    """Per-cell obstacle distance, Voronoi-edge distance, and field value."""

    d_o: np.ndarray        # (h, w) distance to nearest obstacle, cells
    d_v: np.ndarray        # (h, w) distance to nearest Voronoi edge, cells
    v: np.ndarray          # (h, w) field value in [0, 1]
    alpha_field: float
    d_o_max: float
    origin_x: float = 0.0   # offset when the field covers a map window
    origin_y: float = 0.0
    cell_size: float = 1.0  # map pixels per field cell (coarse windows)

    @property
    def width(self) -> int:
        return self.v.shape[1]

    @property
    def height(self) -> int:
        return self.v.shape[0]

    def _local(self, xs, ys):
        w, h = self.width, self.height
        x = np.clip((np.asarray(xs, dtype=np.float64) - self.origin_x) / self.cell_size,
                    0.0, w - 1.000001)
        y = np.clip((np.asarray(ys, dtype=np.float64) - self.origin_y) / self.cell_size,
                    0.0, h - 1.000001)
        ix = np.floor(x).astype(np.int64)
        iy = np.floor(y).astype(np.int64)
        ix = np.clip(ix, 0, w - 2) if w > 1 else np.zeros_like(ix)
        iy = np.clip(iy, 0, h - 2) if h > 1 else np.zeros_like(iy)
        return x - ix, y - iy, ix, iy

    def value_at(self, xs, ys):
        """Bilinear interpolation of v at real-valued map coordinates."""
        fx, fy, ix, iy = self._local(xs, ys)
        v = self.v
        v00 = v[iy, ix]
        v10 = v[iy, np.minimum(ix + 1, self.width - 1)]
        v01 = v[np.minimum(iy + 1, self.height - 1), ix]
        v11 = v[np.minimum(iy + 1, self.height - 1), np.minimum(ix + 1, self.width - 1)]
        return (v00 * (1 - fx) * (1 - fy) + v10 * fx * (1 - fy)
                + v01 * (1 - fx) * fy + v11 * fx * fy)

    def gradient_at(self, xs, ys):
        """(dv/dx, dv/dy) of the bilinear surface at real-valued coordinates."""
        fx, fy, ix, iy = self._local(xs, ys)
        v = self.v
        jx = np.minimum(ix + 1, self.width - 1)
        jy = np.minimum(iy + 1, self.height - 1)
        v00, v10, v01, v11 = v[iy, ix], v[iy, jx], v[jy, ix], v[jy, jx]
        gx = (v10 - v00) * (1 - fy) + (v11 - v01) * fy
        gy = (v01 - v00) * (1 - fx) + (v11 - v10) * fx
        return gx / self.cell_size, gy / self.cell_size

    def to_pgm(self) -> bytes:
        img = np.rint(np.clip(self.v, 0.0, 1.0) * 65535).astype(">u2")
        header = f"P5\n{self.width} {self.height}\n65535\n".encode()
        return header + img.tobytes()


def build_voronoi_field(imap: IntermediateMap, alpha: float = DEFAULT_ALPHA,
                        d_o_max: float = DEFAULT_D_O_MAX,
                        origin_x: float = 0.0, origin_y: float = 0.0,
                        cell_size: float = 1.0) -> VoronoiFieldGrid:
    """Distance transforms + discrete Voronoi edges + field value per cell.

    Edge cells are free cells that see a second, distinct obstacle site
    almost as close as their nearest one (within one cell). The field is 1
    on obstacles, 0 on edges and beyond d_o_max, in (0, 1) elsewhere.
    """
    if alpha <= 0 or d_o_max <= 0:
        raise ValueError("alpha and d_o_max must be positive")
    trav = imap.traversable_mask()
    if trav.all() or not trav.any():
        raise ValueError("Voronoi field needs at least one obstacle and one free cell")

    d_o, (site_y, site_x) = distance_transform_edt(trav, return_indices=True)
    h, w = d_o.shape
    ys, xs = np.mgrid[0:h, 0:w]

    edges = np.zeros((h, w), dtype=bool)
    sep2 = VORONOI_SITE_SEPARATION ** 2
    for dx, dy in ((1, 0), (0, 1), (1, 1), (1, -1)):
        a_y = slice(max(0, dy), h + min(0, dy))
        a_x = slice(max(0, dx), w + min(0, dx))
        b_y = slice(max(0, -dy), h + min(0, -dy))
        b_x = slice(max(0, -dx), w + min(0, -dx))

        for (src_y, src_x), (dst_y, dst_x) in (((a_y, a_x), (b_y, b_x)),
                                               ((b_y, b_x), (a_y, a_x))):
            osx = site_x[src_y, src_x]
            osy = site_y[src_y, src_x]
            site_gap = (osx - site_x[dst_y, dst_x]) ** 2 + (osy - site_y[dst_y, dst_x]) ** 2
            d_second = np.hypot(xs[dst_y, dst_x] - osx, ys[dst_y, dst_x] - osy)
            near = (site_gap > sep2) & (d_second <= d_o[dst_y, dst_x] + VORONOI_EQUIDISTANT_TOL)
            edges[dst_y, dst_x] |= near & trav[dst_y, dst_x] & trav[src_y, src_x]

    if edges.any():
        d_v = distance_transform_edt(~edges)
    else:
        d_v = np.full((h, w), np.inf)

    f1 = alpha / (alpha + d_o)
    with np.errstate(invalid="ignore"):
        f2 = np.where(np.isinf(d_v), 1.0, d_v / np.where(d_o + d_v == 0, 1.0, d_o + d_v))
    f3 = (d_o - d_o_max) ** 2 / d_o_max ** 2
    v = np.where(d_o < d_o_max, f1 * f2 * f3, 0.0)
    v = np.clip(v, 0.0, 1.0)
    return VoronoiFieldGrid(d_o=d_o, d_v=d_v, v=v, alpha_field=alpha, d_o_max=d_o_max,
                            origin_x=origin_x, origin_y=origin_y, cell_size=cell_size)


@dataclass
class SmoothingParams:
    """Weights and optimizer knobs; defaults follow the planner's tuning."""

    lambda_o: float = 0.3
    lambda_k: float = 0.4
    lambda_s: float = 0.3
    k_max: float = 0.2          # same units as the path coordinates (1/px here)
    max_spacing: float = 2.0
    step_size: float = 0.5
    max_iterations: int = 500
    tolerance: float = 1e-6
    armijo_c: float = 1e-4
    min_step: float = 1e-6
    curvature_cap_ratio: float = 1.05

    def __post_init__(self):
        if min(self.lambda_o, self.lambda_k, self.lambda_s) < 0:
            raise ValueError("cost weights must be nonnegative")


class CostTerms(NamedTuple):
    J_o: float
    J_k: float
    J_s: float
    J: float


def curvature_profile(path) -> np.ndarray:
    """Signed discrete curvature at each interior vertex.

    Heading change between consecutive segments (wrapped to (-pi, pi])
    divided by the incoming segment length.
    """
    pts = as_points(path)
    if len(pts) < 3:
        raise ValueError("curvature needs at least 3 points")
    d = np.diff(pts, axis=0)
    lens = np.hypot(d[:, 0], d[:, 1])
    if np.any(lens == 0):
        raise ValueError("repeated consecutive points")
    headings = np.arctan2(d[:, 1], d[:, 0])
    dtheta = np.diff(headings)
    dtheta = (dtheta + math.pi) % (2 * math.pi) - math.pi
    # wrap to (-pi, pi]: the modulo above maps pi to -pi
    dtheta[dtheta == -math.pi] = math.pi
    return dtheta / lens[:-1]


def cost_terms(path, vfield: VoronoiFieldGrid, params: SmoothingParams) -> CostTerms:
    """Evaluate (J_o, J_k, J_s, J) for a path over the given field."""
    pts = as_points(path)
    j_o = float(np.sum(vfield.value_at(pts[:, 0], pts[:, 1]))) if len(pts) else 0.0

    j_k = 0.0
    if len(pts) >= 3:
        k = curvature_profile(pts)
        over = np.abs(k) > params.k_max
        if over.any():
            excess = k[over] - np.sign(k[over]) * params.k_max
            j_k = float(np.sum(excess ** 2))

    j_s = 0.0
    if len(pts) >= 3:
        second = pts[2:] - 2 * pts[1:-1] + pts[:-2]
        j_s = float(np.sum(second ** 2))

    j = params.lambda_o * j_o + params.lambda_k * j_k + params.lambda_s * j_s
    return CostTerms(j_o, j_k, j_s, j)


def cost_gradient(path, vfield: VoronoiFieldGrid, params: SmoothingParams) -> np.ndarray:
    """Analytic gradient of J with respect to every path vertex."""
    pts = as_points(path)
    n = len(pts)
    grad = np.zeros_like(pts)
    if n == 0:
        return grad

    gx, gy = vfield.gradient_at(pts[:, 0], pts[:, 1])
    grad[:, 0] += params.lambda_o * gx
    grad[:, 1] += params.lambda_o * gy

    if n >= 3:
        second = pts[2:] - 2 * pts[1:-1] + pts[:-2]
        gs = np.zeros_like(pts)
        gs[:-2] += 2 * second
        gs[1:-1] += -4 * second
        gs[2:] += 2 * second
        grad += params.lambda_s * gs

        d = np.diff(pts, axis=0)
        lens = np.hypot(d[:, 0], d[:, 1])
        safe = np.where(lens == 0, 1.0, lens)
        headings = np.arctan2(d[:, 1], d[:, 0])
        dtheta = np.diff(headings)
        dtheta = (dtheta + math.pi) % (2 * math.pi) - math.pi
        dtheta[dtheta == -math.pi] = math.pi
        k = dtheta / safe[:-1]

        over = np.abs(k) > params.k_max
        if over.any():
            # u_i = d(theta_i)/d(p_{i+1}); theta_i depends on p_i with -u_i
            u = np.column_stack([-d[:, 1], d[:, 0]]) / (safe ** 2)[:, None]
            gk = np.zeros_like(pts)
            idx = np.flatnonzero(over)
            coeff = 2.0 * (k[idx] - np.sign(k[idx]) * params.k_max)
            for i, c in zip(idx, coeff):
                li = safe[i]
                di = d[i]
                gk[i] += c * (u[i] / li + dtheta[i] * di / li ** 3)
                gk[i + 1] += c * ((-u[i + 1] - u[i]) / li - dtheta[i] * di / li ** 3)
                gk[i + 2] += c * (u[i + 1] / li)
            grad += params.lambda_k * gk
    return grad


def _densify_indexed(pts: np.ndarray, max_spacing: float):
    """Densified copy plus the new index of every original vertex."""
    out = [pts[0]]
    orig_idx = [0]
    for a, b in zip(pts[:-1], pts[1:]):
        seg = float(np.hypot(*(b - a)))
        n = max(1, int(math.ceil(seg / max_spacing)))
        for k in range(1, n + 1):
            out.append(a + (b - a) * (k / n))
        orig_idx.append(len(out) - 1)
    return np.array(out), orig_idx


def smooth_path(path, imap: IntermediateMap | None, vfield: VoronoiFieldGrid,
                params: SmoothingParams, frozen=(), trace: list | None = None) -> np.ndarray:
    """Gradient descent on J over the free vertices of a densified path.

    ``frozen`` holds indices into the input path (repair joints, segment
    endpoints); those vertices and both endpoints never move. Steps that
    leave traversable cells or push the curvature past the cap are rejected
    by the backtracking line search, so J never increases. When ``trace``
    is a list, the accepted J value of every iteration is appended to it.
    """
    pts = dedupe_consecutive(as_points(path))
    if len(pts) < 2:
        return pts

    dense, orig_idx = _densify_indexed(pts, params.max_spacing)
    if len(dense) < 3:
        return dense
    fixed = np.zeros(len(dense), dtype=bool)
    fixed[0] = fixed[-1] = True
    for j in frozen:
        if 0 <= j < len(orig_idx):
            fixed[orig_idx[j]] = True

    trav_mask = imap.traversable_mask() if imap is not None else None

    def traversable(arr) -> bool:
        if trav_mask is None:
            return True
        xi = np.rint(arr[:, 0]).astype(np.int64)
        yi = np.rint(arr[:, 1]).astype(np.int64)
        if (xi < 0).any() or (yi < 0).any() or (xi >= imap.width).any() or (yi >= imap.height).any():
            return False
        return bool(trav_mask[yi, xi].all())

    def max_abs_curv(arr) -> float:
        try:
            return float(np.max(np.abs(curvature_profile(arr))))
        except ValueError:
            return math.inf

    k_cap = params.k_max * params.curvature_cap_ratio
    current = dense
    j_current = cost_terms(current, vfield, params).J
    k_current = max_abs_curv(current)
    step = params.step_size
    if trace is not None:
        trace.append(j_current)

    for _ in range(params.max_iterations):
        grad = cost_gradient(current, vfield, params)
        grad[fixed] = 0.0
        g2 = float(np.sum(grad ** 2))
        if g2 < 1e-18:
            break

        step = min(step * 2.0, params.step_size)
        accepted = False
        while step >= params.min_step:
            cand = current - step * grad
            try:
                cand_j = cost_terms(cand, vfield, params).J
            except ValueError:  # a vertex collapsed onto its neighbor
                step *= 0.5
                continue
            if cand_j <= j_current - params.armijo_c * step * g2 and traversable(cand):
                cand_k = max_abs_curv(cand)
                if cand_k <= max(k_cap, k_current):
                    accepted = True
                    break
            step *= 0.5
        if not accepted:
            break

        improvement = j_current - cand_j
        current, j_current, k_current = cand, cand_j, min(max_abs_curv(cand), max(k_cap, k_current))
        if trace is not None:
            trace.append(j_current)
        if improvement < params.tolerance * max(1.0, abs(j_current)):
            break
    return current
