"""Deterministic grid planners (A*, Jump Point Search) for off-trail segments.

Both planners move on the 8-connected grid with corner cutting forbidden: a
diagonal step requires both adjacent axial cells traversable. Ties break on
lower f, then higher g, then row-major cell order, so outputs are
reproducible.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import distance_transform_edt

from .errors import NoGridPath
from .geomap import CellClass, IntermediateMap
from .paths import Pose

SQRT2 = math.sqrt(2.0)


@dataclass
class GridPath:
    """Ordered traversable cells plus the summed Euclidean step cost."""

    points: np.ndarray  # (N, 2) int cells
    cost: float
    waypoints: np.ndarray | None = None  # jump points, when produced by JPS


def octile(dx: int, dy: int) -> float:
    dx, dy = abs(dx), abs(dy)
    return max(dx, dy) + (SQRT2 - 1.0) * min(dx, dy)


def inflate_obstacles(imap: IntermediateMap, radius_px: float) -> IntermediateMap:
    """Grow non-traversable cells by the vehicle's half-width."""
    if radius_px <= 0:
        return imap
    trav = imap.traversable_mask()
    dist = distance_transform_edt(trav)
    out = imap.copy()
    out.grid[trav & (dist <= radius_px)] = int(CellClass.OBSTACLE)
    return out


def _endpoints(imap: IntermediateMap, s: Pose, t: Pose):
    sx, sy = int(round(s.x)), int(round(s.y))
    tx, ty = int(round(t.x)), int(round(t.y))
    if not imap.is_traversable(sx, sy):
        raise NoGridPath(f"start cell ({sx}, {sy}) is not traversable")
    if not imap.is_traversable(tx, ty):
        raise NoGridPath(f"target cell ({tx}, {ty}) is not traversable")
    return (sx, sy), (tx, ty)


def astar(imap: IntermediateMap, s: Pose, t: Pose) -> GridPath:
    """Optimal 8-connected path under the octile heuristic."""
    (sx, sy), (tx, ty) = _endpoints(imap, s, t)
    if (sx, sy) == (tx, ty):
        return GridPath(np.array([[sx, sy]]), 0.0)

    w, h = imap.width, imap.height
    walk = imap.traversable_mask()
    start = sy * w + sx
    goal = ty * w + tx

    g: dict[int, float] = {start: 0.0}
    came: dict[int, int] = {}
    heap = [(octile(tx - sx, ty - sy), 0.0, start)]
    while heap:
        f, neg_g, cur = heapq.heappop(heap)
        gv = -neg_g
        if gv > g.get(cur, math.inf):
            continue
        if cur == goal:
            return _reconstruct(came, cur, w, gv)
        x, y = cur % w, cur // w
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                if dx == 0 and dy == 0:
                    continue
                nx, ny = x + dx, y + dy
                if not (0 <= nx < w and 0 <= ny < h) or not walk[ny, nx]:
                    continue
                if dx != 0 and dy != 0 and not (walk[y, nx] and walk[ny, x]):
                    continue
                ng = gv + (SQRT2 if dx and dy else 1.0)
                nidx = ny * w + nx
                if ng < g.get(nidx, math.inf) - 1e-12:
                    g[nidx] = ng
                    came[nidx] = cur
                    heapq.heappush(heap, (ng + octile(tx - nx, ty - ny), -ng, nidx))
    raise NoGridPath("open set exhausted before reaching the target")


def _reconstruct(came: dict, cur: int, w: int, cost: float) -> GridPath:
    cells = [cur]
    while cur in came:
        cur = came[cur]
        cells.append(cur)
    cells.reverse()
    pts = np.array([[c % w, c // w] for c in cells], dtype=np.int64)
    return GridPath(pts, float(cost))


class _JumpScanner:
    """Per-map straight-jump acceleration for JPS.

    For each straight direction, the cells where a forced neighbor appears
    are precomputed; a straight jump is then two binary searches instead of
    a cell-by-cell walk.
    """

    def __init__(self, walk: np.ndarray):
        self.walk = walk
        h, w = walk.shape
        self.w, self.h = w, h
        blocked = ~walk

        def shifted(mask, dx, dy):
            # shifted(mask, dx, dy)[y, x] == mask[y + dy, x + dx] (False off-map)
            out = np.zeros_like(mask)
            src_y = slice(max(0, dy), h + min(0, dy))
            src_x = slice(max(0, dx), w + min(0, dx))
            dst_y = slice(max(0, -dy), h + min(0, -dy))
            dst_x = slice(max(0, -dx), w + min(0, -dx))
            out[dst_y, dst_x] = mask[src_y, src_x]
            return out

        def border(dx, dy):
            # cells whose (x + dx, y + dy) neighbor is off-map
            out = np.zeros((h, w), dtype=bool)
            if dy == -1:
                out[0, :] = True
            if dy == 1:
                out[h - 1, :] = True
            if dx == -1:
                out[:, 0] = True
            if dx == 1:
                out[:, w - 1] = True
            return out

        def blocked_at(dx, dy):
            return shifted(blocked, dx, dy) | border(dx, dy)

        def walk_at(dx, dy):
            return shifted(walk, dx, dy) & ~border(dx, dy)

        # forced-neighbor masks for straight travel in each axis direction
        self.forced = {}
        for d in (1, -1):
            self.forced[(d, 0)] = walk & (
                (walk_at(0, -1) & blocked_at(-d, -1)) | (walk_at(0, 1) & blocked_at(-d, 1))
            )
            self.forced[(0, d)] = walk & (
                (walk_at(-1, 0) & blocked_at(-1, -d)) | (walk_at(1, 0) & blocked_at(1, -d))
            )

        # row/column index lists are built lazily: a query touches only a
        # fraction of the grid's rows and columns
        self._blocked = blocked
        self._rows_blocked: dict[int, np.ndarray] = {}
        self._cols_blocked: dict[int, np.ndarray] = {}
        self._rows_forced: dict[tuple, np.ndarray] = {}
        self._cols_forced: dict[tuple, np.ndarray] = {}

    def _row_blocked(self, y: int) -> np.ndarray:
        arr = self._rows_blocked.get(y)
        if arr is None:
            arr = np.flatnonzero(self._blocked[y])
            self._rows_blocked[y] = arr
        return arr

    def _col_blocked(self, x: int) -> np.ndarray:
        arr = self._cols_blocked.get(x)
        if arr is None:
            arr = np.flatnonzero(self._blocked[:, x])
            self._cols_blocked[x] = arr
        return arr

    def _row_forced(self, d: int, y: int) -> np.ndarray:
        arr = self._rows_forced.get((d, y))
        if arr is None:
            arr = np.flatnonzero(self.forced[(d, 0)][y])
            self._rows_forced[(d, y)] = arr
        return arr

    def _col_forced(self, d: int, x: int) -> np.ndarray:
        arr = self._cols_forced.get((d, x))
        if arr is None:
            arr = np.flatnonzero(self.forced[(0, d)][:, x])
            self._cols_forced[(d, x)] = arr
        return arr

    @staticmethod
    def _next_at_or_after(arr: np.ndarray, v: int):
        i = np.searchsorted(arr, v, side="left")
        return int(arr[i]) if i < len(arr) else None

    @staticmethod
    def _prev_at_or_before(arr: np.ndarray, v: int):
        i = np.searchsorted(arr, v, side="right") - 1
        return int(arr[i]) if i >= 0 else None

    def straight_jump(self, x: int, y: int, dx: int, dy: int, goal: tuple):
        """First jump point strictly after (x, y) along a straight ray, or None."""
        gx, gy = goal
        if dx != 0:
            row_b = self._row_blocked(y)
            row_f = self._row_forced(dx, y)
            if dx > 0:
                nb = self._next_at_or_after(row_b, x + 1)
                limit = nb if nb is not None else self.w
                nf = self._next_at_or_after(row_f, x + 1)
                cand = nf if nf is not None and nf < limit else None
                if y == gy and x < gx < limit and (cand is None or gx <= cand):
                    return (gx, gy)
                return (cand, y) if cand is not None else None
            nb = self._prev_at_or_before(row_b, x - 1)
            limit = nb if nb is not None else -1
            nf = self._prev_at_or_before(row_f, x - 1)
            cand = nf if nf is not None and nf > limit else None
            if y == gy and limit < gx < x and (cand is None or gx >= cand):
                return (gx, gy)
            return (cand, y) if cand is not None else None
        col_b = self._col_blocked(x)
        col_f = self._col_forced(dy, x)
        if dy > 0:
            nb = self._next_at_or_after(col_b, y + 1)
            limit = nb if nb is not None else self.h
            nf = self._next_at_or_after(col_f, y + 1)
            cand = nf if nf is not None and nf < limit else None
            if x == gx and y < gy < limit and (cand is None or gy <= cand):
                return (gx, gy)
            return (x, cand) if cand is not None else None
        nb = self._prev_at_or_before(col_b, y - 1)
        limit = nb if nb is not None else -1
        nf = self._prev_at_or_before(col_f, y - 1)
        cand = nf if nf is not None and nf > limit else None
        if x == gx and limit < gy < y and (cand is None or gy >= cand):
            return (gx, gy)
        return (x, cand) if cand is not None else None

    def walkable(self, x: int, y: int) -> bool:
        return 0 <= x < self.w and 0 <= y < self.h and bool(self.walk[y, x])

    def diagonal_jump(self, x: int, y: int, dx: int, dy: int, goal: tuple):
        """First diagonal jump point from (x, y) exclusive, or None.

        Steps cell by cell; at each cell the straight probes collapse to
        binary searches via the precomputed masks.
        """
        while True:
            # strict corner rule: both axial cells must be open to move
            if not (self.walkable(x + dx, y) and self.walkable(x, y + dy)):
                return None
            x, y = x + dx, y + dy
            if not self.walkable(x, y):
                return None
            if (x, y) == goal:
                return (x, y)
            if self.straight_jump(x, y, dx, 0, goal) is not None:
                return (x, y)
            if self.straight_jump(x, y, 0, dy, goal) is not None:
                return (x, y)


def jps(imap: IntermediateMap, s: Pose, t: Pose) -> GridPath:
    """Jump Point Search; cost-equal to :func:`astar` on the same map."""
    (sx, sy), (tx, ty) = _endpoints(imap, s, t)
    if (sx, sy) == (tx, ty):
        return GridPath(np.array([[sx, sy]]), 0.0, waypoints=np.array([[sx, sy]]))

    w = imap.width
    walk = imap.traversable_mask()
    scanner = _JumpScanner(walk)
    goal = (tx, ty)

    start = (sx, sy)
    g: dict[tuple, float] = {start: 0.0}
    came: dict[tuple, tuple] = {}
    heap = [(octile(tx - sx, ty - sy), 0.0, sy * w + sx, start)]

    def push(node, parent, ng):
        if ng < g.get(node, math.inf) - 1e-12:
            g[node] = ng
            came[node] = parent
            hx, hy = node
            heapq.heappush(heap, (ng + octile(tx - hx, ty - hy), -ng, hy * w + hx, node))

    while heap:
        f, neg_g, order, cur = heapq.heappop(heap)
        gv = -neg_g
        if gv > g.get(cur, math.inf):
            continue
        if cur == goal:
            return _expand_jump_path(came, cur, gv)
        x, y = cur
        parent = came.get(cur)
        for dx, dy in _pruned_directions(scanner, x, y, parent):
            if dx != 0 and dy != 0:
                jp = scanner.diagonal_jump(x, y, dx, dy, goal)
            else:
                jp = scanner.straight_jump(x, y, dx, dy, goal)
            if jp is not None:
                push(jp, cur, gv + octile(jp[0] - x, jp[1] - y))
    raise NoGridPath("open set exhausted before reaching the target")


def _pruned_directions(sc: _JumpScanner, x: int, y: int, parent):
    """Directions worth probing from (x, y), given where we came from."""
    if parent is None:
        dirs = []
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                if dx == 0 and dy == 0:
                    continue
                if dx != 0 and dy != 0 and not (sc.walkable(x + dx, y) and sc.walkable(x, y + dy)):
                    continue
                if sc.walkable(x + dx, y + dy):
                    dirs.append((dx, dy))
        return dirs

    px, py = parent
    dx = (x > px) - (x < px)
    dy = (y > py) - (y < py)
    dirs = []
    if dx != 0 and dy != 0:
        walk_x = sc.walkable(x + dx, y)
        walk_y = sc.walkable(x, y + dy)
        if walk_x:
            dirs.append((dx, 0))
        if walk_y:
            dirs.append((0, dy))
        if walk_x and walk_y and sc.walkable(x + dx, y + dy):
            dirs.append((dx, dy))
    elif dx != 0:
        nxt = sc.walkable(x + dx, y)
        top = sc.walkable(x, y + 1)
        bot = sc.walkable(x, y - 1)
        if nxt:
            dirs.append((dx, 0))
            if top and sc.walkable(x + dx, y + 1):
                dirs.append((dx, 1))
            if bot and sc.walkable(x + dx, y - 1):
                dirs.append((dx, -1))
        if top:
            dirs.append((0, 1))
        if bot:
            dirs.append((0, -1))
    else:
        nxt = sc.walkable(x, y + dy)
        right = sc.walkable(x + 1, y)
        left = sc.walkable(x - 1, y)
        if nxt:
            dirs.append((0, dy))
            if right and sc.walkable(x + 1, y + dy):
                dirs.append((1, dy))
            if left and sc.walkable(x - 1, y + dy):
                dirs.append((-1, dy))
        if right:
            dirs.append((1, 0))
        if left:
            dirs.append((-1, 0))
    return dirs


def _expand_jump_path(came: dict, cur: tuple, cost: float) -> GridPath:
    waypoints = [cur]
    while cur in came:
        cur = came[cur]
        waypoints.append(cur)
    waypoints.reverse()

    cells = [waypoints[0]]
    for a, b in zip(waypoints[:-1], waypoints[1:]):
        x, y = a
        dx = (b[0] > x) - (b[0] < x)
        dy = (b[1] > y) - (b[1] < y)
        while (x, y) != b:
            x, y = x + dx, y + dy
            cells.append((x, y))
    return GridPath(np.array(cells, dtype=np.int64), float(cost),
                    waypoints=np.array(waypoints, dtype=np.int64))
