"""Poses and pixel-path helpers shared across the planning stages."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass
class Pose:
    """Planar position in pixel coordinates plus heading (radians)."""

    x: float
    y: float
    theta: float = 0.0

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=np.float64)

    def distance_to(self, other: "Pose") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


def as_points(path) -> np.ndarray:
    """Coerce a path-like (list of pairs/Poses or array) to an (N, 2) float array."""
    if isinstance(path, np.ndarray):
        return np.ascontiguousarray(path[:, :2], dtype=np.float64)
    if len(path) and isinstance(path[0], Pose):
        return np.array([[p.x, p.y] for p in path], dtype=np.float64)
    return np.asarray(path, dtype=np.float64).reshape(-1, 2)


def path_length(path) -> float:
    """Sum of Euclidean distances between consecutive points."""
    pts = as_points(path)
    if len(pts) < 2:
        return 0.0
    return float(np.sum(np.hypot(*np.diff(pts, axis=0).T)))


def densify(path, max_spacing: float) -> np.ndarray:
    """Insert evenly spaced points so consecutive spacing <= max_spacing."""
    pts = as_points(path)
    if len(pts) < 2:
        return pts
    out = [pts[0]]
    for a, b in zip(pts[:-1], pts[1:]):
        seg = float(np.hypot(*(b - a)))
        n = max(1, int(math.ceil(seg / max_spacing)))
        for k in range(1, n + 1):
            out.append(a + (b - a) * (k / n))
    return np.array(out)


def dedupe_consecutive(path, tol: float = 1e-9) -> np.ndarray:
    """Drop consecutive points closer than ``tol`` (keeps the first of each run)."""
    pts = as_points(path)
    if len(pts) < 2:
        return pts
    keep = np.ones(len(pts), dtype=bool)
    keep[1:] = np.hypot(*np.diff(pts, axis=0).T) > tol
    return pts[keep]


def resample_uniform(path, spacing: float) -> np.ndarray:
    """Re-space a polyline at (near) uniform arc-length steps <= spacing.

    Keeps both endpoints exactly; interior points are interpolated, which
    removes the sub-pixel steps left behind by degenerate arc segments.
    """
    pts = dedupe_consecutive(as_points(path))
    if len(pts) < 2:
        return pts
    seg = np.hypot(*np.diff(pts, axis=0).T)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = float(cum[-1])
    n = max(1, int(math.ceil(total / spacing)))
    targets = np.linspace(0.0, total, n + 1)
    xs = np.interp(targets, cum, pts[:, 0])
    ys = np.interp(targets, cum, pts[:, 1])
    out = np.column_stack([xs, ys])
    out[0] = pts[0]
    out[-1] = pts[-1]
    return out


def simplify_path(path, tolerance: float = 1.0, imap=None) -> np.ndarray:
    """Douglas-Peucker simplification to waypoint-level vertices.

    Collapses the stair-step jitter of 8-connected cell paths into long
    chords while keeping genuine corners. When a map is given, a chord is
    only accepted if every cell it crosses is traversable, so the
    simplified path never cuts through obstacles the original avoided.
    """
    pts = dedupe_consecutive(as_points(path))
    n = len(pts)
    if n < 3:
        return pts

    def chord_clear(i: int, j: int) -> bool:
        if imap is None or j - i == 1:
            return True
        a, b = pts[i], pts[j]
        steps = max(2, int(math.ceil(float(np.hypot(*(b - a))) / 0.5)))
        for k in range(steps + 1):
            p = a + (b - a) * (k / steps)
            if not imap.is_traversable(int(round(p[0])), int(round(p[1]))):
                return False
        return True

    keep = np.zeros(n, dtype=bool)
    keep[0] = keep[-1] = True
    stack = [(0, n - 1)]
    while stack:
        i, j = stack.pop()
        if j - i < 2:
            continue
        a, b = pts[i], pts[j]
        ab = b - a
        ab_len = float(np.hypot(*ab))
        seg = pts[i + 1: j]
        if ab_len < 1e-12:
            dists = np.hypot(*(seg - a).T)
        else:
            dists = np.abs(ab[0] * (seg[:, 1] - a[1]) - ab[1] * (seg[:, 0] - a[0])) / ab_len
        k_rel = int(np.argmax(dists))
        if dists[k_rel] > tolerance or not chord_clear(i, j):
            k = i + 1 + k_rel
            keep[k] = True
            stack.append((i, k))
            stack.append((k, j))
    return pts[keep]
