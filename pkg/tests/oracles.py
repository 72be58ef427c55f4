"""Independent oracles used by the tests.

These deliberately avoid the library's own code paths: tour optima come from
exhaustive permutation enumeration, detection times from fine time stepping,
containment from shapely, and window/nearest-neighbor counts from brute force.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

_PERM_CACHE: dict[int, np.ndarray] = {}


def _perms(n: int) -> np.ndarray:
    if n not in _PERM_CACHE:
        _PERM_CACHE[n] = np.array(list(itertools.permutations(range(n))), dtype=np.int64)
    return _PERM_CACHE[n]


def perm_optimum(base, pts, masses, v) -> tuple[float, float]:
    """Exhaustive-permutation (min latency objective, min closed tour length)."""
    pts = np.asarray(pts, dtype=float)
    n = len(pts)
    nodes = np.vstack([pts, [base]])
    diff = nodes[:, None, :] - nodes[None, :, :]
    D = np.hypot(diff[..., 0], diff[..., 1])
    P = _perms(n)
    prev = np.concatenate([np.full((P.shape[0], 1), n), P[:, :-1]], axis=1)
    legs = D[prev, P]
    times = np.cumsum(legs, axis=1) / v
    latency = (times * np.asarray(masses, dtype=float)[P]).sum(axis=1)
    closed = legs.sum(axis=1) + D[P[:, -1], n]
    return float(latency.min()), float(closed.min())


def stepped_detection_time(order, points, base, speed, target, radius, dt=0.001):
    """Time-step the flight and return the first in-radius time, else None."""
    poly = [base] + [points[i] for i in order]
    t = 0.0
    for a, b in zip(poly[:-1], poly[1:]):
        length = math.dist(a, b)
        if length == 0.0:
            if math.dist(a, target) <= radius:
                return t
            continue
        steps = max(1, int(length / speed / dt))
        for k in range(steps + 1):
            s = k / steps
            p = (a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1]))
            if math.dist(p, target) <= radius:
                return t + s * length / speed
        t += length / speed
    return None


def brute_force_cover_count(windows, col: int, row: int) -> int:
    """Count windows containing a pixel by direct rectangle containment."""
    return sum(1 for (x, y, w, h) in windows if x <= col < x + w and y <= row < y + h)


def brute_force_nearest(points, x: float, y: float) -> int:
    """Lowest-index nearest point by plain linear scan."""
    best, best_d = 0, math.inf
    for i, (px, py) in enumerate(points):
        d = (px - x) ** 2 + (py - y) ** 2
        if d < best_d:
            best, best_d = i, d
    return best


def shapely_contains(ring, x: float, y: float) -> bool:
    """Boundary-inclusive containment via shapely."""
    from shapely.geometry import Point, Polygon

    return Polygon(ring).covers(Point(x, y))
