"""Tour solvers: minimum expected search time, threshold TSP, baseline TSP.

The expected-time objective is sum(p_i * t_i) over waypoints, t_i the arrival
time flying straight legs at constant speed from the base. Small instances are
solved exactly by subset dynamic programming; larger ones by greedy
construction plus exchange local search with a reported lower bound.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InfeasibleError, InputError

MODE_MIN_EXPECTED_TIME = "min-expected-time"
MODE_THRESHOLD_TSP = "threshold-tsp"
MODE_BASELINE_TSP = "baseline-tsp"

PROVEN_OPTIMAL = "proven-optimal"
HEURISTIC = "heuristic"

_TOL = 1e-12
DEFAULT_EXACT_LIMIT = 14


@dataclass(frozen=True)
class Instance:
    """Planar tour instance: base, waypoints, masses and cruise speed."""

    base: tuple[float, float]
    points: tuple[tuple[float, float], ...]
    masses: tuple[float, ...]
    speed: float

    def __post_init__(self):
        if len(self.points) < 1:
            raise InputError("instance needs at least one waypoint")
        if len(self.masses) != len(self.points):
            raise InputError("masses and points length mismatch")
        if self.speed <= 0 or not math.isfinite(self.speed):
            raise InputError("speed must be positive and finite")
        coords = [self.base, *self.points]
        if not all(math.isfinite(c) for xy in coords for c in xy):
            raise InputError("non-finite coordinates")
        if not all(math.isfinite(m) and m >= 0 for m in self.masses):
            raise InputError("masses must be finite and non-negative")


@dataclass(frozen=True)
class PathPlan:
    """Solved visit sequence with arrival times.

    ``objective`` is sum(p_i * t_i) over the visited waypoints for every mode.
    ``solved_value`` is the quantity the solver minimized (equal to
    ``objective`` in min-expected-time mode, the closed tour length in the TSP
    modes); ``lower_bound`` bounds ``solved_value`` and equals it when the
    result is proven optimal.
    """

    order: tuple[int, ...]
    visit_times: tuple[float, ...]
    objective: float
    mode: str
    optimality: str
    solved_value: float
    lower_bound: float
    tour_length: float  # base -> ... -> last visited
    return_length: float  # last visited -> base

    @property
    def closed_length(self) -> float:
        return self.tour_length + self.return_length


@dataclass(frozen=True)
class SolveReport:
    nodes_explored: int
    wall_time: float
    bound_gap: float


def _distances(inst: Instance) -> tuple[np.ndarray, np.ndarray]:
    pts = np.asarray(inst.points, dtype=float)
    base = np.asarray(inst.base, dtype=float)
    db = np.hypot(*(pts - base).T)
    diff = pts[:, None, :] - pts[None, :, :]
    dw = np.hypot(diff[..., 0], diff[..., 1])
    return db, dw


def _times_for_order(order: np.ndarray, db: np.ndarray, dw: np.ndarray, v: float) -> np.ndarray:
    legs = np.empty(order.size)
    legs[0] = db[order[0]]
    if order.size > 1:
        legs[1:] = dw[order[:-1], order[1:]]
    return np.cumsum(legs) / v


def _latency_objective(order: np.ndarray, db, dw, p, v: float) -> float:
    return float(p[order] @ _times_for_order(order, db, dw, v))


def _bits(mask: int, n: int) -> list[int]:
    return [j for j in range(n) if (mask >> j) & 1]


def _mask_masses(p: np.ndarray) -> np.ndarray:
    out = np.zeros(1 << p.size)
    for mask in range(1, 1 << p.size):
        low = mask & -mask
        out[mask] = out[mask ^ low] + p[low.bit_length() - 1]
    return out


def _reconstruct(parent: np.ndarray, mask: int, last: int) -> list[int]:
    order_rev = []
    j = last
    while True:
        order_rev.append(j)
        k = int(parent[mask, j])
        mask ^= 1 << j
        if k < 0:
            break
        j = k
    return order_rev[::-1]


def _latency_dp(db: np.ndarray, dw: np.ndarray, p: np.ndarray, v: float):
    """Exact subset DP. State (visited set, last); a leg's travel time is
    charged to every not-yet-visited waypoint's arrival time."""
    n = p.size
    full = (1 << n) - 1
    total = float(p.sum())
    massof = _mask_masses(p)
    dp = np.full((full + 1, n), np.inf)
    parent = np.full((full + 1, n), -1, dtype=np.int16)
    for j in range(n):
        dp[1 << j, j] = db[j] / v * total
    for mask in range(1, full + 1):
        js = _bits(mask, n)
        if len(js) < 2:
            continue
        jarr = np.asarray(js)
        subs = mask ^ (1 << jarr)
        coef = (total - massof[mask] + p[jarr]) / v
        cand = dp[subs] + dw[:, jarr].T * coef[:, None]
        best = np.argmin(cand, axis=1)  # first occurrence = lowest index
        dp[mask, jarr] = cand[np.arange(len(js)), best]
        parent[mask, jarr] = best
    return dp, parent


def _pick_last(values: np.ndarray, db: np.ndarray) -> int:
    """Among equal-cost last nodes prefer the shortest return leg, then index."""
    best = values.min()
    cands = np.nonzero(values == best)[0]
    return int(cands[np.argmin(db[cands])])


def _greedy_latency_order(db, dw, p, v: float) -> list[int]:
    n = p.size
    remaining = list(range(n))
    order: list[int] = []
    cur = -1
    while remaining:
        best_key, best_j = None, None
        for j in remaining:
            dt = max((db[j] if cur < 0 else dw[cur, j]) / v, _TOL)
            key = (-(p[j] / dt), dt, j)
            if best_key is None or key < best_key:
                best_key, best_j = key, j
        order.append(best_j)
        remaining.remove(best_j)
        cur = best_j
    return order


def _latency_local_search(order: np.ndarray, db, dw, p, v: float) -> np.ndarray:
    """First-improvement relocate (segments of 1-3) and reversal to a fixpoint."""
    n = order.size
    obj = _latency_objective(order, db, dw, p, v)
    improved = True
    while improved:
        improved = False
        for seg in (1, 2, 3):
            if seg > n - 1:
                continue
            for i in range(n - seg + 1):
                chunk = order[i : i + seg]
                rest = np.concatenate((order[:i], order[i + seg :]))
                for k in range(rest.size + 1):
                    if k == i:
                        continue
                    cand = np.concatenate((rest[:k], chunk, rest[k:]))
                    c = _latency_objective(cand, db, dw, p, v)
                    if c < obj - _TOL * max(1.0, obj):
                        order, obj, improved = cand, c, True
                        break
                else:
                    continue
                break
        for i in range(n - 1):
            for k in range(i + 1, n):
                cand = order.copy()
                cand[i : k + 1] = cand[i : k + 1][::-1]
                c = _latency_objective(cand, db, dw, p, v)
                if c < obj - _TOL * max(1.0, obj):
                    order, obj, improved = cand, c, True
    return order


def _latency_lower_bound(db, p, v: float) -> float:
    # any arrival time is at least the straight-line time from base
    return float(p @ db) / v


def solve_min_latency(
    inst: Instance, exact_limit: int = DEFAULT_EXACT_LIMIT
) -> tuple[PathPlan, SolveReport]:
    """Visit every waypoint, minimizing sum(p_i * t_i) from the base.

    Proven optimal via subset DP up to ``exact_limit`` waypoints; greedy plus
    exchange local search with a relaxation lower bound beyond that.
    """
    t0 = time.perf_counter()
    db, dw = _distances(inst)
    p = np.asarray(inst.masses, dtype=float)
    n = p.size
    v = inst.speed

    if n <= exact_limit:
        dp, parent = _latency_dp(db, dw, p, v)
        full = (1 << n) - 1
        last = _pick_last(dp[full], db)
        order = np.asarray(_reconstruct(parent, full, last))
        optimality, explored = PROVEN_OPTIMAL, int(np.isfinite(dp).sum())
        lower = None
    else:
        # two construction starts, keep the better local optimum
        starts = [
            np.asarray(_greedy_latency_order(db, dw, p, v)),
            _tsp_heuristic_order(db, dw),
        ]
        best_order, best_obj = None, math.inf
        for start in starts:
            cand = _latency_local_search(start, db, dw, p, v)
            c = _latency_objective(cand, db, dw, p, v)
            if c < best_obj:
                best_order, best_obj = cand, c
        order = best_order
        optimality, explored = HEURISTIC, 0
        lower = _latency_lower_bound(db, p, v)

    times = _times_for_order(order, db, dw, v)
    objective = float(p[order] @ times)
    lower = objective if lower is None else min(lower, objective)
    plan = PathPlan(
        order=tuple(int(j) for j in order),
        visit_times=tuple(float(t) for t in times),
        objective=objective,
        mode=MODE_MIN_EXPECTED_TIME,
        optimality=optimality,
        solved_value=objective,
        lower_bound=lower,
        tour_length=float(times[-1] * v),
        return_length=float(db[order[-1]]),
    )
    report = SolveReport(
        nodes_explored=explored,
        wall_time=time.perf_counter() - t0,
        bound_gap=objective - lower,
    )
    return plan, report


def _tsp_dp(db: np.ndarray, dw: np.ndarray):
    """Held-Karp over paths from the base; closed by the return leg."""
    n = db.size
    full = (1 << n) - 1
    dp = np.full((full + 1, n), np.inf)
    parent = np.full((full + 1, n), -1, dtype=np.int16)
    for j in range(n):
        dp[1 << j, j] = db[j]
    for mask in range(1, full + 1):
        js = _bits(mask, n)
        if len(js) < 2:
            continue
        jarr = np.asarray(js)
        subs = mask ^ (1 << jarr)
        cand = dp[subs] + dw[:, jarr].T
        best = np.argmin(cand, axis=1)
        dp[mask, jarr] = cand[np.arange(len(js)), best]
        parent[mask, jarr] = best
    return dp, parent


def _tsp_heuristic_order(db, dw) -> np.ndarray:
    """Nearest neighbor from base, then 2-opt on the closed tour."""
    n = db.size
    remaining = list(range(n))
    order: list[int] = []
    cur = -1
    while remaining:
        dists = [(db[j] if cur < 0 else dw[cur, j], j) for j in remaining]
        _, j = min(dists)
        order.append(j)
        remaining.remove(j)
        cur = j
    o = np.asarray(order)

    def leg(a: int, b: int) -> float:
        # -1 stands for the base
        if a < 0:
            return db[b]
        if b < 0:
            return db[a]
        return dw[a, b]

    improved = True
    while improved:
        improved = False
        for i in range(n - 1):
            prev_i = o[i - 1] if i > 0 else -1
            for k in range(i + 1, n):
                next_k = o[k + 1] if k + 1 < n else -1
                delta = (
                    leg(prev_i, o[k])
                    + leg(o[i], next_k)
                    - leg(prev_i, o[i])
                    - leg(o[k], next_k)
                )
                if delta < -_TOL:
                    o[i : k + 1] = o[i : k + 1][::-1]
                    improved = True
                    prev_i = o[i - 1] if i > 0 else -1
    return o


def _tsp_lower_bound(db, dw) -> float:
    """Half-sum of the two cheapest incident edges per node (base included)."""
    n = db.size
    total = 0.0
    inc_base = np.sort(db)
    total += inc_base[0] + (inc_base[1] if n > 1 else inc_base[0])
    for j in range(n):
        edges = np.concatenate((np.delete(dw[j], j), [db[j]]))
        edges = np.sort(edges)
        total += edges[0] + (edges[1] if edges.size > 1 else edges[0])
    return float(total) / 2.0


def _solve_closed_tsp(
    inst: Instance,
    keep: Sequence[int],
    mode: str,
    exact_limit: int,
) -> tuple[PathPlan, SolveReport]:
    t0 = time.perf_counter()
    db_all, dw_all = _distances(inst)
    p = np.asarray(inst.masses, dtype=float)
    keep = list(keep)
    db = db_all[keep]
    dw = dw_all[np.ix_(keep, keep)]
    k = len(keep)

    if k <= exact_limit:
        dp, parent = _tsp_dp(db, dw)
        full = (1 << k) - 1
        closed = dp[full] + db
        last = int(np.argmin(closed))  # ties -> lowest index
        sub_order = _reconstruct(parent, full, last)
        length = float(closed[last])
        optimality, explored = PROVEN_OPTIMAL, int(np.isfinite(dp).sum())
        lower = length
    else:
        o = _tsp_heuristic_order(db, dw)
        sub_order = [int(j) for j in o]
        legs = [db[sub_order[0]]]
        legs += [dw[sub_order[i], sub_order[i + 1]] for i in range(k - 1)]
        length = float(sum(legs) + db[sub_order[-1]])
        optimality, explored = HEURISTIC, 0
        lower = min(_tsp_lower_bound(db, dw), length)

    order = np.asarray([keep[j] for j in sub_order])
    v = inst.speed
    times = _times_for_order(order, db_all, dw_all, v)
    objective = float(p[order] @ times)
    plan = PathPlan(
        order=tuple(int(j) for j in order),
        visit_times=tuple(float(t) for t in times),
        objective=objective,
        mode=mode,
        optimality=optimality,
        solved_value=length,
        lower_bound=lower,
        tour_length=float(times[-1] * v),
        return_length=float(db_all[order[-1]]),
    )
    report = SolveReport(
        nodes_explored=explored,
        wall_time=time.perf_counter() - t0,
        bound_gap=length - lower,
    )
    return plan, report


def solve_baseline_tsp(
    inst: Instance, exact_limit: int = DEFAULT_EXACT_LIMIT
) -> tuple[PathPlan, SolveReport]:
    """Shortest closed tour through all waypoints, ignoring masses."""
    return _solve_closed_tsp(inst, range(len(inst.points)), MODE_BASELINE_TSP, exact_limit)


def solve_threshold_tsp(
    inst: Instance, rho: float, exact_limit: int = DEFAULT_EXACT_LIMIT
) -> tuple[PathPlan, SolveReport]:
    """Shortest closed tour through the waypoints with density >= rho."""
    keep = [i for i, m in enumerate(inst.masses) if m >= rho]
    if not keep:
        raise InfeasibleError("threshold exceeds maximum density")
    return _solve_closed_tsp(inst, keep, MODE_THRESHOLD_TSP, exact_limit)


@dataclass(frozen=True)
class ExpectedTimeReport:
    """Raw and mass-normalized expected detection time of a plan."""

    raw: float
    normalized: float
    covered_mass: float
    total_mass: float

    @property
    def coverage(self) -> float:
        return self.covered_mass / self.total_mass if self.total_mass > 0 else 1.0


def expected_time(plan: PathPlan, masses: Sequence[float]) -> ExpectedTimeReport:
    """sum(p_i * t_i) over visited waypoints, plus the normalized version.

    When the plan skips positive-mass waypoints (threshold mode), the value is
    conditional on the covered mass, reported via ``covered_mass``.
    """
    p = np.asarray(masses, dtype=float)
    order = np.asarray(plan.order, dtype=int)
    t = np.asarray(plan.visit_times, dtype=float)
    raw = float(p[order] @ t)
    covered = float(p[order].sum())
    return ExpectedTimeReport(
        raw=raw,
        normalized=raw / covered if covered > 0 else 0.0,
        covered_mass=covered,
        total_mass=float(p.sum()),
    )


def big_m(inst: Instance) -> float:
    """A constant strictly exceeding any feasible visit time (ILP deactivation)."""
    db, dw = _distances(inst)
    dmax = max(float(db.max()), float(dw.max()))
    return (len(inst.points) + 1) * dmax / inst.speed


def instance_from_waypoints(wpset, speed: float) -> Instance:
    return Instance(
        base=tuple(wpset.base),
        points=tuple(wpset.points),
        masses=tuple(float(m) for m in wpset.masses),
        speed=speed,
    )
