"""Monte Carlo mission evaluation: fly plans over sampled targets, compare planners.

Detection uses a capsule model: the target is found the first instant it lies
within the sensor detection radius of the UAV position along the flown
polyline. Per-segment first-entry times are closed form, so trials are exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import InputError
from .planner import PathPlan
from .scenario import Scenario
from .waypoints import SensorModel


@dataclass(frozen=True)
class TrialResult:
    target_index: int
    detection_time: float | None  # seconds, None = not detected
    plan_id: str

    def __post_init__(self):
        if self.detection_time is not None and self.detection_time < 0:
            raise InputError("negative detection time")


def _segment_entry_time(
    a: tuple[float, float],
    b: tuple[float, float],
    target: tuple[float, float],
    radius: float,
    t_start: float,
    speed: float,
) -> float | None:
    """Earliest time within `radius` of the target while flying a->b, else None."""
    ax, ay = a
    dx, dy = b[0] - ax, b[1] - ay
    fx, fy = ax - target[0], ay - target[1]
    if fx * fx + fy * fy <= radius * radius:
        return t_start
    seg2 = dx * dx + dy * dy
    if seg2 == 0.0:
        return None
    # |A + s*AB - T|^2 = r^2, earliest root in [0, 1]
    half_b = fx * dx + fy * dy
    c = fx * fx + fy * fy - radius * radius
    disc = half_b * half_b - seg2 * c
    if disc < 0.0:
        return None
    s = (-half_b - math.sqrt(disc)) / seg2
    if s < 0.0 or s > 1.0:
        return None
    return t_start + s * math.sqrt(seg2) / speed


def detection_time(
    plan: PathPlan,
    points: Sequence[tuple[float, float]],
    base: tuple[float, float],
    speed: float,
    target: tuple[float, float],
    sensor: SensorModel,
) -> float | None:
    """First time within detection radius along base -> visits, else None."""
    if sensor.detection_radius is None or sensor.detection_radius <= 0:
        raise InputError("detection radius must be positive")
    polyline = [base] + [points[i] for i in plan.order]
    t = 0.0
    for a, b in zip(polyline[:-1], polyline[1:]):
        hit = _segment_entry_time(a, b, target, sensor.detection_radius, t, speed)
        if hit is not None:
            return hit
        t += math.hypot(b[0] - a[0], b[1] - a[1]) / speed
    return None


def run_trial(
    plan: PathPlan,
    points: Sequence[tuple[float, float]],
    base: tuple[float, float],
    speed: float,
    target: tuple[float, float],
    sensor: SensorModel,
    *,
    target_index: int = -1,
    plan_id: str = "",
) -> TrialResult:
    """Fly the plan at constant speed and record time-to-detection."""
    return TrialResult(
        target_index=target_index,
        detection_time=detection_time(plan, points, base, speed, target, sensor),
        plan_id=plan_id or plan.mode,
    )


def _trial_rng(seed: int, trial: int) -> np.random.Generator:
    # stream per (seed, trial) so parallel execution cannot change results
    return np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFF, trial]))


def compare(
    plans: Mapping[str, PathPlan],
    scenario: Scenario,
    trials: int,
    *,
    points: Sequence[tuple[float, float]],
    base: tuple[float, float],
    speed: float,
    sensor: SensorModel,
    seed: int | None = None,
    target_weights: Sequence[float] | None = None,
) -> dict:
    """Run seeded random-target trials for every plan and summarize.

    Each trial samples one target (uniformly unless ``target_weights`` is
    given) and evaluates all plans on it. A plan wins a pairwise trial when
    its detection time is strictly smaller; ties split 0.5/0.5 and a missed
    detection counts as infinite time. Deterministic given the seed.
    """
    if trials < 1:
        raise InputError("trials must be >= 1")
    if not scenario.targets:
        raise InputError("scenario has no targets")
    if not plans:
        raise InputError("no plans to compare")
    seed = scenario.seed if seed is None else seed
    weights = None
    if target_weights is not None:
        w = np.asarray(target_weights, dtype=float)
        if w.shape != (len(scenario.targets),) or w.sum() <= 0:
            raise InputError("bad target weights")
        weights = w / w.sum()

    ids = list(plans.keys())
    rows: list[dict] = []
    times: dict[str, list[float | None]] = {pid: [] for pid in ids}
    for trial in range(trials):
        rng = _trial_rng(seed, trial)
        if weights is None:
            ti = int(rng.integers(len(scenario.targets)))
        else:
            ti = int(rng.choice(len(scenario.targets), p=weights))
        target = scenario.targets[ti]
        for pid in ids:
            res = run_trial(
                plans[pid], points, base, speed, target, sensor,
                target_index=ti, plan_id=pid,
            )
            times[pid].append(res.detection_time)
            rows.append(
                {
                    "trial": trial,
                    "plan": pid,
                    "target_index": ti,
                    "detection_time": res.detection_time,
                }
            )

    def stats(ts: list[float | None]) -> dict:
        detected = [t for t in ts if t is not None]
        return {
            "detection_rate": len(detected) / len(ts),
            "mean_detection_time": float(np.mean(detected)) if detected else None,
            "median_detection_time": float(np.median(detected)) if detected else None,
        }

    win_rates: dict[str, float] = {}
    for a in ids:
        for b in ids:
            if a == b:
                continue
            wins = 0.0
            for ta, tb in zip(times[a], times[b]):
                fa = math.inf if ta is None else ta
                fb = math.inf if tb is None else tb
                if fa < fb:
                    wins += 1.0
                elif fa == fb:
                    wins += 0.5
            win_rates[f"{a}_vs_{b}"] = wins / trials

    return {
        "trials": trials,
        "seed": seed,
        "plans": {pid: stats(times[pid]) for pid in ids},
        "win_rates": win_rates,
        "results": rows,
    }
