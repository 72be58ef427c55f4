"""Synthetic evaluation scenarios: labeled ground-truth regions and targets.

A scenario file provides world-coordinate (local meters) polygons per label,
candidate target positions, and an RNG seed. The synthetic segmentation
backend rasterizes the regions; the Monte Carlo evaluator samples the targets.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .errors import InputError
from .geoplan import point_in_ring


@dataclass(frozen=True)
class Region:
    label: str
    polygon: tuple[tuple[float, float], ...]  # local meters

    def __post_init__(self):
        if len(self.polygon) < 3:
            raise InputError(f"region '{self.label}' polygon has <3 vertices")
        object.__setattr__(self, "polygon", tuple((float(x), float(y)) for x, y in self.polygon))


@dataclass(frozen=True)
class Scenario:
    regions: tuple[Region, ...]
    targets: tuple[tuple[float, float], ...]
    seed: int = 0

    def labels(self) -> set[str]:
        return {r.label.lower() for r in self.regions}


def load_scenario(source: str | Path | bytes) -> Scenario:
    """Load a scenario JSON document from a path or raw bytes."""
    if isinstance(source, bytes):
        text = source.decode("utf-8")
    else:
        text = Path(source).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise InputError(f"malformed scenario JSON: {e}") from e
    try:
        regions = tuple(
            Region(label=str(r["label"]), polygon=tuple((p[0], p[1]) for p in r["polygon"]))
            for r in doc.get("regions", [])
        )
        targets = tuple((float(t[0]), float(t[1])) for t in doc.get("targets", []))
    except (KeyError, TypeError, IndexError, ValueError) as e:
        raise InputError(f"malformed scenario document: {e}") from e
    return Scenario(regions=regions, targets=targets, seed=int(doc.get("seed", 0)))


def dump_scenario(scn: Scenario) -> str:
    doc = {
        "regions": [{"label": r.label, "polygon": [list(p) for p in r.polygon]} for r in scn.regions],
        "targets": [list(t) for t in scn.targets],
        "seed": scn.seed,
    }
    return json.dumps(doc, indent=2, sort_keys=True)


def validate_targets(scn: Scenario, fence_ring: Sequence[tuple[float, float]]) -> None:
    """Every target must lie inside the (local-frame) geofence ring."""
    for i, (x, y) in enumerate(scn.targets):
        if not point_in_ring(x, y, fence_ring):
            raise InputError(f"scenario target {i} at ({x}, {y}) outside geofence")
