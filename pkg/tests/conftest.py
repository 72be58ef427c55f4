"""Shared fixtures: the parking-lot mission kit (plan, scenario, tile cache)."""

from __future__ import annotations

import io
import json
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from lmpath.backends import StaticLabelMap, SyntheticBackend, expand_labels, segment_windows
from lmpath.geoplan import GeoPoint, LocalFrame, frame_for, parse_plan, point_in_ring
from lmpath.prior import aggregate_label, build_heatmap, make_window_grid
from lmpath.scenario import Scenario, Region, dump_scenario
from lmpath.tiles import TileCoord, compose, source_cache_id, tile_range
from lmpath.waypoints import SensorModel, build_domain, build_waypoint_set

FIXTURE_ZOOM = 17
TILE_TEMPLATE = "https://tiles.invalid/{z}/{x}/{y}.png"

FENCE_LOCAL = ((-150.0, -120.0), (150.0, -120.0), (150.0, 120.0), (-150.0, 120.0))
LOT_RING = ((-45.0, 55.0), (145.0, 55.0), (145.0, 115.0), (-45.0, 115.0))
HOME_LOCAL = (-140.0, -110.0)
ORIGIN = GeoPoint(39.95, -75.19)


def make_plan_doc(
    fence_local=FENCE_LOCAL,
    home_local=HOME_LOCAL,
    no_fly_local=(),
    cruise_speed=5.0,
    origin=ORIGIN,
) -> dict:
    frame = LocalFrame(origin=origin)
    polygons = [
        {
            "inclusion": True,
            "version": 1,
            "polygon": [[p.lat, p.lon] for p in (frame.to_geo(x, y) for x, y in fence_local)],
        }
    ]
    for ring in no_fly_local:
        polygons.append(
            {
                "inclusion": False,
                "version": 1,
                "polygon": [[p.lat, p.lon] for p in (frame.to_geo(x, y) for x, y in ring)],
            }
        )
    home = frame.to_geo(*home_local)
    return {
        "fileType": "Plan",
        "version": 1,
        "groundStation": "test",
        "geoFence": {"version": 2, "circles": [], "polygons": polygons},
        "rallyPoints": {"version": 2, "points": []},
        "mission": {
            "version": 2,
            "cruiseSpeed": cruise_speed,
            "firmwareType": 12,
            "vehicleType": 2,
            "plannedHomePosition": [home.lat, home.lon, 10.0],
            "items": [],
        },
    }


def tile_png(x: int, y: int) -> bytes:
    img = Image.new("RGB", (256, 256), ((37 * x + 11 * y) % 200 + 30, 120, 90))
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def build_tile_cache(cache_dir: Path, bounds, zoom=FIXTURE_ZOOM, template=TILE_TEMPLATE) -> int:
    """Pre-populate the documented cache layout so runs stay offline."""
    sid = source_cache_id(template)
    x0, x1, y0, y1 = tile_range(bounds, zoom)
    count = 0
    for x in range(x0, x1 + 1):
        for y in range(y0, y1 + 1):
            p = cache_dir / sid / str(zoom) / str(x) / f"{y}.img"
            p.parent.mkdir(parents=True, exist_ok=True)
            p.write_bytes(tile_png(x, y))
            count += 1
    return count


def make_lot_targets(rng=None) -> tuple[tuple[float, float], ...]:
    """40 targets in the lot, 10 in the surrounding field."""
    rng = rng or np.random.default_rng(42)
    targets = []
    while len(targets) < 40:
        targets.append((rng.uniform(-45, 145), rng.uniform(55, 115)))
    while len(targets) < 50:
        x, y = rng.uniform(-150, 150), rng.uniform(-120, 120)
        if point_in_ring(x, y, LOT_RING):
            continue
        targets.append((x, y))
    return tuple(targets)


@pytest.fixture(scope="session")
def lot_kit(tmp_path_factory):
    """Parking-lot mission on disk: plan, scenario, warm tile cache, config."""
    root = tmp_path_factory.mktemp("lot_kit")
    plan_path = root / "mission_area.plan"
    plan_path.write_text(json.dumps(make_plan_doc(), indent=1))

    scn = Scenario(
        regions=(Region(label="parking lot", polygon=LOT_RING),),
        targets=make_lot_targets(),
        seed=20250809,
    )
    scenario_path = root / "scenario.json"
    scenario_path.write_text(dump_scenario(scn))

    cache_dir = root / "cache"
    plan = parse_plan(plan_path.read_bytes())
    n_tiles = build_tile_cache(cache_dir, plan.geofence.bounds())

    config_path = root / "lmpath.conf"
    config_path.write_text(
        "\n".join(
            [
                "# parking-lot fixture config",
                f"tile_url = {TILE_TEMPLATE}",
                f"tile_cache = {cache_dir}",
                "offline = true",
                f"zoom = {FIXTURE_ZOOM}",
                "window_px = 1024",
                "window_overlap = 0.75",
                "footprint_width = 100",
                "lateral_overlap = 0.0",
                f"scenario = {scenario_path}",
                "exact_limit = 14",
            ]
        )
        + "\n"
    )
    return {
        "root": root,
        "plan_path": plan_path,
        "scenario_path": scenario_path,
        "cache_dir": cache_dir,
        "config_path": config_path,
        "n_tiles": n_tiles,
        "scenario": scn,
    }


@pytest.fixture(scope="session")
def lot_pipeline(lot_kit):
    """The same mission run in-process up to the waypoint masses."""
    plan = parse_plan(lot_kit["plan_path"].read_bytes())
    frame = frame_for(plan)
    from lmpath.tiles import fetch_tiles

    got = fetch_tiles(
        plan.geofence.bounds(),
        FIXTURE_ZOOM,
        TILE_TEMPLATE,
        lot_kit["cache_dir"],
        offline=True,
    )
    mosaic = compose(got, FIXTURE_ZOOM)
    domain = build_domain(mosaic, plan, frame)
    scn = lot_kit["scenario"]
    backend = SyntheticBackend(scn, domain)
    labels = expand_labels(
        "car", StaticLabelMap({"car": ("parking lot", "road", "driveway")})
    )
    grid = make_window_grid(mosaic.width, mosaic.height, 1024, 0.75)
    masks = segment_windows(mosaic, grid, labels, backend)
    label_masks = [
        aggregate_label({wi: masks[(wi, l)] for wi in range(len(grid.windows))}, grid, l)
        for l in labels.labels
    ]
    heat = build_heatmap(label_masks, domain.mask, domain.pixel_area)
    sensor = SensorModel(footprint_width=100.0, lateral_overlap=0.0)
    wpset = build_waypoint_set(domain, sensor, heat, frame.to_local(plan.home))
    return {
        "plan": plan,
        "frame": frame,
        "mosaic": mosaic,
        "domain": domain,
        "labels": labels,
        "grid": grid,
        "heat": heat,
        "sensor": sensor,
        "wpset": wpset,
        "scenario": scn,
    }
