"""Artifact writers: GeoJSON overlays, heatmap rasters, figures and tables.

Figures render through the Agg backend straight to files; nothing here opens
a display.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from PIL import Image

from .geoplan import LocalFrame
from .planner import PathPlan
from .prior import HeatMap
from .tiles import TileMosaic
from .waypoints import Domain, WaypointSet


def save_json(obj, path: str | Path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def path_geojson(
    plan: PathPlan, wpset: WaypointSet, frame: LocalFrame, speed: float
) -> dict:
    """Flight path as a LineString with per-vertex visit times."""
    coords = []
    t = [0.0]
    bx, by = wpset.base
    g = frame.to_geo(bx, by)
    coords.append([g.lon, g.lat])
    for i, ti in zip(plan.order, plan.visit_times):
        x, y = wpset.points[i]
        g = frame.to_geo(x, y)
        coords.append([g.lon, g.lat])
        t.append(float(ti))
    return {
        "type": "FeatureCollection",
        "features": [
            {
                "type": "Feature",
                "geometry": {"type": "LineString", "coordinates": coords},
                "properties": {
                    "t": t,
                    "mode": plan.mode,
                    "objective": plan.objective,
                    "speed": speed,
                    "order": list(plan.order),
                },
            }
        ],
    }


def heatmap_sidecar(heat: HeatMap, mosaic: TileMosaic) -> dict:
    """True scale for the max-normalized PNG plus the raster georeference."""
    return {
        "max_density_per_m2": heat.max_density(),
        "cell_area_m2": heat.cell_area,
        "geo_transform": mosaic.geo_transform.as_list(),
        "crs": "EPSG:3857",
        "uniform_fallback": heat.uniform_fallback,
    }


def write_heatmap_png(heat: HeatMap, path: str | Path) -> None:
    """Grayscale render, max-normalized for display."""
    peak = heat.max_density()
    if peak <= 0:
        gray = np.zeros(heat.values.shape, dtype=np.uint8)
    else:
        gray = np.round(heat.values / peak * 255.0).astype(np.uint8)
    Image.fromarray(gray, mode="L").save(Path(path), format="PNG")


def contours_geojson(
    heat: HeatMap,
    mosaic: TileMosaic,
    levels: Sequence[float] = (0.25, 0.5, 0.75),
) -> dict:
    """Iso-density contours (fractions of the peak) as WGS84 MultiLineStrings."""
    from skimage import measure

    peak = heat.max_density()
    features = []
    for frac in levels:
        lines = []
        if peak > 0:
            for contour in measure.find_contours(heat.values, frac * peak):
                coords = []
                for row, col in contour:
                    g = mosaic.pixel_to_latlon(float(col), float(row))
                    coords.append([g.lon, g.lat])
                if len(coords) >= 2:
                    lines.append(coords)
        features.append(
            {
                "type": "Feature",
                "geometry": {"type": "MultiLineString", "coordinates": lines},
                "properties": {"level_fraction": frac, "density_per_m2": frac * peak},
            }
        )
    return {"type": "FeatureCollection", "features": features}


def _ring_xy(ring) -> tuple[list[float], list[float]]:
    xs = [p[0] for p in ring] + [ring[0][0]]
    ys = [p[1] for p in ring] + [ring[0][1]]
    return xs, ys


def render_heatmap_figure(
    path: str | Path,
    mosaic: TileMosaic,
    heat: HeatMap,
    domain: Domain,
) -> None:
    """Mosaic with the heat prior overlaid, in local-frame meters."""
    extent = [domain.xs[0], domain.xs[-1], domain.ys[-1], domain.ys[0]]
    fig, ax = plt.subplots(figsize=(8, 8))
    ax.imshow(mosaic.pixels, extent=extent, interpolation="nearest")
    shown = np.ma.masked_where(~domain.mask, heat.values)
    im = ax.imshow(shown, extent=extent, cmap="hot", alpha=0.6, interpolation="nearest")
    fig.colorbar(im, ax=ax, shrink=0.8, label="density (1/m²)")
    xs, ys = _ring_xy(domain.fence_ring)
    ax.plot(xs, ys, "c-", lw=2, label="geofence")
    for ring in domain.no_fly_rings:
        xs, ys = _ring_xy(ring)
        ax.plot(xs, ys, "r--", lw=2)
    ax.set_xlabel("east (m)")
    ax.set_ylabel("north (m)")
    ax.set_aspect("equal")
    ax.legend(loc="lower left", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_path_figure(
    path: str | Path,
    domain: Domain,
    wpset: WaypointSet,
    plan: PathPlan,
) -> None:
    """Waypoints (colored by mass) and the solved visit order."""
    fig, ax = plt.subplots(figsize=(8, 8))
    xs, ys = _ring_xy(domain.fence_ring)
    ax.plot(xs, ys, "k-", lw=1.5, label="geofence")
    for ring in domain.no_fly_rings:
        rx, ry = _ring_xy(ring)
        ax.fill(rx, ry, color="red", alpha=0.25)
    px = [p[0] for p in wpset.points]
    py = [p[1] for p in wpset.points]
    sc = ax.scatter(px, py, c=wpset.masses, cmap="viridis", s=60, zorder=3)
    fig.colorbar(sc, ax=ax, shrink=0.8, label="mass density (1/m²)")
    route_x = [wpset.base[0]] + [wpset.points[i][0] for i in plan.order]
    route_y = [wpset.base[1]] + [wpset.points[i][1] for i in plan.order]
    ax.plot(route_x, route_y, "-o", color="tab:orange", ms=3, lw=1.5, label=plan.mode)
    ax.plot(*wpset.base, "b^", ms=12, label="base")
    for rank, i in enumerate(plan.order, 1):
        ax.annotate(str(rank), wpset.points[i], fontsize=8, ha="left", va="bottom")
    ax.set_xlabel("east (m)")
    ax.set_ylabel("north (m)")
    ax.set_aspect("equal")
    ax.legend(loc="lower left", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_eval_figure(path: str | Path, summary: Mapping) -> None:
    """Detection-time ECDF per plan."""
    fig, ax = plt.subplots(figsize=(7, 5))
    by_plan: dict[str, list[float]] = {}
    for row in summary["results"]:
        if row["detection_time"] is not None:
            by_plan.setdefault(row["plan"], []).append(row["detection_time"])
    for pid, ts in by_plan.items():
        ts = np.sort(ts)
        ax.step(ts, np.arange(1, ts.size + 1) / summary["trials"], where="post", label=pid)
    ax.set_xlabel("detection time (s)")
    ax.set_ylabel("fraction of trials detected")
    ax.set_ylim(0, 1.02)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def summary_table(summary: Mapping) -> str:
    """Human-readable comparison table."""
    lines = [f"trials: {summary['trials']}   seed: {summary['seed']}", ""]
    header = f"{'plan':<22} {'detect%':>8} {'mean(s)':>10} {'median(s)':>10}"
    lines.append(header)
    lines.append("-" * len(header))
    for pid, st in summary["plans"].items():
        mean = f"{st['mean_detection_time']:.1f}" if st["mean_detection_time"] is not None else "-"
        med = (
            f"{st['median_detection_time']:.1f}"
            if st["median_detection_time"] is not None
            else "-"
        )
        lines.append(
            f"{pid:<22} {100 * st['detection_rate']:>7.1f}% {mean:>10} {med:>10}"
        )
    lines.append("")
    for key, rate in summary["win_rates"].items():
        a, b = key.split("_vs_")
        lines.append(f"{a} beats {b} in {100 * rate:.1f}% of trials")
    return "\n".join(lines) + "\n"


def trials_csv(summary: Mapping) -> str:
    """Per-trial detection times, one row per (trial, plan)."""
    lines = ["trial,plan,target_index,detection_time"]
    for row in summary["results"]:
        dt = "" if row["detection_time"] is None else repr(row["detection_time"])
        lines.append(f"{row['trial']},{row['plan']},{row['target_index']},{dt}")
    return "\n".join(lines) + "\n"
