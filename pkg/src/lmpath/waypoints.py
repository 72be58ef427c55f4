"""Sensor-coverage waypoint grid, rasterized Voronoi cells and mass integration."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InputError, LMPathError
from .geoplan import GeoPlan, LocalFrame, point_in_ring, ring_mask
from .prior import HeatMap
from .tiles import MERCATOR_RADIUS_M, TileMosaic

_CHUNK = 65536  # pixels per nearest-waypoint block


@dataclass(frozen=True)
class SensorModel:
    """Nadir sensor footprint used for waypoint pitch and detection radius."""

    footprint_width: float  # cross-track swath in meters at flight altitude
    lateral_overlap: float = 0.0
    detection_radius: float | None = None

    def __post_init__(self):
        if self.footprint_width <= 0:
            raise InputError("sensor footprint must be positive")
        if not (0.0 <= self.lateral_overlap < 1.0):
            raise InputError("lateral overlap must be in [0, 1)")
        if self.detection_radius is None:
            object.__setattr__(self, "detection_radius", self.footprint_width / 2.0)

    @property
    def spacing(self) -> float:
        return self.footprint_width * (1.0 - self.lateral_overlap)


@dataclass(frozen=True)
class Domain:
    """Search area rasterized on the mosaic grid, in the local metric frame."""

    mask: np.ndarray  # bool (H, W): inside geofence, outside no-fly zones
    xs: np.ndarray  # local meters east of pixel centers, per column
    ys: np.ndarray  # local meters north of pixel centers, per row
    pixel_area: float  # ground m^2 per pixel
    fence_ring: tuple[tuple[float, float], ...]
    no_fly_rings: tuple[tuple[tuple[float, float], ...], ...]
    frame: LocalFrame

    @property
    def area(self) -> float:
        return float(self.mask.sum()) * self.pixel_area

    def bbox(self) -> tuple[float, float, float, float]:
        xs = [p[0] for p in self.fence_ring]
        ys = [p[1] for p in self.fence_ring]
        return min(xs), min(ys), max(xs), max(ys)


def build_domain(mosaic: TileMosaic, plan: GeoPlan, frame: LocalFrame) -> Domain:
    """Rasterize geofence minus no-fly zones onto the mosaic pixel grid."""
    for v in plan.geofence.vertices:
        if not mosaic.covers(v):
            raise InputError("geofence vertex falls outside the mosaic")
    gt = mosaic.geo_transform
    cols = np.arange(mosaic.width, dtype=float)
    rows = np.arange(mosaic.height, dtype=float)
    merc_x = gt.origin_x + cols * gt.pixel_size
    merc_y = gt.origin_y - rows * gt.pixel_size
    lons = np.degrees(merc_x / MERCATOR_RADIUS_M)
    lats = np.degrees(np.arctan(np.sinh(merc_y / MERCATOR_RADIUS_M)))
    xs = (lons - frame.origin.lon) * frame.m_per_deg_lon
    ys = (lats - frame.origin.lat) * frame.m_per_deg_lat

    fence_ring = frame.ring_local(plan.geofence)
    no_fly_rings = tuple(frame.ring_local(z) for z in plan.no_fly)
    mask = ring_mask(xs, ys, fence_ring)
    for ring in no_fly_rings:
        mask &= ~ring_mask(xs, ys, ring)
    if not mask.any():
        raise InputError("empty search domain")
    return Domain(
        mask=mask,
        xs=xs,
        ys=ys,
        pixel_area=mosaic.meters_per_pixel**2,
        fence_ring=fence_ring,
        no_fly_rings=no_fly_rings,
        frame=frame,
    )


def generate_waypoints(domain: Domain, sensor: SensorModel) -> list[tuple[float, float]]:
    """Candidate waypoints on a square grid pitched by the sensor swath.

    The grid is centered on the fence bounding box and filtered to the domain;
    at least one waypoint is always returned.
    """
    if not domain.mask.any():
        raise InputError("empty search domain")
    s = sensor.spacing
    x0, y0, x1, y1 = domain.bbox()
    nx = max(1, math.ceil((x1 - x0) / s - 1e-9))
    ny = max(1, math.ceil((y1 - y0) / s - 1e-9))
    cx, cy = (x0 + x1) / 2.0, (y0 + y1) / 2.0

    pts: list[tuple[float, float]] = []
    for iy in range(ny):
        y = cy + (iy - (ny - 1) / 2.0) * s
        for ix in range(nx):
            x = cx + (ix - (nx - 1) / 2.0) * s
            if not point_in_ring(x, y, domain.fence_ring):
                continue
            if any(point_in_ring(x, y, ring) for ring in domain.no_fly_rings):
                continue
            pts.append((x, y))
    if pts:
        return pts

    # grid missed the domain entirely: fall back to the domain centroid,
    # snapped to the nearest domain pixel so the point is guaranteed legal
    rr, cc = np.nonzero(domain.mask)
    px, py = domain.xs[cc], domain.ys[rr]
    gx, gy = px.mean(), py.mean()
    k = int(np.argmin((px - gx) ** 2 + (py - gy) ** 2))
    return [(float(px[k]), float(py[k]))]


def assign_voronoi(
    points: Sequence[tuple[float, float]], domain: Domain
) -> tuple[np.ndarray, np.ndarray]:
    """Label every domain pixel with its nearest waypoint (ties -> lowest index).

    Returns (assignment, cell_areas): assignment is int32 (H, W) with -1
    outside the domain; cell_areas are pixel counts times pixel area, summing
    exactly to the domain area.
    """
    if not points:
        raise InputError("no waypoints to assign")
    px = np.array([p[0] for p in points])
    py = np.array([p[1] for p in points])
    assignment = np.full(domain.mask.shape, -1, dtype=np.int32)
    rr, cc = np.nonzero(domain.mask)
    X = domain.xs[cc]
    Y = domain.ys[rr]
    owners = np.empty(rr.size, dtype=np.int32)
    for lo in range(0, rr.size, _CHUNK):
        hi = min(lo + _CHUNK, rr.size)
        d2 = (X[lo:hi, None] - px[None, :]) ** 2 + (Y[lo:hi, None] - py[None, :]) ** 2
        owners[lo:hi] = np.argmin(d2, axis=1)  # first occurrence = lowest index
    assignment[rr, cc] = owners
    counts = np.bincount(owners, minlength=len(points))
    return assignment, counts.astype(float) * domain.pixel_area


def integrate_masses(
    heat: HeatMap, assignment: np.ndarray, cell_areas: np.ndarray
) -> np.ndarray:
    """Mean heat density over each cell: p_i = (1/A_i) * sum_cell H * pixel_area."""
    if assignment.shape != heat.values.shape:
        raise InputError("assignment grid does not match heatmap dimensions")
    if np.any(cell_areas <= 0):
        raise LMPathError("zero-area Voronoi cell")
    inside = assignment >= 0
    sums = np.bincount(
        assignment[inside], weights=heat.values[inside], minlength=cell_areas.size
    )
    return sums * heat.cell_area / cell_areas


@dataclass(frozen=True)
class WaypointSet:
    """Waypoints with their Voronoi cells and integrated heat masses."""

    points: tuple[tuple[float, float], ...]
    masses: np.ndarray  # mean heat density per cell, 1/m^2
    cell_areas: np.ndarray  # m^2
    assignment: np.ndarray  # int32 pixel -> waypoint index, -1 outside domain
    base: tuple[float, float]

    def __post_init__(self):
        m = len(self.points)
        if m < 1 or self.masses.shape != (m,) or self.cell_areas.shape != (m,):
            raise InputError("inconsistent waypoint set")
        if not np.all(np.isfinite(self.masses)) or np.any(self.masses < 0):
            raise InputError("masses must be finite and non-negative")


def build_waypoint_set(
    domain: Domain, sensor: SensorModel, heat: HeatMap, base: tuple[float, float]
) -> WaypointSet:
    pts = generate_waypoints(domain, sensor)
    assignment, areas = assign_voronoi(pts, domain)
    masses = integrate_masses(heat, assignment, areas)
    return WaypointSet(
        points=tuple(pts),
        masses=masses,
        cell_areas=areas,
        assignment=assignment,
        base=base,
    )


def to_geojson(wpset: WaypointSet, frame: LocalFrame) -> dict:
    """Waypoint/mass dump as a GeoJSON FeatureCollection (WGS84 lon/lat)."""
    features = []
    for i, (x, y) in enumerate(wpset.points):
        g = frame.to_geo(x, y)
        features.append(
            {
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [g.lon, g.lat]},
                "properties": {
                    "index": i,
                    "mass": float(wpset.masses[i]),
                    "cell_area": float(wpset.cell_areas[i]),
                },
            }
        )
    return {"type": "FeatureCollection", "features": features}
