"""QGroundControl plan files, local metric frames and polygon containment.

Everything downstream works either on WGS84 lat/lon or on a local
equirectangular frame in meters; both live here.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import InputError

EARTH_RADIUS_M = 6371008.8  # mean spherical radius; keeps local distances haversine-consistent
MERCATOR_LAT_MAX = 85.05113  # raster work is restricted to this latitude band

INCLUSION = "inclusion"
EXCLUSION = "exclusion"

NAV_WAYPOINT = 16  # MAV_CMD_NAV_WAYPOINT
NAV_RTL = 20  # MAV_CMD_NAV_RETURN_TO_LAUNCH
FRAME_RELATIVE_ALT = 3


@dataclass(frozen=True)
class GeoPoint:
    """WGS84 position in degrees; lon normalized into [-180, 180)."""

    lat: float
    lon: float

    def __post_init__(self):
        if not (-90.0 <= self.lat <= 90.0) or not math.isfinite(self.lon):
            raise InputError(f"invalid coordinate ({self.lat}, {self.lon})")
        object.__setattr__(self, "lon", ((self.lon + 180.0) % 360.0) - 180.0)

    @property
    def in_mercator_band(self) -> bool:
        return abs(self.lat) <= MERCATOR_LAT_MAX


def _as_ring(vertices: Sequence[GeoPoint]) -> tuple[tuple[float, float], ...]:
    """Polygon vertices as (x=lon, y=lat) tuples, closing vertex dropped."""
    pts = [(p.lon, p.lat) for p in vertices]
    if len(pts) > 1 and pts[0] == pts[-1]:
        pts = pts[:-1]
    return tuple(pts)


def ring_area(ring: Sequence[tuple[float, float]]) -> float:
    """Signed shoelace area of a closed ring (closure implicit).

    Vertices are translated to their mean first; the raw shoelace cancels
    catastrophically on lat/lon-sized coordinates.
    """
    n = len(ring)
    mx = sum(p[0] for p in ring) / n
    my = sum(p[1] for p in ring) / n
    a = 0.0
    for i in range(n):
        x1, y1 = ring[i]
        x2, y2 = ring[(i + 1) % n]
        a += (x1 - mx) * (y2 - my) - (x2 - mx) * (y1 - my)
    return 0.5 * a


def _orientation(p, q, r) -> int:
    v = (q[1] - p[1]) * (r[0] - q[0]) - (q[0] - p[0]) * (r[1] - q[1])
    if v > 0:
        return 1
    if v < 0:
        return 2
    return 0


def _on_segment(p, q, r) -> bool:
    return (
        min(p[0], r[0]) <= q[0] <= max(p[0], r[0])
        and min(p[1], r[1]) <= q[1] <= max(p[1], r[1])
    )


def _segments_intersect(p1, q1, p2, q2) -> bool:
    o1 = _orientation(p1, q1, p2)
    o2 = _orientation(p1, q1, q2)
    o3 = _orientation(p2, q2, p1)
    o4 = _orientation(p2, q2, q1)
    if o1 != o2 and o3 != o4:
        return True
    if o1 == 0 and _on_segment(p1, p2, q1):
        return True
    if o2 == 0 and _on_segment(p1, q2, q1):
        return True
    if o3 == 0 and _on_segment(p2, p1, q2):
        return True
    if o4 == 0 and _on_segment(p2, q1, q2):
        return True
    return False


def ring_is_simple(ring: Sequence[tuple[float, float]]) -> bool:
    """True when no two non-adjacent edges intersect."""
    n = len(ring)
    edges = [(ring[i], ring[(i + 1) % n]) for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue  # adjacent edges share a vertex
            if _segments_intersect(*edges[i], *edges[j]):
                return False
    return True


def point_in_ring(x: float, y: float, ring: Sequence[tuple[float, float]]) -> bool:
    """Even-odd (ray crossing) containment; boundary points count as inside."""
    n = len(ring)
    inside = False
    j = n - 1
    for i in range(n):
        xi, yi = ring[i]
        xj, yj = ring[j]
        if _orientation((xi, yi), (x, y), (xj, yj)) == 0 and _on_segment(
            (xi, yi), (x, y), (xj, yj)
        ):
            return True
        if (yi > y) != (yj > y) and x < (xj - xi) * (y - yi) / (yj - yi) + xi:
            inside = not inside
        j = i
    return inside


def ring_mask(
    xs: np.ndarray, ys: np.ndarray, ring: Sequence[tuple[float, float]]
) -> np.ndarray:
    """Vectorized even-odd rasterization of a ring at grid points.

    xs are column coordinates, ys row coordinates; returns a boolean grid of
    shape (len(ys), len(xs)).
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    inside = np.zeros((ys.size, xs.size), dtype=bool)
    n = len(ring)
    yg = ys[:, None]
    xg = xs[None, :]
    j = n - 1
    for i in range(n):
        xi, yi = ring[i]
        xj, yj = ring[j]
        cond = (yi > yg) != (yj > yg)
        if yj != yi:
            xcross = (xj - xi) * (yg - yi) / (yj - yi) + xi
            inside ^= cond & (xg < xcross)
        j = i
    return inside


@dataclass(frozen=True)
class GeoPolygon:
    """Simple polygon on the sphere, vertices in order, implicit closure."""

    vertices: tuple[GeoPoint, ...]
    kind: str = INCLUSION

    def __post_init__(self):
        ring = _as_ring(self.vertices)
        if len(ring) < 3:
            raise InputError("degenerate polygon (<3 vertices)")
        if not ring_is_simple(ring):
            raise InputError("polygon is self-intersecting")
        if abs(ring_area(ring)) <= 0.0:
            raise InputError("polygon has zero enclosed area")
        object.__setattr__(self, "vertices", tuple(self.vertices))

    @property
    def ring(self) -> tuple[tuple[float, float], ...]:
        return _as_ring(self.vertices)

    def bounds(self) -> tuple[float, float, float, float]:
        """(lat_min, lon_min, lat_max, lon_max)."""
        lats = [p.lat for p in self.vertices]
        lons = [p.lon for p in self.vertices]
        return min(lats), min(lons), max(lats), max(lons)

    def centroid(self) -> GeoPoint:
        """Area centroid in coordinate space (adequate at mission scales)."""
        ring = self.ring
        # translate to the vertex mean first: the raw shoelace cancels
        # catastrophically on lat/lon-sized coordinates
        mx = sum(p[0] for p in ring) / len(ring)
        my = sum(p[1] for p in ring) / len(ring)
        shifted = [(x - mx, y - my) for x, y in ring]
        a = ring_area(shifted)
        cx = cy = 0.0
        n = len(shifted)
        for i in range(n):
            x1, y1 = shifted[i]
            x2, y2 = shifted[(i + 1) % n]
            w = x1 * y2 - x2 * y1
            cx += (x1 + x2) * w
            cy += (y1 + y2) * w
        return GeoPoint(lat=my + cy / (6.0 * a), lon=mx + cx / (6.0 * a))


def contains(poly: GeoPolygon, p: GeoPoint) -> bool:
    """Even-odd containment with boundary points inside."""
    return point_in_ring(p.lon, p.lat, poly.ring)


@dataclass(frozen=True)
class GeoPlan:
    """Mission input: geofence, no-fly zones, home and flight parameters."""

    geofence: GeoPolygon
    no_fly: tuple[GeoPolygon, ...]
    home: GeoPoint
    home_alt: float
    cruise_speed: float
    flight_altitude: float

    def __post_init__(self):
        if self.cruise_speed <= 0:
            raise InputError("cruise speed must be positive")
        if not contains(self.geofence, self.home):
            raise InputError("home position outside geofence")
        for z in self.no_fly:
            if contains(z, self.home):
                raise InputError("home in no-fly zone")


@dataclass(frozen=True)
class LocalFrame:
    """Equirectangular meters-east/meters-north frame about an origin."""

    origin: GeoPoint
    m_per_deg_lat: float = field(init=False)
    m_per_deg_lon: float = field(init=False)

    def __post_init__(self):
        scale = EARTH_RADIUS_M * math.pi / 180.0
        object.__setattr__(self, "m_per_deg_lat", scale)
        object.__setattr__(
            self, "m_per_deg_lon", scale * math.cos(math.radians(self.origin.lat))
        )

    def to_local(self, p: GeoPoint) -> tuple[float, float]:
        if not p.in_mercator_band:
            raise InputError(f"latitude {p.lat} outside Mercator band")
        return (
            (p.lon - self.origin.lon) * self.m_per_deg_lon,
            (p.lat - self.origin.lat) * self.m_per_deg_lat,
        )

    def to_geo(self, x: float, y: float) -> GeoPoint:
        return GeoPoint(
            lat=self.origin.lat + y / self.m_per_deg_lat,
            lon=self.origin.lon + x / self.m_per_deg_lon,
        )

    def ring_local(self, poly: GeoPolygon) -> tuple[tuple[float, float], ...]:
        return tuple(self.to_local(p) for p in poly.vertices)


def frame_for(plan: GeoPlan) -> LocalFrame:
    """Local frame about the geofence centroid."""
    return LocalFrame(origin=plan.geofence.centroid())


def haversine_m(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in meters (mean sphere)."""
    phi1, phi2 = math.radians(a.lat), math.radians(b.lat)
    dphi = phi2 - phi1
    dlam = math.radians(b.lon - a.lon)
    h = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(math.sqrt(h))


def _parse_polygon(entry: dict, index: int) -> GeoPolygon:
    coords = entry.get("polygon")
    if not isinstance(coords, list):
        raise InputError(f"geoFence.polygons[{index}] missing polygon coordinates")
    try:
        pts = tuple(GeoPoint(lat=float(c[0]), lon=float(c[1])) for c in coords)
    except (TypeError, ValueError, IndexError) as e:
        raise InputError(f"geoFence.polygons[{index}] has malformed coordinates") from e
    kind = INCLUSION if entry.get("inclusion", True) else EXCLUSION
    return GeoPolygon(vertices=pts, kind=kind)


def parse_plan(
    data: bytes | str,
    *,
    default_cruise_speed: float = 5.0,
    flight_altitude: float = 40.0,
) -> GeoPlan:
    """Parse a QGC ``.plan`` JSON document into a GeoPlan.

    The plan must carry exactly one inclusion polygon. Cruise speed comes from
    ``mission.cruiseSpeed`` when present, else ``default_cruise_speed``; flight
    altitude is a caller decision (plan files do not carry it globally).
    """
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as e:
        raise InputError(f"malformed plan JSON: {e}") from e

    fence_doc = doc.get("geoFence", {})
    if fence_doc.get("circles"):
        raise InputError("circular geofences are not supported")
    polys = [_parse_polygon(p, i) for i, p in enumerate(fence_doc.get("polygons", []))]
    inclusions = [p for p in polys if p.kind == INCLUSION]
    exclusions = [p for p in polys if p.kind == EXCLUSION]
    if len(inclusions) != 1:
        raise InputError(
            f"plan must carry exactly one inclusion polygon, found {len(inclusions)}"
        )

    mission = doc.get("mission", {})
    home_raw = mission.get("plannedHomePosition")
    if not isinstance(home_raw, list) or len(home_raw) < 2:
        raise InputError("mission.plannedHomePosition missing or malformed")
    home = GeoPoint(lat=float(home_raw[0]), lon=float(home_raw[1]))
    home_alt = float(home_raw[2]) if len(home_raw) > 2 else 0.0

    speed = mission.get("cruiseSpeed")
    cruise = float(speed) if speed is not None else float(default_cruise_speed)

    return GeoPlan(
        geofence=inclusions[0],
        no_fly=tuple(exclusions),
        home=home,
        home_alt=home_alt,
        cruise_speed=cruise,
        flight_altitude=flight_altitude,
    )


def write_mission(
    plan: GeoPlan, path: Sequence[GeoPoint], *, rtl: bool = False
) -> bytes:
    """Emit a flyable QGC plan for an ordered waypoint sequence.

    Mission items are NAV_WAYPOINT commands at flight altitude in visit order;
    the home position precedes them as plannedHomePosition. ``rtl`` appends a
    return-to-launch item. Geofence and home coordinates survive a
    write -> parse round trip bit-exactly.
    """
    if not path:
        raise InputError("empty path")
    for i, p in enumerate(path):
        if not contains(plan.geofence, p):
            raise InputError(f"path waypoint {i} outside geofence")

    items = []
    for i, p in enumerate(path):
        items.append(
            {
                "type": "SimpleItem",
                "autoContinue": True,
                "doJumpId": i + 1,
                "command": NAV_WAYPOINT,
                "frame": FRAME_RELATIVE_ALT,
                "params": [0, 0, 0, None, p.lat, p.lon, plan.flight_altitude],
            }
        )
    if rtl:
        items.append(
            {
                "type": "SimpleItem",
                "autoContinue": True,
                "doJumpId": len(path) + 1,
                "command": NAV_RTL,
                "frame": 2,
                "params": [0, 0, 0, 0, 0, 0, 0],
            }
        )

    def poly_doc(poly: GeoPolygon) -> dict:
        return {
            "inclusion": poly.kind == INCLUSION,
            "polygon": [[p.lat, p.lon] for p in poly.vertices],
            "version": 1,
        }

    doc = {
        "fileType": "Plan",
        "version": 1,
        "groundStation": "lmpath",
        "geoFence": {
            "version": 2,
            "circles": [],
            "polygons": [poly_doc(plan.geofence)] + [poly_doc(z) for z in plan.no_fly],
        },
        "rallyPoints": {"version": 2, "points": []},
        "mission": {
            "version": 2,
            "firmwareType": 12,
            "vehicleType": 2,
            "cruiseSpeed": plan.cruise_speed,
            "hoverSpeed": 5,
            "plannedHomePosition": [plan.home.lat, plan.home.lon, plan.home_alt],
            "items": items,
        },
    }
    return json.dumps(doc, indent=2, sort_keys=True).encode("utf-8")
