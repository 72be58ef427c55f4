"""Web-Mercator XYZ tile math, cached fetching and mosaic composition."""

from __future__ import annotations

import hashlib
import io
import math
import os
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping

import numpy as np
from PIL import Image

from .errors import InputError, NetworkError
from .geoplan import MERCATOR_LAT_MAX, GeoPoint

TILE_SIZE = 256
MERCATOR_RADIUS_M = 6378137.0
WORLD_SIZE_M = 2.0 * math.pi * MERCATOR_RADIUS_M
GROUND_RESOLUTION_EQUATOR = WORLD_SIZE_M / TILE_SIZE  # 156543.03392... m/px at z=0


@dataclass(frozen=True)
class TileCoord:
    z: int
    x: int
    y: int

    def __post_init__(self):
        n = 1 << self.z
        if self.z < 0 or not (0 <= self.x < n) or not (0 <= self.y < n):
            raise InputError(f"tile ({self.z}/{self.x}/{self.y}) out of range")


def mercator_xy(p: GeoPoint) -> tuple[float, float]:
    """WGS84 -> Web-Mercator meters (EPSG:3857)."""
    if not p.in_mercator_band:
        raise InputError(f"latitude {p.lat} outside Mercator band")
    x = math.radians(p.lon) * MERCATOR_RADIUS_M
    y = MERCATOR_RADIUS_M * math.asinh(math.tan(math.radians(p.lat)))
    return x, y


def mercator_to_latlon(x: float, y: float) -> GeoPoint:
    lat = math.degrees(math.atan(math.sinh(y / MERCATOR_RADIUS_M)))
    lon = math.degrees(x / MERCATOR_RADIUS_M)
    return GeoPoint(lat=lat, lon=lon)


def latlon_to_tile(p: GeoPoint, z: int) -> TileCoord:
    """Tile containing p; points on a boundary belong to the higher-index tile."""
    if not p.in_mercator_band:
        raise InputError(f"latitude {p.lat} outside Mercator band")
    n = 1 << z
    x = math.floor((p.lon + 180.0) / 360.0 * n)
    lat_rad = math.radians(p.lat)
    y = math.floor((1.0 - math.asinh(math.tan(lat_rad)) / math.pi) / 2.0 * n)
    # the nominal band constant slightly overshoots the true tile-0 edge
    x = min(max(x, 0), n - 1)
    y = min(max(y, 0), n - 1)
    return TileCoord(z=z, x=x, y=y)


def tile_nw_latlon(t: TileCoord) -> GeoPoint:
    """Lat/lon of the tile's north-west corner."""
    n = 1 << t.z
    lon = t.x / n * 360.0 - 180.0
    lat = math.degrees(math.atan(math.sinh(math.pi * (1.0 - 2.0 * t.y / n))))
    return GeoPoint(lat=lat, lon=lon)


def ground_resolution(lat: float, z: int) -> float:
    """Ground meters per pixel at a latitude."""
    return GROUND_RESOLUTION_EQUATOR * math.cos(math.radians(lat)) / (1 << z)


def zoom_for_resolution(lat: float, target_mpp: float, max_zoom: int = 22) -> int:
    """Smallest zoom whose ground resolution is <= target_mpp."""
    if target_mpp <= 0:
        raise InputError("target resolution must be positive")
    z = math.ceil(math.log2(GROUND_RESOLUTION_EQUATOR * math.cos(math.radians(lat)) / target_mpp))
    return min(max(z, 0), max_zoom)


def tile_range(
    bbox: tuple[float, float, float, float], z: int
) -> tuple[int, int, int, int]:
    """(x_min, x_max, y_min, y_max) of tiles intersecting a (lat/lon) bbox."""
    lat_min, lon_min, lat_max, lon_max = bbox
    nw = latlon_to_tile(GeoPoint(lat=lat_max, lon=lon_min), z)
    se = latlon_to_tile(GeoPoint(lat=lat_min, lon=lon_max), z)
    return nw.x, se.x, nw.y, se.y


def source_cache_id(template: str) -> str:
    """Stable cache directory name for a tile template URL (token excluded)."""
    return hashlib.sha1(template.encode("utf-8")).hexdigest()[:12]


def _cache_path(cache_dir: Path, source_id: str, t: TileCoord) -> Path:
    return cache_dir / source_id / str(t.z) / str(t.x) / f"{t.y}.img"


def _atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _http_get(url: str, timeout: float = 20.0) -> bytes:
    import requests

    try:
        resp = requests.get(url, timeout=timeout)
    except requests.RequestException as e:
        raise NetworkError(f"request failed for {url}: {e}") from e
    if resp.status_code != 200:
        raise NetworkError(f"HTTP {resp.status_code} for {url}")
    return resp.content


def fetch_tiles(
    bbox: tuple[float, float, float, float],
    z: int,
    source: str,
    cache_dir: str | Path,
    *,
    token: str = "",
    offline: bool = False,
    parallelism: int = 8,
    retries: int = 3,
    backoff_s: float = 0.5,
    fetcher: Callable[[str], bytes] | None = None,
) -> dict[TileCoord, bytes]:
    """Fetch (or serve from cache) every tile intersecting the bbox.

    The disk cache is keyed by (source, z, x, y) so each tile is fetched at
    most once across runs. In offline mode a cache miss is an error.
    """
    if "{z}" not in source or "{x}" not in source or "{y}" not in source:
        raise InputError("tile source template must contain {z}/{x}/{y} placeholders")
    cache_dir = Path(cache_dir)
    sid = source_cache_id(source)
    x0, x1, y0, y1 = tile_range(bbox, z)
    coords = [TileCoord(z=z, x=x, y=y) for y in range(y0, y1 + 1) for x in range(x0, x1 + 1)]
    fetch = fetcher or _http_get

    def get_one(t: TileCoord) -> tuple[TileCoord, bytes]:
        path = _cache_path(cache_dir, sid, t)
        if path.exists():
            return t, path.read_bytes()
        if offline:
            raise NetworkError(f"tile cache miss in offline mode: {t.z}/{t.x}/{t.y}")
        url = source.format(z=t.z, x=t.x, y=t.y, token=token)
        last_err: Exception | None = None
        for attempt in range(retries):
            try:
                data = fetch(url)
                _atomic_write(path, data)
                return t, data
            except NetworkError as e:
                last_err = e
                time.sleep(backoff_s * (2**attempt))
        raise NetworkError(f"tile fetch failed after {retries} attempts: {last_err}")

    if parallelism > 1 and len(coords) > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(get_one, coords))
    else:
        results = [get_one(t) for t in coords]
    return dict(results)


@dataclass(frozen=True)
class GeoTransform:
    """Affine pixel-center -> Web-Mercator map (north-up, square pixels)."""

    origin_x: float  # mercator X of pixel (0,0) center
    origin_y: float  # mercator Y of pixel (0,0) center
    pixel_size: float  # mercator meters per pixel

    def pixel_to_mercator(self, col: float, row: float) -> tuple[float, float]:
        return self.origin_x + col * self.pixel_size, self.origin_y - row * self.pixel_size

    def mercator_to_pixel(self, x: float, y: float) -> tuple[float, float]:
        return (x - self.origin_x) / self.pixel_size, (self.origin_y - y) / self.pixel_size

    def world_file(self) -> str:
        """Six-value world-file text (x size, rotations, -y size, origin)."""
        vals = [self.pixel_size, 0.0, 0.0, -self.pixel_size, self.origin_x, self.origin_y]
        return "\n".join(repr(v) for v in vals) + "\n"

    def as_list(self) -> list[float]:
        return [self.pixel_size, 0.0, 0.0, -self.pixel_size, self.origin_x, self.origin_y]


@dataclass(frozen=True)
class TileMosaic:
    """Stitched georeferenced raster over the fetched tile rectangle."""

    pixels: np.ndarray  # (H, W, 3) uint8
    geo_transform: GeoTransform
    zoom: int
    meters_per_pixel: float  # ground resolution at mosaic center latitude

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def latlon_to_pixel(self, p: GeoPoint) -> tuple[float, float]:
        return self.geo_transform.mercator_to_pixel(*mercator_xy(p))

    def pixel_to_latlon(self, col: float, row: float) -> GeoPoint:
        return mercator_to_latlon(*self.geo_transform.pixel_to_mercator(col, row))

    def covers(self, p: GeoPoint) -> bool:
        col, row = self.latlon_to_pixel(p)
        return -0.5 <= col <= self.width - 0.5 and -0.5 <= row <= self.height - 0.5

    def center_latlon(self) -> GeoPoint:
        return self.pixel_to_latlon((self.width - 1) / 2.0, (self.height - 1) / 2.0)


def compose(tiles: Mapping[TileCoord, bytes] | Iterable[tuple[TileCoord, bytes]], z: int) -> TileMosaic:
    """Stitch a full rectangle of tiles into one georeferenced mosaic."""
    items = dict(tiles)
    if not items:
        raise InputError("no tiles to compose")
    coords = list(items.keys())
    if any(t.z != z for t in coords):
        raise InputError("tile zoom mismatch")
    xs = [t.x for t in coords]
    ys = [t.y for t in coords]
    x0, x1, y0, y1 = min(xs), max(xs), min(ys), max(ys)
    ncols, nrows = x1 - x0 + 1, y1 - y0 + 1
    expected = {(x, y) for x in range(x0, x1 + 1) for y in range(y0, y1 + 1)}
    if {(t.x, t.y) for t in coords} != expected or len(coords) != ncols * nrows:
        raise InputError("ragged tile set")

    grid = np.zeros((nrows * TILE_SIZE, ncols * TILE_SIZE, 3), dtype=np.uint8)
    for t, data in items.items():
        try:
            img = Image.open(io.BytesIO(data)).convert("RGB")
        except Exception as e:
            raise InputError(f"tile {t.z}/{t.x}/{t.y} decode failure: {e}") from e
        if img.size != (TILE_SIZE, TILE_SIZE):
            raise InputError(f"tile {t.z}/{t.x}/{t.y} is not {TILE_SIZE}px")
        r0, c0 = (t.y - y0) * TILE_SIZE, (t.x - x0) * TILE_SIZE
        grid[r0 : r0 + TILE_SIZE, c0 : c0 + TILE_SIZE] = np.asarray(img)

    world_tile = WORLD_SIZE_M / (1 << z)
    ps = world_tile / TILE_SIZE
    nw_x = -WORLD_SIZE_M / 2.0 + x0 * world_tile
    nw_y = WORLD_SIZE_M / 2.0 - y0 * world_tile
    transform = GeoTransform(origin_x=nw_x + ps / 2.0, origin_y=nw_y - ps / 2.0, pixel_size=ps)

    center_y = transform.pixel_to_mercator(0, (nrows * TILE_SIZE - 1) / 2.0)[1]
    lat_center = mercator_to_latlon(0.0, center_y).lat
    mpp = ps * math.cos(math.radians(lat_center))
    return TileMosaic(pixels=grid, geo_transform=transform, zoom=z, meters_per_pixel=mpp)


def export_png(mosaic: TileMosaic, path: str | Path) -> None:
    """Write the mosaic as PNG plus a world-file sidecar (.pgw)."""
    path = Path(path)
    Image.fromarray(mosaic.pixels).save(path, format="PNG")
    path.with_suffix(".pgw").write_text(mosaic.geo_transform.world_file())
