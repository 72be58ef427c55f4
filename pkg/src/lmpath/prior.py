"""Sliding-window mask aggregation and the normalized heat-density prior."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import InputError, LMPathError


@dataclass(frozen=True)
class LabelSet:
    """A search target and its expanded environmental context labels."""

    target: str
    labels: tuple[str, ...]

    def __post_init__(self):
        if not self.labels:
            raise InputError(f"no labels for target '{self.target}'")
        seen = set()
        for l in self.labels:
            key = l.lower()
            if key in seen:
                raise InputError(f"duplicate label '{l}' for target '{self.target}'")
            seen.add(key)


@dataclass(frozen=True)
class WindowGrid:
    """Overlapping pixel windows covering a raster.

    Edge windows are clamped inward so every window has the full window size
    and every pixel is covered by at least one window.
    """

    window_px: int
    stride_px: int
    windows: tuple[tuple[int, int, int, int], ...]  # (col0, row0, w, h)
    grid_width: int
    grid_height: int


def make_window_grid(width: int, height: int, window_px: int, overlap: float) -> WindowGrid:
    if window_px < 1:
        raise InputError("window size must be >= 1 px")
    if not (0.0 <= overlap < 1.0):
        raise InputError("window overlap must be in [0, 1)")
    stride = max(1, round(window_px * (1.0 - overlap)))
    win_w = min(window_px, width)
    win_h = min(window_px, height)

    def starts(extent: int, win: int) -> list[int]:
        xs = list(range(0, extent - win + 1, stride))
        if xs[-1] != extent - win:
            xs.append(extent - win)  # clamp the last window to the edge
        return xs

    windows = tuple(
        (x, y, win_w, win_h) for y in starts(height, win_h) for x in starts(width, win_w)
    )
    return WindowGrid(
        window_px=window_px,
        stride_px=stride,
        windows=windows,
        grid_width=width,
        grid_height=height,
    )


def cover_counts(grid: WindowGrid) -> np.ndarray:
    """Number of windows covering each pixel."""
    counts = np.zeros((grid.grid_height, grid.grid_width), dtype=np.int32)
    for x, y, w, h in grid.windows:
        counts[y : y + h, x : x + w] += 1
    return counts


@dataclass(frozen=True)
class LabelMask:
    """Per-label aggregated mask over the full raster, values in [0, 1]."""

    label: str
    values: np.ndarray


def aggregate_label(
    masks: Mapping[int, np.ndarray], grid: WindowGrid, label: str = ""
) -> LabelMask:
    """Average the per-window binary masks over the windows covering each pixel."""
    acc = np.zeros((grid.grid_height, grid.grid_width), dtype=np.float64)
    for wi, (x, y, w, h) in enumerate(grid.windows):
        m = masks[wi]
        if m.shape != (h, w):
            raise LMPathError(
                f"mask shape mismatch for window {wi}: {m.shape} != {(h, w)}"
            )
        acc[y : y + h, x : x + w] += m
    counts = cover_counts(grid)
    if np.any(counts == 0):
        raise LMPathError("window grid leaves pixels uncovered")
    return LabelMask(label=label, values=acc / counts)


@dataclass(frozen=True)
class HeatMap:
    """Normalized heat density over the search domain.

    In the default domain normalization, values integrate to 1 over the
    domain: sum(values[domain]) * cell_area == 1. Values are zero outside the
    domain. ``uniform_fallback`` flags an all-zero prior replaced by the
    uniform density.
    """

    values: np.ndarray  # float64 (H, W), 1/m^2
    cell_area: float  # m^2 per pixel
    domain_mask: np.ndarray  # bool (H, W)
    uniform_fallback: bool = False

    def total_mass(self) -> float:
        return float(self.values[self.domain_mask].sum()) * self.cell_area

    def max_density(self) -> float:
        return float(self.values.max(initial=0.0))


def build_heatmap(
    label_masks: Sequence[LabelMask | np.ndarray],
    domain_mask: np.ndarray,
    cell_area: float,
    *,
    normalize_over: str = "domain",
) -> HeatMap:
    """Sum per-label masks and normalize into a heat density.

    ``normalize_over="domain"`` divides by the integral over the search domain
    (mass outside the fence is unreachable); ``"image"`` divides by the
    integral over the whole raster, in which case the domain integral may be
    below 1. An all-zero prior falls back to the uniform density over the
    domain and is flagged.
    """
    if normalize_over not in ("domain", "image"):
        raise InputError(f"unknown normalization '{normalize_over}'")
    if cell_area <= 0:
        raise InputError("cell area must be positive")
    if not label_masks:
        raise InputError("no label masks")
    arrays = [m.values if isinstance(m, LabelMask) else np.asarray(m) for m in label_masks]
    shape = domain_mask.shape
    if any(a.shape != shape for a in arrays):
        raise InputError("label mask dimensions do not match the domain")
    if not domain_mask.any():
        raise InputError("empty domain")

    total = np.zeros(shape, dtype=np.float64)
    for a in arrays:
        total += a
    integral = float(total[domain_mask].sum() if normalize_over == "domain" else total.sum())
    integral *= cell_area
    if integral > 0.0:
        values = np.where(domain_mask, total / integral, 0.0)
        return HeatMap(values=values, cell_area=cell_area, domain_mask=domain_mask)
    uniform = 1.0 / (float(domain_mask.sum()) * cell_area)
    values = np.where(domain_mask, uniform, 0.0)
    return HeatMap(
        values=values, cell_area=cell_area, domain_mask=domain_mask, uniform_fallback=True
    )
