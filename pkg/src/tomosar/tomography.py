"""Reflectivity profiles and low-reflectivity volume extraction."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .core import GeoGrid, Image, TomographicStack, world_to_pixel

DB_FLOOR = -200.0


@dataclass
class Profile:
    """Reflectivity (dB) sampled along a straight transect of one layer."""

    axis: np.ndarray
    reflectivity_db: np.ndarray
    depth: float
    start: tuple[float, float]
    end: tuple[float, float]

    def local_maxima(self, min_prominence_db: float = 1.0) -> np.ndarray:
        """Indices of interior samples higher than everything within ±prominence."""
        from scipy.signal import find_peaks

        peaks, _ = find_peaks(self.reflectivity_db, prominence=min_prominence_db)
        return peaks


@dataclass
class BinaryVolume:
    """Voxel flags (depth, ny, nx) for reflectivity below the soil level."""

    grid: GeoGrid
    voxels: np.ndarray
    soil_mean_db: np.ndarray


@dataclass
class Component:
    id: int
    voxels: np.ndarray  # (n, 3) indices (depth, row, col)
    centroid: tuple[float, float, float]  # x, y, depth in metres
    depth_range: tuple[float, float]
    footprint_m2: float = field(default=0.0)

    @property
    def depth_extent(self) -> float:
        return self.depth_range[1]

    def __len__(self):
        return len(self.voxels)


def to_db(values, floor_db: float = DB_FLOOR, ref: float = 1.0) -> np.ndarray:
    mag = np.abs(np.asarray(values))
    with np.errstate(divide="ignore"):
        db = 20.0 * np.log10(mag / ref)
    return np.maximum(db, floor_db)


def extract_profile(layer: Image, start, end, ref: float = 1.0,
                    n_samples: int | None = None) -> Profile:
    """dB profile of ``layer`` from world point ``start`` to ``end``.

    The magnitude is bilinearly interpolated; by default one sample per
    pixel spacing of transect length. ``ref`` sets the 0 dB amplitude, so
    profiles from different scenes stay comparable.
    """
    grid = layer.grid
    (c0, r0), (c1, r1) = world_to_pixel(grid, start), world_to_pixel(grid, end)
    for c, r in ((c0, r0), (c1, r1)):
        if not (0 <= c <= grid.nx - 1 and 0 <= r <= grid.ny - 1):
            raise ValueError(f"transect endpoint {(float(c), float(r))} (px) outside the grid")
    length = float(np.hypot(end[0] - start[0], end[1] - start[1]))
    if n_samples is None:
        n_samples = int(np.ceil(length / grid.spacing - 1e-9)) + 1
    t = np.linspace(0.0, 1.0, n_samples)
    cols = c0 + t * (c1 - c0)
    rows = r0 + t * (r1 - r0)
    mag = ndimage.map_coordinates(np.abs(layer.samples).astype(float), [rows, cols], order=1,
                                  mode="nearest")
    return Profile(t * length, to_db(mag, ref=ref), layer.depth, tuple(start), tuple(end))


def soil_mean_reflectivity(stack: TomographicStack, exclusion_mask: np.ndarray | None = None,
                           min_fraction: float = 0.1) -> np.ndarray:
    """Per-layer mean of 20 log10|z| over valid pixels outside ``exclusion_mask``.

    ``exclusion_mask`` is (ny, nx) or (depth, ny, nx), True where pixels are
    left out (trees, known targets).
    """
    cube = stack.to_array()
    use = stack.valid_mask().copy()
    if exclusion_mask is not None:
        m = np.asarray(exclusion_mask, dtype=bool)
        use &= ~(m if m.ndim == 3 else m[None])
    out = np.empty(cube.shape[0])
    for k in range(cube.shape[0]):
        if use[k].mean() < min_fraction:
            raise ValueError(f"layer {k}: fewer than {min_fraction:.0%} of pixels left to average")
        out[k] = to_db(cube[k][use[k]]).mean()
    return out


def threshold_volume(stack: TomographicStack, soil_mean, margin_db: float = 1.0) -> BinaryVolume:
    """Flag voxels whose reflectivity is below ``soil_mean - margin_db``.

    ``soil_mean`` is a scalar or one value per layer. Invalid pixels are
    never flagged.
    """
    if margin_db < 0:
        raise ValueError("margin_db must be non-negative")
    db = to_db(stack.to_array())
    level = np.broadcast_to(np.asarray(soil_mean, dtype=float), (db.shape[0],))
    vox = (db < (level - margin_db)[:, None, None]) & stack.valid_mask()
    return BinaryVolume(stack.grid, vox, np.array(level, dtype=float))


def footprint_area(component: Component, grid: GeoGrid) -> float:
    """Area of the distinct (row, col) columns the component touches."""
    cols = {(int(r), int(c)) for _, r, c in component.voxels}
    return len(cols) * grid.spacing ** 2


def connected_volumes(binary: BinaryVolume, min_voxels: int = 4) -> list[Component]:
    """26-connected components with at least ``min_voxels`` voxels."""
    labels, n = ndimage.label(binary.voxels, structure=np.ones((3, 3, 3), dtype=bool))
    grid = binary.grid
    depths = np.asarray(grid.depths)
    comps = []
    if n == 0:
        return comps
    idx = np.argwhere(labels > 0)
    lab = labels[labels > 0]
    order = np.argsort(lab, kind="stable")
    idx, lab = idx[order], lab[order]
    bounds = np.searchsorted(lab, np.arange(1, n + 2))
    for k in range(n):
        vox = idx[bounds[k]:bounds[k + 1]]
        if len(vox) < min_voxels:
            continue
        d = depths[vox[:, 0]]
        x = grid.origin_xy[0] + grid.spacing * vox[:, 2]
        y = grid.origin_xy[1] + grid.spacing * vox[:, 1]
        comp = Component(len(comps) + 1, vox, (float(x.mean()), float(y.mean()), float(d.mean())),
                         (float(d.min()), float(d.max())))
        comp.footprint_m2 = footprint_area(comp, grid)
        comps.append(comp)
    return comps


def occupancy(binary: BinaryVolume, upsample: int = 2) -> np.ndarray:
    """Trilinearly interpolated occupancy in [0, 1] for rendering."""
    return np.clip(ndimage.zoom(binary.voxels.astype(float), upsample, order=1), 0.0, 1.0)


def write_components_csv(components: list[Component], path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "x", "y", "z", "depth_extent", "footprint_m2", "voxels"])
        for c in components:
            w.writerow([c.id, f"{c.centroid[0]:.3f}", f"{c.centroid[1]:.3f}", f"{c.centroid[2]:.3f}",
                        f"{c.depth_extent:.3f}", f"{c.footprint_m2:.4f}", len(c)])


def binary_to_stack(binary: BinaryVolume) -> TomographicStack:
    return TomographicStack.from_array(binary.grid, binary.voxels.astype(np.float32))
