"""Reference images, patch tiling, region splits and augmentation."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .core import GeoGrid, Image, TomographicStack, read_tensors, write_tensors
from .scene import NestRecord

DETECTION = "detection"
SIZE = "size"


@dataclass(frozen=True)
class TileConfig:
    """Window geometry in metres; pixel counts follow from the grid spacing."""

    tile_m: float = 12.0
    stride_m: float = 4.0
    central_m: float = 4.0

    def pixels(self, spacing: float) -> tuple[int, int, int]:
        """(tile, stride, central) in pixels; 61/20/21 at 0.2 m."""
        tile = int(round(self.tile_m / spacing)) + 1
        stride = int(round(self.stride_m / spacing))
        central = int(round(self.central_m / spacing)) + 1
        return tile, stride, central


@dataclass
class PatchSet:
    """Sub-images (n, h, w, c) with scalar labels and where they came from."""

    images: np.ndarray
    labels: np.ndarray
    centers: np.ndarray
    regions: np.ndarray
    index: np.ndarray  # (n, 2) tile row, col
    mode: str = DETECTION
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.images)
        if not (len(self.labels) == len(self.centers) == len(self.regions) == len(self.index) == n):
            raise ValueError("patch arrays have inconsistent lengths")
        if self.mode == DETECTION and n and (self.labels.min() < 0 or self.labels.max() > 1):
            raise ValueError("detection labels must lie in [0, 1]")
        if self.mode == SIZE and n and self.labels.min() < 0:
            raise ValueError("size labels must be non-negative")

    def __len__(self):
        return len(self.images)

    def take(self, idx) -> "PatchSet":
        return PatchSet(self.images[idx], self.labels[idx], self.centers[idx], self.regions[idx],
                        self.index[idx], self.mode, dict(self.meta))

    def with_labels(self, labels: np.ndarray, mode: str) -> "PatchSet":
        return PatchSet(self.images, np.asarray(labels, dtype=float), self.centers, self.regions,
                        self.index, mode, dict(self.meta))

    @staticmethod
    def concat(sets: Sequence["PatchSet"]) -> "PatchSet":
        if not sets:
            raise ValueError("nothing to concatenate")
        return PatchSet(np.concatenate([s.images for s in sets]),
                        np.concatenate([s.labels for s in sets]),
                        np.concatenate([s.centers for s in sets]),
                        np.concatenate([s.regions for s in sets]),
                        np.concatenate([s.index for s in sets]), sets[0].mode,
                        dict(sets[0].meta))

    def save(self, path: str) -> None:
        """Tensor container at ``path`` plus a ``<path>.csv`` label table."""
        write_tensors({"images": self.images, "labels": self.labels, "centers": self.centers,
                       "regions": self.regions, "index": self.index}, path,
                      {"mode": self.mode, **self.meta})
        with open(path + ".csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "region", "row", "col", "x", "y", "label"])
            for k in range(len(self)):
                w.writerow([k, int(self.regions[k]), int(self.index[k, 0]), int(self.index[k, 1]),
                            f"{self.centers[k, 0]:.3f}", f"{self.centers[k, 1]:.3f}",
                            f"{self.labels[k]:.6f}"])

    @classmethod
    def load(cls, path: str) -> "PatchSet":
        t, meta = read_tensors(path)
        mode = meta.pop("mode", DETECTION)
        return cls(t["images"], t["labels"], t["centers"], t["regions"], t["index"], mode, meta)


def render_reference(nests: Iterable[NestRecord], grid: GeoGrid, mode: str = DETECTION) -> Image:
    """Discs of the nest areas: 1 inside (detection) or the area (size), 0 elsewhere.

    Overlapping discs keep the larger value.
    """
    out = np.zeros(grid.shape)
    x, y = grid.mesh()
    for n in nests:
        if not grid.contains(*n.center_xy):
            raise ValueError(f"nest {n.id} at {n.center_xy} lies outside the grid")
        radius = np.sqrt(n.area / np.pi)
        inside = (x - n.center_xy[0]) ** 2 + (y - n.center_xy[1]) ** 2 <= radius ** 2
        value = 1.0 if mode == DETECTION else n.area
        out[inside] = np.maximum(out[inside], value)
    return Image(grid.with_depths([0.0]), out)


def tile_origins(n: int, tile: int, stride: int) -> np.ndarray:
    if n < tile:
        raise ValueError(f"grid of {n} px is smaller than one {tile} px tile")
    return stride * np.arange((n - tile) // stride + 1)


def _window(grid: GeoGrid, tiles: TileConfig):
    tile, stride, central = tiles.pixels(grid.spacing)
    return tile, stride, central, tile_origins(grid.ny, tile, stride), tile_origins(grid.nx, tile, stride)


def tile_labels(reference: Image, tiles: TileConfig = TileConfig()) -> np.ndarray:
    """Mean of ``reference`` over each window's central square, in (row, col) order."""
    tile, _, central, rows, cols = _window(reference.grid, tiles)
    c0 = (tile - central) // 2
    ref = reference.samples
    return np.array([ref[r + c0:r + c0 + central, c + c0:c + c0 + central].mean()
                     for r in rows for c in cols])


def tile_patches(stack, reference: Image | None, tiles: TileConfig = TileConfig(),
                 region: int = 0, mode: str = DETECTION) -> PatchSet:
    """Slide a square window over ``stack`` and label each window.

    ``stack`` is a TomographicStack (magnitudes are taken) or a pair
    (real array (depth, ny, nx), grid). Labels come from :func:`tile_labels`
    and are zero without a reference.
    """
    if isinstance(stack, TomographicStack):
        grid = stack.grid
        cube = np.abs(stack.to_array()).astype(np.float32)
    else:
        cube, grid = stack
        cube = np.asarray(cube, dtype=np.float32)
    if reference is not None and reference.samples.shape != grid.shape:
        raise ValueError("stack and reference grids differ")
    tile, stride, central, rows, cols = _window(grid, tiles)
    hwc = np.moveaxis(cube, 0, -1)
    images = np.stack([hwc[r:r + tile, c:c + tile] for r in rows for c in cols])
    ii, jj = np.meshgrid(np.arange(len(rows)), np.arange(len(cols)), indexing="ij")
    index = np.column_stack([ii.ravel(), jj.ravel()])
    centers = np.array([tile_center(grid, i, j, tiles) for i, j in index], dtype=float)
    labels = np.zeros(len(images)) if reference is None else tile_labels(reference, tiles)
    return PatchSet(images, labels, centers, np.full(len(images), region, dtype=np.int64), index,
                    mode, {"tile_px": tile, "stride_px": stride, "central_px": central,
                           "spacing": grid.spacing, "grid_shape": [len(rows), len(cols)]})


def tile_center(grid: GeoGrid, row: int, col: int, tiles: TileConfig = TileConfig()) -> tuple[float, float]:
    """World centre of tile (row, col); the inverse of the tiling lattice."""
    tile, stride, _ = tiles.pixels(grid.spacing)
    return (grid.origin_xy[0] + grid.spacing * (col * stride + tile // 2),
            grid.origin_xy[1] + grid.spacing * (row * stride + tile // 2))


def split_regions(patchsets, validation_region: int) -> tuple[PatchSet, PatchSet]:
    """Hold out every patch from ``validation_region``."""
    ps = PatchSet.concat(list(patchsets)) if not isinstance(patchsets, PatchSet) else patchsets
    regions = np.unique(ps.regions)
    if len(regions) < 2:
        raise ValueError("need at least two regions to split")
    if validation_region not in regions:
        raise ValueError(f"unknown region {validation_region}; have {regions.tolist()}")
    val = ps.regions == validation_region
    return ps.take(np.flatnonzero(~val)), ps.take(np.flatnonzero(val))


def count_positive(patchset: PatchSet, threshold: float = 0.5) -> int:
    return int((patchset.labels >= threshold).sum())


# ---------------------------------------------------------------------------
# augmentation


@dataclass(frozen=True)
class AugmentPolicy:
    flips: bool = True
    rotations: bool = True
    gain_range: tuple[float, float] = (0.8, 1.25)
    copies: int = 8


def hflip(patch: np.ndarray) -> np.ndarray:
    return patch[:, ::-1]


def vflip(patch: np.ndarray) -> np.ndarray:
    return patch[::-1]


def rot90(patch: np.ndarray, k: int = 1) -> np.ndarray:
    return np.rot90(patch, k, axes=(0, 1))


def brightness(patch: np.ndarray, gain: float) -> np.ndarray:
    return patch * gain


def augment(patch: np.ndarray, rng: np.random.Generator,
            policy: AugmentPolicy = AugmentPolicy()) -> list[np.ndarray]:
    """``policy.copies`` label-preserving variants of an (h, w, c) patch."""
    out = []
    for _ in range(policy.copies):
        p = patch
        if policy.flips:
            if rng.uniform() < 0.5:
                p = hflip(p)
            if rng.uniform() < 0.5:
                p = vflip(p)
        if policy.rotations:
            p = rot90(p, int(rng.integers(0, 4)))
        lo, hi = policy.gain_range
        if hi > lo:
            # log-uniform so g and 1/g are equally likely
            p = brightness(p, float(np.exp(rng.uniform(np.log(lo), np.log(hi)))))
        out.append(np.ascontiguousarray(p))
    return out


def augment_positives(ps: PatchSet, rng: np.random.Generator, policy: AugmentPolicy = AugmentPolicy(),
                      threshold: float = 0.5, mask: np.ndarray | None = None) -> PatchSet:
    """Append augmented copies of the positive patches.

    Positives are labels at or above ``threshold`` unless ``mask`` selects
    them explicitly (e.g. detection positives when augmenting a size set).
    """
    pos = np.flatnonzero(ps.labels >= threshold if mask is None else mask)
    if len(pos) == 0 or policy.copies == 0:
        return ps
    imgs, idx = [], []
    for k in pos:
        for p in augment(ps.images[k], rng, policy):
            imgs.append(p)
            idx.append(k)
    extra = ps.take(np.asarray(idx))
    extra.images = np.stack(imgs).astype(ps.images.dtype)
    return PatchSet.concat([ps, extra])
