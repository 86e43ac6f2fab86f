"""Grids, raster containers, seeded randomness and the on-disk raster format.

Coordinates are local ENU metres. Depths are positive down from the
surface (z = 0); scene positions use z up, so a point at depth d sits at
z = -d.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

RASTER_VERSION = "tomosar-raster/1"
DEFAULT_SPACING = 0.2
# surface plus seven subsurface layers at 0.3 m steps down to 2.1 m
DEFAULT_DEPTHS = tuple(round(0.3 * k, 2) for k in range(8))


class RasterError(Exception):
    """Malformed, truncated or non-finite raster data."""


@dataclass(frozen=True)
class GeoGrid:
    """Regular xy grid plus the list of depths it is sampled at.

    ``origin_xy`` is the world position of pixel (0, 0). Pixel (i, j) is
    row i (y) and column j (x).
    """

    origin_xy: tuple[float, float] = (0.0, 0.0)
    spacing: float = DEFAULT_SPACING
    nx: int = 1
    ny: int = 1
    depths: tuple[float, ...] = (0.0,)

    def __post_init__(self):
        object.__setattr__(self, "origin_xy", (float(self.origin_xy[0]), float(self.origin_xy[1])))
        object.__setattr__(self, "depths", tuple(float(d) for d in self.depths))
        if not self.spacing > 0:
            raise ValueError(f"spacing must be positive, got {self.spacing}")
        if self.nx < 1 or self.ny < 1:
            raise ValueError(f"grid must have at least one pixel, got {self.nx}x{self.ny}")
        if len(self.depths) == 0:
            raise ValueError("grid needs at least one depth")
        if any(b <= a for a, b in zip(self.depths, self.depths[1:])):
            raise ValueError(f"depths must be strictly increasing: {self.depths}")

    @classmethod
    def covering(cls, x0: float, y0: float, width: float, height: float,
                 spacing: float = DEFAULT_SPACING, depths: Sequence[float] = (0.0,)) -> "GeoGrid":
        """Grid of ``round(width / spacing)`` columns starting at (x0, y0)."""
        nx = int(round(width / spacing))
        ny = int(round(height / spacing))
        return cls((x0, y0), spacing, nx, ny, tuple(depths))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    def with_depths(self, depths: Sequence[float]) -> "GeoGrid":
        return GeoGrid(self.origin_xy, self.spacing, self.nx, self.ny, tuple(depths))

    def x_coords(self) -> np.ndarray:
        return self.origin_xy[0] + self.spacing * np.arange(self.nx)

    def y_coords(self) -> np.ndarray:
        return self.origin_xy[1] + self.spacing * np.arange(self.ny)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """World (x, y) arrays of shape (ny, nx)."""
        return np.meshgrid(self.x_coords(), self.y_coords())

    def center(self) -> tuple[float, float]:
        return (self.origin_xy[0] + 0.5 * self.spacing * (self.nx - 1),
                self.origin_xy[1] + 0.5 * self.spacing * (self.ny - 1))

    def contains(self, x: float, y: float) -> bool:
        col, row = world_to_pixel(self, (x, y))
        return -0.5 <= col <= self.nx - 0.5 and -0.5 <= row <= self.ny - 0.5

    def to_dict(self) -> dict:
        return {"origin": list(self.origin_xy), "spacing": self.spacing,
                "nx": self.nx, "ny": self.ny, "depths": list(self.depths)}

    @classmethod
    def from_dict(cls, d: dict) -> "GeoGrid":
        return cls(tuple(d["origin"]), float(d["spacing"]), int(d["nx"]), int(d["ny"]),
                   tuple(d["depths"]))


def world_to_pixel(grid: GeoGrid, xy) -> tuple:
    """Fractional (col, row) of world point(s) ``xy``. No clamping."""
    x, y = xy
    return ((np.asarray(x, dtype=float) - grid.origin_xy[0]) / grid.spacing,
            (np.asarray(y, dtype=float) - grid.origin_xy[1]) / grid.spacing)


def pixel_to_world(grid: GeoGrid, colrow) -> tuple:
    col, row = colrow
    return (grid.origin_xy[0] + np.asarray(col, dtype=float) * grid.spacing,
            grid.origin_xy[1] + np.asarray(row, dtype=float) * grid.spacing)


@dataclass
class Image:
    """Single-depth raster. ``samples`` has shape (ny, nx), real or complex.

    ``valid`` marks pixels that carry data; pixels no pulse illuminated are
    False.
    """

    grid: GeoGrid
    samples: np.ndarray
    valid: np.ndarray | None = None

    def __post_init__(self):
        self.samples = np.asarray(self.samples)
        if self.samples.shape != self.grid.shape:
            raise ValueError(f"samples shape {self.samples.shape} != grid shape {self.grid.shape}")
        if self.valid is None:
            self.valid = np.ones(self.grid.shape, dtype=bool)
        else:
            self.valid = np.asarray(self.valid, dtype=bool)

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.samples)

    @property
    def depth(self) -> float:
        return self.grid.depths[0]


# The two names the rest of the package talks about.
RealImage = Image
ComplexImage = Image


@dataclass
class TomographicStack:
    """One image per depth in ``grid.depths``, all on the same xy grid."""

    grid: GeoGrid
    layers: list[Image] = field(default_factory=list)

    def __post_init__(self):
        if len(self.layers) != len(self.grid.depths):
            raise ValueError(
                f"stack has {len(self.layers)} layers for {len(self.grid.depths)} depths")
        for layer in self.layers:
            if layer.samples.shape != self.grid.shape:
                raise ValueError("all layers must share the stack grid")

    @classmethod
    def from_array(cls, grid: GeoGrid, cube: np.ndarray, valid: np.ndarray | None = None):
        """Build from a (depth, ny, nx) array."""
        cube = np.asarray(cube)
        layers = []
        for k, d in enumerate(grid.depths):
            v = None if valid is None else valid[k]
            layers.append(Image(grid.with_depths([d]), cube[k], v))
        return cls(grid, layers)

    def to_array(self) -> np.ndarray:
        return np.stack([layer.samples for layer in self.layers])

    def valid_mask(self) -> np.ndarray:
        return np.stack([layer.valid for layer in self.layers])

    def magnitude(self) -> "TomographicStack":
        return TomographicStack.from_array(self.grid, np.abs(self.to_array()), self.valid_mask())


def make_rng(seed: int) -> np.random.Generator:
    """Seeded generator used for all randomness in the package.

    Philox-4x64 is counter based, so a given seed yields the same stream on
    every platform and numpy build.
    """
    return np.random.Generator(np.random.Philox(int(seed) & 0xFFFFFFFFFFFFFFFF))


def child_rng(rng: np.random.Generator, n: int) -> list[np.random.Generator]:
    """``n`` independent generators derived from ``rng``."""
    seeds = rng.integers(0, 2**63 - 1, size=n, dtype=np.int64)
    return [make_rng(int(s)) for s in seeds]


# ---------------------------------------------------------------------------
# raster I/O


def _header_path(path: str) -> str:
    return path + ".json" if not path.endswith(".json") else path


def _payload_path(path: str) -> str:
    base = path[:-5] if path.endswith(".json") else path
    return base + ".bin"


def write_raster(obj: Union[Image, TomographicStack], path: str) -> None:
    """Write ``obj`` as ``<path>.json`` header plus ``<path>.bin`` payload.

    The payload is one row-major plane per depth, little endian, either
    float32 or complex64 (interleaved re/im float32).
    """
    parent = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(parent):
        raise FileNotFoundError(f"directory does not exist: {parent}")
    if isinstance(obj, TomographicStack):
        cube = obj.to_array()
        valid = obj.valid_mask()
        grid = obj.grid
        kind = "stack"
    else:
        cube = obj.samples[None]
        valid = obj.valid[None]
        grid = obj.grid
        kind = "image"
    complex_ = np.iscomplexobj(cube)
    data = cube.astype("<c8" if complex_ else "<f4")
    bad = ~np.isfinite(data)
    if bad.any():
        idx = [tuple(int(i) for i in t) for t in np.argwhere(bad)[:20]]
        raise RasterError(f"non-finite samples at (depth, row, col) {idx}"
                          + (" ..." if bad.sum() > 20 else ""))
    header = {
        "version": RASTER_VERSION,
        "kind": kind,
        "nx": grid.nx,
        "ny": grid.ny,
        "spacing": grid.spacing,
        "origin": list(grid.origin_xy),
        "depths": list(grid.depths),
        "dtype": "c64" if complex_ else "f32",
        "endianness": "little",
        "invalid": [[int(k), int(r), int(c)] for k, r, c in np.argwhere(~valid)]
        if (~valid).sum() <= 4096 else None,
    }
    if header["invalid"] is None:
        # large masks go into a second plane set instead of the header
        header["invalid_mask"] = True
        header.pop("invalid")
    with open(_payload_path(path), "wb") as fh:
        fh.write(data.tobytes(order="C"))
        if header.get("invalid_mask"):
            fh.write(np.packbits(~valid, axis=None).tobytes())
    with open(_header_path(path), "w", encoding="utf-8") as fh:
        json.dump(header, fh, indent=1, sort_keys=True)


def read_raster(path: str) -> Union[Image, TomographicStack]:
    """Inverse of :func:`write_raster`."""
    with open(_header_path(path), encoding="utf-8") as fh:
        header = json.load(fh)
    if header.get("version") != RASTER_VERSION:
        raise RasterError(f"unsupported raster version {header.get('version')!r}")
    dtype = {"f32": "<f4", "c64": "<c8"}.get(header.get("dtype"))
    if dtype is None:
        raise RasterError(f"unknown dtype {header.get('dtype')!r}")
    if header.get("endianness", "little") != "little":
        raise RasterError("only little-endian payloads are supported")
    grid = GeoGrid(tuple(header["origin"]), float(header["spacing"]), int(header["nx"]),
                   int(header["ny"]), tuple(header["depths"]))
    n_planes = len(grid.depths) if header["kind"] == "stack" else 1
    plane_bytes = grid.nx * grid.ny * np.dtype(dtype).itemsize
    with open(_payload_path(path), "rb") as fh:
        raw = fh.read()
    n_mask = 0
    if header.get("invalid_mask"):
        n_mask = (n_planes * grid.nx * grid.ny + 7) // 8
    if len(raw) != n_planes * plane_bytes + n_mask:
        if n_mask == 0 and len(raw) % plane_bytes == 0:
            raise RasterError(
                f"header lists {n_planes} depths but payload holds {len(raw) // plane_bytes} planes")
        raise RasterError(
            f"payload size {len(raw)} does not match header ({n_planes} x {plane_bytes} bytes)")
    cube = np.frombuffer(raw[: n_planes * plane_bytes], dtype=dtype).reshape(
        n_planes, grid.ny, grid.nx).copy()
    valid = np.ones(cube.shape, dtype=bool)
    if n_mask:
        bits = np.unpackbits(np.frombuffer(raw[n_planes * plane_bytes:], dtype=np.uint8))
        valid = ~bits[: cube.size].astype(bool).reshape(cube.shape)
    else:
        for k, r, c in header.get("invalid", []):
            valid[k, r, c] = False
    if header["kind"] == "stack":
        return TomographicStack.from_array(grid, cube, valid)
    return Image(grid, cube[0], valid[0])


TENSORS_VERSION = "tomosar-tensors/1"
_TENSOR_DTYPES = {"f32": "<f4", "f64": "<f8", "i64": "<i8", "c64": "<c8"}


def write_tensors(tensors: dict, path: str, meta: dict | None = None) -> None:
    """Named arrays as a ``<path>.json`` header plus a ``<path>.bin`` payload.

    Arrays are stored in the order given, each as a contiguous little-endian
    block. ``meta`` is any JSON-serialisable description kept in the header.
    """
    parent = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(parent):
        raise FileNotFoundError(f"directory does not exist: {parent}")
    entries, offset, blobs = [], 0, []
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        code = {"f": "f64" if arr.dtype.itemsize == 8 else "f32", "i": "i64", "u": "i64",
                "b": "i64", "c": "c64"}.get(arr.dtype.kind)
        if code is None:
            raise RasterError(f"tensor {name!r}: unsupported dtype {arr.dtype}")
        data = np.ascontiguousarray(arr.astype(_TENSOR_DTYPES[code]))
        if code != "i64" and not np.isfinite(data).all():
            raise RasterError(f"tensor {name!r} holds non-finite values")
        blob = data.tobytes()
        entries.append({"name": name, "dtype": code, "shape": list(arr.shape), "offset": offset,
                        "bytes": len(blob)})
        blobs.append(blob)
        offset += len(blob)
    with open(_payload_path(path), "wb") as fh:
        for b in blobs:
            fh.write(b)
    with open(_header_path(path), "w", encoding="utf-8") as fh:
        json.dump({"version": TENSORS_VERSION, "endianness": "little", "tensors": entries,
                   "meta": meta or {}}, fh, indent=1, sort_keys=True)


def read_tensors(path: str) -> tuple[dict, dict]:
    """Inverse of :func:`write_tensors`; returns (tensors, meta)."""
    with open(_header_path(path), encoding="utf-8") as fh:
        header = json.load(fh)
    if header.get("version") != TENSORS_VERSION:
        raise RasterError(f"unsupported tensor container version {header.get('version')!r}")
    with open(_payload_path(path), "rb") as fh:
        raw = fh.read()
    expected = sum(e["bytes"] for e in header["tensors"])
    if len(raw) != expected:
        raise RasterError(f"payload size {len(raw)} does not match header ({expected} bytes)")
    out = {}
    for e in header["tensors"]:
        dtype = _TENSOR_DTYPES.get(e["dtype"])
        if dtype is None:
            raise RasterError(f"unknown dtype {e['dtype']!r}")
        block = raw[e["offset"]:e["offset"] + e["bytes"]]
        out[e["name"]] = np.frombuffer(block, dtype=dtype).reshape(e["shape"]).copy()
    return out, header.get("meta", {})
