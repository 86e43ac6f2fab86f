"""Synthetic forest scenes with buried nest chambers, and flight trajectories."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .core import GeoGrid

C_LIGHT = 299792458.0

TAG_SOIL = 0
TAG_TREE = 1
TAG_POINT = 2  # hand-placed test scatterers


class PlacementError(RuntimeError):
    """Chambers could not be packed into the nest volume."""


@dataclass(frozen=True)
class RadarParams:
    """P-band channel of the drone radar."""

    center_frequency: float = 425e6
    bandwidth: float = 50e6
    azimuth_aperture_deg: float = 55.9
    elevation_aperture_deg: float = 69.3

    def __post_init__(self):
        if not 0 < self.bandwidth < self.center_frequency:
            raise ValueError("bandwidth must be positive and below the center frequency")

    @property
    def wavelength(self) -> float:
        return C_LIGHT / self.center_frequency

    @property
    def range_resolution(self) -> float:
        return C_LIGHT / (2.0 * self.bandwidth)


@dataclass(frozen=True)
class SoilModel:
    """Discrete soil: a jittered 3D lattice of equal-amplitude scatterers.

    ``jitter`` is the half-width of the uniform position perturbation as a
    fraction of ``lattice_spacing``.
    """

    relative_permittivity: float = 4.0
    mean_reflectivity: float = 1.0
    lattice_spacing: float = 0.25
    depth: float = 2.4
    jitter: float = 0.5
    loss_db_per_m: float = 0.0

    def __post_init__(self):
        if self.relative_permittivity < 1:
            raise ValueError("relative permittivity must be >= 1")
        if self.mean_reflectivity <= 0 or self.lattice_spacing <= 0:
            raise ValueError("soil amplitude and lattice spacing must be positive")

    @property
    def slowness(self) -> float:
        return math.sqrt(self.relative_permittivity)


@dataclass(frozen=True)
class TreeSpec:
    """Trees as vertical columns of point scatterers on a square grid.

    ``rows``/``cols`` of None fill the whole extent.
    """

    height: float = 10.0
    spacing: float = 2.5
    diameter: float = 0.25
    scatterer_step: float = 0.5
    amplitude: float = 10.0
    rows: int | None = None
    cols: int | None = None

    def __post_init__(self):
        if self.height <= 0 or self.spacing <= 0:
            raise ValueError("tree height and spacing must be positive")

    @property
    def scatterers_per_tree(self) -> int:
        return max(1, int(round(self.height / self.scatterer_step)))


@dataclass(frozen=True)
class NestSpec:
    chamber_count: int
    chamber_diameter: float
    depth_range: tuple[float, float]
    footprint_area: float
    center_xy: tuple[float, float] = (0.0, 0.0)

    @property
    def footprint_radius(self) -> float:
        return math.sqrt(self.footprint_area / math.pi)

    @classmethod
    def preset(cls, chambers: int, center_xy=(0.0, 0.0)) -> "NestSpec":
        count, diam, depth, area = NEST_PRESETS[chambers]
        return cls(count, diam, depth, area, tuple(center_xy))


# chamber count -> (count, diameter m, depth range m, footprint area m^2)
NEST_PRESETS = {
    100: (100, 0.22, (0.4, 1.5), 10.24),
    50: (50, 0.20, (0.3, 1.0), 6.25),
    20: (20, 0.18, (0.3, 0.6), 2.25),
    6: (6, 0.16, (0.2, 0.4), 0.64),
}


@dataclass(frozen=True)
class NestRecord:
    """Ground truth for one nest: surface centre and mound area."""

    id: int
    center_xy: tuple[float, float]
    area: float

    def __post_init__(self):
        if self.area <= 0:
            raise ValueError("nest area must be positive")


@dataclass
class Scene:
    """Point-scatterer scene.

    positions: (n, 3) metres, z up. amplitudes: (n,) complex. tags: (n,)
    component ids (TAG_SOIL, TAG_TREE, TAG_POINT).
    """

    positions: np.ndarray
    amplitudes: np.ndarray
    tags: np.ndarray
    extent: GeoGrid
    nests: list[NestRecord] = field(default_factory=list)
    chambers: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))  # x, y, z, radius

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        self.tags = np.asarray(self.tags, dtype=np.uint8).reshape(-1)
        if not (len(self.positions) == len(self.amplitudes) == len(self.tags)):
            raise ValueError("positions, amplitudes and tags must have equal length")

    def __len__(self):
        return len(self.positions)

    def subset(self, mask: np.ndarray) -> "Scene":
        return replace(self, positions=self.positions[mask], amplitudes=self.amplitudes[mask],
                       tags=self.tags[mask])

    def merged(self, other: "Scene") -> "Scene":
        return replace(self,
                       positions=np.vstack([self.positions, other.positions]),
                       amplitudes=np.concatenate([self.amplitudes, other.amplitudes]),
                       tags=np.concatenate([self.tags, other.tags]),
                       nests=self.nests + other.nests,
                       chambers=np.vstack([self.chambers, other.chambers]))

    def with_points(self, points: Sequence[Sequence[float]], amplitudes) -> "Scene":
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        amps = np.broadcast_to(np.asarray(amplitudes, dtype=complex), (len(pts),))
        return replace(self,
                       positions=np.vstack([self.positions, pts]),
                       amplitudes=np.concatenate([self.amplitudes, amps]),
                       tags=np.concatenate([self.tags, np.full(len(pts), TAG_POINT, np.uint8)]))

    def inside_extent(self) -> np.ndarray:
        g = self.extent
        x0, y0 = g.origin_xy
        x1 = x0 + g.spacing * g.nx
        y1 = y0 + g.spacing * g.ny
        p = self.positions
        return (p[:, 0] >= x0) & (p[:, 0] <= x1) & (p[:, 1] >= y0) & (p[:, 1] <= y1)

    def to_json(self, path: str, include_scatterers: bool = False, **meta) -> None:
        doc = {
            "extent": self.extent.to_dict(),
            "n_scatterers": len(self),
            "counts": {name: int((self.tags == t).sum())
                       for name, t in (("soil", TAG_SOIL), ("tree", TAG_TREE), ("point", TAG_POINT))},
            "nests": [asdict(n) for n in self.nests],
            "chambers": self.chambers.tolist(),
            **meta,
        }
        if include_scatterers:
            doc["scatterers"] = {
                "positions": self.positions.tolist(),
                "amplitude_re": self.amplitudes.real.tolist(),
                "amplitude_im": self.amplitudes.imag.tolist(),
                "tags": self.tags.tolist(),
            }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=1)


def empty_scene(extent: GeoGrid) -> Scene:
    return Scene(np.zeros((0, 3)), np.zeros(0, complex), np.zeros(0, np.uint8), extent)


def _extent_bounds(extent: GeoGrid):
    x0, y0 = extent.origin_xy
    return x0, y0, x0 + extent.spacing * extent.nx, y0 + extent.spacing * extent.ny


def tree_positions(tree_spec: TreeSpec, extent: GeoGrid) -> np.ndarray:
    """(n, 2) trunk positions on a grid centred in the extent."""
    x0, y0, x1, y1 = _extent_bounds(extent)
    cx, cy = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
    s = tree_spec.spacing
    if tree_spec.cols is None:
        nx_half = int(math.floor((0.5 * (x1 - x0)) / s + 1e-9))
        xs = cx + s * np.arange(-nx_half, nx_half + 1)
    else:
        xs = cx + s * (np.arange(tree_spec.cols) - 0.5 * (tree_spec.cols - 1))
    if tree_spec.rows is None:
        ny_half = int(math.floor((0.5 * (y1 - y0)) / s + 1e-9))
        ys = cy + s * np.arange(-ny_half, ny_half + 1)
    else:
        ys = cy + s * (np.arange(tree_spec.rows) - 0.5 * (tree_spec.rows - 1))
    xs = xs[(xs >= x0) & (xs <= x1)]
    ys = ys[(ys >= y0) & (ys <= y1)]
    gx, gy = np.meshgrid(xs, ys)
    return np.column_stack([gx.ravel(), gy.ravel()])


def build_forest(tree_spec: TreeSpec | None, soil: SoilModel | None, extent: GeoGrid,
                 rng: np.random.Generator) -> Scene:
    """Trees plus a volumetric soil lattice over ``extent``.

    Pass ``tree_spec=None`` (or rows=0) for bare soil and ``soil=None`` for
    trees only.
    """
    x0, y0, x1, y1 = _extent_bounds(extent)
    if x1 - x0 <= 0 or y1 - y0 <= 0:
        raise ValueError("empty extent")
    parts_pos, parts_amp, parts_tag = [], [], []

    if tree_spec is not None and tree_spec.rows != 0 and tree_spec.cols != 0:
        trunks = tree_positions(tree_spec, extent)
        if len(trunks) == 0:
            raise ValueError("extent too small for a single tree")
        n = tree_spec.scatterers_per_tree
        z = tree_spec.scatterer_step * np.arange(n)
        pos = np.column_stack([
            np.repeat(trunks[:, 0], n), np.repeat(trunks[:, 1], n), np.tile(z, len(trunks))])
        parts_pos.append(pos)
        parts_amp.append(np.full(len(pos), tree_spec.amplitude, dtype=complex))
        parts_tag.append(np.full(len(pos), TAG_TREE, np.uint8))

    if soil is not None:
        s = soil.lattice_spacing
        xs = np.arange(x0 + 0.5 * s, x1, s)
        ys = np.arange(y0 + 0.5 * s, y1, s)
        zs = -(np.arange(0.5 * s, soil.depth, s))
        gz, gy, gx = np.meshgrid(zs, ys, xs, indexing="ij")
        pos = np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()])
        if soil.jitter > 0:
            pos += rng.uniform(-soil.jitter * s, soil.jitter * s, size=pos.shape)
            pos[:, 2] = np.minimum(pos[:, 2], -1e-6)
            pos[:, 0] = np.clip(pos[:, 0], x0, x1)
            pos[:, 1] = np.clip(pos[:, 1], y0, y1)
        parts_pos.append(pos)
        parts_amp.append(np.full(len(pos), soil.mean_reflectivity, dtype=complex))
        parts_tag.append(np.full(len(pos), TAG_SOIL, np.uint8))

    if not parts_pos:
        return empty_scene(extent)
    return Scene(np.vstack(parts_pos), np.concatenate(parts_amp), np.concatenate(parts_tag), extent)


def place_chambers(nest: NestSpec, rng: np.random.Generator, max_tries: int = 10_000) -> np.ndarray:
    """Chamber centres (n, 3), uniform over the footprint disc and depth range."""
    n = nest.chamber_count
    if n == 0:
        return np.zeros((0, 3))
    r_max = nest.footprint_radius
    d0, d1 = nest.depth_range
    cx, cy = nest.center_xy
    min_sep2 = nest.chamber_diameter ** 2
    centers = np.empty((n, 3))
    placed = 0
    for _ in range(max_tries):
        r = r_max * math.sqrt(rng.uniform())
        phi = rng.uniform(0.0, 2.0 * math.pi)
        cand = np.array([cx + r * math.cos(phi), cy + r * math.sin(phi), -rng.uniform(d0, d1)])
        if placed and (((centers[:placed] - cand) ** 2).sum(axis=1) < min_sep2).any():
            continue
        centers[placed] = cand
        placed += 1
        if placed == n:
            return centers
    raise PlacementError(f"placed only {placed} of {n} chambers after {max_tries} tries")


def carve_nest(scene: Scene, nest: NestSpec, rng: np.random.Generator, nest_id: int | None = None) -> Scene:
    """Add an air-filled nest: soil scatterers inside every chamber are removed."""
    if nest.chamber_count == 0:
        return scene
    if not (scene.extent.contains(nest.center_xy[0] - nest.footprint_radius, nest.center_xy[1])
            and scene.extent.contains(nest.center_xy[0] + nest.footprint_radius, nest.center_xy[1])
            and scene.extent.contains(nest.center_xy[0], nest.center_xy[1] - nest.footprint_radius)
            and scene.extent.contains(nest.center_xy[0], nest.center_xy[1] + nest.footprint_radius)):
        raise ValueError(f"nest footprint at {nest.center_xy} leaves the scene extent")
    centers = place_chambers(nest, rng)
    radius = 0.5 * nest.chamber_diameter
    keep = np.ones(len(scene), dtype=bool)
    soil_idx = np.flatnonzero(scene.tags == TAG_SOIL)
    soil_pos = scene.positions[soil_idx]
    # prefilter to the nest cylinder so large scenes stay cheap
    near = ((soil_pos[:, 0] - nest.center_xy[0]) ** 2 + (soil_pos[:, 1] - nest.center_xy[1]) ** 2
            <= (nest.footprint_radius + radius) ** 2)
    cand_idx = soil_idx[near]
    cand = scene.positions[cand_idx]
    for c in centers:
        inside = ((cand - c) ** 2).sum(axis=1) < radius ** 2
        keep[cand_idx[inside]] = False
    nid = len(scene.nests) + 1 if nest_id is None else nest_id
    record = NestRecord(nid, (float(nest.center_xy[0]), float(nest.center_xy[1])), nest.footprint_area)
    out = scene.subset(keep)
    out.nests = scene.nests + [record]
    out.chambers = np.vstack([scene.chambers, np.column_stack([centers, np.full(len(centers), radius)])])
    return out


def write_nest_csv(nests: Sequence[NestRecord], path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "x", "y", "area_m2"])
        for n in nests:
            w.writerow([n.id, f"{n.center_xy[0]:.4f}", f"{n.center_xy[1]:.4f}", f"{n.area:.4f}"])


def read_nest_csv(path: str) -> list[NestRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [NestRecord(int(r["id"]), (float(r["x"]), float(r["y"])), float(r["area_m2"]))
                for r in csv.DictReader(fh)]


# ---------------------------------------------------------------------------
# trajectories


@dataclass
class Trajectory:
    """Platform positions (n, 3) with headings (rad) and the antenna aim point."""

    positions: np.ndarray
    headings: np.ndarray
    look_at: tuple[float, float, float] = (0.0, 0.0, 0.0)
    arc_step: float = float("nan")

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        self.headings = np.asarray(self.headings, dtype=float).reshape(-1)
        self.look_at = tuple(float(v) for v in self.look_at)
        if len(self.headings) != len(self.positions):
            raise ValueError("one heading per pose is required")
        if (self.positions[:, 2] <= 0).any():
            raise ValueError("every pose must be above the surface")

    def __len__(self):
        return len(self.positions)

    def spacings(self) -> np.ndarray:
        return np.linalg.norm(np.diff(self.positions, axis=0), axis=1)

    def subsample(self, step: int) -> "Trajectory":
        return Trajectory(self.positions[::step], self.headings[::step], self.look_at,
                          self.arc_step * step)

    def to_dict(self) -> dict:
        return {"positions": self.positions.tolist(), "headings": self.headings.tolist(),
                "look_at": list(self.look_at), "arc_step": self.arc_step}

    @classmethod
    def from_dict(cls, d: dict) -> "Trajectory":
        return cls(np.asarray(d["positions"]), np.asarray(d["headings"]), tuple(d["look_at"]),
                   float(d["arc_step"]))


def helical_trajectory(radius_start: float, radius_end: float, alt_start: float, alt_end: float,
                       turns: float, arc_step: float, center=(0.0, 0.0), start_angle: float = 0.0,
                       look_at=None) -> Trajectory:
    """Conical helix; radius and altitude vary linearly with turn angle.

    The angular step is uniform and chosen from the largest local speed so
    that no chord exceeds ``arc_step``.
    """
    if arc_step <= 0:
        raise ValueError("arc_step must be positive")
    if turns < 1:
        raise ValueError("need at least one turn")
    if radius_start <= 0 or radius_end <= 0:
        raise ValueError("radii must be positive")
    total = 2.0 * math.pi * turns
    dr = (radius_end - radius_start) / total
    dz = (alt_end - alt_start) / total
    speed = math.sqrt(max(radius_start, radius_end) ** 2 + dr ** 2 + dz ** 2)
    n_steps = int(math.ceil(total * speed / arc_step))
    theta = np.linspace(0.0, total, n_steps + 1)
    r = radius_start + dr * theta
    phi = start_angle + theta
    cx, cy = center
    pos = np.column_stack([cx + r * np.cos(phi), cy + r * np.sin(phi), alt_start + dz * theta])
    # direction of travel: d/dtheta of the position
    vx = dr * np.cos(phi) - r * np.sin(phi)
    vy = dr * np.sin(phi) + r * np.cos(phi)
    if look_at is None:
        look_at = (cx, cy, 0.0)
    return Trajectory(pos, np.arctan2(vy, vx), look_at, arc_step)


def linear_trajectory(start, end, step: float, look_at=None) -> Trajectory:
    """Evenly spaced poses from ``start`` to ``end`` inclusive."""
    if step <= 0:
        raise ValueError("step must be positive")
    a = np.asarray(start, dtype=float)
    b = np.asarray(end, dtype=float)
    length = float(np.linalg.norm(b - a))
    if length == 0:
        raise ValueError("zero-length segment")
    n = int(math.ceil(length / step - 1e-12)) + 1
    t = np.linspace(0.0, 1.0, n)
    pos = a + t[:, None] * (b - a)
    heading = math.atan2(b[1] - a[1], b[0] - a[0])
    if look_at is None:
        mid = 0.5 * (a + b)
        look_at = (mid[0], mid[1], 0.0)
    return Trajectory(pos, np.full(n, heading), look_at, step)
