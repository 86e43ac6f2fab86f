"""Time-domain back-projection of echo sets onto depth layers."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .core import DEFAULT_DEPTHS, GeoGrid, Image, TomographicStack
from ._kernels import fast_sincos, table_lookup
from .echosim import EchoSet, _beam_frame, _equivalent_range, _tables
from .scene import SoilModel


@dataclass(frozen=True)
class FocusConfig:
    """Output grid and processing switches.

    ``gain_floor``: pulses whose one-way antenna gain toward a pixel is
    below this are not used for that pixel. With radiometric correction on
    they would otherwise be weighted by up to 1/G^2.
    """

    grid: GeoGrid = field(default_factory=lambda: GeoGrid(depths=DEFAULT_DEPTHS))
    interpolation: str = "linear"
    radiometric: bool = True
    soil: SoilModel = field(default_factory=SoilModel)
    gain_floor: float = 0.1

    def __post_init__(self):
        if self.interpolation not in ("nearest", "linear"):
            raise ValueError(f"unknown interpolation {self.interpolation!r}")


@nb.njit(cache=True)
def _frames(pose, headings, look_at):
    n = pose.shape[0]
    out = np.empty((n, 9))
    for p in range(n):
        f = _beam_frame(pose[p, 0], pose[p, 1], pose[p, 2], look_at[0], look_at[1], look_at[2],
                        headings[p])
        for k in range(9):
            out[p, k] = f[k]
    return out


@nb.njit(cache=True, parallel=True, fastmath=True)
def _bp_kernel(samples, pose, frames, xs, ys, z, r0, dr, k4, slowness, az_tab, az_t, el_tab,
               el_t, radiometric, gain_floor, linear):
    ny = ys.shape[0]
    nx = xs.shape[0]
    npulse, nbins = samples.shape
    inv_dr = 1.0 / dr
    acc = np.zeros((ny, nx), dtype=np.complex128)
    used = np.zeros((ny, nx), dtype=np.int64)
    for i in nb.prange(ny):
        qy = ys[i]
        row_re = np.zeros(nx)
        row_im = np.zeros(nx)
        row_n = np.zeros(nx, dtype=np.int64)
        for p in range(npulse):
            px, py, pz = pose[p, 0], pose[p, 1], pose[p, 2]
            bx, by, bz = frames[p, 0], frames[p, 1], frames[p, 2]
            hx, hy, hz = frames[p, 3], frames[p, 4], frames[p, 5]
            vx, vy, vz = frames[p, 6], frames[p, 7], frames[p, 8]
            dy = qy - py
            dz = z - pz
            # buried fraction of the straight ray depends only on heights
            stretch = 1.0 + (slowness - 1.0) * (-z) / (pz - z) if z < 0.0 else 1.0
            cb = dy * by + dz * bz
            ch = dy * hy + dz * hz
            cv = dy * vy + dz * vz
            ryz = dy * dy + dz * dz
            for j in range(nx):
                dx = xs[j] - px
                db = dx * bx + cb
                if db <= 0.0:
                    continue
                inv = 1.0 / db
                g = table_lookup((dx * hx + ch) * inv, az_tab, az_t)
                if g == 0.0:
                    continue
                g *= table_lookup((dx * vx + cv) * inv, el_tab, el_t)
                if g < gain_floor or g == 0.0:
                    continue
                r2 = dx * dx + ryz
                r = math.sqrt(r2)
                req = r * stretch
                x = (req - r0) * inv_dr
                if linear:
                    b = int(x)
                    if x < 0.0 or b + 1 >= nbins:
                        continue
                    t = x - b
                    s0 = samples[p, b]
                    s1 = samples[p, b + 1]
                    sre = s0.real + t * (s1.real - s0.real)
                    sim = s0.imag + t * (s1.imag - s0.imag)
                else:
                    b = int(x + 0.5)
                    if x < -0.5 or b >= nbins:
                        continue
                    sre = samples[p, b].real
                    sim = samples[p, b].imag
                sn, cs = fast_sincos(k4 * req)
                w = r2 / (g * g) if radiometric else 1.0
                row_re[j] += w * (sre * cs - sim * sn)
                row_im[j] += w * (sre * sn + sim * cs)
                row_n[j] += 1
        for j in range(nx):
            acc[i, j] = complex(row_re[j], row_im[j])
            used[i, j] = row_n[j]
    return acc, used


def backproject_layer(echoes: EchoSet, grid: GeoGrid, depth: float, config: FocusConfig) -> Image:
    """Focus ``echoes`` onto the xy ``grid`` at ``depth`` metres below the surface.

    Each pixel is the mean over the pulses that illuminate it of the
    interpolated, phase-compensated (and optionally radiometrically
    weighted) sample. Pixels no pulse illuminates come back with
    ``valid = False`` and value 0.
    """
    radar = echoes.radar
    soil = config.soil
    slowness = 1.0 if soil is None else soil.slowness
    pose = np.ascontiguousarray(echoes.trajectory.positions, dtype=np.float64)
    frames = _frames(pose, np.ascontiguousarray(echoes.trajectory.headings, dtype=np.float64),
                     np.asarray(echoes.trajectory.look_at, dtype=np.float64))
    acc, used = _bp_kernel(
        np.ascontiguousarray(echoes.samples, dtype=np.complex128), pose, frames,
        grid.x_coords(), grid.y_coords(), -float(depth), echoes.bins.r0, echoes.bins.dr,
        4.0 * math.pi / radar.wavelength, slowness, *_tables(radar),
        bool(config.radiometric), float(config.gain_floor), config.interpolation == "linear")
    valid = used > 0
    out = np.zeros_like(acc)
    out[valid] = acc[valid] / used[valid]
    return Image(grid.with_depths([depth]), out, valid)


def backproject_stack(echoes: EchoSet, config: FocusConfig) -> TomographicStack:
    """One layer per depth of ``config.grid``, each phase-matched at its own depth."""
    layers = [backproject_layer(echoes, config.grid, d, config) for d in config.grid.depths]
    return TomographicStack(config.grid, layers)


def magnitude_db(image: Image, floor_db: float = -60.0, ref: float | None = None) -> Image:
    """20 log10(|z| / ref) clamped below at ``floor_db``; ``ref`` defaults to the max."""
    if floor_db >= 0:
        raise ValueError("floor_db must be negative")
    mag = np.abs(image.samples)
    if ref is None:
        ref = float(mag[image.valid].max()) if image.valid.any() else 0.0
    if ref <= 0:
        raise ValueError("cannot reference an all-zero image")
    with np.errstate(divide="ignore"):
        db = 20.0 * np.log10(mag / ref)
    db = np.maximum(db, floor_db)
    return Image(image.grid, db, image.valid)


def set_threads() -> None:
    """Honour TOMOSAR_THREADS for the numba kernels."""
    n = os.environ.get("TOMOSAR_THREADS")
    if n:
        nb.set_num_threads(max(1, min(int(n), nb.config.NUMBA_NUM_THREADS)))
