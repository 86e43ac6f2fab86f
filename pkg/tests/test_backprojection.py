import math

import numpy as np
import pytest

from tomosar.backprojection import FocusConfig, backproject_layer, backproject_stack, magnitude_db
from tomosar.core import DEFAULT_DEPTHS, GeoGrid, Image, make_rng
from tomosar.echosim import EchoSet, range_bins_for, simulate_echoes
from tomosar.scene import (RadarParams, SoilModel, TreeSpec, build_forest, empty_scene,
                           helical_trajectory)

RADAR = RadarParams()
SOIL = SoilModel()
EXTENT = GeoGrid.covering(-4.0, -4.0, 8.0, 8.0, spacing=0.05)


@pytest.fixture(scope="module")
def circle():
    return helical_trajectory(25, 25, 30, 30, 1, RADAR.wavelength / 8)


def _echoes(points, traj, amps=1.0, soil=SOIL):
    scene = empty_scene(EXTENT).with_points(points, amps)
    bins = range_bins_for(EXTENT, traj, RADAR, soil, heights=(0, 1))
    return simulate_echoes(scene, traj, RADAR, soil, bins)


def _grid(n=41, s=0.2, depths=(0.0,)):
    h = s * (n - 1) / 2
    return GeoGrid((-h, -h), s, n, n, depths)


def test_default_focus_grid_has_eight_layers():
    assert len(FocusConfig().grid.depths) == 8
    assert FocusConfig().grid.depths == DEFAULT_DEPTHS


def test_unknown_interpolation_is_rejected():
    with pytest.raises(ValueError):
        FocusConfig(interpolation="cubic")


def test_point_focuses_on_its_pixel_with_unit_amplitude(circle):
    grid = _grid()
    e = _echoes([(0.4, -0.6, 0.0)], circle)
    img = backproject_layer(e, grid, 0.0, FocusConfig(grid, soil=SOIL))
    mag = np.abs(img.samples)
    r, c = np.unravel_index(np.argmax(mag), mag.shape)
    assert (grid.x_coords()[c], grid.y_coords()[r]) == pytest.approx((0.4, -0.6), abs=1e-9)
    assert mag[r, c] == pytest.approx(1.0, rel=0.05)


@pytest.mark.parametrize("radius,alt", [(20, 25), (40, 45)])
def test_radiometric_correction_removes_range_dependence(radius, alt):
    traj = helical_trajectory(radius, radius, alt, alt, 1, RADAR.wavelength / 8)
    grid = _grid(21)
    e = _echoes([(0.0, 0.0, 0.0)], traj, amps=2.5)
    img = backproject_layer(e, grid, 0.0, FocusConfig(grid, soil=SOIL))
    assert np.abs(img.samples).max() == pytest.approx(2.5, rel=0.05)


def test_zero_echoes_give_zero_image(circle):
    grid = _grid(11)
    e = _echoes([(0.0, 0.0, 0.0)], circle)
    e0 = EchoSet(e.radar, e.bins, e.trajectory, np.zeros_like(e.samples))
    img = backproject_layer(e0, grid, 0.0, FocusConfig(grid, soil=SOIL))
    assert not img.samples.any() and img.valid.all()


def test_unilluminated_pixels_are_flagged_invalid():
    traj = helical_trajectory(25, 25, 30, 30, 1, 1.0)
    far = GeoGrid((300.0, 300.0), 1.0, 4, 4)
    e = _echoes([(0.0, 0.0, 0.0)], traj)
    img = backproject_layer(e, far, 0.0, FocusConfig(far, soil=SOIL))
    assert not img.valid.any() and not img.samples.any()


def test_buried_point_peaks_in_its_layer(circle):
    grid = _grid(11, depths=DEFAULT_DEPTHS)
    e = _echoes([(0.0, 0.0, -0.6)], circle)
    stack = backproject_stack(e, FocusConfig(grid, soil=SOIL))
    centre = [abs(layer.samples[5, 5]) for layer in stack.layers]
    assert grid.depths[int(np.argmax(centre))] == pytest.approx(0.6)


def test_backprojection_is_linear(circle):
    grid = _grid(15)
    cfg = FocusConfig(grid, soil=SOIL)
    a = _echoes([(0.2, 0.2, 0.0)], circle)
    b = _echoes([(-0.8, 0.4, -0.3)], circle, amps=0.5 - 0.2j)
    ab = EchoSet(a.radar, a.bins, a.trajectory, a.samples + b.samples)
    ia, ib, iab = (backproject_layer(x, grid, 0.3, cfg).samples for x in (a, b, ab))
    assert np.abs(iab - ia - ib).max() <= 1e-9 * np.abs(iab).max()


def test_focusing_gain_grows_with_pulse_count(circle):
    # noise sets the background: it adds incoherently while the target adds coherently
    grid = _grid(31)
    scene = empty_scene(EXTENT).with_points([(0.0, 0.0, 0.0)], 1.0)
    bins = range_bins_for(EXTENT, circle, RADAR, SOIL, heights=(0, 1))
    e = simulate_echoes(scene, circle, RADAR, SOIL, bins, noise_snr_db=-10.0, rng=make_rng(3))
    ratios = []
    for step in (16, 4, 1):
        img = backproject_layer(e.select(slice(None, None, step)), grid, 0.0,
                                FocusConfig(grid, soil=SOIL))
        mag = np.abs(img.samples)
        ratios.append(mag[15, 15] / np.median(mag))
    assert ratios[0] < ratios[1] < ratios[2]


def test_nearest_interpolation_also_focuses(circle):
    grid = _grid(21)
    e = _echoes([(0.0, 0.0, 0.0)], circle)
    img = backproject_layer(e, grid, 0.0, FocusConfig(grid, "nearest", soil=SOIL))
    mag = np.abs(img.samples)
    assert np.unravel_index(np.argmax(mag), mag.shape) == (10, 10)


def test_output_is_bitwise_repeatable(circle):
    grid = _grid(21)
    e = _echoes([(0.1, 0.0, 0.0), (1.0, 1.0, -0.3)], circle)
    a = backproject_layer(e, grid, 0.3, FocusConfig(grid, soil=SOIL)).samples
    b = backproject_layer(e, grid, 0.3, FocusConfig(grid, soil=SOIL)).samples
    assert a.tobytes() == b.tobytes()


def test_tree_columns_stand_out_in_the_surface_layer():
    extent = GeoGrid.covering(-4.0, -4.0, 8.0, 8.0, spacing=0.05)
    traj = helical_trajectory(25, 25, 30, 30, 1, 0.3)
    scene = build_forest(TreeSpec(rows=3, cols=3), SOIL, extent, make_rng(0))
    bins = range_bins_for(extent, traj, RADAR, SOIL)
    e = simulate_echoes(scene, traj, RADAR, SOIL, bins)
    grid = GeoGrid((-3.0, -3.0), 0.25, 25, 25, (0.0,))
    db = 20 * np.log10(np.abs(backproject_layer(e, grid, 0.0, FocusConfig(grid, soil=SOIL)).samples))
    x, y = grid.mesh()
    trunks = [(-2.5 + 2.5 * i, -2.5 + 2.5 * j) for i in range(3) for j in range(3)]
    near = np.zeros(grid.shape, dtype=bool)
    for tx, ty in trunks:
        near |= np.hypot(x - tx, y - ty) < 0.75
    rows_cols = [(int(round((ty + 3.0) / 0.25)), int(round((tx + 3.0) / 0.25))) for tx, ty in trunks]
    tree_db = np.array([db[r, c] for r, c in rows_cols])
    # typical trunk, not every trunk: neighbours' layover rings can cancel one
    assert np.median(tree_db) >= np.median(db[~near]) + 6


def test_magnitude_db():
    img = Image(GeoGrid((0.0, 0.0), 1.0, 3, 1), np.array([[2.0, 1.0, 0.0]]))
    db = magnitude_db(img, floor_db=-60).samples
    assert db[0, 0] == 0.0
    assert db[0, 1] == pytest.approx(-6.0206, abs=1e-4)
    assert db[0, 2] == -60.0
    with pytest.raises(ValueError):
        magnitude_db(img, floor_db=1.0)
    with pytest.raises(ValueError):
        magnitude_db(Image(img.grid, np.zeros((1, 3))))
