import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tomosar._kernels import fast_sincos, pattern_table, table_lookup
from tomosar.core import GeoGrid, make_rng
from tomosar.echosim import (EchoSet, RangeBins, antenna_gain, range_bins_for, simulate_echoes,
                             two_way_path)
from tomosar.scene import (RadarParams, Scene, SoilModel, Trajectory, build_forest, empty_scene,
                           helical_trajectory)

RADAR = RadarParams()
EXTENT = GeoGrid.covering(-3.0, -3.0, 6.0, 6.0, spacing=0.05)
NADIR = Trajectory(np.array([[0.0, 0.0, 30.0]]), np.zeros(1), (0.0, 0.0, 0.0))


def point_scene(points, amps=1.0):
    return empty_scene(EXTENT).with_points(points, amps)


def test_surface_path_is_geometric():
    assert two_way_path((0, 0, 30), (0, 0, 0), SoilModel()) == pytest.approx(30.0)


def test_buried_path_stretches_the_soil_segment():
    assert two_way_path((0, 0, 30), (0, 0, -1), SoilModel(relative_permittivity=4.0)) \
        == pytest.approx(32.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(-50, 50), st.floats(-50, 50), st.floats(1, 100), st.floats(-3, 3), st.floats(-3, 3),
       st.floats(-2.5, 0))
def test_vacuum_limit_is_euclidean(px, py, pz, qx, qy, qz):
    d = math.dist((px, py, pz), (qx, qy, qz))
    assert two_way_path((px, py, pz), (qx, qy, qz), SoilModel(relative_permittivity=1.0)) \
        == pytest.approx(d, rel=1e-12)


def test_pose_below_surface_raises():
    with pytest.raises(ValueError):
        two_way_path((0, 0, -1), (0, 0, -2))


def test_gain_on_boresight_is_one():
    assert antenna_gain((0, -20, 30), (0, 0, 0), RADAR) == pytest.approx(1.0)


@pytest.mark.parametrize("axis,aperture", [("az", 55.9), ("el", 69.3)])
def test_gain_at_half_aperture_is_one_half(axis, aperture):
    # pose at nadir above the look point with heading along +x: h = +x, v = -y
    half = math.radians(aperture / 2)
    off = 30.0 * math.tan(half)
    target = (off, 0.0, 0.0) if axis == "az" else (0.0, off, 0.0)
    g = antenna_gain((0, 0, 30), target, RADAR, look_at=(0, 0, 0), heading=0.0)
    assert g == pytest.approx(0.5, abs=1e-6)


def test_gain_vanishes_outside_the_aperture():
    off = 30.0 * math.tan(math.radians(56.0))
    assert antenna_gain((0, 0, 30), (off, 0, 0), RADAR, heading=0.0) == 0.0
    assert antenna_gain((0, 0, 30), (0, 0, 40), RADAR) == 0.0  # behind the antenna


def test_pattern_table_matches_closed_form():
    a = math.radians(55.9)
    tab, tmax = pattern_table(a)
    for th in np.linspace(-a * 0.99, a * 0.99, 37):
        exact = math.cos(0.5 * math.pi * th / a) ** 2
        assert table_lookup(math.tan(th), tab, tmax) == pytest.approx(exact, abs=2e-6)


@settings(max_examples=200, deadline=None)
@given(st.floats(-2e4, 2e4))
def test_fast_sincos_matches_libm(x):
    s, c = fast_sincos(x)
    assert abs(s - math.sin(x)) < 1e-8 and abs(c - math.cos(x)) < 1e-8


def test_single_scatterer_peak_is_gain_squared_over_range_squared():
    bins = RangeBins(20.0, 0.5, 48)  # 30 m falls on bin 20
    e = simulate_echoes(point_scene([(0, 0, 0)]), NADIR, RADAR, None, bins, method="direct")
    k = int(np.argmax(np.abs(e.samples[0])))
    assert bins.centers()[k] == pytest.approx(30.0, abs=bins.dr / 2)
    assert abs(e.samples[0, k]) == pytest.approx(1.0 / 900.0, rel=1e-9)


def test_single_scatterer_phase():
    bins = RangeBins(20.0, 0.375, 64)
    pos = (0.3, -0.2, 0.0)
    e = simulate_echoes(point_scene([pos]), NADIR, RADAR, None, bins, method="direct")
    k = int(np.argmax(np.abs(e.samples[0])))
    r = math.dist((0, 0, 30), pos)
    want = (-4 * math.pi * r / RADAR.wavelength) % (2 * math.pi)
    got = np.angle(e.samples[0, k]) % (2 * math.pi)
    d = abs(got - want)
    assert min(d, 2 * math.pi - d) < 1e-6


def test_empty_scene_gives_zero_samples():
    bins = RangeBins(20.0, 0.375, 64)
    e = simulate_echoes(empty_scene(EXTENT), NADIR, RADAR, None, bins)
    assert not e.samples.any()


def test_two_scatterers_two_rho_apart_are_resolved():
    rho = RADAR.range_resolution
    bins = RangeBins(20.0, rho / 8, 160)
    scene = point_scene([(0, 0, 0), (0, 0, -2 * rho)])
    e = simulate_echoes(scene, NADIR, RADAR, None, bins, method="direct")
    mag = np.abs(e.samples[0])
    peaks = [i for i in range(1, len(mag) - 1) if mag[i] > mag[i - 1] and mag[i] >= mag[i + 1]
             and mag[i] > 0.3 * mag.max()]
    assert len(peaks) == 2


def _random_scene(seed, n=40):
    rng = make_rng(seed)
    pts = np.column_stack([rng.uniform(-3, 3, n), rng.uniform(-3, 3, n), rng.uniform(-2, 1, n)])
    amps = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return point_scene(pts, amps)


@pytest.fixture(scope="module")
def short_helix():
    return helical_trajectory(25, 25, 30, 30, 1, 3.0)


@pytest.mark.parametrize("method", ["direct", "gridded"])
def test_linearity_and_homogeneity(short_helix, method):
    a, b = _random_scene(1), _random_scene(2)
    soil = SoilModel()
    bins = range_bins_for(EXTENT, short_helix, RADAR, soil)
    ea = simulate_echoes(a, short_helix, RADAR, soil, bins, method).samples
    eb = simulate_echoes(b, short_helix, RADAR, soil, bins, method).samples
    eab = simulate_echoes(a.merged(b), short_helix, RADAR, soil, bins, method).samples
    scale = np.abs(eab).max()
    assert np.abs(eab - (ea + eb)).max() <= 1e-9 * scale
    a2 = Scene(a.positions, 2 * a.amplitudes, a.tags, a.extent)
    e2 = simulate_echoes(a2, short_helix, RADAR, soil, bins, method).samples
    assert np.abs(e2 - 2 * ea).max() <= 1e-12 * np.abs(ea).max()


def test_gridded_route_agrees_with_direct_sum(short_helix):
    soil = SoilModel()
    scene = build_forest(None, soil, EXTENT, make_rng(5)).with_points([(0, 0, 5.0)], 3.0)
    bins = range_bins_for(EXTENT, short_helix, RADAR, soil, heights=(0, 6))
    d = simulate_echoes(scene, short_helix, RADAR, soil, bins, "direct").samples
    g = simulate_echoes(scene, short_helix, RADAR, soil, bins, "gridded").samples
    assert np.linalg.norm(g - d) / np.linalg.norm(d) < 1e-3


def test_noise_needs_rng_and_is_seeded(short_helix):
    bins = range_bins_for(EXTENT, short_helix, RADAR)
    scene = _random_scene(3)
    with pytest.raises(ValueError):
        simulate_echoes(scene, short_helix, RADAR, None, bins, noise_snr_db=10)
    a = simulate_echoes(scene, short_helix, RADAR, None, bins, noise_snr_db=10, rng=make_rng(1))
    b = simulate_echoes(scene, short_helix, RADAR, None, bins, noise_snr_db=10, rng=make_rng(1))
    assert np.array_equal(a.samples, b.samples)


def test_coarse_bins_are_rejected():
    with pytest.raises(ValueError):
        EchoSet(RADAR, RangeBins(0.0, 2.0, 4), NADIR, np.zeros((1, 4), complex))


def test_echoset_roundtrip(tmp_path, short_helix):
    bins = range_bins_for(EXTENT, short_helix, RADAR)
    e = simulate_echoes(_random_scene(4), short_helix, RADAR, None, bins)
    e.save(str(tmp_path / "e"))
    back = EchoSet.load(str(tmp_path / "e"))
    assert back.bins == e.bins and back.radar == e.radar
    assert np.allclose(back.samples, e.samples, rtol=1e-6, atol=1e-6 * np.abs(e.samples).max())
    assert np.array_equal(back.trajectory.positions, e.trajectory.positions)
