import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tomosar.core import GeoGrid, make_rng
from tomosar.scene import (NEST_PRESETS, TAG_SOIL, TAG_TREE, NestRecord, NestSpec, PlacementError,
                           RadarParams, SoilModel, Trajectory, TreeSpec, build_forest, carve_nest,
                           helical_trajectory, linear_trajectory, place_chambers, read_nest_csv,
                           write_nest_csv)

EXTENT = GeoGrid.covering(-4.0, -4.0, 8.0, 8.0, spacing=0.05)


def test_radar_defaults():
    r = RadarParams()
    assert r.wavelength == pytest.approx(0.7054, abs=1e-4)
    assert r.range_resolution == pytest.approx(2.998, abs=1e-3)


@pytest.mark.parametrize("chambers,row", [
    (100, (100, 0.22, (0.4, 1.5), 10.24)),
    (50, (50, 0.20, (0.3, 1.0), 6.25)),
    (20, (20, 0.18, (0.3, 0.6), 2.25)),
    (6, (6, 0.16, (0.2, 0.4), 0.64)),
])
def test_presets_match_the_characteristics_table(chambers, row):
    n = NestSpec.preset(chambers)
    assert (n.chamber_count, n.chamber_diameter, n.depth_range, n.footprint_area) == row
    assert NEST_PRESETS[chambers] == row


def test_nine_tree_grid():
    scene = build_forest(TreeSpec(rows=3, cols=3), None, EXTENT, make_rng(0))
    trunks = np.unique(scene.positions[:, :2].round(6), axis=0)
    assert len(trunks) == 9
    d = np.diff(np.unique(trunks[:, 0]))
    assert np.allclose(d, 2.5)
    assert (scene.tags == TAG_TREE).all()
    assert scene.positions[:, 2].max() < 10.0


def test_soil_only_scene_has_only_soil_tags():
    scene = build_forest(None, SoilModel(), EXTENT, make_rng(0))
    assert len(scene) > 0 and (scene.tags == TAG_SOIL).all()
    assert (scene.positions[:, 2] < 0).all()
    assert scene.inside_extent().all()


def test_forest_is_deterministic_per_seed():
    a = build_forest(TreeSpec(), SoilModel(), EXTENT, make_rng(3))
    b = build_forest(TreeSpec(), SoilModel(), EXTENT, make_rng(3))
    c = build_forest(TreeSpec(), SoilModel(), EXTENT, make_rng(4))
    assert np.array_equal(a.positions, b.positions)
    assert not np.array_equal(a.positions, c.positions)


def test_empty_extent_is_an_error():
    with pytest.raises(ValueError):
        GeoGrid((0.0, 0.0), 0.1, 0, 5)


def test_six_chamber_preset_geometry():
    c = place_chambers(NestSpec.preset(6), make_rng(1))
    assert c.shape == (6, 3)
    assert ((-c[:, 2] >= 0.2) & (-c[:, 2] <= 0.4)).all()


def test_hundred_chambers_stay_inside_the_footprint():
    nest = NestSpec.preset(100, (0.5, -0.5))
    worst = 0.0
    for seed in range(5):
        c = place_chambers(nest, make_rng(seed))
        worst = max(worst, np.hypot(c[:, 0] - 0.5, c[:, 1] + 0.5).max())
    assert worst <= np.sqrt(10.24 / np.pi)


def test_chambers_keep_one_diameter_apart():
    c = place_chambers(NestSpec.preset(50), make_rng(2))
    d = np.linalg.norm(c[:, None] - c[None], axis=-1) + np.eye(len(c)) * 9
    assert d.min() >= 0.20


def test_impossible_placement_raises():
    crowded = NestSpec(500, 0.3, (0.2, 0.3), 0.5)
    with pytest.raises(PlacementError):
        place_chambers(crowded, make_rng(0), max_tries=2000)


def test_zero_chambers_leaves_scene_unchanged():
    scene = build_forest(None, SoilModel(), EXTENT, make_rng(0))
    out = carve_nest(scene, NestSpec(0, 0.2, (0.3, 0.5), 1.0), make_rng(0))
    assert out is scene


@settings(max_examples=8, deadline=None)
@given(st.sampled_from(sorted(NEST_PRESETS)), st.integers(0, 10_000))
def test_no_soil_scatterer_inside_any_chamber(chambers, seed):
    rng = make_rng(seed)
    scene = build_forest(None, SoilModel(), EXTENT, rng)
    out = carve_nest(scene, NestSpec.preset(chambers), rng)
    soil = out.positions[out.tags == TAG_SOIL]
    for x, y, z, r in out.chambers:
        assert (((soil - (x, y, z)) ** 2).sum(axis=1) >= r * r).all()
    assert len(out) <= len(scene)
    assert out.nests == [NestRecord(1, (0.0, 0.0), NEST_PRESETS[chambers][3])]


def test_nest_outside_extent_is_rejected():
    scene = build_forest(None, SoilModel(), EXTENT, make_rng(0))
    with pytest.raises(ValueError):
        carve_nest(scene, NestSpec.preset(100, (3.5, 0.0)), make_rng(0))


def test_nest_csv_roundtrip(tmp_path):
    nests = [NestRecord(1, (1.5, -2.0), 0.64), NestRecord(2, (10.0, 3.25), 10.24)]
    write_nest_csv(nests, str(tmp_path / "n.csv"))
    assert read_nest_csv(str(tmp_path / "n.csv")) == nests


@settings(max_examples=30, deadline=None)
@given(st.floats(5, 200), st.floats(5, 200), st.floats(10, 150), st.floats(10, 150),
       st.floats(1, 3), st.floats(0.05, 2.0))
def test_helix_spacing_never_exceeds_arc_step(r0, r1, z0, z1, turns, step):
    t = helical_trajectory(r0, r1, z0, z1, turns, step)
    assert t.spacings().max() <= step + 1e-9
    assert np.allclose(t.positions[0, 2], z0) and np.allclose(t.positions[-1, 2], z1)


def test_helix_matches_the_field_orbit():
    t = helical_trajectory(115, 165, 120, 80, 1, 0.5, center=(50.0, 50.0))
    rad = np.hypot(t.positions[:, 0] - 50, t.positions[:, 1] - 50)
    assert rad[0] == pytest.approx(115) and rad[-1] == pytest.approx(165)
    assert t.look_at == (50.0, 50.0, 0.0)


@pytest.mark.parametrize("args", [(10, 10, 5, 5, 0.5, 0.1), (10, 10, 5, 5, 1, 0.0)])
def test_helix_rejects_bad_arguments(args):
    with pytest.raises(ValueError):
        helical_trajectory(*args)


def test_linear_track():
    t = linear_trajectory((0, 0, 30), (10, 0, 30), 0.3)
    assert len(t) == 35
    assert t.spacings().max() <= 0.3 + 1e-12
    with pytest.raises(ValueError):
        linear_trajectory((0, 0, 30), (0, 0, 30), 0.3)


def test_pose_below_surface_is_rejected():
    with pytest.raises(ValueError):
        Trajectory(np.array([[0.0, 0.0, -1.0]]), np.zeros(1))


def test_trajectory_dict_roundtrip():
    t = helical_trajectory(20, 25, 30, 35, 1, 1.0)
    back = Trajectory.from_dict(t.to_dict())
    assert np.array_equal(back.positions, t.positions) and back.look_at == t.look_at
