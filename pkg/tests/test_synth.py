import numpy as np
import pytest

from co3.cloud_io import CloudFormatError
from co3.geom import RigidTransform, filter_ground
from co3.synth import (
    CAR,
    GROUND,
    SceneSpec,
    build_world,
    capture_view,
    generate_scene,
    generate_scenes,
    infrastructure_pose,
    read_scene,
    shared_fraction,
    vehicle_pose,
    write_scene,
)


@pytest.fixture(scope="module")
def pair():
    return generate_scene(SceneSpec(seed=3))


def test_determinism(pair):
    assert generate_scene(SceneSpec(seed=3)).equals(pair)
    assert not generate_scene(SceneSpec(seed=4)).equals(pair)


def test_shared_points_within_three_sigma(pair):
    sigma = SceneSpec().ground_noise
    inf_in_veh = pair.t_veh_inf.apply_points(pair.inf_cloud.positions)
    veh_pos = dict(zip(pair.veh_cloud.source_ids.tolist(), pair.veh_cloud.positions))
    shared = [(veh_pos[s], p) for s, p in zip(pair.inf_cloud.source_ids.tolist(), inf_in_veh) if s in veh_pos]
    assert shared
    gaps = np.array([np.linalg.norm(a - b) for a, b in shared])
    assert gaps.max() <= 3 * sigma


@pytest.mark.parametrize("seed", range(5))
def test_overlap_at_defaults(seed):
    assert shared_fraction(generate_scene(SceneSpec(seed=seed))) >= 0.3


def test_views_differ(pair):
    a = set(pair.veh_cloud.source_ids.tolist())
    b = set(pair.inf_cloud.source_ids.tolist())
    assert a - b and b - a


def test_ground_only_scene_is_removed_by_ground_filter():
    p = generate_scene(SceneSpec(n_objects=0, ground_noise=0.0, seed=1))
    assert np.all(p.point_labels == GROUND)
    ground_z = p.veh_cloud.positions[:, 2].max()
    kept, _ = filter_ground(p.veh_cloud, ground_z + 1e-6)
    assert len(kept) == 0


def test_objects_clear_of_ground():
    world, labels = build_world(SceneSpec(seed=2), np.random.default_rng(2))
    assert (labels != GROUND).any()
    assert world[labels != GROUND, 2].min() > world[labels == GROUND, 2].max() + 0.1


def test_capture_identity_full_sector_is_verbatim():
    world = np.random.default_rng(0).normal(size=(50, 3))
    c = capture_view(world, RigidTransform.identity(), 1.0, (0.0, 2 * np.pi), 0.0, 0)
    np.testing.assert_array_equal(c.positions, world)
    np.testing.assert_array_equal(c.source_ids, np.arange(50))


def test_capture_keep_zero_is_empty():
    world = np.random.default_rng(0).normal(size=(50, 3))
    assert len(capture_view(world, RigidTransform.identity(), 0.0, (0.0, 2 * np.pi), 0.0, 0)) == 0


def test_intensity_is_function_of_range(pair):
    from co3.synth import intensity_of_range

    r = np.linalg.norm(pair.veh_cloud.positions, axis=1)
    np.testing.assert_allclose(pair.veh_cloud.features[:, 0], intensity_of_range(r), rtol=1e-6)


def test_transform_is_relative_pose(pair):
    from co3.geom import compose, invert

    assert pair.t_veh_inf.allclose(compose(invert(vehicle_pose()), infrastructure_pose()))


def test_generate_scenes_distinct_and_reproducible():
    a = generate_scenes(3, 9)
    b = generate_scenes(3, 9)
    assert all(x.equals(y) for x, y in zip(a, b))
    assert not a[0].equals(a[1])


def test_scene_round_trip(tmp_path, pair):
    write_scene(pair, tmp_path / "s")
    back = read_scene(tmp_path / "s")
    np.testing.assert_array_equal(back.labels_of(back.veh_cloud), pair.labels_of(pair.veh_cloud))
    np.testing.assert_array_equal(back.labels_of(back.inf_cloud), pair.labels_of(pair.inf_cloud))
    assert back.t_veh_inf.allclose(pair.t_veh_inf, atol=0.0)
    assert (back.labels_of(back.veh_cloud) == CAR).any()


def test_scene_bad_transform(tmp_path, pair):
    write_scene(pair, tmp_path / "s")
    (tmp_path / "s" / "t.txt").write_text("1 2 3\n")
    with pytest.raises(CloudFormatError):
        read_scene(tmp_path / "s")


def test_spec_validation():
    with pytest.raises(ValueError):
        SceneSpec(extent=0)
    with pytest.raises(ValueError):
        SceneSpec(ground_noise=-1)
