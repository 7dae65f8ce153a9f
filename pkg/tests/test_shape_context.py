import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from co3.shape_context import (
    CountTree,
    ScConfig,
    ShapeContext,
    finalize_distribution,
    partition_id,
    partition_ids,
    raw_histograms,
)

from oracles import brute_histograms, partition_id_scalar, softmax_by_hand

COMPACT = ScConfig.compact()
CONFIGS = [ScConfig.compact(), ScConfig.standard(), ScConfig.planar(), ScConfig(0.3, 1.1, 3, 5)]


@pytest.mark.parametrize(
    "rel, expected",
    [((0, 0, 0), -1), ((1, 0, 0), 0), ((0, 1, 0), 1), ((3, 0, 0), 4), ((0.1, 0, 0), -1)],
)
def test_hand_traces(rel, expected):
    assert partition_id(rel, COMPACT) == expected


def test_boundaries():
    assert partition_id((0.125, 0, 0), COMPACT) == 0
    assert partition_id((2.0, 0, 0), COMPACT) == 4


def test_ids_in_range_near_two_pi():
    rel = np.array([[1.0, -1e-17, 0.0], [1.0, -1e-300, 1.0], [0.0, -1e-18, -1.0]])
    ids = partition_ids(rel, ScConfig.standard())
    assert np.all((ids >= 0) & (ids < 32))


@pytest.mark.parametrize("cfg", CONFIGS)
def test_vectorised_matches_scalar(cfg, rng):
    rel = rng.normal(scale=2.0, size=(2000, 3))
    rel[:10] = 0.0
    rel[10:20, 1] = 0.0
    expected = [partition_id_scalar(r, cfg.r1, cfg.r2, cfg.nbins_xy, cfg.nbins_zy) for r in rel]
    np.testing.assert_array_equal(partition_ids(rel, cfg), expected)


def test_single_neighbour_row():
    row = raw_histograms(np.zeros((1, 3)), np.array([[1.0, 0, 0]]), COMPACT).histograms[0]
    np.testing.assert_array_equal(row, [1, 0, 0, 0, 0, 0, 0, 0])


def test_no_neighbours():
    sc = raw_histograms(np.zeros((2, 3)), np.zeros((0, 3)), COMPACT)
    assert sc.histograms.shape == (2, 8) and not sc.histograms.any()


def test_isolated_far_neighbours_land_in_outer_shell():
    sc = raw_histograms(np.zeros((1, 3)), np.array([[50.0, 0, 0], [0, -70.0, 1]]), COMPACT)
    assert sc.histograms[0, 4:].sum() == 2


@pytest.mark.parametrize("cfg", CONFIGS)
def test_equals_brute_force(cfg, rng):
    for _ in range(10):
        n = int(rng.integers(1, 300))
        pts = rng.normal(scale=rng.uniform(0.2, 5.0), size=(n, 3))
        got = raw_histograms(pts, pts, cfg).histograms
        np.testing.assert_array_equal(got, brute_histograms(pts, pts, cfg.r1, cfg.r2, cfg.nbins_xy, cfg.nbins_zy))


def test_equals_brute_force_on_flat_scene(rng):
    pts = np.column_stack([rng.uniform(-20, 20, 800), rng.uniform(-20, 20, 800), np.full(800, -1.9)])
    pts[::7, 2] += rng.uniform(0, 1.5, len(pts[::7]))
    cfg = ScConfig.standard()
    q = pts[::3]
    np.testing.assert_array_equal(
        raw_histograms(q, pts, cfg).histograms, brute_histograms(q, pts, 0.5, 4.0, 4, 4)
    )


@settings(max_examples=40, deadline=None)
@given(
    st.lists(
        st.tuples(*[st.integers(-40, 40).map(lambda v: v / 8.0)] * 3), min_size=1, max_size=60
    )
)
def test_brute_force_property_with_lattice_ties(points):
    # Lattice points produce exact boundary hits (axis-aligned rel vectors, r1/r2 distances).
    pts = np.array(points, dtype=np.float64)
    got = raw_histograms(pts, pts, COMPACT).histograms
    np.testing.assert_array_equal(got, brute_histograms(pts, pts, 0.125, 2.0, 2, 2))


def test_row_sum_counts_points_outside_r1(rng):
    pts = rng.normal(size=(200, 3))
    cfg = ScConfig.standard()
    h = raw_histograms(pts, pts, cfg).histograms
    d = np.linalg.norm(pts[:, None] - pts[None], axis=2)
    np.testing.assert_array_equal(h.sum(axis=1), (d >= cfg.r1).sum(axis=1))


def test_power_of_two_scale_invariance(rng):
    pts = rng.normal(size=(150, 3))
    a = raw_histograms(pts, pts, ScConfig(0.5, 4.0, 4, 4)).histograms
    b = raw_histograms(4.0 * pts, 4.0 * pts, ScConfig(2.0, 16.0, 4, 4)).histograms
    np.testing.assert_array_equal(a, b)


def test_tree_reuse(rng):
    nb = rng.normal(size=(300, 3))
    tree = CountTree(nb)
    q = rng.normal(size=(40, 3))
    np.testing.assert_array_equal(
        raw_histograms(q, nb, COMPACT, tree=tree).histograms, raw_histograms(q, nb, COMPACT).histograms
    )
    assert tree.counts[0] == 300


def test_bad_config():
    with pytest.raises(ValueError):
        ScConfig(2.0, 1.0, 2, 2)
    with pytest.raises(ValueError):
        ScConfig(0.1, 1.0, 0, 2)


# finalization


def test_uniform_and_zero_rows():
    raw = ShapeContext(np.array([[2, 2, 2, 2], [0, 0, 0, 0]]))
    out = finalize_distribution(raw, 4.0).histograms
    np.testing.assert_allclose(out, 0.25, atol=1e-15)
    assert finalize_distribution(raw).kind == "distribution"


def test_hand_softmax_value():
    out = finalize_distribution(ShapeContext(np.array([[3, 1, 0, 0]])), 4.0).histograms[0]
    expected = softmax_by_hand([3.0, 1.0, 0.0, 0.0])
    np.testing.assert_allclose(out, expected, atol=1e-15)
    np.testing.assert_allclose(out, [0.809776, 0.109591, 0.040317, 0.040317], atol=1e-6)


def test_rows_sum_to_one(rng):
    raw = ShapeContext(rng.integers(0, 1000, size=(500, 32)))
    out = finalize_distribution(raw, 4.0).histograms
    assert np.max(np.abs(out.sum(axis=1) - 1.0)) < 1e-12
    assert np.all(out > 0)


def test_sf_zero_is_uniform():
    out = finalize_distribution(ShapeContext(np.array([[9, 1, 0, 0]])), 0.0).histograms
    np.testing.assert_allclose(out, 0.25)


def test_negative_counts_rejected():
    with pytest.raises(ValueError):
        finalize_distribution(ShapeContext(np.array([[1, -1]])))


def test_max_entry_bounded_by_sf():
    # normalized counts lie in [0, 1], so max/min probability ratio is at most e^sf
    out = finalize_distribution(ShapeContext(np.array([[100, 0, 0, 0, 0]])), 4.0).histograms[0]
    assert math.isclose(out[0] / out[1], math.exp(4.0), rel_tol=1e-12)
