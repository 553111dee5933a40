import numpy as np
import pytest

from endorecon.geometry import PointCloud
from endorecon.map_merge import GlobalMap, merge


def test_merge_into_empty_map_takes_everything():
    cloud = PointCloud(np.arange(9.0).reshape(3, 3))
    out = merge(GlobalMap.empty(), cloud, novelty_radius=0.5, frame=0)
    assert np.array_equal(out.cloud.points, cloud.points)
    assert out.frame_provenance.tolist() == [0, 0, 0]


def test_remerge_same_cloud_changes_nothing():
    cloud = PointCloud(np.random.default_rng(0).normal(size=(20, 3)))
    once = merge(GlobalMap.empty(), cloud, 0.5, frame=0)
    twice = merge(once, cloud, 0.5, frame=1)
    assert len(twice) == len(once)
    assert np.array_equal(twice.cloud.points, once.cloud.points)


def test_two_point_novelty_case():
    # Existing map {origin}; incoming at distances 0.5 and 5 with radius 1:
    # only the far point is new geometry.
    base = merge(GlobalMap.empty(), PointCloud(np.zeros((1, 3))), 1.0, frame=0)
    incoming = PointCloud(np.array([[0.0, 0.0, 0.5], [0.0, 0.0, 5.0]]))
    out = merge(base, incoming, novelty_radius=1.0, frame=1)
    assert len(out) == 2
    assert np.array_equal(out.cloud.points[1], [0.0, 0.0, 5.0])
    assert out.frame_provenance.tolist() == [0, 1]


def test_distance_exactly_radius_is_duplicate():
    base = merge(GlobalMap.empty(), PointCloud(np.zeros((1, 3))), 1.0, frame=0)
    boundary = PointCloud(np.array([[1.0, 0.0, 0.0]]))
    out = merge(base, boundary, novelty_radius=1.0, frame=1)
    assert len(out) == 1


def test_map_size_never_decreases():
    rng = np.random.default_rng(1)
    state = GlobalMap.empty()
    for frame in range(5):
        cloud = PointCloud(rng.normal(size=(30, 3)))
        grown = merge(state, cloud, 0.2, frame=frame)
        assert len(grown) >= len(state)
        state = grown


def test_provenance_tracks_real_frames():
    rng = np.random.default_rng(2)
    state = GlobalMap.empty()
    for frame in range(4):
        state = merge(state, PointCloud(rng.normal(size=(15, 3)) + 10 * frame), 0.1, frame=frame)
    assert set(state.frame_provenance.tolist()) <= {0, 1, 2, 3}
    assert len(state.frame_provenance) == len(state.cloud)


def test_negative_radius_rejected():
    with pytest.raises(ValueError, match="non-negative"):
        merge(GlobalMap.empty(), PointCloud(np.zeros((1, 3))), -0.1, frame=0)


def test_empty_incoming_cloud_is_noop():
    base = merge(GlobalMap.empty(), PointCloud(np.ones((2, 3))), 1.0, frame=0)
    out = merge(base, PointCloud(np.empty((0, 3))), 1.0, frame=1)
    assert len(out) == 2
