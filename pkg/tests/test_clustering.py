"""Cluster filtering semantics, purity, and serialization."""

import numpy as np
import pytest

from stssl.clustering import (
    ClusterConfig,
    ClusterSet,
    cluster_frame,
    dbscan,
    filter_clusters,
    purity,
    rle_decode,
    rle_encode,
)
from stssl.errors import LabelsUnavailableError
from stssl.ground import fit_plane_ransac, split_ground
from stssl.synth import generate_synthetic, preset_scene


def make_raw(sizes):
    """Raw label array with the given cluster sizes, plus points for them."""
    labels = np.concatenate([np.full(s, i, dtype=np.int64) for i, s in enumerate(sizes)])
    rng = np.random.default_rng(0)
    points = np.concatenate(
        [rng.normal(loc=5.0 * i, scale=0.1, size=(s, 3)) for i, s in enumerate(sizes)]
    )
    indices = np.arange(labels.size, dtype=np.int64)
    return labels, points, indices


def test_two_close_points_one_cluster():
    pts = np.array([[0.0, 0.0, 0.0], [0.2, 0.0, 0.0]])
    labels = dbscan(pts, eps=0.25, min_pts=1)
    assert labels[0] == labels[1] == 0


def test_empty_input():
    assert dbscan(np.zeros((0, 3)), 0.25, 1).size == 0


def test_size_boundaries_inclusive_keep():
    sizes = [199, 200, 20000, 20001]
    labels, points, indices = make_raw(sizes)
    cs = filter_clusters(labels, points, indices, 0, ClusterConfig(), labels.size)
    kept_sizes = sorted(c.size for c in cs.clusters)
    assert kept_sizes == [200, 20000]


def test_more_than_max_keeps_largest():
    sizes = [200 + i for i in range(60)]
    labels, points, indices = make_raw(sizes)
    cs = filter_clusters(labels, points, indices, 0, ClusterConfig(), labels.size)
    assert cs.n_clusters == 50
    assert sorted(c.size for c in cs.clusters) == sorted(sizes)[-50:]
    # dense reindex by descending size
    assert [c.cluster_id for c in cs.clusters] == list(range(50))
    assert all(a.size >= b.size for a, b in zip(cs.clusters, cs.clusters[1:]))


def test_tie_break_prefers_lower_original_id():
    sizes = [300, 300, 300]
    labels, points, indices = make_raw(sizes)
    cfg = ClusterConfig(max_clusters=2)
    cs = filter_clusters(labels, points, indices, 0, cfg, labels.size)
    kept_original = {tuple(np.round(c.centroid / 5.0).astype(int)) for c in cs.clusters}
    assert kept_original == {(0, 0, 0), (1, 1, 1)}


def test_no_survivors():
    sizes = [10, 50]
    labels, points, indices = make_raw(sizes)
    cs = filter_clusters(labels, points, indices, 0, ClusterConfig(), labels.size)
    assert cs.n_clusters == 0
    assert (cs.assignment == -1).all()


def test_centroid_is_member_mean():
    sizes = [250, 400]
    labels, points, indices = make_raw(sizes)
    cs = filter_clusters(labels, points, indices, 0, ClusterConfig(), labels.size)
    for c in cs.clusters:
        rows = np.isin(indices, c.member_indices)
        assert np.allclose(c.centroid, points[rows].mean(axis=0), atol=1e-6)


def test_filter_never_violates_bounds():
    rng = np.random.default_rng(1)
    for _ in range(10):
        sizes = rng.integers(1, 30000, size=rng.integers(1, 80)).tolist()
        labels, points, indices = make_raw(sizes)
        cfg = ClusterConfig()
        cs = filter_clusters(labels, points, indices, 0, cfg, labels.size)
        assert cs.n_clusters <= cfg.max_clusters
        for c in cs.clusters:
            assert cfg.min_size <= c.size <= cfg.max_size


def test_purity_single_class_clusters():
    sizes = [300, 300]
    labels, points, indices = make_raw(sizes)
    cs = filter_clusters(labels, points, indices, 0, ClusterConfig(), labels.size)
    class_ids = np.concatenate([np.full(300, 1), np.full(300, 2)])
    rep = purity(cs, class_ids)
    assert rep.proportion_pure == 1.0
    assert np.allclose(rep.fractions, 1.0)


def test_purity_threshold_excludes_mixed_cluster():
    sizes = [300, 1000]
    labels, points, indices = make_raw(sizes)
    cs = filter_clusters(labels, points, indices, 0, ClusterConfig(), labels.size)
    class_ids = np.zeros(1300, dtype=np.int64)
    class_ids[:300] = 1
    # the size-1000 cluster: 89% class 2, 11% class 3
    class_ids[300:1190] = 2
    class_ids[1190:] = 3
    rep = purity(cs, class_ids)
    assert rep.proportion_pure == 0.5
    assert sorted(np.round(rep.fractions, 2).tolist()) == [0.89, 1.0]


def test_purity_requires_labels():
    sizes = [300]
    labels, points, indices = make_raw(sizes)
    cs = filter_clusters(labels, points, indices, 0, ClusterConfig(), labels.size)
    with pytest.raises(LabelsUnavailableError):
        purity(cs, None)


def test_purity_high_across_eps_sweep():
    # objects separated by more than 2*eps at every eps cannot merge
    seq, _ = generate_synthetic(preset_scene("purity-sweep", n_frames=1), seed=2)
    frame = seq.frames[0]
    plane = fit_plane_ransac(frame, seed=1)
    split = split_ground(frame, plane)
    for eps in np.arange(0.15, 0.451, 0.05):
        cfg = ClusterConfig(eps=float(eps))
        cs = cluster_frame(frame, split, cfg)
        assert cs.n_clusters > 0
        rep = purity(cs, frame.labels)
        assert rep.proportion_pure >= 0.95


def test_core_point_comembership_invariant_under_permutation():
    rng = np.random.default_rng(3)
    for _ in range(10):
        n = int(rng.integers(20, 120))
        pts = rng.uniform(-2, 2, (n, 3))
        eps, min_pts = 0.6, 4
        labels = dbscan(pts, eps, min_pts)
        perm = rng.permutation(n)
        labels_perm = dbscan(pts[perm], eps, min_pts)
        # core points: at least min_pts neighbors within eps (incl. self)
        d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
        core = (d2 <= eps * eps).sum(axis=1) >= min_pts
        inv = np.empty(n, dtype=int)
        inv[perm] = np.arange(n)
        for i in range(n):
            for j in range(i + 1, n):
                if core[i] and core[j]:
                    same_a = labels[i] == labels[j]
                    same_b = labels_perm[inv[i]] == labels_perm[inv[j]]
                    assert same_a == same_b


def test_rle_round_trip():
    rng = np.random.default_rng(4)
    for _ in range(20):
        arr = rng.integers(-1, 4, size=int(rng.integers(0, 200)))
        assert np.array_equal(rle_decode(rle_encode(arr)), arr)


def test_cluster_set_json_round_trip():
    seq, _ = generate_synthetic(preset_scene("two-objects", n_frames=1), seed=3)
    frame = seq.frames[0]
    plane = fit_plane_ransac(frame, seed=1)
    cs = cluster_frame(frame, split_ground(frame, plane), ClusterConfig())
    back = ClusterSet.from_dict(cs.to_dict())
    assert back.frame_index == cs.frame_index
    assert np.array_equal(back.assignment, cs.assignment)
    assert np.array_equal(back.point_indices, cs.point_indices)
    assert back.n_clusters == cs.n_clusters
    for a, b in zip(back.clusters, cs.clusters):
        assert np.array_equal(a.member_indices, b.member_indices)
        assert np.allclose(a.centroid, b.centroid)
