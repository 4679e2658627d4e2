"""Over-segmentation of non-ground points and cluster bookkeeping.

DBSCAN with a small distance threshold deliberately over-segments: each
cluster is then very likely single-object, which is what the downstream
point-to-cluster pairs rely on. Clusters outside the size bounds are
demoted to noise and at most ``max_clusters`` survive per frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import LabelsUnavailableError
from .ground import GroundSplit
from .scene_io import Frame

NOISE = _kernels.NOISE


@dataclass
class ClusterConfig:
    eps: float = 0.25  # 0.5 for the sparser "nuscene" profile
    min_pts: int = 10
    min_size: int = 200
    max_size: int = 20000
    max_clusters: int = 50


@dataclass
class Cluster:
    cluster_id: int
    member_indices: np.ndarray  # frame-level point indices, ascending
    centroid: np.ndarray  # (3,) float64

    @property
    def size(self) -> int:
        return int(self.member_indices.shape[0])


@dataclass
class ClusterSet:
    frame_index: int
    n_frame_points: int
    point_indices: np.ndarray  # frame indices of the non-ground points
    assignment: np.ndarray  # per non-ground point: dense cluster id or NOISE
    clusters: list[Cluster] = field(default_factory=list)

    @property
    def n_clusters(self) -> int:
        return len(self.clusters)

    def centroids(self) -> np.ndarray:
        if not self.clusters:
            return np.zeros((0, 3))
        return np.stack([c.centroid for c in self.clusters])

    def to_dict(self) -> dict:
        non_ground = np.zeros(self.n_frame_points, dtype=np.int64)
        non_ground[self.point_indices] = 1
        return {
            "frame_index": self.frame_index,
            "n_frame_points": self.n_frame_points,
            "non_ground_rle": rle_encode(non_ground),
            "assignment_rle": rle_encode(self.assignment),
            "centroids": [c.centroid.tolist() for c in self.clusters],
            "sizes": [c.size for c in self.clusters],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClusterSet":
        non_ground = rle_decode(d["non_ground_rle"])
        point_indices = np.flatnonzero(non_ground).astype(np.int64)
        assignment = rle_decode(d["assignment_rle"])
        clusters = []
        for cid, centroid in enumerate(d["centroids"]):
            members = point_indices[assignment == cid]
            clusters.append(
                Cluster(cluster_id=cid, member_indices=members, centroid=np.asarray(centroid))
            )
        return cls(
            frame_index=d["frame_index"],
            n_frame_points=d["n_frame_points"],
            point_indices=point_indices,
            assignment=assignment,
            clusters=clusters,
        )


def rle_encode(values: np.ndarray) -> list[list[int]]:
    values = np.asarray(values, dtype=np.int64)
    if values.size == 0:
        return []
    change = np.flatnonzero(values[1:] != values[:-1]) + 1
    starts = np.concatenate([[0], change])
    ends = np.concatenate([change, [values.size]])
    return [[int(values[s]), int(e - s)] for s, e in zip(starts, ends)]


def rle_decode(runs: list[list[int]]) -> np.ndarray:
    if not runs:
        return np.zeros(0, dtype=np.int64)
    return np.concatenate([np.full(count, value, dtype=np.int64) for value, count in runs])


def dbscan(points: np.ndarray, eps: float, min_pts: int) -> np.ndarray:
    """Raw density clustering; -1 marks noise. Deterministic in point order."""
    return _kernels.dbscan_labels(points, eps, min_pts)


def filter_clusters(
    raw_labels: np.ndarray,
    points: np.ndarray,
    point_indices: np.ndarray,
    frame_index: int,
    cfg: ClusterConfig,
    n_frame_points: int,
) -> ClusterSet:
    """Apply size bounds, cap the cluster count, and reindex densely.

    Clusters smaller than ``min_size`` or larger than ``max_size`` are
    demoted to noise (the bounds themselves are kept). If more survive than
    ``max_clusters``, the largest win (ties to the lower original id).
    Survivors are reindexed 0..M-1 by descending size.
    """
    raw_labels = np.asarray(raw_labels, dtype=np.int64)
    assignment = np.full(raw_labels.shape[0], NOISE, dtype=np.int64)
    ids, counts = np.unique(raw_labels[raw_labels >= 0], return_counts=True)
    keep = (counts >= cfg.min_size) & (counts <= cfg.max_size)
    survivors = sorted(zip(ids[keep], counts[keep]), key=lambda t: (-t[1], t[0]))
    survivors = survivors[: cfg.max_clusters]

    clusters = []
    for new_id, (old_id, _) in enumerate(survivors):
        rows = np.flatnonzero(raw_labels == old_id)
        assignment[rows] = new_id
        members = np.asarray(point_indices)[rows]
        clusters.append(
            Cluster(
                cluster_id=new_id,
                member_indices=np.sort(members).astype(np.int64),
                centroid=points[rows].astype(np.float64).mean(axis=0),
            )
        )
    return ClusterSet(
        frame_index=frame_index,
        n_frame_points=n_frame_points,
        point_indices=np.asarray(point_indices, dtype=np.int64),
        assignment=assignment,
        clusters=clusters,
    )


def cluster_frame(frame: Frame, split: GroundSplit, cfg: ClusterConfig) -> ClusterSet:
    """Ground removal output -> filtered per-frame segmentation."""
    idx = split.non_ground_indices
    pts = frame.xyz64()[idx]
    raw = dbscan(pts, cfg.eps, cfg.min_pts)
    return filter_clusters(raw, pts, idx, frame.frame_index, cfg, frame.n_points)


@dataclass
class PurityReport:
    fractions: np.ndarray  # per cluster, dominant-class share
    dominant_class: np.ndarray
    proportion_pure: float  # share of clusters with fraction >= threshold
    threshold: float


def purity(cluster_set: ClusterSet, labels: np.ndarray | None, threshold: float = 0.9) -> PurityReport:
    """Dominant-class share per cluster; needs per-point class labels."""
    if labels is None:
        raise LabelsUnavailableError("purity needs per-point class labels (synthetic data)")
    class_ids = np.asarray(labels)
    if class_ids.ndim == 2:
        class_ids = class_ids[:, 1]
    fractions = np.zeros(cluster_set.n_clusters)
    dominant = np.zeros(cluster_set.n_clusters, dtype=np.int64)
    for c in cluster_set.clusters:
        values, counts = np.unique(class_ids[c.member_indices], return_counts=True)
        top = int(np.argmax(counts))
        fractions[c.cluster_id] = counts[top] / c.size
        dominant[c.cluster_id] = values[top]
    proportion = float((fractions >= threshold).mean()) if cluster_set.n_clusters else 1.0
    return PurityReport(
        fractions=fractions,
        dominant_class=dominant,
        proportion_pure=proportion,
        threshold=threshold,
    )
