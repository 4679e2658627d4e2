"""Ground-plane removal: RANSAC plane fit and the ground/non-ground split."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientPointsError
from .rng import RANSAC, rng_stream
from .scene_io import Frame

DEFAULT_DIST_THRESHOLD = 0.25
DEFAULT_MAX_ITERS = 200
DEFAULT_MIN_INLIER_RATIO = 0.15
DEFAULT_MAX_TILT_DEG = 30.0


@dataclass
class PlaneModel:
    """Plane n.p + offset = 0 with unit normal oriented so normal.z >= 0."""

    normal: np.ndarray  # (3,) float64, unit
    offset: float
    inlier_count: int
    inlier_ratio: float

    def distances(self, points: np.ndarray) -> np.ndarray:
        return np.abs(points @ self.normal + self.offset)

    def height_above(self, points: np.ndarray) -> np.ndarray:
        return points @ self.normal + self.offset

    def tilt_deg(self) -> float:
        return math.degrees(math.acos(min(1.0, max(-1.0, float(self.normal[2])))))


@dataclass
class GroundSplit:
    ground_mask: np.ndarray  # (N,) bool
    non_ground_indices: np.ndarray  # (K,) int64

    @property
    def n_ground(self) -> int:
        return int(self.ground_mask.sum())


def _canonical(normal: np.ndarray) -> np.ndarray:
    n = normal / np.linalg.norm(normal)
    if n[2] < 0 or (n[2] == 0 and (n[1] < 0 or (n[1] == 0 and n[0] < 0))):
        n = -n
    return n


def fit_plane_ransac(
    frame: Frame,
    dist_threshold: float = DEFAULT_DIST_THRESHOLD,
    max_iters: int = DEFAULT_MAX_ITERS,
    min_inlier_ratio: float = DEFAULT_MIN_INLIER_RATIO,
    seed: int = 0,
    max_tilt_deg: float = DEFAULT_MAX_TILT_DEG,
) -> PlaneModel | None:
    """Best consensus plane over sampled 3-point hypotheses, then LS refit.

    Hypotheses tilted more than ``max_tilt_deg`` from vertical are rejected
    so walls cannot win. Returns None when the best consensus covers less
    than ``min_inlier_ratio`` of the frame (no ground found; the caller
    passes the frame through unsplit). Deterministic for a fixed seed.
    """
    if dist_threshold <= 0:
        raise ValueError("dist_threshold must be positive")
    pts = frame.xyz64()
    n = pts.shape[0]
    if n < 3:
        raise InsufficientPointsError(f"frame {frame.frame_index}: {n} points, need >= 3")
    rng = rng_stream(seed, RANSAC, frame.frame_index)
    min_cos = math.cos(math.radians(max_tilt_deg))

    best_count = 0
    best_normal: np.ndarray | None = None
    best_offset = 0.0
    for _ in range(max_iters):
        idx = rng.choice(n, size=3, replace=False)
        p0, p1, p2 = pts[idx]
        normal = np.cross(p1 - p0, p2 - p0)
        norm = np.linalg.norm(normal)
        if norm < 1e-12:
            continue  # collinear sample
        normal = _canonical(normal / norm)
        if normal[2] < min_cos:
            continue  # too far from vertical
        offset = -float(normal @ p0)
        count = int((np.abs(pts @ normal + offset) <= dist_threshold).sum())
        if count > best_count:
            best_count = count
            best_normal = normal
            best_offset = offset

    if best_normal is None or best_count / n < min_inlier_ratio:
        return None

    # Least-squares refit on the consensus inliers; keep the consensus
    # plane if the refit loses inliers or drifts past the tilt limit.
    inliers = np.abs(pts @ best_normal + best_offset) <= dist_threshold
    sub = pts[inliers]
    centroid = sub.mean(axis=0)
    _, _, vt = np.linalg.svd(sub - centroid, full_matrices=False)
    refit_normal = _canonical(vt[2])
    refit_offset = -float(refit_normal @ centroid)
    refit_count = int((np.abs(pts @ refit_normal + refit_offset) <= dist_threshold).sum())
    if refit_count >= best_count and refit_normal[2] >= min_cos:
        normal, offset, count = refit_normal, refit_offset, refit_count
    else:
        normal, offset, count = best_normal, best_offset, best_count
    return PlaneModel(
        normal=normal,
        offset=offset,
        inlier_count=count,
        inlier_ratio=count / n,
    )


def split_ground(
    frame: Frame,
    plane: PlaneModel | None,
    dist_threshold: float = DEFAULT_DIST_THRESHOLD,
    max_tilt_deg: float = DEFAULT_MAX_TILT_DEG,
) -> GroundSplit:
    """Partition the frame: ground iff within threshold of a near-vertical plane.

    With no plane (RANSAC found no ground) everything is non-ground, so the
    masks always partition the frame exactly.
    """
    n = frame.n_points
    if plane is None or plane.tilt_deg() > max_tilt_deg:
        mask = np.zeros(n, dtype=bool)
    else:
        mask = plane.distances(frame.xyz64()) <= dist_threshold
    return GroundSplit(
        ground_mask=mask,
        non_ground_indices=np.flatnonzero(~mask).astype(np.int64),
    )
