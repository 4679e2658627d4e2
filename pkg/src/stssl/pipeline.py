"""Per-sequence preprocessing: ground removal, clustering, tracking."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .clustering import ClusterSet, cluster_frame
from .config import Config
from .ground import GroundSplit, PlaneModel, fit_plane_ransac, split_ground
from .scene_io import Frame, FrameSequence
from .tracking import InterFramePairs, MatchConfig, Trajectory, track_sequence


@dataclass
class FrameArtifacts:
    frame: Frame
    plane: PlaneModel | None
    split: GroundSplit
    cluster_set: ClusterSet


@dataclass
class PipelineResult:
    frames: list[FrameArtifacts]
    trajectories: list[Trajectory]
    adjacent_pairs: list[InterFramePairs]

    @property
    def cluster_sets(self) -> list[ClusterSet]:
        return [f.cluster_set for f in self.frames]


def match_config(cfg: Config) -> MatchConfig:
    return MatchConfig(
        alpha=cfg.track.alpha,
        gate=cfg.track.gate_m,
        feature_mode=cfg.track.feature_mode,
    )


def preprocess_sequence(
    seq: FrameSequence,
    cfg: Config,
    cluster_features: Callable[[Frame, ClusterSet], np.ndarray] | None = None,
) -> PipelineResult:
    """Ground removal, clustering, and tracking for a whole sequence.

    ``cluster_features`` supplies per-cluster feature vectors when tracking
    should combine location with feature distance (an encoder checkpoint);
    without it the tracker must run in location-only mode.
    """
    artifacts = []
    for frame in seq.frames:
        plane = fit_plane_ransac(
            frame,
            dist_threshold=cfg.ransac.dist_threshold,
            max_iters=cfg.ransac.max_iters,
            min_inlier_ratio=cfg.ransac.min_inlier_ratio,
            seed=cfg.seed,
            max_tilt_deg=cfg.ransac.max_tilt_deg,
        )
        split = split_ground(frame, plane, cfg.ransac.dist_threshold, cfg.ransac.max_tilt_deg)
        cluster_set = cluster_frame(frame, split, cfg.cluster_config())
        artifacts.append(FrameArtifacts(frame=frame, plane=plane, split=split, cluster_set=cluster_set))

    feats = None
    if cluster_features is not None:
        feats = [cluster_features(a.frame, a.cluster_set) for a in artifacts]
    trajectories, adjacent = track_sequence(
        [a.cluster_set for a in artifacts], match_config(cfg), feats
    )
    return PipelineResult(frames=artifacts, trajectories=trajectories, adjacent_pairs=adjacent)
