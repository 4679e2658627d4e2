"""Training losses on unit-normalized features, with analytic gradients.

Every term is the squared Euclidean distance between two unit vectors, so
each per-pair value lies in [0, 4]. Gradients flow through the
normalization on the online side only; the target side is treated as a
constant (its returned gradient is identically zero).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, PairIntegrityError
from .tracking import InterFramePairs

log = logging.getLogger(__name__)


def unit_rows(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-normalize; a zero-norm row means a degenerate encoder, fail fast."""
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=1)
    if np.any(norms == 0.0) or not np.all(np.isfinite(norms)):
        raise NumericalError("cannot unit-normalize zero or non-finite feature vector")
    return x / norms[:, None], norms


def paired_unit_sq_distances(online: np.ndarray, target: np.ndarray):
    """Rowwise ||online_hat - target_hat||^2 and gradient w.r.t. raw online.

    d/df ||f/|f| - t_hat||^2 = (-2/|f|) (t_hat - f_hat (f_hat . t_hat)).
    """
    f_hat, f_norm = unit_rows(online)
    t_hat, _ = unit_rows(target)
    dots = np.einsum("ij,ij->i", f_hat, t_hat)
    per_pair = np.einsum("ij,ij->i", f_hat - t_hat, f_hat - t_hat)
    grad = (-2.0 / f_norm)[:, None] * (t_hat - f_hat * dots[:, None])
    return per_pair, grad


@dataclass
class P2cResult:
    value: float
    pair_count: int
    grad_points: np.ndarray  # same shape as the online point features
    grad_clusters: dict[int, np.ndarray]  # identically zero (stop-gradient)
    skipped_clusters: list[int] = field(default_factory=list)


def point_to_cluster_loss(point_bank, cluster_bank) -> P2cResult:
    """Pull every point feature toward its cluster's pooled feature.

    ``point_bank`` holds per-point online features grouped by cluster;
    ``cluster_bank`` holds pooled target features. Clusters present on only
    one side (e.g. removed by the crop augmentation) are skipped and
    reported.
    """
    common = sorted(set(point_bank.groups) & set(cluster_bank.pooled))
    skipped = sorted(set(point_bank.groups) ^ set(cluster_bank.pooled))
    grad_points = np.zeros_like(point_bank.features)
    grad_clusters = {cid: np.zeros_like(cluster_bank.pooled[cid]) for cid in cluster_bank.pooled}
    if not common:
        return P2cResult(0.0, 0, grad_points, grad_clusters, skipped)

    rows = np.concatenate([point_bank.groups[cid] for cid in common])
    counts = [point_bank.groups[cid].shape[0] for cid in common]
    targets = np.repeat(
        np.stack([cluster_bank.pooled[cid] for cid in common]), counts, axis=0
    )
    per_pair, grad = paired_unit_sq_distances(point_bank.features[rows], targets)
    grad_points[rows] = grad
    return P2cResult(
        value=float(per_pair.sum()),
        pair_count=int(per_pair.shape[0]),
        grad_points=grad_points,
        grad_clusters=grad_clusters,
        skipped_clusters=skipped,
    )


@dataclass
class InterFrameResult:
    value: float
    pair_count: int
    grad_online: dict[int, np.ndarray]  # cluster id in frame m -> gradient
    grad_target: dict[int, np.ndarray]  # identically zero (stop-gradient)


def inter_frame_loss(
    pairs: InterFramePairs,
    online_pooled: dict[int, np.ndarray],
    target_pooled: dict[int, np.ndarray],
) -> InterFrameResult:
    """Pull pooled features of the same tracked cluster in two frames together.

    The online side is the first frame of ``pairs``; the target side is the
    second and receives no gradient."""
    missing = [
        (a, b)
        for a, b in pairs.matches
        if a not in online_pooled or b not in target_pooled
    ]
    if missing:
        raise PairIntegrityError(f"matched clusters without features: {missing}")
    if not pairs.matches:
        return InterFrameResult(0.0, 0, {}, {})
    online = np.stack([online_pooled[a] for a, _ in pairs.matches])
    target = np.stack([target_pooled[b] for _, b in pairs.matches])
    per_pair, grad = paired_unit_sq_distances(online, target)
    grad_online = {a: grad[k] for k, (a, _) in enumerate(pairs.matches)}
    grad_target = {b: np.zeros_like(target_pooled[b]) for _, b in pairs.matches}
    return InterFrameResult(
        value=float(per_pair.sum()),
        pair_count=len(pairs.matches),
        grad_online=grad_online,
        grad_target=grad_target,
    )


@dataclass
class LambdaSchedule:
    """Temporal-loss weight: early value, late value, and a ramp between."""

    early: float = 0.0
    late: float = 4.0
    ramp_start: float = 0.4
    ramp_end: float = 0.6
    mode: str = "linear"  # "linear" | "step"


def lambda_at(progress: float, schedule: LambdaSchedule) -> float:
    if progress < 0.0 or progress > 1.0:
        log.warning("training progress %.3f outside [0, 1]; clamping", progress)
        progress = min(1.0, max(0.0, progress))
    if progress <= schedule.ramp_start:
        return schedule.early
    if schedule.mode == "step":
        return schedule.late
    if progress >= schedule.ramp_end:
        return schedule.late
    t = (progress - schedule.ramp_start) / (schedule.ramp_end - schedule.ramp_start)
    return schedule.early + t * (schedule.late - schedule.early)


def total_loss(p2c: float, inter: float, weight: float) -> float:
    return p2c + weight * inter


@dataclass
class LossReport:
    p2c: float
    inter: float
    weight: float
    total: float
    point_pairs: int
    cluster_pairs: int

    @property
    def p2c_mean(self) -> float:
        return self.p2c / self.point_pairs if self.point_pairs else 0.0

    @property
    def inter_mean(self) -> float:
        return self.inter / self.cluster_pairs if self.cluster_pairs else 0.0

    def to_dict(self) -> dict:
        return {
            "p2c": self.p2c,
            "inter": self.inter,
            "weight": self.weight,
            "total": self.total,
            "point_pairs": self.point_pairs,
            "cluster_pairs": self.cluster_pairs,
            "p2c_mean": self.p2c_mean,
            "inter_mean": self.inter_mean,
        }


def make_report(p2c: float, inter: float, weight: float, point_pairs: int, cluster_pairs: int) -> LossReport:
    return LossReport(
        p2c=p2c,
        inter=inter,
        weight=weight,
        total=total_loss(p2c, inter, weight),
        point_pairs=point_pairs,
        cluster_pairs=cluster_pairs,
    )
