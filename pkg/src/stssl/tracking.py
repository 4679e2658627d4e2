"""Cross-frame cluster association and trajectory lifecycle.

Adjacent frames are matched by solving a min-cost assignment on a combined
cost: Euclidean distance between cluster centroids plus ``alpha`` times the
Euclidean distance between unit-normalized cluster features. Matches more
expensive than the gate are dissolved; unmatched new clusters are born as
trajectories and unmatched old trajectories are closed immediately.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .clustering import ClusterSet
from .errors import NumericalError, PairIntegrityError

LOCATION_ONLY = "location_only"
LOCATION_PLUS_FEATURE = "location_plus_feature"


@dataclass
class MatchConfig:
    alpha: float = 0.5  # weight of the feature distance against meters
    gate: float = 3.0  # max admissible combined cost for a valid match
    feature_mode: str = LOCATION_ONLY


@dataclass
class MatchMatrix:
    loc: np.ndarray  # centroid distances, meters
    feat: np.ndarray  # unit-feature distances, in [0, 2]
    cost: np.ndarray  # loc + alpha * feat


@dataclass
class InterFramePairs:
    frame_m: int
    frame_n: int
    matches: list[tuple[int, int]] = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.matches)

    def swapped(self) -> "InterFramePairs":
        return InterFramePairs(
            frame_m=self.frame_n,
            frame_n=self.frame_m,
            matches=[(b, a) for a, b in self.matches],
        )


def _unit_rows(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise NumericalError("zero-norm cluster feature")
    return x / norms


def _pairwise_euclidean(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)


def build_match_matrix(
    set_a: ClusterSet,
    set_b: ClusterSet,
    cfg: MatchConfig,
    feats_a: np.ndarray | None = None,
    feats_b: np.ndarray | None = None,
) -> MatchMatrix:
    """Combined association cost between two frames' clusters."""
    loc = _pairwise_euclidean(set_a.centroids(), set_b.centroids())
    if cfg.feature_mode == LOCATION_PLUS_FEATURE:
        if feats_a is None or feats_b is None:
            raise ValueError("feature_mode=location_plus_feature requires cluster features")
        if feats_a.shape[0] != set_a.n_clusters or feats_b.shape[0] != set_b.n_clusters:
            raise ValueError("cluster feature count does not match cluster sets")
        feat = _pairwise_euclidean(_unit_rows(feats_a), _unit_rows(feats_b))
    else:
        feat = np.zeros_like(loc)
    return MatchMatrix(loc=loc, feat=feat, cost=loc + cfg.alpha * feat)


def hungarian(cost: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Optimal injective assignment covering min(rows, cols)."""
    return _kernels.solve_lsap(cost)


def gate_and_match(
    matrix: MatchMatrix, frame_m: int, frame_n: int, cfg: MatchConfig
) -> InterFramePairs:
    """Assignment followed by gating: pairs costlier than the gate dissolve."""
    cost = matrix.cost
    if cost.size == 0:
        return InterFramePairs(frame_m=frame_m, frame_n=frame_n, matches=[])
    rows, cols = hungarian(cost)
    matches = [
        (int(i), int(j)) for i, j in zip(rows, cols) if cost[i, j] <= cfg.gate
    ]
    matches.sort()
    return InterFramePairs(frame_m=frame_m, frame_n=frame_n, matches=matches)


@dataclass
class Trajectory:
    traj_id: int
    birth_frame: int
    clusters: list[int]  # cluster id per frame, consecutive from birth_frame
    alive: bool = True

    @property
    def length(self) -> int:
        return len(self.clusters)

    @property
    def last_frame(self) -> int:
        return self.birth_frame + len(self.clusters) - 1

    def cluster_at(self, frame: int) -> int | None:
        k = frame - self.birth_frame
        if 0 <= k < len(self.clusters):
            return self.clusters[k]
        return None

    def covers(self, frame: int) -> bool:
        return self.birth_frame <= frame <= self.last_frame


@dataclass
class TrackState:
    frame: int
    trajectories: list[Trajectory] = field(default_factory=list)
    live: dict[int, Trajectory] = field(default_factory=dict)  # cluster id -> traj


def start_tracking(first_set: ClusterSet) -> TrackState:
    state = TrackState(frame=first_set.frame_index)
    for c in first_set.clusters:
        traj = Trajectory(traj_id=len(state.trajectories), birth_frame=first_set.frame_index,
                          clusters=[c.cluster_id])
        state.trajectories.append(traj)
        state.live[c.cluster_id] = traj
    return state


def update_trajectories(state: TrackState, pairs: InterFramePairs, next_set: ClusterSet) -> TrackState:
    """One tracking step: extend matched, close vanished, create appeared."""
    if pairs.frame_m != state.frame or pairs.frame_n != next_set.frame_index:
        raise PairIntegrityError(
            f"pairs for frames ({pairs.frame_m}, {pairs.frame_n}) do not fit state at "
            f"frame {state.frame} -> {next_set.frame_index}"
        )
    seen_m, seen_n = set(), set()
    for a, b in pairs.matches:
        if a not in state.live:
            raise PairIntegrityError(f"unknown cluster {a} in frame {pairs.frame_m}")
        if not 0 <= b < next_set.n_clusters:
            raise PairIntegrityError(f"unknown cluster {b} in frame {pairs.frame_n}")
        if a in seen_m or b in seen_n:
            raise PairIntegrityError("matches are not injective")
        seen_m.add(a)
        seen_n.add(b)

    new_live: dict[int, Trajectory] = {}
    for a, b in pairs.matches:
        traj = state.live[a]
        traj.clusters.append(b)
        new_live[b] = traj
    for a, traj in state.live.items():
        if a not in seen_m:
            traj.alive = False
    for c in next_set.clusters:
        if c.cluster_id not in new_live:
            traj = Trajectory(
                traj_id=len(state.trajectories),
                birth_frame=next_set.frame_index,
                clusters=[c.cluster_id],
            )
            state.trajectories.append(traj)
            new_live[c.cluster_id] = traj
    state.live = new_live
    state.frame = next_set.frame_index
    return state


def track_sequence(
    cluster_sets: list[ClusterSet],
    cfg: MatchConfig,
    features: list[np.ndarray] | None = None,
) -> tuple[list[Trajectory], list[InterFramePairs]]:
    """Fold association over consecutive frames; single-writer by design."""
    if not cluster_sets:
        return [], []
    state = start_tracking(cluster_sets[0])
    adjacent = []
    for k in range(len(cluster_sets) - 1):
        set_a, set_b = cluster_sets[k], cluster_sets[k + 1]
        fa = features[k] if features is not None else None
        fb = features[k + 1] if features is not None else None
        matrix = build_match_matrix(set_a, set_b, cfg, fa, fb)
        pairs = gate_and_match(matrix, set_a.frame_index, set_b.frame_index, cfg)
        state = update_trajectories(state, pairs, set_b)
        adjacent.append(pairs)
    for traj in state.live.values():
        traj.alive = False  # sequence ended
    return state.trajectories, adjacent


def tracking_stats(trajectories: list[Trajectory], ks: tuple[int, ...] = (3, 8)) -> dict[int, float]:
    """Fraction of trajectories observed for at least k frames, per k."""
    if not trajectories:
        return {k: 0.0 for k in ks}
    lengths = np.array([t.length for t in trajectories])
    return {k: float((lengths >= k).mean()) for k in ks}


def trajectory_lengths(trajectories: list[Trajectory]) -> np.ndarray:
    return np.array([t.length for t in trajectories], dtype=np.int64)


def pairs_between(trajectories: list[Trajectory], frame_m: int, frame_n: int) -> InterFramePairs:
    """Matched cluster pairs (one per trajectory covering both frames)."""
    matches = []
    for traj in trajectories:
        a = traj.cluster_at(frame_m)
        b = traj.cluster_at(frame_n)
        if a is not None and b is not None:
            matches.append((a, b))
    matches.sort()
    return InterFramePairs(frame_m=frame_m, frame_n=frame_n, matches=matches)


def emit_interframe_pairs(
    trajectories: list[Trajectory], interval: int, n_frames: int
) -> list[InterFramePairs]:
    """Positive pairs for every frame pair (t, t + interval).

    Interval 0 yields self-pairs (the same frame's clusters, to be compared
    across its two augmented views). An interval longer than the sequence
    yields nothing.
    """
    if interval < 0:
        raise ValueError("interval must be >= 0")
    out = []
    for t in range(0, n_frames - interval):
        pairs = pairs_between(trajectories, t, t + interval)
        if pairs.count:
            out.append(pairs)
    return out


def trajectories_to_json(trajectories: list[Trajectory]) -> list[dict]:
    return [
        {
            "traj_id": t.traj_id,
            "birth_frame": t.birth_frame,
            "observations": [[t.birth_frame + k, cid] for k, cid in enumerate(t.clusters)],
        }
        for t in trajectories
    ]


def trajectories_from_json(data: list[dict]) -> list[Trajectory]:
    out = []
    for d in data:
        clusters = [cid for _, cid in d["observations"]]
        out.append(
            Trajectory(
                traj_id=d["traj_id"],
                birth_frame=d["birth_frame"],
                clusters=clusters,
                alive=False,
            )
        )
    return out


def save_trajectories(trajectories: list[Trajectory], path: str | Path) -> None:
    Path(path).write_text(json.dumps(trajectories_to_json(trajectories)))


def load_trajectories(path: str | Path) -> list[Trajectory]:
    return trajectories_from_json(json.loads(Path(path).read_text()))
