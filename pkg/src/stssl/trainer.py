"""Desk-scale training loop over mined pairs.

Each step draws a frame pair (m, n = m + interval), builds two augmented
views per frame, and optimizes the point-to-cluster loss on both frames
plus the weighted inter-frame loss on tracked cluster pairs. The online
network is updated with SGD-momentum and decoupled weight decay; the
target network follows by exponential moving average. When the temporal
weight first becomes nonzero, the projector and predictor are
re-initialized (once) and the run enters its second stage.

Runs are pure functions of (config, data, seed): logs and checkpoints are
byte-identical across repeats, and resuming from a checkpoint replays the
exact uninterrupted trajectory.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .clustering import ClusterSet, purity
from .config import Config
from .encoder import (
    ByolState,
    FeatureBank,
    accumulate_grads,
    augment,
    backprop_online,
    ema_update,
    group_and_pool,
    init_byol,
    online_point_features,
    point_descriptors,
    reinit_heads,
    target_point_features,
    zero_online_grads,
)
from .errors import ConfigError
from .kmeans import KMeansResult, best_permutation_agreement, kmeans
from .losses import (
    LossReport,
    inter_frame_loss,
    lambda_at,
    make_report,
    point_to_cluster_loss,
)
from .pipeline import PipelineResult, preprocess_sequence
from .rng import AUG, INIT, KMEANS, SAMPLE, generator_state, restore_generator, rng_stream
from .scene_io import Frame, FrameSequence
from .tracking import InterFramePairs, pairs_between

STAGE_SPATIAL = "spatial_only"
STAGE_SPATIOTEMPORAL = "spatiotemporal"


@dataclass
class TrainState:
    byol: ByolState
    momentum_buffers: dict[str, list[np.ndarray]]
    step: int
    total_steps: int
    stage: str
    rng_aug: np.random.Generator
    rng_sample: np.random.Generator
    rng_init: np.random.Generator


def _zero_buffers_like(byol: ByolState) -> dict[str, list[np.ndarray]]:
    return {
        "encoder": [np.zeros_like(p) for p in byol.online_encoder.param_list()],
        "projector": [np.zeros_like(p) for p in byol.online_projector.param_list()],
        "predictor": [np.zeros_like(p) for p in byol.online_predictor.param_list()],
    }


def init_train_state(cfg: Config, total_steps: int) -> TrainState:
    rng_init = rng_stream(cfg.seed, INIT)
    byol = init_byol(cfg.encoder, rng_init, momentum=cfg.byol.momentum)
    return TrainState(
        byol=byol,
        momentum_buffers=_zero_buffers_like(byol),
        step=0,
        total_steps=total_steps,
        stage=STAGE_SPATIAL,
        rng_aug=rng_stream(cfg.seed, AUG),
        rng_sample=rng_stream(cfg.seed, SAMPLE),
        rng_init=rng_init,
    )


def lr_at(progress: float, cfg: Config) -> float:
    """Linear anneal from lr_init to lr_min over training progress."""
    progress = min(1.0, max(0.0, progress))
    return cfg.train.lr_init + (cfg.train.lr_min - cfg.train.lr_init) * progress


def _progress(state: TrainState) -> float:
    return state.step / max(state.total_steps - 1, 1)


def _identity_pairs(cluster_set: ClusterSet, frame: int) -> InterFramePairs:
    return InterFramePairs(
        frame_m=frame,
        frame_n=frame,
        matches=[(c.cluster_id, c.cluster_id) for c in cluster_set.clusters],
    )


def _available_matches(pairs: InterFramePairs, online: FeatureBank, target: FeatureBank) -> InterFramePairs:
    # Clusters clipped out of a view carry no features; drop those matches.
    kept = [(a, b) for a, b in pairs.matches if a in online.pooled and b in target.pooled]
    return InterFramePairs(frame_m=pairs.frame_m, frame_n=pairs.frame_n, matches=kept)


def train_step(
    state: TrainState, pre: PipelineResult, cfg: Config, frame_m: int, frame_n: int
) -> tuple[LossReport, bool]:
    """One optimization step on the frame pair; returns (report, skipped)."""
    schedule = cfg.lambda_schedule()
    progress = _progress(state)
    weight = lambda_at(progress, schedule)
    if state.stage == STAGE_SPATIAL and weight > 0.0:
        reinit_heads(state.byol, cfg.encoder, state.rng_init)
        state.momentum_buffers["projector"] = [
            np.zeros_like(p) for p in state.byol.online_projector.param_list()
        ]
        state.momentum_buffers["predictor"] = [
            np.zeros_like(p) for p in state.byol.online_predictor.param_list()
        ]
        state.stage = STAGE_SPATIOTEMPORAL

    frames = [frame_m] if frame_m == frame_n else [frame_m, frame_n]
    views: dict[int, tuple] = {}
    for f in frames:
        art = pre.frames[f]
        cs = art.cluster_set
        pts = art.frame.xyz64()[cs.point_indices]
        views[f] = (
            augment(pts, cs.assignment, cfg.aug, state.rng_aug),
            augment(pts, cs.assignment, cfg.aug, state.rng_aug),
        )

    online_z: dict[tuple, np.ndarray] = {}
    caches: dict[tuple, tuple] = {}
    grad_z: dict[tuple, np.ndarray] = {}
    online_banks: dict[tuple, FeatureBank] = {}
    target_banks: dict[tuple, FeatureBank] = {}
    for f in frames:
        plane = pre.frames[f].plane
        for v in (0, 1):
            view = views[f][v]
            desc = point_descriptors(view.points, plane)
            z, cache = online_point_features(state.byol, desc)
            t = target_point_features(state.byol, desc)
            key = (f, v)
            online_z[key] = z
            caches[key] = cache
            grad_z[key] = np.zeros_like(z)
            online_banks[key] = group_and_pool(z, view.assignment, view=str(v), network="online")
            target_banks[key] = group_and_pool(t, view.assignment, view=str(v), network="target")

    # point-to-cluster, each view once as point side and once as cluster
    # side, averaged
    p2c_value = 0.0
    point_pairs = 0
    for f in frames:
        r01 = point_to_cluster_loss(online_banks[(f, 0)], target_banks[(f, 1)])
        r10 = point_to_cluster_loss(online_banks[(f, 1)], target_banks[(f, 0)])
        p2c_value += 0.5 * (r01.value + r10.value)
        grad_z[(f, 0)] += 0.5 * r01.grad_points
        grad_z[(f, 1)] += 0.5 * r10.grad_points
        point_pairs += (r01.pair_count + r10.pair_count) // 2

    # inter-frame on the cluster views, symmetrized across the two frames
    if frame_m == frame_n:
        pairs_mn = _identity_pairs(pre.frames[frame_m].cluster_set, frame_m)
    else:
        pairs_mn = pairs_between(pre.trajectories, frame_m, frame_n)
    inter_value = 0.0
    cluster_pairs = 0
    if pairs_mn.count:
        dim = online_z[(frame_m, 1)].shape[1]
        cols = np.arange(dim)
        for direction, onl_key, tgt_key in (
            (pairs_mn, (frame_m, 1), (frame_n, 1)),
            (pairs_mn.swapped(), (frame_n, 1), (frame_m, 1)),
        ):
            bank = online_banks[onl_key]
            usable = _available_matches(direction, bank, target_banks[tgt_key])
            res = inter_frame_loss(usable, bank.pooled, target_banks[tgt_key].pooled)
            inter_value += 0.5 * res.value
            cluster_pairs += res.pair_count
            for cid, gvec in res.grad_online.items():
                rows = bank.pool_argmax[cid]
                np.add.at(grad_z[onl_key], (rows, cols), 0.5 * weight * gvec)
        cluster_pairs //= 2

    report = make_report(p2c_value, inter_value, weight, point_pairs, cluster_pairs)
    skipped = point_pairs == 0 and cluster_pairs == 0
    if not skipped:
        grads = zero_online_grads(state.byol)
        for key, g in grad_z.items():
            if np.any(g):
                accumulate_grads(grads, backprop_online(state.byol, caches[key], g))
        lr = lr_at(progress, cfg)
        mu = cfg.train.sgd_momentum
        wd = cfg.train.weight_decay
        for net in ("encoder", "projector", "predictor"):
            net_params = getattr(state.byol, f"online_{net}").param_list()
            for p, g, buf in zip(net_params, grads[net], state.momentum_buffers[net]):
                buf *= mu
                buf += g
                p -= lr * buf
                p -= lr * wd * p
        ema_update(state.byol)
    state.step += 1
    return report, skipped


# ---------------------------------------------------------------------------
# checkpoints


def _tensor_table(state: TrainState) -> list[tuple[str, np.ndarray]]:
    table = []
    nets = (
        ("online_encoder", state.byol.online_encoder),
        ("online_projector", state.byol.online_projector),
        ("online_predictor", state.byol.online_predictor),
        ("target_encoder", state.byol.target_encoder),
        ("target_projector", state.byol.target_projector),
    )
    for name, net in nets:
        for i, (w, b) in enumerate(zip(net.weights, net.biases)):
            table.append((f"{name}.w{i}", w))
            table.append((f"{name}.b{i}", b))
    for net_name in ("encoder", "projector", "predictor"):
        for i, buf in enumerate(state.momentum_buffers[net_name]):
            table.append((f"momentum.{net_name}.{i}", buf))
    return table


def save_checkpoint(prefix: str | Path, state: TrainState, cfg: Config) -> Path:
    """Write ``<prefix>.bin`` (flat float64 blob) and ``<prefix>.json``."""
    prefix = Path(prefix)
    table = _tensor_table(state)
    blob = b"".join(np.ascontiguousarray(t, dtype="<f8").tobytes() for _, t in table)
    manifest = {
        "format": 1,
        "step": state.step,
        "total_steps": state.total_steps,
        "stage": state.stage,
        "tensors": [{"name": name, "shape": list(t.shape)} for name, t in table],
        "rng": {
            "aug": generator_state(state.rng_aug),
            "sample": generator_state(state.rng_sample),
            "init": generator_state(state.rng_init),
        },
        "config": cfg.to_dict(),
    }
    prefix.parent.mkdir(parents=True, exist_ok=True)
    Path(f"{prefix}.bin").write_bytes(blob)
    Path(f"{prefix}.json").write_text(json.dumps(manifest, sort_keys=True))
    return prefix


def load_checkpoint(prefix: str | Path) -> tuple[TrainState, Config]:
    prefix = Path(prefix)
    manifest = json.loads(Path(f"{prefix}.json").read_text())
    if manifest.get("format") != 1:
        raise ConfigError(f"unsupported checkpoint format in {prefix}.json")
    blob = Path(f"{prefix}.bin").read_bytes()
    cfg = Config.from_dict(manifest["config"])
    state = init_train_state(cfg, manifest["total_steps"])
    offset = 0
    arrays = []
    for entry in manifest["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset).reshape(shape).copy()
        offset += count * 8
        arrays.append(arr)
    for (name, tensor), arr in zip(_tensor_table(state), arrays, strict=True):
        if tensor.shape != arr.shape:
            raise ConfigError(f"checkpoint tensor {name} has shape {arr.shape}, expected {tensor.shape}")
        tensor[...] = arr
    state.step = manifest["step"]
    state.stage = manifest["stage"]
    state.rng_aug = restore_generator(manifest["rng"]["aug"])
    state.rng_sample = restore_generator(manifest["rng"]["sample"])
    state.rng_init = restore_generator(manifest["rng"]["init"])
    return state, cfg


# ---------------------------------------------------------------------------
# analysis helpers


def extract_point_features(byol: ByolState, frame: Frame, plane, indices: np.ndarray | None = None) -> np.ndarray:
    """Backbone (online encoder) features for analysis and evaluation."""
    pts = frame.xyz64()
    if indices is not None:
        pts = pts[indices]
    return byol.online_encoder.forward(point_descriptors(pts, plane))


def cluster_features_for_tracking(byol: ByolState, frame: Frame, cluster_set: ClusterSet, plane) -> np.ndarray:
    """Pooled target-side features per cluster, for the tracking cost."""
    pts = frame.xyz64()[cluster_set.point_indices]
    feats = target_point_features(byol, point_descriptors(pts, plane))
    bank = group_and_pool(feats, cluster_set.assignment, network="target")
    return np.stack([bank.pooled[c.cluster_id] for c in cluster_set.clusters])


def kmeans_feature_analysis(features: np.ndarray, k: int, seed: int) -> KMeansResult:
    """Cluster point features to inspect how the embedding space is organized."""
    features = np.asarray(features, dtype=np.float64)
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > features.shape[0]:
        raise ValueError(f"k={k} exceeds sample count {features.shape[0]}")
    return kmeans(features, k, rng_stream(seed, KMEANS))


# ---------------------------------------------------------------------------
# full run


@dataclass
class RunResult:
    checkpoint_prefix: Path
    log_path: Path
    metrics_path: Path
    metrics: dict = field(default_factory=dict)


def run(
    cfg: Config,
    seq: FrameSequence,
    out_dir: str | Path,
    pre: PipelineResult | None = None,
    resume_from: str | Path | None = None,
) -> RunResult:
    """Full training run; emits a JSONL log, checkpoints, and metrics."""
    cfg.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if len(seq) == 0:
        raise ConfigError("cannot train on an empty sequence")
    if pre is None:
        pre = preprocess_sequence(seq, cfg)
    T = len(seq)
    total_steps = cfg.train.epochs * T

    if resume_from is not None:
        state, _ = load_checkpoint(resume_from)
        if state.total_steps != total_steps:
            raise ConfigError(
                f"checkpoint was trained for {state.total_steps} steps, config wants {total_steps}"
            )
    else:
        state = init_train_state(cfg, total_steps)

    log_path = out_dir / "training_log.jsonl"
    with open(log_path, "a" if resume_from is not None else "w") as logf:
        while state.step < state.total_steps:
            progress = _progress(state)
            interval = min(int(progress * cfg.track.max_interval), T - 1)
            frame_m = int(state.rng_sample.integers(0, T - interval))
            frame_n = frame_m + interval
            step_index = state.step
            lr = lr_at(progress, cfg)
            report, skipped = train_step(state, pre, cfg, frame_m, frame_n)
            record = {
                "step": step_index,
                "lr": lr,
                "stage": state.stage,
                "interval": interval,
                "frame_m": frame_m,
                "frame_n": frame_n,
                "skipped": skipped,
                **report.to_dict(),
            }
            logf.write(json.dumps(record, sort_keys=True) + "\n")
            if (
                cfg.train.checkpoint_every > 0
                and state.step % cfg.train.checkpoint_every == 0
                and state.step < state.total_steps
            ):
                save_checkpoint(out_dir / f"checkpoint_step{state.step:06d}", state, cfg)

    final_prefix = save_checkpoint(out_dir / "checkpoint_final", state, cfg)
    from .tracking import save_trajectories

    save_trajectories(pre.trajectories, out_dir / "trajectories.json")
    metrics = _end_of_run_metrics(state, pre, cfg)
    metrics_path = out_dir / "metrics.json"
    metrics_path.write_text(json.dumps(metrics, sort_keys=True, indent=2))
    return RunResult(
        checkpoint_prefix=final_prefix,
        log_path=log_path,
        metrics_path=metrics_path,
        metrics=metrics,
    )


def _end_of_run_metrics(state: TrainState, pre: PipelineResult, cfg: Config) -> dict:
    from .tracking import tracking_stats

    stats = tracking_stats(pre.trajectories)
    metrics: dict = {
        "tracking": {str(k): v for k, v in stats.items()},
        "n_trajectories": len(pre.trajectories),
    }

    purity_values = []
    for art in pre.frames:
        if art.frame.labels is not None and art.cluster_set.n_clusters:
            purity_values.append(purity(art.cluster_set, art.frame.labels).proportion_pure)
    metrics["purity_proportion"] = (
        float(np.mean(purity_values)) if purity_values else None
    )

    last = pre.frames[-1]
    clustered = last.cluster_set.point_indices[last.cluster_set.assignment >= 0]
    if clustered.size:
        feats = extract_point_features(state.byol, last.frame, last.plane, clustered)
        if last.frame.labels is not None:
            k = int(np.unique(last.frame.labels[clustered, 0]).size)
        else:
            k = min(20, feats.shape[0])
        k = max(1, min(k, feats.shape[0]))
        km = kmeans_feature_analysis(feats, k, cfg.seed)
        metrics["kmeans"] = {"k": k, "inertia": km.inertia, "n_iter": km.n_iter}
        if last.frame.labels is not None:
            agreement = best_permutation_agreement(km.labels, last.frame.labels[clustered, 0])
            metrics["kmeans"]["instance_agreement"] = agreement
    else:
        metrics["kmeans"] = None
    return metrics
