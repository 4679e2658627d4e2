"""Command line entry points.

Subcommands: synth, segment, track, mine-pairs, train-toy, eval-purity,
report. Config keys are set with repeated ``--set section.key=value``
flags or a ``--config file.json``; ``STSSL_SEED`` overrides every seed.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .clustering import ClusterSet
from .config import Config
from .errors import StsslError
from .pipeline import preprocess_sequence
from .scene_io import load_sequence, save_sequence
from .synth import generate_synthetic, preset_scene
from .tracking import (
    LOCATION_PLUS_FEATURE,
    emit_interframe_pairs,
    load_trajectories,
    save_trajectories,
    track_sequence,
    tracking_stats,
)

TOY_LR_INIT = 0.002
TOY_LR_MIN = 0.0005


def build_config(args) -> Config:
    cfg = Config.load(args.config) if getattr(args, "config", None) else Config()
    if getattr(args, "profile", None):
        cfg.apply_profile(args.profile)
    for item in getattr(args, "set", None) or []:
        key, _, value = item.partition("=")
        if not value:
            raise SystemExit(f"--set expects key=value, got {item!r}")
        cfg.set_key(key, value)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    cfg.apply_env()
    cfg.validate()
    return cfg


def _load_data(args, cfg: Config):
    if getattr(args, "data", None):
        data = Path(args.data)
        velo = data / "velodyne" if (data / "velodyne").is_dir() else data
        return load_sequence(velo)
    preset = getattr(args, "preset", None) or "two-objects"
    spec = preset_scene(preset, n_frames=getattr(args, "frames", None), seed=args.scene_seed)
    seq, _ = generate_synthetic(spec, seed=args.scene_seed)
    return seq


def _add_common(p, with_data=True):
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    p.add_argument("--seed", type=int, help="master seed (STSSL_SEED env wins)")
    if with_data:
        p.add_argument("--data", help="sequence directory (contains velodyne/ or .bin files)")
        p.add_argument("--preset", help="synthetic preset used when --data is absent")
        p.add_argument("--frames", type=int, help="frame count for the synthetic preset")
        p.add_argument("--scene-seed", type=int, default=0, help="seed for synthetic data")


def cmd_synth(args) -> int:
    spec = preset_scene(args.preset, n_frames=args.frames, seed=args.scene_seed)
    seq, truth = generate_synthetic(spec, seed=args.scene_seed)
    root = Path(args.out)
    save_sequence(seq, root)
    truth.save(root / "ground_truth.json")
    print(f"wrote {len(seq)} frames to {root} (preset {args.preset!r}, seed {args.scene_seed})")
    return 0


def cmd_segment(args) -> int:
    cfg = build_config(args)
    seq = _load_data(args, cfg)
    pre = preprocess_sequence(seq, cfg)
    out = Path(args.out)
    clusters_dir = out / "clusters"
    clusters_dir.mkdir(parents=True, exist_ok=True)
    summary = []
    for art in pre.frames:
        name = f"{art.frame.frame_index:06d}.json"
        (clusters_dir / name).write_text(json.dumps(art.cluster_set.to_dict()))
        summary.append(
            {
                "frame": art.frame.frame_index,
                "n_points": art.frame.n_points,
                "n_ground": art.split.n_ground,
                "n_clusters": art.cluster_set.n_clusters,
                "plane": None
                if art.plane is None
                else {
                    "normal": art.plane.normal.tolist(),
                    "offset": art.plane.offset,
                    "inlier_ratio": art.plane.inlier_ratio,
                },
            }
        )
    (out / "segment_summary.json").write_text(json.dumps(summary, indent=2))
    print(f"segmented {len(pre.frames)} frames -> {clusters_dir}")
    return 0


def _load_cluster_sets(clusters_dir: Path) -> list[ClusterSet]:
    files = sorted(clusters_dir.glob("*.json"))
    if not files:
        raise SystemExit(f"no cluster files in {clusters_dir}")
    return [ClusterSet.from_dict(json.loads(p.read_text())) for p in files]


def cmd_track(args) -> int:
    cfg = build_config(args)
    cluster_sets = _load_cluster_sets(Path(args.clusters))
    features = None
    if args.checkpoint:
        from .trainer import cluster_features_for_tracking, load_checkpoint

        if not args.data:
            raise SystemExit("--checkpoint needs --data to recompute cluster features")
        state, _ = load_checkpoint(args.checkpoint)
        cfg.track.feature_mode = LOCATION_PLUS_FEATURE
        seq = _load_data(args, cfg)
        pre = preprocess_sequence(seq, cfg)
        features = [
            cluster_features_for_tracking(state.byol, a.frame, a.cluster_set, a.plane)
            for a in pre.frames
        ]
        cluster_sets = pre.cluster_sets
    from .pipeline import match_config

    trajectories, _ = track_sequence(cluster_sets, match_config(cfg), features)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_trajectories(trajectories, out / "trajectories.json")
    stats = tracking_stats(trajectories)
    (out / "tracking_stats.json").write_text(
        json.dumps({str(k): v for k, v in sorted(stats.items())}, indent=2)
    )
    print(f"{len(trajectories)} trajectories -> {out / 'trajectories.json'}")
    for k, v in sorted(stats.items()):
        print(f"  tracked >= {k} frames: {100.0 * v:.2f}%")
    return 0


def cmd_mine_pairs(args) -> int:
    trajectories = load_trajectories(args.trajectories)
    n_frames = args.frames or (max((t.last_frame for t in trajectories), default=-1) + 1)
    pair_sets = emit_interframe_pairs(trajectories, args.interval, n_frames)
    payload = [
        {"frame_m": p.frame_m, "frame_n": p.frame_n, "matches": [list(m) for m in p.matches]}
        for p in pair_sets
    ]
    Path(args.out).write_text(json.dumps(payload))
    total = sum(p.count for p in pair_sets)
    print(f"interval {args.interval}: {total} pairs over {len(pair_sets)} frame pairs -> {args.out}")
    return 0


def cmd_train_toy(args) -> int:
    cfg = build_config(args)
    explicit = {item.partition("=")[0] for item in (args.set or [])}
    if not args.full_scale_lr and "train.lr_init" not in explicit and "train.lr_min" not in explicit:
        # raw-sum losses over hundreds of points need a smaller step than
        # the full-scale defaults
        cfg.train.lr_init = TOY_LR_INIT
        cfg.train.lr_min = TOY_LR_MIN
    if args.epochs is not None:
        cfg.train.epochs = args.epochs
    seq = _load_data(args, cfg)
    from .trainer import run

    result = run(cfg, seq, args.out, resume_from=args.resume)
    print(f"log:        {result.log_path}")
    print(f"checkpoint: {result.checkpoint_prefix}.bin/.json")
    print(f"metrics:    {json.dumps(result.metrics, sort_keys=True)}")
    return 0


def cmd_eval_purity(args) -> int:
    cfg = build_config(args)
    if args.data:
        seq = _load_data(args, cfg)
        if any(f.labels is None for f in seq.frames):
            raise SystemExit("purity evaluation needs labeled data (synthetic sidecars)")
    else:
        preset = args.preset or "purity-sweep"
        spec = preset_scene(preset, n_frames=args.frames, seed=args.scene_seed)
        seq, _ = generate_synthetic(spec, seed=args.scene_seed)
    eps_values = [
        round(v, 6)
        for v in np.arange(args.eps_min, args.eps_max + 1e-9, args.eps_step).tolist()
    ]
    from .report import run_purity_sweep, write_purity_sweep

    rows = run_purity_sweep(seq, cfg, eps_values)
    csv_path, svg_path = write_purity_sweep(rows, args.out)
    for row in rows:
        print(
            f"eps {row['eps']:.2f}: {row['n_clusters']:3d} clusters, "
            f"{100.0 * row['proportion_pure']:.1f}% pure"
        )
    print(f"wrote {csv_path} and {svg_path}")
    return 0


def cmd_report(args) -> int:
    run_dir = Path(args.run)
    out = Path(args.out) if args.out else run_dir / "report"
    from .report import write_loss_curves, write_purity_sweep, write_tracking_histogram

    produced = []
    log_path = run_dir / "training_log.jsonl"
    if log_path.is_file():
        produced += list(write_loss_curves(log_path, out))
    traj_path = Path(args.trajectories) if args.trajectories else run_dir / "trajectories.json"
    if traj_path.is_file():
        produced += list(write_tracking_histogram(load_trajectories(traj_path), out))
    sweep_csv = Path(args.purity_csv) if args.purity_csv else run_dir / "purity_sweep.csv"
    if sweep_csv.is_file():
        import csv as csv_mod

        with open(sweep_csv) as fh:
            rows = [
                {k: float(v) if k != "n_clusters" else int(v) for k, v in r.items()}
                for r in csv_mod.DictReader(fh)
            ]
        produced += list(write_purity_sweep(rows, out))
    if not produced:
        raise SystemExit(f"nothing to report on in {run_dir}")
    for p in produced:
        print(f"wrote {p}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="stssl", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a labeled synthetic sequence")
    p.add_argument("--preset", default="two-objects")
    p.add_argument("--frames", type=int)
    p.add_argument("--scene-seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("segment", help="ground removal + clustering per frame")
    _add_common(p)
    p.add_argument("--profile", choices=["kitti", "nuscene"])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("track", help="associate clusters across frames")
    _add_common(p)
    p.add_argument("--clusters", required=True, help="directory written by segment")
    p.add_argument("--checkpoint", help="checkpoint prefix for feature-aided tracking")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("mine-pairs", help="emit positive pairs at an interval")
    p.add_argument("--trajectories", required=True)
    p.add_argument("--interval", type=int, required=True)
    p.add_argument("--frames", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mine_pairs)

    p = sub.add_parser("train-toy", help="desk-scale self-supervised training")
    _add_common(p)
    p.add_argument("--epochs", type=int)
    p.add_argument("--resume", help="checkpoint prefix to resume from")
    p.add_argument(
        "--full-scale-lr",
        action="store_true",
        help="keep the full-scale learning rates instead of the toy-safe ones",
    )
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("eval-purity", help="purity sweep over the clustering eps")
    _add_common(p)
    p.add_argument("--eps-min", type=float, default=0.15)
    p.add_argument("--eps-max", type=float, default=0.45)
    p.add_argument("--eps-step", type=float, default=0.05)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval_purity)

    p = sub.add_parser("report", help="CSV + SVG plots from run artifacts")
    p.add_argument("--run", required=True, help="training run directory")
    p.add_argument("--trajectories")
    p.add_argument("--purity-csv")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except StsslError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
