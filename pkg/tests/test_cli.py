"""End-to-end smoke of every CLI subcommand on a tiny synthetic scene."""

import json
from pathlib import Path

import pytest

from stssl.cli import main


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("cli")


def test_synth_writes_kitti_layout(workdir):
    out = workdir / "scene"
    assert main(["synth", "--preset", "two-objects", "--frames", "4",
                 "--scene-seed", "5", "--out", str(out)]) == 0
    bins = sorted((out / "velodyne").glob("*.bin"))
    assert [p.name for p in bins] == [f"{i:06d}.bin" for i in range(4)]
    assert (out / "ground_truth.json").is_file()
    assert len(list((out / "labels").glob("*.json"))) == 4


def test_segment_then_track_then_mine(workdir):
    scene = workdir / "scene"
    seg = workdir / "seg"
    assert main(["segment", "--data", str(scene), "--out", str(seg)]) == 0
    clusters = sorted((seg / "clusters").glob("*.json"))
    assert len(clusters) == 4
    summary = json.loads((seg / "segment_summary.json").read_text())
    assert all(entry["n_clusters"] >= 1 for entry in summary)

    trk = workdir / "trk"
    assert main(["track", "--clusters", str(seg / "clusters"), "--out", str(trk)]) == 0
    trajs = json.loads((trk / "trajectories.json").read_text())
    assert trajs
    stats = json.loads((trk / "tracking_stats.json").read_text())
    assert "3" in stats

    pairs_file = workdir / "pairs.json"
    assert main(["mine-pairs", "--trajectories", str(trk / "trajectories.json"),
                 "--interval", "1", "--out", str(pairs_file)]) == 0
    payload = json.loads(pairs_file.read_text())
    assert payload and all(p["frame_n"] == p["frame_m"] + 1 for p in payload)


def test_segment_profile_changes_eps(workdir, capsys):
    scene = workdir / "scene"
    seg = workdir / "seg_nuscene"
    assert main(["segment", "--data", str(scene), "--out", str(seg),
                 "--profile", "nuscene"]) == 0
    capsys.readouterr()


def test_train_toy_and_report(workdir):
    run_dir = workdir / "run"
    assert main(["train-toy", "--preset", "two-objects", "--frames", "4",
                 "--scene-seed", "5", "--epochs", "2", "--seed", "1",
                 "--out", str(run_dir)]) == 0
    assert (run_dir / "training_log.jsonl").is_file()
    assert (run_dir / "checkpoint_final.bin").is_file()
    assert (run_dir / "metrics.json").is_file()
    assert (run_dir / "trajectories.json").is_file()
    records = [json.loads(l) for l in (run_dir / "training_log.jsonl").read_text().splitlines()]
    assert len(records) == 8

    rep_dir = workdir / "report"
    assert main(["report", "--run", str(run_dir), "--out", str(rep_dir)]) == 0
    assert (rep_dir / "loss_curves.csv").is_file()
    assert (rep_dir / "loss_curves.svg").is_file()
    assert (rep_dir / "tracking_durations.csv").is_file()
    assert (rep_dir / "tracking_durations.svg").is_file()


def test_train_toy_resume(workdir):
    run_dir = workdir / "run"
    resumed = workdir / "resumed"
    resumed.mkdir(exist_ok=True)
    for ext in (".bin", ".json"):
        (resumed / f"ck{ext}").write_bytes((run_dir / f"checkpoint_final{ext}").read_bytes())
    # resume at the end: a no-op that must still finalize cleanly
    assert main(["train-toy", "--preset", "two-objects", "--frames", "4",
                 "--scene-seed", "5", "--epochs", "2", "--seed", "1",
                 "--out", str(resumed), "--resume", str(resumed / "ck")]) == 0
    assert (resumed / "checkpoint_final.bin").read_bytes() == (
        run_dir / "checkpoint_final.bin"
    ).read_bytes()


def test_eval_purity_single_invocation(workdir):
    out = workdir / "purity"
    assert main(["eval-purity", "--out", str(out), "--frames", "1",
                 "--eps-step", "0.15"]) == 0
    csv_text = (out / "purity_sweep.csv").read_text().splitlines()
    assert csv_text[0].startswith("eps,")
    assert len(csv_text) == 4  # header + eps 0.15, 0.30, 0.45
    assert (out / "purity_vs_eps.svg").is_file()


def test_env_seed_override(workdir, monkeypatch):
    monkeypatch.setenv("STSSL_SEED", "77")
    run_dir = workdir / "env_run"
    assert main(["train-toy", "--preset", "two-objects", "--frames", "4",
                 "--scene-seed", "5", "--epochs", "0", "--out", str(run_dir)]) == 0
    manifest = json.loads((run_dir / "checkpoint_final.json").read_text())
    assert manifest["config"]["seed"] == 77


def test_unknown_set_key_fails(workdir):
    rc = main(["segment", "--data", str(workdir / "scene"),
               "--out", str(workdir / "x"), "--set", "dbscan.nope=1"])
    assert rc == 2
