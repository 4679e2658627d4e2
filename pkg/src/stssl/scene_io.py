"""Reading, writing, and in-memory representation of LiDAR scan sequences.

Binary scan layout: consecutive little-endian float32 quadruples
(x, y, z, intensity), 16 bytes per point, the layout used by the KITTI
velodyne dumps (``sequences/<NN>/velodyne/<frame>.bin``). Optional per-point
labels ride in sidecar JSON files so the binary format stays untouched.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BinaryFormatError, EmptyFrameError

log = logging.getLogger(__name__)

POINT_RECORD_BYTES = 16


@dataclass
class Frame:
    """One LiDAR scan: xyz points plus optional intensity and labels."""

    frame_index: int
    points: np.ndarray  # (N, 3) float32
    intensity: np.ndarray | None = None  # (N,) float32
    labels: np.ndarray | None = None  # (N, 2) int32: instance_id, class_id
    dropped_invalid: int = 0

    @property
    def n_points(self) -> int:
        return int(self.points.shape[0])

    def xyz64(self) -> np.ndarray:
        """Coordinates as float64 for geometry work."""
        return self.points.astype(np.float64)


@dataclass
class FrameSequence:
    """Ordered frames with contiguous indices starting at 0."""

    frames: list[Frame] = field(default_factory=list)
    source: str = "real"  # "real" | "synthetic"
    frame_rate_hz: float = 10.0

    def __len__(self) -> int:
        return len(self.frames)

    def __getitem__(self, i: int) -> Frame:
        return self.frames[i]


def read_kitti_bin(path: str | Path, frame_index: int = 0) -> Frame:
    """Decode one binary scan file into a Frame.

    Points containing NaN or Inf are dropped and counted in
    ``Frame.dropped_invalid``; real sensor dumps contain such returns.
    """
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) == 0:
        raise EmptyFrameError(f"{path}: empty scan file")
    if len(raw) % POINT_RECORD_BYTES != 0:
        raise BinaryFormatError(
            f"{path}: length {len(raw)} is not a multiple of {POINT_RECORD_BYTES}"
        )
    arr = np.frombuffer(raw, dtype="<f4").reshape(-1, 4)
    finite = np.isfinite(arr).all(axis=1)
    dropped = int((~finite).sum())
    arr = arr[finite]
    if arr.shape[0] == 0:
        raise EmptyFrameError(f"{path}: no finite points")
    return Frame(
        frame_index=frame_index,
        points=np.ascontiguousarray(arr[:, :3]),
        intensity=np.ascontiguousarray(arr[:, 3]),
        dropped_invalid=dropped,
    )


def write_frame_bin(frame: Frame, path: str | Path) -> None:
    """Write a frame in the 16-byte-per-point binary layout."""
    path = Path(path)
    n = frame.n_points
    out = np.empty((n, 4), dtype="<f4")
    out[:, :3] = frame.points.astype(np.float32)
    if frame.intensity is not None:
        out[:, 3] = frame.intensity.astype(np.float32)
    else:
        out[:, 3] = 0.0
    path.write_bytes(out.tobytes())


def _numeric_stem(path: Path) -> int | None:
    m = re.fullmatch(r"0*(\d+)", path.stem)
    return int(m.group(1)) if m else None


def load_sequence(
    directory: str | Path, pattern: str = "*.bin", frame_rate_hz: float = 10.0
) -> FrameSequence:
    """Load all numbered scan files from a directory, sorted numerically.

    Gaps in the numbering are tolerated: frames are reindexed to a
    contiguous 0..T-1 range and a warning is logged. Sidecar label files in
    a sibling ``labels/`` directory are attached when present.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"not a directory: {directory}")
    files = [(num, p) for p in sorted(directory.glob(pattern)) if (num := _numeric_stem(p)) is not None]
    if not files:
        raise FileNotFoundError(f"no files matching {pattern!r} in {directory}")
    files.sort(key=lambda t: t[0])
    numbers = [num for num, _ in files]
    if numbers != list(range(numbers[0], numbers[0] + len(numbers))) or numbers[0] != 0:
        log.warning(
            "frame numbering in %s is not contiguous from 0 (%s..%s, %d files); reindexing",
            directory, numbers[0], numbers[-1], len(numbers),
        )
    labels_dir = directory.parent / "labels"
    frames = []
    for new_index, (_, p) in enumerate(files):
        frame = read_kitti_bin(p, frame_index=new_index)
        label_path = labels_dir / (p.stem + ".json")
        if label_path.is_file():
            frame.labels = read_label_sidecar(label_path, frame.n_points)
        frames.append(frame)
    return FrameSequence(frames=frames, source="real", frame_rate_hz=frame_rate_hz)


def read_label_sidecar(path: str | Path, n_points: int) -> np.ndarray:
    """Load per-point (instance_id, class_id) labels from sidecar JSON."""
    data = json.loads(Path(path).read_text())
    inst = np.asarray(data["instance_id"], dtype=np.int32)
    cls = np.asarray(data["class_id"], dtype=np.int32)
    if inst.shape[0] != n_points or cls.shape[0] != n_points:
        raise BinaryFormatError(f"{path}: label count does not match point count {n_points}")
    return np.stack([inst, cls], axis=1)


def write_label_sidecar(labels: np.ndarray, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(
            {
                "instance_id": labels[:, 0].tolist(),
                "class_id": labels[:, 1].tolist(),
            }
        )
    )


def save_sequence(seq: FrameSequence, root: str | Path) -> Path:
    """Write a sequence in KITTI layout: ``<root>/velodyne/NNNNNN.bin``.

    Labels, when present, go to ``<root>/labels/NNNNNN.json``. Returns the
    velodyne directory.
    """
    root = Path(root)
    velo = root / "velodyne"
    velo.mkdir(parents=True, exist_ok=True)
    labels_dir = root / "labels"
    for frame in seq.frames:
        name = f"{frame.frame_index:06d}"
        write_frame_bin(frame, velo / f"{name}.bin")
        if frame.labels is not None:
            labels_dir.mkdir(parents=True, exist_ok=True)
            write_label_sidecar(frame.labels, labels_dir / f"{name}.json")
    return velo
