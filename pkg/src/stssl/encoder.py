"""Desk-scale point encoder and the online/target training scaffold.

The encoder is a per-point MLP over a five-component descriptor
(x, y, z, height above the ground plane, local density in a 0.5 m ball).
It stands in for a full sparse-conv backbone at a size where every
gradient can be checked against finite differences.

Two networks are kept: the online side (encoder -> projector -> predictor)
receives gradients; the target side (encoder -> projector) is an
exponential moving average of the online side and never receives
gradients. Per-cluster features are the componentwise max over member
point features.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import NumericalError
from .ground import PlaneModel

INPUT_DIM = 5
DENSITY_RADIUS = 0.5
# fixed descriptor scaling so raw meters do not saturate tanh units
_XY_SCALE = 10.0
_Z_SCALE = 5.0
_DENSITY_SCALE = 4.0


# ---------------------------------------------------------------------------
# data augmentation


@dataclass
class AugmentConfig:
    flip_x_prob: float = 0.5
    flip_y_prob: float = 0.5
    rot_max: float = math.pi  # rotation about z, uniform in [-rot_max, rot_max]
    scale_jitter: float = 0.05  # scale uniform in [1 - s, 1 + s]
    clip_enabled: bool = True
    clip_keep_min: float = 0.9  # keep fraction of xy extent, uniform in [min, 1]


@dataclass
class AugmentedView:
    points: np.ndarray  # (K, 3) float64
    assignment: np.ndarray  # (K,) int64 cluster id or -1
    source_rows: np.ndarray  # (K,) rows into the input arrays
    dropped_points: int
    removed_clusters: list[int]
    params: dict


def augment(
    points: np.ndarray,
    assignment: np.ndarray,
    cfg: AugmentConfig,
    rng: np.random.Generator,
) -> AugmentedView:
    """One augmented view: flip / rotate / scale applied uniformly, then an
    axis-aligned crop. Cluster membership is carried; clusters fully removed
    by the crop are recorded so their loss terms can be skipped."""
    pts = np.asarray(points, dtype=np.float64).copy()
    assignment = np.asarray(assignment, dtype=np.int64)

    flip_x = bool(rng.random() < cfg.flip_x_prob)
    flip_y = bool(rng.random() < cfg.flip_y_prob)
    angle = float(rng.uniform(-cfg.rot_max, cfg.rot_max))
    scale = float(rng.uniform(1.0 - cfg.scale_jitter, 1.0 + cfg.scale_jitter))

    if flip_x:
        pts[:, 0] = -pts[:, 0]
    if flip_y:
        pts[:, 1] = -pts[:, 1]
    c, s = math.cos(angle), math.sin(angle)
    x = pts[:, 0] * c - pts[:, 1] * s
    y = pts[:, 0] * s + pts[:, 1] * c
    pts[:, 0] = x
    pts[:, 1] = y
    pts *= scale

    params = {"flip_x": flip_x, "flip_y": flip_y, "angle": angle, "scale": scale}
    keep = np.ones(pts.shape[0], dtype=bool)
    if cfg.clip_enabled and pts.shape[0] > 0:
        window = []
        for axis in (0, 1):
            lo, hi = float(pts[:, axis].min()), float(pts[:, axis].max())
            extent = hi - lo
            frac = float(rng.uniform(cfg.clip_keep_min, 1.0))
            width = frac * extent
            start = lo + float(rng.uniform(0.0, extent - width))
            keep &= (pts[:, axis] >= start) & (pts[:, axis] <= start + width)
            window.append((start, start + width))
        params["clip_window"] = window

    kept_rows = np.flatnonzero(keep).astype(np.int64)
    before = set(np.unique(assignment[assignment >= 0]).tolist())
    after = set(np.unique(assignment[kept_rows][assignment[kept_rows] >= 0]).tolist())
    return AugmentedView(
        points=pts[kept_rows],
        assignment=assignment[kept_rows],
        source_rows=kept_rows,
        dropped_points=int(pts.shape[0] - kept_rows.shape[0]),
        removed_clusters=sorted(before - after),
        params=params,
    )


# ---------------------------------------------------------------------------
# descriptors


def point_descriptors(points: np.ndarray, plane: PlaneModel | None = None) -> np.ndarray:
    """Per-point input descriptor; falls back to raw z when no plane is known."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.shape[0] == 0:
        return np.zeros((0, INPUT_DIM))
    height = plane.height_above(pts) if plane is not None else pts[:, 2]
    tree = cKDTree(pts)
    density = tree.query_ball_point(pts, DENSITY_RADIUS, return_length=True)
    return np.stack(
        [
            pts[:, 0] / _XY_SCALE,
            pts[:, 1] / _XY_SCALE,
            pts[:, 2] / _Z_SCALE,
            height / _Z_SCALE,
            np.log1p(density) / _DENSITY_SCALE,
        ],
        axis=1,
    )


# ---------------------------------------------------------------------------
# the MLP


class Mlp:
    """Fully-connected net, tanh hidden units, linear output, float64."""

    def __init__(self, sizes: tuple[int, ...], rng: np.random.Generator | None = None):
        self.sizes = tuple(sizes)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for fan_in, fan_out in zip(sizes, sizes[1:]):
            std = math.sqrt(1.0 / fan_in)
            w = rng.normal(0.0, std, (fan_in, fan_out)) if rng is not None else np.zeros((fan_in, fan_out))
            self.weights.append(w)
            self.biases.append(np.zeros(fan_out))

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def forward(self, x: np.ndarray, want_cache: bool = False):
        h = np.asarray(x, dtype=np.float64)
        hs = [h]
        last = self.n_layers - 1
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            a = h @ w + b
            h = np.tanh(a) if l < last else a
            hs.append(h)
        if not np.all(np.isfinite(h)):
            raise NumericalError("non-finite activation in forward pass")
        return (h, hs) if want_cache else h

    def backward(self, cache: list[np.ndarray], grad_out: np.ndarray):
        """Gradients for all parameters plus the gradient w.r.t. the input."""
        g = np.asarray(grad_out, dtype=np.float64)
        grads_w: list[np.ndarray] = [np.empty(0)] * self.n_layers
        grads_b: list[np.ndarray] = [np.empty(0)] * self.n_layers
        last = self.n_layers - 1
        for l in range(last, -1, -1):
            if l < last:
                out = cache[l + 1]
                g = g * (1.0 - out * out)  # tanh'
            grads_w[l] = cache[l].T @ g
            grads_b[l] = g.sum(axis=0)
            g = g @ self.weights[l].T
        return grads_w, grads_b, g

    def copy(self) -> "Mlp":
        m = Mlp(self.sizes)
        m.weights = [w.copy() for w in self.weights]
        m.biases = [b.copy() for b in self.biases]
        return m

    def param_list(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out


@dataclass
class EncoderConfig:
    dim: int = 32
    hiddens: tuple[int, ...] = (64, 64)
    head_hidden: int = 64

    def encoder_sizes(self) -> tuple[int, ...]:
        return (INPUT_DIM, *self.hiddens, self.dim)

    def head_sizes(self) -> tuple[int, ...]:
        return (self.dim, self.head_hidden, self.dim)


# ---------------------------------------------------------------------------
# online / target scaffold


@dataclass
class ByolState:
    online_encoder: Mlp
    online_projector: Mlp
    online_predictor: Mlp
    target_encoder: Mlp
    target_projector: Mlp
    momentum: float = 0.99


def init_byol(cfg: EncoderConfig, rng: np.random.Generator, momentum: float = 0.99) -> ByolState:
    enc = Mlp(cfg.encoder_sizes(), rng)
    proj = Mlp(cfg.head_sizes(), rng)
    pred = Mlp(cfg.head_sizes(), rng)
    return ByolState(
        online_encoder=enc,
        online_projector=proj,
        online_predictor=pred,
        target_encoder=enc.copy(),
        target_projector=proj.copy(),
        momentum=momentum,
    )


def ema_update(state: ByolState) -> ByolState:
    """target <- m * target + (1 - m) * online, encoder and projector."""
    m = state.momentum
    for tgt, onl in (
        (state.target_encoder, state.online_encoder),
        (state.target_projector, state.online_projector),
    ):
        for tp, op in zip(tgt.param_list(), onl.param_list()):
            if tp.shape != op.shape:
                raise ValueError("target/online parameter shape mismatch")
            tp *= m
            tp += (1.0 - m) * op
    return state


def reinit_heads(state: ByolState, cfg: EncoderConfig, rng: np.random.Generator) -> ByolState:
    """Fresh projector and predictor; both encoders stay untouched."""
    state.online_projector = Mlp(cfg.head_sizes(), rng)
    state.online_predictor = Mlp(cfg.head_sizes(), rng)
    state.target_projector = state.online_projector.copy()
    return state


def online_point_features(state: ByolState, descriptors: np.ndarray):
    """Full online pass; caches allow backprop through all three nets."""
    e, cache_e = state.online_encoder.forward(descriptors, want_cache=True)
    p, cache_p = state.online_projector.forward(e, want_cache=True)
    z, cache_z = state.online_predictor.forward(p, want_cache=True)
    return z, (cache_e, cache_p, cache_z)


def target_point_features(state: ByolState, descriptors: np.ndarray) -> np.ndarray:
    """Target pass; no cache — gradients never flow through this side."""
    e = state.target_encoder.forward(descriptors)
    return state.target_projector.forward(e)


def backprop_online(state: ByolState, cache, grad_z: np.ndarray):
    """Map a gradient on the online outputs to per-net parameter gradients."""
    cache_e, cache_p, cache_z = cache
    gw_pred, gb_pred, g = state.online_predictor.backward(cache_z, grad_z)
    gw_proj, gb_proj, g = state.online_projector.backward(cache_p, g)
    gw_enc, gb_enc, _ = state.online_encoder.backward(cache_e, g)
    return {
        "encoder": _interleave(gw_enc, gb_enc),
        "projector": _interleave(gw_proj, gb_proj),
        "predictor": _interleave(gw_pred, gb_pred),
    }


def _interleave(gw: list[np.ndarray], gb: list[np.ndarray]) -> list[np.ndarray]:
    out = []
    for w, b in zip(gw, gb):
        out.append(w)
        out.append(b)
    return out


def online_param_list(state: ByolState) -> list[np.ndarray]:
    return (
        state.online_encoder.param_list()
        + state.online_projector.param_list()
        + state.online_predictor.param_list()
    )


def online_grad_list(grads: dict) -> list[np.ndarray]:
    return grads["encoder"] + grads["projector"] + grads["predictor"]


def zero_online_grads(state: ByolState) -> dict:
    return {
        "encoder": [np.zeros_like(p) for p in state.online_encoder.param_list()],
        "projector": [np.zeros_like(p) for p in state.online_projector.param_list()],
        "predictor": [np.zeros_like(p) for p in state.online_predictor.param_list()],
    }


def accumulate_grads(total: dict, part: dict, weight: float = 1.0) -> dict:
    for key in total:
        for acc, g in zip(total[key], part[key]):
            acc += weight * g
    return total


# ---------------------------------------------------------------------------
# grouping and pooling


@dataclass
class FeatureBank:
    features: np.ndarray  # (N, d)
    groups: dict[int, np.ndarray] = field(default_factory=dict)  # id -> row indices
    pooled: dict[int, np.ndarray] = field(default_factory=dict)  # id -> (d,)
    pool_argmax: dict[int, np.ndarray] = field(default_factory=dict)  # id -> (d,) rows
    view: str = ""
    network: str = ""


def group_and_pool(
    features: np.ndarray, assignment: np.ndarray, view: str = "", network: str = ""
) -> FeatureBank:
    """Group point features by cluster and max-pool each group.

    The pooled vector is the exact componentwise max; the argmax rows are
    kept so gradients on a pooled feature can be routed back to the points
    that attained the max."""
    features = np.asarray(features, dtype=np.float64)
    assignment = np.asarray(assignment, dtype=np.int64)
    bank = FeatureBank(features=features, view=view, network=network)
    for cid in np.unique(assignment[assignment >= 0]):
        rows = np.flatnonzero(assignment == cid).astype(np.int64)
        block = features[rows]
        arg = np.argmax(block, axis=0)
        bank.groups[int(cid)] = rows
        bank.pooled[int(cid)] = block.max(axis=0)
        bank.pool_argmax[int(cid)] = rows[arg]
    return bank
