"""Augmentation geometry, MLP gradients, pooling, and the EMA scaffold."""

import numpy as np
import pytest

from stssl.encoder import (
    AugmentConfig,
    EncoderConfig,
    Mlp,
    augment,
    ema_update,
    group_and_pool,
    init_byol,
    online_point_features,
    point_descriptors,
    reinit_heads,
    target_point_features,
)
from stssl.errors import NumericalError


def identity_aug():
    return AugmentConfig(
        flip_x_prob=0.0, flip_y_prob=0.0, rot_max=0.0, scale_jitter=0.0, clip_enabled=False
    )


def random_cloud(rng, n=50):
    points = rng.uniform(-5, 5, (n, 3))
    assignment = rng.integers(-1, 3, n)
    return points, assignment


def test_identity_augment_exact():
    rng = np.random.default_rng(0)
    points, assignment = random_cloud(rng)
    view = augment(points, assignment, identity_aug(), np.random.default_rng(1))
    assert np.array_equal(view.points, points)
    assert np.array_equal(view.assignment, assignment)
    assert view.dropped_points == 0
    assert view.removed_clusters == []


def test_flip_twice_restores():
    rng = np.random.default_rng(1)
    points, assignment = random_cloud(rng)
    cfg = AugmentConfig(flip_x_prob=1.0, flip_y_prob=0.0, rot_max=0.0, scale_jitter=0.0,
                        clip_enabled=False)
    once = augment(points, assignment, cfg, np.random.default_rng(7))
    twice = augment(once.points, once.assignment, cfg, np.random.default_rng(7))
    assert np.array_equal(twice.points, points)


def test_rotation_preserves_pairwise_distances():
    rng = np.random.default_rng(2)
    for trial in range(5):
        points, assignment = random_cloud(rng, n=40)
        cfg = AugmentConfig(flip_x_prob=0.0, flip_y_prob=0.0, rot_max=np.pi,
                            scale_jitter=0.0, clip_enabled=False)
        view = augment(points, assignment, cfg, np.random.default_rng(trial))
        d_before = np.linalg.norm(points[:, None] - points[None, :], axis=2)
        d_after = np.linalg.norm(view.points[:, None] - view.points[None, :], axis=2)
        assert np.allclose(d_before, d_after, atol=1e-6)


def test_scale_multiplies_distances():
    rng = np.random.default_rng(3)
    points, assignment = random_cloud(rng, n=30)
    cfg = AugmentConfig(flip_x_prob=0.0, flip_y_prob=0.0, rot_max=0.0,
                        scale_jitter=0.2, clip_enabled=False)
    view = augment(points, assignment, cfg, np.random.default_rng(5))
    scale = view.params["scale"]
    d_before = np.linalg.norm(points[:, None] - points[None, :], axis=2)
    d_after = np.linalg.norm(view.points[:, None] - view.points[None, :], axis=2)
    assert np.allclose(d_after, scale * d_before, rtol=1e-12)


def test_clip_records_removed_clusters():
    # two far-apart clusters; an aggressive crop must drop one entirely
    points = np.concatenate([
        np.random.default_rng(0).normal((0, 0, 0), 0.1, (20, 3)),
        np.random.default_rng(1).normal((50, 50, 0), 0.1, (20, 3)),
    ])
    assignment = np.concatenate([np.zeros(20, dtype=int), np.ones(20, dtype=int)])
    cfg = AugmentConfig(flip_x_prob=0.0, flip_y_prob=0.0, rot_max=0.0,
                        scale_jitter=0.0, clip_enabled=True, clip_keep_min=0.05)
    removed_seen = False
    for seed in range(30):
        view = augment(points, assignment, cfg, np.random.default_rng(seed))
        if view.removed_clusters:
            removed_seen = True
            assert view.dropped_points >= 20
            kept = set(np.unique(view.assignment).tolist())
            assert not (set(view.removed_clusters) & kept)
    assert removed_seen


def test_membership_carried_through_augment():
    rng = np.random.default_rng(4)
    points, assignment = random_cloud(rng, n=60)
    cfg = AugmentConfig(clip_keep_min=0.9)
    view = augment(points, assignment, cfg, np.random.default_rng(9))
    assert np.array_equal(view.assignment, assignment[view.source_rows])


def test_zero_weight_network_zero_features():
    mlp = Mlp((5, 8, 4))  # no rng: zero weights
    out = mlp.forward(np.random.default_rng(0).normal(size=(7, 5)))
    assert np.array_equal(out, np.zeros((7, 4)))


def test_duplicate_points_identical_rows():
    rng = np.random.default_rng(5)
    mlp = Mlp((5, 16, 8), rng)
    x = rng.normal(size=(4, 5))
    x[2] = x[0]
    out = mlp.forward(x)
    assert np.array_equal(out[0], out[2])


def test_descriptors_shape_and_finiteness():
    rng = np.random.default_rng(6)
    pts = rng.uniform(-10, 10, (30, 3))
    desc = point_descriptors(pts)
    assert desc.shape == (30, 5)
    assert np.isfinite(desc).all()
    assert point_descriptors(np.zeros((0, 3))).shape == (0, 5)


def test_mlp_jacobian_vs_finite_difference():
    rng = np.random.default_rng(7)
    mlp = Mlp((5, 12, 6), rng)
    x = rng.normal(size=(9, 5))
    direction = rng.normal(size=(9, 6))  # scalar probe s = sum(out * R)

    out, cache = mlp.forward(x, want_cache=True)
    gw, gb, _ = mlp.backward(cache, direction)

    eps = 1e-6
    worst = 0.0
    for arrays, grads in ((mlp.weights, gw), (mlp.biases, gb)):
        for arr, grad in zip(arrays, grads):
            flat = arr.reshape(-1)
            for idx in range(0, flat.size, max(1, flat.size // 10)):
                orig = flat[idx]
                flat[idx] = orig + eps
                up = float((mlp.forward(x) * direction).sum())
                flat[idx] = orig - eps
                down = float((mlp.forward(x) * direction).sum())
                flat[idx] = orig
                fd = (up - down) / (2 * eps)
                an = grad.reshape(-1)[idx]
                worst = max(worst, abs(fd - an) / max(1.0, abs(an)))
    assert worst < 1e-5


def test_mlp_input_gradient_vs_finite_difference():
    rng = np.random.default_rng(8)
    mlp = Mlp((5, 10, 4), rng)
    x = rng.normal(size=(3, 5))
    direction = rng.normal(size=(3, 4))
    _, cache = mlp.forward(x, want_cache=True)
    _, _, gx = mlp.backward(cache, direction)
    eps = 1e-6
    for i in range(3):
        for j in range(5):
            orig = x[i, j]
            x[i, j] = orig + eps
            up = float((mlp.forward(x) * direction).sum())
            x[i, j] = orig - eps
            down = float((mlp.forward(x) * direction).sum())
            x[i, j] = orig
            fd = (up - down) / (2 * eps)
            assert abs(fd - gx[i, j]) / max(1.0, abs(gx[i, j])) < 1e-5


def test_non_finite_forward_fails_fast():
    mlp = Mlp((3, 4, 2), np.random.default_rng(0))
    mlp.weights[1][0, 0] = np.inf
    with pytest.raises(NumericalError):
        mlp.forward(np.ones((2, 3)))


def test_pool_single_point_cluster():
    feats = np.array([[0.3, -0.7, 2.0]])
    bank = group_and_pool(feats, np.array([0]))
    assert np.array_equal(bank.pooled[0], feats[0])


def test_pool_componentwise_max():
    feats = np.array([[1.0, 0.0], [0.0, 1.0]])
    bank = group_and_pool(feats, np.array([0, 0]))
    assert np.array_equal(bank.pooled[0], [1.0, 1.0])


def test_pool_dominance_property():
    rng = np.random.default_rng(9)
    feats = rng.normal(size=(40, 6))
    assignment = rng.integers(-1, 4, 40)
    bank = group_and_pool(feats, assignment)
    for cid, rows in bank.groups.items():
        pooled = bank.pooled[cid]
        block = feats[rows]
        assert (pooled[None, :] >= block - 1e-15).all()
        # equality achieved per component, and argmax rows point at it
        assert np.array_equal(block.max(axis=0), pooled)
        assert np.array_equal(feats[bank.pool_argmax[cid], np.arange(6)], pooled)


def test_noise_points_not_grouped():
    feats = np.ones((3, 2))
    bank = group_and_pool(feats, np.array([-1, -1, 0]))
    assert set(bank.groups) == {0}


def test_ema_endpoints():
    cfg = EncoderConfig(dim=4, hiddens=(6,), head_hidden=5)
    rng = np.random.default_rng(10)
    state = init_byol(cfg, rng)
    # perturb online so the sides differ
    state.online_encoder.weights[0] += 1.0

    frozen = init_byol(cfg, np.random.default_rng(10))
    frozen.online_encoder.weights[0] += 1.0

    state.momentum = 1.0
    before = [p.copy() for p in state.target_encoder.param_list()]
    ema_update(state)
    for b, a in zip(before, state.target_encoder.param_list()):
        assert np.array_equal(b, a)

    frozen.momentum = 0.0
    ema_update(frozen)
    for t, o in zip(frozen.target_encoder.param_list(), frozen.online_encoder.param_list()):
        assert np.array_equal(t, o)


def test_ema_geometric_decay():
    cfg = EncoderConfig(dim=4, hiddens=(6,), head_hidden=5)
    state = init_byol(cfg, np.random.default_rng(11), momentum=0.99)
    state.online_encoder.weights[0] += 0.5  # fixed offset, online frozen
    gap0 = np.linalg.norm(state.target_encoder.weights[0] - state.online_encoder.weights[0])
    for _ in range(100):
        ema_update(state)
    gap = np.linalg.norm(state.target_encoder.weights[0] - state.online_encoder.weights[0])
    expected = gap0 * 0.99**100
    assert abs(gap - expected) / expected < 1e-9


def test_reinit_heads_contract():
    cfg = EncoderConfig(dim=4, hiddens=(6,), head_hidden=5)
    state = init_byol(cfg, np.random.default_rng(12))
    enc_before = [p.copy() for p in state.online_encoder.param_list()]
    tgt_enc_before = [p.copy() for p in state.target_encoder.param_list()]
    proj_before = [p.copy() for p in state.online_projector.param_list()]
    reinit_heads(state, cfg, np.random.default_rng(99))
    for a, b in zip(enc_before, state.online_encoder.param_list()):
        assert a.tobytes() == b.tobytes()
    for a, b in zip(tgt_enc_before, state.target_encoder.param_list()):
        assert a.tobytes() == b.tobytes()
    changed = any(
        a.shape != b.shape or not np.array_equal(a, b)
        for a, b in zip(proj_before, state.online_projector.param_list())
        if a.size
    )
    assert changed
    # target projector re-synced to the fresh online projector
    for t, o in zip(state.target_projector.param_list(), state.online_projector.param_list()):
        assert np.array_equal(t, o)


def test_reinit_loss_in_fresh_init_band():
    # after re-init, the p2c-style loss must sit inside the range spanned
    # by 10 entirely fresh head initializations on the same batch
    from stssl.losses import point_to_cluster_loss

    cfg = EncoderConfig(dim=8, hiddens=(16,), head_hidden=12)
    rng = np.random.default_rng(13)
    desc = rng.normal(size=(40, 5))
    assignment = np.repeat(np.arange(4), 10)

    def loss_for(state):
        z, _ = online_point_features(state, desc)
        t = target_point_features(state, desc)
        return point_to_cluster_loss(
            group_and_pool(z, assignment), group_and_pool(t, assignment)
        ).value

    fresh = [loss_for(init_byol(cfg, np.random.default_rng(100 + i))) for i in range(10)]
    state = init_byol(cfg, np.random.default_rng(14))
    reinit_heads(state, cfg, np.random.default_rng(200))
    value = loss_for(state)
    margin = (max(fresh) - min(fresh)) * 0.5 + 1e-6
    assert min(fresh) - margin <= value <= max(fresh) + margin
