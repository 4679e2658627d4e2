"""Deterministic Lloyd k-means with distance-weighted seeding."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels


@dataclass
class KMeansResult:
    labels: np.ndarray
    centers: np.ndarray
    inertia: float
    n_iter: int
    inertia_history: list[float]


def _sq_dists(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    return ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)


def kmeans(
    x: np.ndarray,
    k: int,
    rng: np.random.Generator,
    max_iters: int = 300,
    tol: float = 1e-6,
) -> KMeansResult:
    """Lloyd iterations to convergence (inertia change <= tol, cap 300).

    Seeding follows the usual distance-squared weighting, so the result is
    a pure function of (x, k, rng state). Empty clusters are reseeded with
    the point farthest from its current center.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > n:
        raise ValueError(f"k={k} exceeds sample count {n}")

    centers = np.empty((k, x.shape[1]))
    centers[0] = x[int(rng.integers(0, n))]
    closest = _sq_dists(x, centers[:1]).min(axis=1)
    for j in range(1, k):
        total = closest.sum()
        if total <= 0:
            centers[j] = x[int(rng.integers(0, n))]
        else:
            centers[j] = x[int(rng.choice(n, p=closest / total))]
        closest = np.minimum(closest, _sq_dists(x, centers[j : j + 1]).min(axis=1))

    labels = np.zeros(n, dtype=np.int64)
    history: list[float] = []
    inertia = np.inf
    n_iter = 0
    for n_iter in range(1, max_iters + 1):
        d = _sq_dists(x, centers)
        labels = d.argmin(axis=1)
        new_inertia = float(d[np.arange(n), labels].sum())
        history.append(new_inertia)
        for j in range(k):
            members = labels == j
            if members.any():
                centers[j] = x[members].mean(axis=0)
            else:
                far = int(d[np.arange(n), labels].argmax())
                centers[j] = x[far]
                labels[far] = j
        if abs(inertia - new_inertia) <= tol:
            inertia = new_inertia
            break
        inertia = new_inertia
    return KMeansResult(labels=labels, centers=centers, inertia=inertia, n_iter=n_iter, inertia_history=history)


def best_permutation_agreement(pred: np.ndarray, truth: np.ndarray) -> float:
    """Best label-permutation accuracy between two labelings.

    Solved as an assignment on the confusion matrix, so it works for any
    number of distinct labels on either side."""
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    pred_vals, pred_inv = np.unique(pred, return_inverse=True)
    true_vals, true_inv = np.unique(truth, return_inverse=True)
    confusion = np.zeros((pred_vals.size, true_vals.size))
    np.add.at(confusion, (pred_inv, true_inv), 1.0)
    cost = confusion.max() - confusion  # maximize matches via min-cost
    rows, cols = _kernels.solve_lsap(cost)
    return float(confusion[rows, cols].sum() / pred.size)
