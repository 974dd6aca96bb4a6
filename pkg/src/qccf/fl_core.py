"""Learning substrate: data partitioning, local SGD, aggregation, evaluation.

The model is deliberately small (multinomial logistic regression on synthetic
Gaussian class clusters) — the resource optimizer, not the learner, is the
subject here, and the surrounding analysis holds for generic smooth losses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .quantizer import QuantizedModel, dequantize

__all__ = [
    "Dataset",
    "LocalStats",
    "LogisticModel",
    "QuadraticModel",
    "make_cluster_means",
    "partition_data",
    "make_test_set",
    "local_update",
    "aggregate",
    "evaluate",
    "load_csv_dataset",
    "EmptyRoundError",
]


class EmptyRoundError(ValueError):
    """No participants to aggregate; the caller carries the old model forward."""


@dataclass
class Dataset:
    features: np.ndarray  # (n, dim)
    labels: np.ndarray  # (n,) int class indices
    owner: int = -1

    def __post_init__(self):
        if len(self.features) != len(self.labels):
            raise ValueError("features/labels length mismatch")

    @property
    def size(self) -> int:
        return len(self.labels)


@dataclass
class LocalStats:
    """Per-round client statistics the server prices decisions with."""

    grad_norm_max: float  # max mini-batch gradient norm seen this round
    grad_variance: float  # empirical variance of mini-batch gradients
    theta_max: float  # max-abs entry of the post-update local model


class LogisticModel:
    """Multinomial logistic regression over a flat parameter vector.

    Parameters are [W.ravel(), b] with W of shape (classes, dim), so the
    total dimension is classes * dim + classes.
    """

    def __init__(self, feature_dim: int, num_classes: int):
        self.feature_dim = feature_dim
        self.num_classes = num_classes

    @property
    def num_params(self) -> int:
        return self.num_classes * self.feature_dim + self.num_classes

    def init_params(self) -> np.ndarray:
        return np.zeros(self.num_params)

    def _unpack(self, theta):
        k, d = self.num_classes, self.feature_dim
        return theta[: k * d].reshape(k, d), theta[k * d :]

    def _probs(self, theta, x):
        w, b = self._unpack(theta)
        logits = x @ w.T + b
        logits -= logits.max(axis=1, keepdims=True)
        e = np.exp(logits)
        return e / e.sum(axis=1, keepdims=True)

    def loss_and_grad(self, theta, x, y):
        if theta.shape[0] != self.num_params:
            raise ValueError("parameter vector has wrong dimension")
        n = len(y)
        p = self._probs(theta, x)
        loss = -float(np.mean(np.log(p[np.arange(n), y] + 1e-300)))
        resid = p
        resid[np.arange(n), y] -= 1.0
        grad_w = resid.T @ x / n
        grad_b = resid.mean(axis=0)
        return loss, np.concatenate([grad_w.ravel(), grad_b])

    def loss(self, theta, x, y):
        return self.loss_and_grad(theta, x, y)[0]

    def predict(self, theta, x):
        w, b = self._unpack(theta)
        return np.argmax(x @ w.T + b, axis=1)


class QuadraticModel:
    """Mean squared distance to per-sample targets: a closed-form sanity model.

    loss(theta) = mean_j 0.5 * ||theta - c_j||^2, so the full gradient is
    theta - mean(c) and gradient descent contracts toward the sample mean by
    (1 - eta) per step.
    """

    def __init__(self, dim: int):
        self.dim = dim

    @property
    def num_params(self) -> int:
        return self.dim

    def init_params(self) -> np.ndarray:
        return np.zeros(self.dim)

    def loss_and_grad(self, theta, centers, _y=None):
        if theta.shape[0] != self.dim:
            raise ValueError("parameter vector has wrong dimension")
        diff = theta[None, :] - centers
        loss = 0.5 * float(np.mean(np.sum(diff**2, axis=1)))
        return loss, diff.mean(axis=0)

    def loss(self, theta, centers, _y=None):
        return self.loss_and_grad(theta, centers)[0]


def make_cluster_means(num_classes: int, feature_dim: int, separation: float,
                       rng: np.random.Generator) -> np.ndarray:
    """Class centers for the synthetic task; larger separation = easier task."""
    return separation * rng.standard_normal((num_classes, feature_dim))


def _sample_class_points(means, classes, counts, rng):
    feats, labels = [], []
    for cls, cnt in zip(classes, counts):
        feats.append(means[cls] + rng.standard_normal((cnt, means.shape[1])))
        labels.append(np.full(cnt, cls, dtype=np.int64))
    x = np.concatenate(feats)
    y = np.concatenate(labels)
    order = rng.permutation(len(y))
    return x[order], y[order]


def partition_data(
    num_clients: int,
    size_mean: float,
    size_std: float,
    classes_per_client: int,
    rng: np.random.Generator,
    *,
    cluster_means: np.ndarray,
) -> list[Dataset]:
    """Draw label-skewed client datasets with Gaussian sizes.

    Client i sees the classes {i, i+1, ..., i + classes_per_client - 1}
    modulo the class count, so every class is covered when there are at
    least as many clients as classes.  Sizes are N(mean, std^2) rounded and
    clipped to >= 1.
    """
    num_classes = cluster_means.shape[0]
    if classes_per_client > num_classes:
        raise ValueError("classes_per_client exceeds the number of classes")
    if size_mean <= 0 or size_std < 0:
        raise ValueError("need size_mean > 0 and size_std >= 0")

    sizes = np.maximum(1, np.rint(size_mean + size_std * rng.standard_normal(num_clients)).astype(int))
    out = []
    for i in range(num_clients):
        classes = [(i + j) % num_classes for j in range(classes_per_client)]
        counts = np.bincount(rng.integers(0, classes_per_client, size=sizes[i]),
                             minlength=classes_per_client)
        x, y = _sample_class_points(cluster_means, classes, counts, rng)
        out.append(Dataset(x, y, owner=i))
    return out


def make_test_set(cluster_means: np.ndarray, size: int, rng: np.random.Generator) -> Dataset:
    """Balanced global test set drawn from every class cluster."""
    num_classes = cluster_means.shape[0]
    per = size // num_classes
    counts = [per + (1 if c < size - per * num_classes else 0) for c in range(num_classes)]
    x, y = _sample_class_points(cluster_means, range(num_classes), counts, rng)
    return Dataset(x, y)


def local_update(
    model,
    theta: np.ndarray,
    data: Dataset,
    eta: float,
    tau: int,
    batch_size: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, LocalStats]:
    """Run tau mini-batch SGD steps and report the round's statistics.

    Batches are sampled with replacement; a batch_size >= the dataset uses
    the full data deterministically (exact gradient steps).  The variance
    statistic is the spread of the round's tau mini-batch gradients around
    their mean — a serverside proxy, not a per-point oracle.
    """
    if tau < 1:
        raise ValueError("tau must be >= 1")
    if data.size < 1:
        raise ValueError("empty dataset")
    n = data.size
    theta = theta.copy()
    grads = []
    for _ in range(tau):
        if batch_size >= n:
            bx, by = data.features, data.labels
        else:
            idx = rng.integers(0, n, size=batch_size)
            bx, by = data.features[idx], data.labels[idx]
        _, g = model.loss_and_grad(theta, bx, by)
        grads.append(g)
        theta -= eta * g

    grads = np.asarray(grads)
    g_mean = grads.mean(axis=0)
    variance = float(np.mean(np.sum((grads - g_mean) ** 2, axis=1)))
    stats = LocalStats(
        grad_norm_max=float(np.max(np.linalg.norm(grads, axis=1))),
        grad_variance=variance,
        theta_max=float(np.max(np.abs(theta))),
    )
    return theta, stats


def aggregate(uploads, sizes) -> np.ndarray:
    """Size-weighted average of the participants' (dequantized) models."""
    if len(uploads) == 0:
        raise EmptyRoundError("no participants this round")
    if len(uploads) != len(sizes):
        raise ValueError("uploads/sizes length mismatch")
    total = float(np.sum(sizes))
    vectors = [dequantize(u) if isinstance(u, QuantizedModel) else np.asarray(u, dtype=np.float64)
               for u in uploads]
    out = np.zeros_like(vectors[0])
    for vec, d in zip(vectors, sizes):  # fixed order for bitwise reproducibility
        out += (d / total) * vec
    return out


def evaluate(model, theta: np.ndarray, test: Dataset) -> tuple[float, float]:
    """Mean cross-entropy loss and top-1 accuracy on a test set."""
    if test.size < 1:
        raise ValueError("empty test set")
    loss = model.loss(theta, test.features, test.labels)
    acc = float(np.mean(model.predict(theta, test.features) == test.labels))
    return loss, acc


def load_csv_dataset(path, owner: int = -1) -> Dataset:
    """Load rows of `feature..., label` so small real datasets can be plugged in."""
    raw = np.loadtxt(path, delimiter=",", ndmin=2)
    return Dataset(raw[:, :-1], raw[:, -1].astype(np.int64), owner=owner)
