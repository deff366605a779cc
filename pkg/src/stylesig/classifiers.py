"""Binary classifiers over feature matrices.

Three routes produce a {0,1} label per row: unsupervised Euclidean
2-means, the supervised imposters-style vote over random feature
subsets, and supervised cosine similarity to label-wise centroids.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, DegenerateClusteringError, DegenerateGeometryError
from .features import FeatureMatrix

KMEANS_RESTARTS = 10
KMEANS_MAX_ITER = 300


def _values(matrix) -> np.ndarray:
    if isinstance(matrix, FeatureMatrix):
        return matrix.values
    return np.asarray(matrix, dtype=np.float64)


def _kmeans_pp_init(x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding for k=2: first centre uniform, second
    proportional to squared distance from the first."""
    m = x.shape[0]
    first = int(rng.integers(m))
    d2 = np.sum((x - x[first]) ** 2, axis=1)
    total = d2.sum()
    if total == 0.0:
        raise DegenerateClusteringError("all rows identical")
    second = int(rng.choice(m, p=d2 / total))
    return np.stack([x[first], x[second]])


def _lloyd(x: np.ndarray, centres: np.ndarray) -> tuple[np.ndarray, float]:
    """Lloyd iterations until assignments are stable; returns the
    assignment and its within-cluster sum of squares."""
    assign = None
    for _ in range(KMEANS_MAX_ITER):
        d0 = np.sum((x - centres[0]) ** 2, axis=1)
        d1 = np.sum((x - centres[1]) ** 2, axis=1)
        new_assign = (d1 < d0).astype(np.int64)
        if assign is not None and np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for k in (0, 1):
            members = x[assign == k]
            if len(members) > 0:
                centres[k] = members.mean(axis=0)
            else:
                # reseed an empty cluster with the point farthest from
                # the other centre
                other = centres[1 - k]
                centres[k] = x[np.argmax(np.sum((x - other) ** 2, axis=1))]
    d0 = np.sum((x - centres[0]) ** 2, axis=1)
    d1 = np.sum((x - centres[1]) ** 2, axis=1)
    assign = (d1 < d0).astype(np.int64)
    inertia = float(np.sum(np.minimum(d0, d1)))
    return assign, inertia


def two_means(matrix, seed: int) -> np.ndarray:
    """Euclidean 2-means with k-means++ init and 10 restarts.

    Restart r uses the stream default_rng((seed, r)); the assignment of
    the lowest-inertia restart is returned. Which cluster gets label 0
    is arbitrary.
    """
    x = _values(matrix)
    if x.shape[0] < 2:
        raise DegenerateClusteringError("need at least 2 rows to cluster")
    if np.all(x == x[0]):
        raise DegenerateClusteringError("all rows identical")
    best_assign, best_inertia = None, np.inf
    for restart in range(KMEANS_RESTARTS):
        rng = np.random.default_rng((seed, restart))
        centres = _kmeans_pp_init(x, rng)
        assign, inertia = _lloyd(x, centres.copy())
        if inertia < best_inertia:
            best_assign, best_inertia = assign, inertia
    return best_assign


def _centroids(train: np.ndarray, train_labels: np.ndarray) -> np.ndarray:
    labels = np.asarray(train_labels, dtype=np.int64)
    if not (np.any(labels == 0) and np.any(labels == 1)):
        raise ConfigError("both training labels must be present")
    return np.stack([train[labels == 0].mean(axis=0), train[labels == 1].mean(axis=0)])


def gi_classify(
    train,
    train_labels,
    test,
    rounds: int = 100,
    subsample_ratio: float = 0.3,
    seed: int = 0,
) -> np.ndarray:
    """Imposters-style nearest-centroid vote over random feature subsets.

    Each round draws a uniform feature subset of size
    round(subsample_ratio * f) (at least 1, without replacement; round r
    uses default_rng((seed, r))) and assigns every test row to the
    label-wise centroid with the smaller Euclidean distance on that
    subset. The final label is the majority vote over rounds; ties go
    to label 0.
    """
    train_x, test_x = _values(train), _values(test)
    if train_x.shape[1] != test_x.shape[1]:
        raise ConfigError("train and test must share the feature space")
    if not 0.0 < subsample_ratio <= 1.0:
        raise ConfigError("subsample_ratio must be in (0, 1]")
    centroids = _centroids(train_x, train_labels)
    f = train_x.shape[1]
    k = max(1, int(round(subsample_ratio * f)))
    votes = np.zeros(test_x.shape[0], dtype=np.int64)
    for r in range(rounds):
        rng = np.random.default_rng((seed, r))
        subset = rng.choice(f, size=k, replace=False)
        d0 = np.sum((test_x[:, subset] - centroids[0, subset]) ** 2, axis=1)
        d1 = np.sum((test_x[:, subset] - centroids[1, subset]) ** 2, axis=1)
        votes += (d1 < d0).astype(np.int64)
    return (votes * 2 > rounds).astype(np.int64)


def cosine_classify(train, train_labels, test) -> np.ndarray:
    """Assign each test row to the centroid with larger cosine similarity,
    using all features. Exact ties go to label 0."""
    train_x, test_x = _values(train), _values(test)
    if train_x.shape[1] != test_x.shape[1]:
        raise ConfigError("train and test must share the feature space")
    centroids = _centroids(train_x, train_labels)
    c_norms = np.linalg.norm(centroids, axis=1)
    t_norms = np.linalg.norm(test_x, axis=1)
    if np.any(c_norms == 0.0) or np.any(t_norms == 0.0):
        raise DegenerateGeometryError("zero-norm row or centroid")
    sims = (test_x @ centroids.T) / (t_norms[:, None] * c_norms[None, :])
    return (sims[:, 1] > sims[:, 0]).astype(np.int64)
