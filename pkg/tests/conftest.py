import numpy as np
import pytest

from clustersweep.data import EmbeddingMatrix, Partition


def make_partition(labels, k=None, ids=None) -> Partition:
    labels = np.asarray(labels, dtype=np.int64)
    if k is None:
        k = int(labels.max()) + 1 if labels.size else 1
    if ids is None:
        ids = tuple(str(i) for i in range(len(labels)))
    return Partition(len(labels), k, labels, tuple(ids))


def make_matrix(values, ids=None) -> EmbeddingMatrix:
    values = np.asarray(values, dtype=np.float64)
    if ids is None:
        ids = tuple(str(i) for i in range(values.shape[0]))
    return EmbeddingMatrix(tuple(ids), values)


def make_blobs(centers, n_per, sigma=1.0, seed=0):
    """Gaussian blobs around the given centers, with generating labels."""
    rng = np.random.default_rng(seed)
    centers = np.asarray(centers, dtype=np.float64)
    xs, labels = [], []
    for i, c in enumerate(centers):
        xs.append(rng.normal(c, sigma, size=(n_per, centers.shape[1])))
        labels.extend([i] * n_per)
    X = np.vstack(xs)
    ids = tuple(str(i) for i in range(X.shape[0]))
    return EmbeddingMatrix(ids, X), np.asarray(labels, dtype=np.int64)


def axis_centers(n_blobs, d, sep):
    """Blob centers at sep along distinct axes; pairwise distance sep * sqrt(2)."""
    centers = np.zeros((n_blobs, d))
    for i in range(n_blobs):
        centers[i, i] = sep
    return centers


def spread_centers(n_blobs, d, sep, seed=1234):
    """Orthonormal center directions scaled to sep; pairwise distance sep * sqrt(2).

    Unlike axis-aligned centers, the separation is spread over every
    dimension, so subsampling columns shrinks it smoothly instead of
    collapsing blobs.
    """
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.normal(size=(d, n_blobs)))
    return q.T[:n_blobs] * sep


def nested_centers(d=8, super_sep=30.0, sub_sep=4.0):
    """Two super-blobs on axis 0, each split into two sub-blobs on axis 1."""
    centers = []
    for base in (-super_sep, super_sep):
        for sub in (-sub_sep, sub_sep):
            c = np.zeros(d)
            c[0] = base
            c[1] = sub
            centers.append(c)
    return np.asarray(centers)


@pytest.fixture(scope="session")
def four_blob_data():
    """4 well-separated blobs: n=2000, d=64, pairwise center distance ~28 sigma."""
    return make_blobs(spread_centers(4, 64, 20.0), n_per=500, sigma=1.0, seed=42)


@pytest.fixture(scope="session")
def nested_blob_data():
    """2 super-blobs each holding 2 sub-blobs; n=1000, d=8."""
    return make_blobs(nested_centers(), n_per=250, sigma=1.0, seed=3)
