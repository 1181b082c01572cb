"""
Exact k-nearest-neighbours classification.
"""
from dataclasses import dataclass

import numpy as np

from agghoo.core import CLASSIFICATION, ContractViolation, Predictor

CHUNK_ROWS = 256


def neighbour_order(train_x, x):
    """
    Training rows sorted by Euclidean distance to each query row.
    Equal distances keep training order, so ties go to the lowest training index.

    :param train_x: Training rows (n x d).
    :param x: Query rows (m x d).
    :return: Index matrix (m x n).
    :rtype: numpy.ndarray
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    order = np.empty((x.shape[0], train_x.shape[0]), dtype=np.int64)
    for start in range(0, x.shape[0], CHUNK_ROWS):
        block = x[start:start + CHUNK_ROWS]
        distances = ((block[:, np.newaxis, :] - train_x[np.newaxis, :, :]) ** 2).sum(axis=2)
        order[start:start + CHUNK_ROWS] = np.argsort(distances, axis=1, kind='stable')
    return order


def majority(votes):
    """
    Row-wise majority label of an integer vote matrix, smallest label on ties.

    :param votes: Nonnegative integer labels (m x V).
    :rtype: numpy.ndarray
    """
    votes = np.asarray(votes, dtype=np.int64)
    n_labels = int(votes.max()) + 1
    counts = np.zeros((votes.shape[0], n_labels), dtype=np.int64)
    rows = np.repeat(np.arange(votes.shape[0]), votes.shape[1])
    np.add.at(counts, (rows, votes.reshape(-1)), 1)
    return np.argmax(counts, axis=1)


@dataclass(frozen=True, eq=False)
class KnnModel(Predictor):
    """
    The k-NN classifier trained on ``train``; ``k`` odd with ``1 <= k <= n``.
    """
    train: object
    k: int

    task = CLASSIFICATION

    def __post_init__(self):
        if self.k < 1 or self.k > self.train.n:
            raise ContractViolation('k must lie in [1, {}], got {}'.format(self.train.n, self.k))
        if self.k % 2 == 0:
            raise ContractViolation('k must be odd, got {}'.format(self.k))
        if np.any(self.train.labels() < 0):
            raise ContractViolation('labels must be nonnegative integers')

    def predict(self, x):
        order = neighbour_order(self.train.x, x)
        return majority(self.train.labels()[order[:, :self.k]]).astype(float)


def knn_predict(model, x):
    """Label of a single feature row."""
    return float(model(x))


def odd_grid(n_t, max_k=99):
    """Odd ``k`` in ``[1, min(n_t, max_k)]``."""
    upper = min(int(n_t), int(max_k))
    if upper < 1:
        raise ContractViolation('k grid is empty for n_t={}'.format(n_t))
    return list(range(1, upper + 1, 2))
