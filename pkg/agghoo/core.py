"""
Datasets, losses, index splits and the predictor abstraction shared by every module.
"""
import abc
import logging
import math
import zlib

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

LOGGER = logging.getLogger('agghoo')

REGRESSION = 'regression'
CLASSIFICATION = 'classification'

LOSS_KINDS = ('squared', 'absolute', 'eps_insensitive', 'hinge', 'zero_one')


class ContractViolation(ValueError):
    """A documented precondition of an operation does not hold."""


class DomainError(ValueError):
    """An input lies outside the domain where a quantity is defined (non-finite values)."""


def _frozen(array):
    array.flags.writeable = False
    return array


@dataclass(frozen=True, eq=False)
class Dataset:
    """
    An immutable sample: feature rows ``x`` (n x d) and targets ``y`` (length n).

    Labels for classification are stored as reals holding small integers.
    ``index`` carries the row numbers of the parent sample when the dataset is a subset.

    :param x: Feature matrix (a 1-D array is read as a single column).
    :param y: Target vector.
    :param index: Original row indices (defaults to ``0..n-1``).
    :raises: ContractViolation on shape mismatch, DomainError on non-finite entries.
    """
    x: np.ndarray
    y: np.ndarray
    index: np.ndarray = field(default=None)

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        y = np.array(self.y, dtype=float).reshape(-1)
        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
            raise ContractViolation('x must be a nonempty n x d matrix, got shape {}'.format(x.shape))
        if x.shape[0] != y.shape[0]:
            raise ContractViolation('x has {} rows but y has {} entries'.format(x.shape[0], y.shape[0]))
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise DomainError('dataset entries must be finite')

        index = np.arange(x.shape[0]) if self.index is None else np.array(self.index, dtype=np.int64)
        if index.shape != y.shape:
            raise ContractViolation('index must have one entry per row')

        object.__setattr__(self, 'x', _frozen(x))
        object.__setattr__(self, 'y', _frozen(y))
        object.__setattr__(self, 'index', _frozen(index))

    @property
    def n(self):
        return self.x.shape[0]

    @property
    def d(self):
        return self.x.shape[1]

    def subset(self, indices):
        """
        Return the sub-sample ``D_n^T`` indexed by ``indices``.

        :param indices: Row positions in this dataset.
        :return: New dataset keeping the parent row numbers in ``index``.
        :rtype: Dataset
        """
        indices = check_indices(indices, self.n)
        return Dataset(self.x[indices], self.y[indices], index=self.index[indices])

    def complement(self, indices):
        """Sorted row positions not in ``indices`` (the validation set ``T^c``)."""
        mask = np.ones(self.n, dtype=bool)
        mask[check_indices(indices, self.n)] = False
        return np.flatnonzero(mask)

    def labels(self):
        """Targets rounded to the nearest integer label."""
        return np.rint(self.y).astype(np.int64)


def check_indices(indices, n):
    """
    Validate an index set against a sample of size ``n``.

    :raises: ContractViolation if the set is empty, has repeats or is out of range.
    :rtype: numpy.ndarray
    """
    indices = np.asarray(indices, dtype=np.int64).reshape(-1)
    if indices.size == 0:
        raise ContractViolation('index set must be nonempty')
    if indices.min() < 0 or indices.max() >= n:
        raise ContractViolation('indices must lie in [0, {})'.format(n))
    if np.unique(indices).size != indices.size:
        raise ContractViolation('indices must be distinct')
    return indices


@dataclass(frozen=True)
class LossSpec:
    """
    A loss ``g(prediction, target)`` used for training (``c``) or evaluation (``g``).

    ``eps_insensitive`` with ``epsilon=0`` coincides with ``absolute``. ``zero_one``
    compares labels after rounding, ``hinge`` maps targets to +1/-1 by the sign of ``y - 1/2``.
    """
    kind: str
    epsilon: float = 0.0

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ContractViolation('unknown loss kind: {}'.format(self.kind))
        if not math.isfinite(self.epsilon) or self.epsilon < 0:
            raise ContractViolation('epsilon must be finite and >= 0')
        if self.kind != 'eps_insensitive' and self.epsilon != 0:
            raise ContractViolation('epsilon only applies to eps_insensitive')

    @classmethod
    def squared(cls):
        return cls('squared')

    @classmethod
    def absolute(cls):
        return cls('absolute')

    @classmethod
    def eps_insensitive(cls, epsilon):
        return cls('eps_insensitive', float(epsilon))

    @classmethod
    def hinge(cls):
        return cls('hinge')

    @classmethod
    def zero_one(cls):
        return cls('zero_one')

    @property
    def lipschitz(self):
        """Lipschitz constant in the prediction, None when the loss has none."""
        if self.kind in ('absolute', 'eps_insensitive', 'hinge'):
            return 1.0
        return None

    @property
    def convex(self):
        return self.kind != 'zero_one'

    @property
    def task(self):
        return CLASSIFICATION if self.kind in ('hinge', 'zero_one') else REGRESSION

    def values(self, prediction, target):
        """
        Vectorised point losses.

        :param prediction: Array of predictions.
        :param target: Array of targets (same shape).
        :return: Array of nonnegative losses.
        :rtype: numpy.ndarray
        """
        prediction = np.asarray(prediction, dtype=float)
        target = np.asarray(target, dtype=float)
        if self.kind == 'squared':
            return (prediction - target) ** 2
        if self.kind == 'absolute':
            return np.abs(prediction - target)
        if self.kind == 'eps_insensitive':
            return np.maximum(np.abs(prediction - target) - self.epsilon, 0.0)
        if self.kind == 'hinge':
            return np.maximum(1.0 - prediction * hinge_sign(target), 0.0)
        return (np.rint(prediction) != np.rint(target)).astype(float)

    def pieces(self, target):
        """
        Write a piecewise-linear convex loss as ``sum_k max(0, a_k * u + b_k)``.

        Used by the kernel solver for smoothing and kink detection.

        :param target: Target vector.
        :return: Pair of arrays ``(a, b)`` with shape (pieces, n).
        :raises: ContractViolation for squared and zero_one losses.
        """
        target = np.asarray(target, dtype=float)
        ones = np.ones_like(target)
        if self.kind == 'absolute':
            return np.stack([ones, -ones]), np.stack([-target, target])
        if self.kind == 'eps_insensitive':
            return np.stack([ones, -ones]), np.stack([-target - self.epsilon, target - self.epsilon])
        if self.kind == 'hinge':
            sign = hinge_sign(target)
            return -sign[np.newaxis, :], ones[np.newaxis, :]
        raise ContractViolation('{} loss is not piecewise linear'.format(self.kind))


def hinge_sign(target):
    return np.where(np.asarray(target, dtype=float) > 0.5, 1.0, -1.0)


def point_loss(loss, prediction, target):
    """
    Evaluate ``g(prediction, target)`` for a single pair.

    :raises: DomainError on non-finite input.
    :rtype: float
    """
    if not (math.isfinite(prediction) and math.isfinite(target)):
        raise DomainError('point_loss requires finite inputs')
    return float(loss.values(prediction, target))


class Predictor(abc.ABC):
    """
    A fitted predictor. ``predict`` maps a matrix of feature rows to scores or labels.
    """
    task = REGRESSION

    @abc.abstractmethod
    def predict(self, x):
        """Evaluate on every row of ``x`` (n x d)."""

    def __call__(self, row):
        return self.predict(np.atleast_2d(np.asarray(row, dtype=float)))[0]


class ConstantPredictor(Predictor):
    """Predicts the same value everywhere."""

    def __init__(self, value, task=REGRESSION):
        self.value = float(value)
        self.task = task

    def predict(self, x):
        return np.full(np.atleast_2d(x).shape[0], self.value)

    def __repr__(self):
        return 'ConstantPredictor({!r})'.format(self.value)


def empirical_risk(pred, data, subset, loss):
    """
    Mean loss of ``pred`` over the rows ``subset`` of ``data`` (``P_n^T gamma``).

    :raises: ContractViolation if ``subset`` is empty or invalid.
    :rtype: float
    """
    subset = check_indices(subset, data.n)
    predictions = pred.predict(data.x[subset])
    return float(np.mean(loss.values(predictions, data.y[subset])))


@dataclass(frozen=True, eq=False)
class SplitPlan:
    """
    The collection of V training index sets, each of cardinality ``n_t``.
    """
    n: int
    n_t: int
    subsets: tuple
    seed: int

    @property
    def n_v(self):
        return self.n - self.n_t

    @property
    def V(self):
        return len(self.subsets)

    def validation(self, i):
        """Sorted complement of the i-th training set."""
        mask = np.ones(self.n, dtype=bool)
        mask[self.subsets[i]] = False
        return np.flatnonzero(mask)

    def head(self, V):
        """The plan restricted to its first ``V`` subsets."""
        if not 1 <= V <= self.V:
            raise ContractViolation('cannot take {} of {} subsets'.format(V, self.V))
        return SplitPlan(self.n, self.n_t, self.subsets[:V], self.seed)

    def to_dict(self):
        return {
            'n': self.n,
            'n_t': self.n_t,
            'seed': self.seed,
            'subsets': [subset.tolist() for subset in self.subsets],
        }


def make_rng(seed):
    """Counter-based generator (Philox) for a 64-bit integer seed."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


def derive_seed(master, *path):
    """
    Derive an independent 64-bit seed from a master seed and a path of ints or strings.

    Strings are mapped to integers with CRC-32 so the derivation is stable across platforms.

    :rtype: int
    """
    words = [int(master)]
    for item in path:
        words.append(zlib.crc32(item.encode('utf-8')) if isinstance(item, str) else int(item))
    return int(np.random.SeedSequence(words).generate_state(1, np.uint64)[0])


def make_split_plan(n, n_t, V, seed):
    """
    Draw V training sets uniformly among subsets of ``{0..n-1}`` of size ``n_t``.

    Each subset comes from a partial Fisher-Yates shuffle; all draws consume one
    generator in order, so the first V subsets do not depend on how many follow.

    :param n: Sample size.
    :param n_t: Training-set cardinality, ``1 <= n_t <= n - 1``.
    :param V: Number of subsets.
    :param seed: 64-bit integer seed.
    :raises: ContractViolation on out-of-range arguments.
    :rtype: SplitPlan
    """
    n, n_t, V = int(n), int(n_t), int(V)
    if not 1 <= n_t <= n - 1:
        raise ContractViolation('n_t must lie in [1, n - 1], got n_t={} for n={}'.format(n_t, n))
    if V < 1:
        raise ContractViolation('V must be >= 1')

    rng = make_rng(seed)
    subsets = []
    for _ in range(V):
        perm = np.arange(n, dtype=np.int64)
        swaps = rng.integers(np.arange(n_t), n)
        for i, j in enumerate(swaps):
            perm[i], perm[j] = perm[j], perm[i]
        subsets.append(_frozen(np.sort(perm[:n_t])))
    return SplitPlan(n, n_t, tuple(subsets), int(seed))


def n_train(tau, n):
    """
    Training-set size ``floor(tau * n)``, with ``tau`` taken as the decimal it prints as.

    :raises: ContractViolation when the result is 0 or n.
    :rtype: int
    """
    n_t = math.floor(Fraction(repr(float(tau))) * int(n))
    if n_t < 1 or n_t > n - 1:
        raise ContractViolation('floor({} * {}) = {} leaves an empty training or validation set'
                                .format(tau, n, n_t))
    return n_t


def argmin_lowest(values):
    """Index of the minimum, lowest index on ties."""
    return int(np.argmin(np.asarray(values, dtype=float)))
