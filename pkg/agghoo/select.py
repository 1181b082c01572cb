"""
Hold-out, Monte-Carlo cross-validation, aggregated hold-out (Agghoo) and majority
hold-out (Majhoo) over a finite family of learning rules.
"""
import logging

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from agghoo.core import (
    CLASSIFICATION, REGRESSION, ContractViolation, LossSpec, Predictor,
    argmin_lowest, check_indices, empirical_risk,
)
from agghoo.kernel import KernelModel, SolverConfig, average_models, fit_kernel, gram
from agghoo.knn import KnnModel, majority

LOGGER = logging.getLogger('agghoo')


@dataclass(frozen=True)
class RuleFamily:
    """
    A finite family of learning rules indexed by hyperparameter labels.

    :param names: Hyperparameter labels ``m``.
    :param fit: ``fit(m, dataset) -> Predictor``; must be deterministic.
    :param eval_loss: Loss ``g`` used for validation risks.
    :param fit_all: Optional ``fit_all(dataset) -> predictors`` in ``names`` order,
        for families that share work across the grid.
    """
    names: tuple
    fit: Callable
    eval_loss: LossSpec
    fit_all: Callable = None

    def __post_init__(self):
        object.__setattr__(self, 'names', tuple(self.names))
        if not self.names:
            raise ContractViolation('a rule family needs at least one rule')

    @property
    def task(self):
        return self.eval_loss.task

    def fit_every(self, data):
        if self.fit_all is not None:
            return list(self.fit_all(data))
        return [self.fit(name, data) for name in self.names]


@dataclass(frozen=True, eq=False)
class SplitRecord:
    """Hold-out outcome on one training set: validation risk of every rule and the winner."""
    train: np.ndarray
    risks: np.ndarray
    chosen: int


@dataclass(frozen=True, eq=False)
class SelectionTrace:
    """
    Audit record of a selection: one SplitRecord per training set, plus the averaged
    risks and overall choice for cross-validation.
    """
    names: tuple
    splits: tuple
    cv_risks: np.ndarray = None
    chosen: int = None

    def risk_matrix(self):
        return np.vstack([record.risks for record in self.splits])

    def to_dict(self):
        return {
            'names': [_plain(name) for name in self.names],
            'splits': [
                {
                    'train': record.train.tolist(),
                    'risks': record.risks.tolist(),
                    'chosen': record.chosen,
                    'chosen_name': _plain(self.names[record.chosen]),
                }
                for record in self.splits
            ],
            'cv_risks': None if self.cv_risks is None else self.cv_risks.tolist(),
            'chosen': self.chosen,
        }


def _plain(value):
    return value.item() if isinstance(value, np.generic) else value


class AggregateModel(Predictor):
    """
    Combination of the hold-out predictors of several splits.

    ``mean`` averages regression predictors (through a single kernel expansion when every
    component is a KernelModel); ``majority`` takes a vote with the smallest label on ties.
    """

    def __init__(self, components, mode, trace=None):
        if mode not in ('mean', 'majority'):
            raise ContractViolation('unknown aggregation mode: {}'.format(mode))
        self.components = tuple(components)
        if not self.components:
            raise ContractViolation('nothing to aggregate')
        self.mode = mode
        self.trace = trace
        self.task = REGRESSION if mode == 'mean' else CLASSIFICATION
        self.kernel = None
        if mode == 'mean' and all(isinstance(c, KernelModel) for c in self.components):
            self.kernel = average_models(self.components)

    def predict(self, x):
        if self.kernel is not None:
            return self.kernel.predict(x)
        predictions = np.column_stack([c.predict(x) for c in self.components])
        if self.mode == 'mean':
            return predictions.mean(axis=1)
        return majority(np.rint(predictions).astype(np.int64)).astype(float)

    def __repr__(self):
        return 'AggregateModel(mode={!r}, V={})'.format(self.mode, len(self.components))


class ThresholdModel(Predictor):
    """Binary classifier ``x -> 1{f(x) >= 0}`` built on a real-valued predictor ``f``."""
    task = CLASSIFICATION

    def __init__(self, inner):
        self.inner = inner

    def predict(self, x):
        return (self.inner.predict(x) >= 0.0).astype(float)


def _holdout(family, data, train):
    train = check_indices(train, data.n)
    valid = data.complement(train)
    if valid.size == 0:
        raise ContractViolation('the validation set T^c is empty')
    predictors = family.fit_every(data.subset(train))
    risks = np.array([empirical_risk(p, data, valid, family.eval_loss) for p in predictors])
    return SplitRecord(train, risks, argmin_lowest(risks)), predictors


def holdout_select(family, data, T):
    """
    Hold-out selection on the training set ``T``.

    Every rule is trained on ``D_n^T`` and scored on ``T^c``; the winner (lowest index on
    ties) is returned as trained on ``D_n^T``.

    :return: The trace and the selected predictor.
    :rtype: tuple
    """
    record, predictors = _holdout(family, data, T)
    return SelectionTrace(family.names, (record,)), predictors[record.chosen]


def selection_path(family, data, plan, workers=1):
    """
    Hold-out on every split of ``plan``.

    Splits are independent; with ``workers > 1`` they run on a thread pool and come back
    in plan order.

    :return: List of ``(SplitRecord, selected predictor)`` pairs, one per split.
    :rtype: list
    """
    if plan.n != data.n:
        raise ContractViolation('plan is for n={} but the dataset has {} rows'.format(plan.n, data.n))

    def run(train):
        record, predictors = _holdout(family, data, train)
        return record, predictors[record.chosen]

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            return list(executor.map(run, plan.subsets))
    return [run(train) for train in plan.subsets]


def cv_select(family, data, plan, path=None):
    """
    Monte-Carlo cross-validation: average the hold-out risks over the plan, select the
    minimiser (lowest index on ties) and refit it on the full dataset.

    :param path: Precomputed ``selection_path`` output for this plan (optional).
    :return: The trace and the refitted predictor.
    :rtype: tuple
    """
    path = path if path is not None else selection_path(family, data, plan)
    records = tuple(record for record, _ in path)
    cv_risks = np.mean([record.risks for record in records], axis=0)
    chosen = argmin_lowest(cv_risks)
    trace = SelectionTrace(family.names, records, cv_risks, chosen)
    return trace, family.fit(family.names[chosen], data)


def agghoo_fit(family, data, plan, path=None):
    """
    Aggregated hold-out: the mean of the hold-out predictors of every split.

    :raises: ContractViolation for a classification family (use ``majhoo_fit``).
    :rtype: AggregateModel
    """
    if family.task != REGRESSION:
        raise ContractViolation('agghoo_fit needs a regression family; use majhoo_fit')
    path = path if path is not None else selection_path(family, data, plan)
    trace = SelectionTrace(family.names, tuple(record for record, _ in path))
    return AggregateModel([predictor for _, predictor in path], 'mean', trace)


def majhoo_fit(family, data, plan, path=None):
    """
    Majority hold-out: a vote of the hold-out classifiers of every split, smallest label
    on ties.

    :raises: ContractViolation for a regression family.
    :rtype: AggregateModel
    """
    if family.task != CLASSIFICATION:
        raise ContractViolation('majhoo_fit needs a classification family; use agghoo_fit')
    path = path if path is not None else selection_path(family, data, plan)
    trace = SelectionTrace(family.names, tuple(record for record, _ in path))
    return AggregateModel([predictor for _, predictor in path], 'majority', trace)


def threshold_family(family, eval_loss=None):
    """
    The binary classifiers ``1{A_m >= 0}`` of a real-valued family, scored with the
    zero-one loss unless ``eval_loss`` says otherwise.
    """
    def fit(name, data):
        return ThresholdModel(family.fit(name, data))

    def fit_all(data):
        return [ThresholdModel(predictor) for predictor in family.fit_every(data)]

    return RuleFamily(family.names, fit, eval_loss or LossSpec.zero_one(), fit_all)


def agghoo_sign_fit(family, data, plan):
    """
    Binary classification through the surrogate problem: hold-out selection of the
    thresholded rules, then the real-valued selected predictors are averaged and the
    average is thresholded at 0.

    :rtype: ThresholdModel
    """
    path = selection_path(threshold_family(family), data, plan)
    trace = SelectionTrace(family.names, tuple(record for record, _ in path))
    return ThresholdModel(AggregateModel([p.inner for _, p in path], 'mean', trace))


def cost_grid(scale=500.0, steps=17):
    """Cost parameters ``C = scale / 2^j`` for ``0 <= j <= steps``."""
    return tuple(float(scale) / 2.0 ** j for j in range(int(steps) + 1))


def cost_to_lambda(cost, n_t):
    """``lambda = 1 / (2 C n_t)`` for a training set of size ``n_t``."""
    return 1.0 / (2.0 * cost * n_t)


def kernel_family(costs, loss, spec, eval_loss=None, solver_cfg=None):
    """
    Regularized kernel estimators indexed by the cost ``C``; a rule trained on N points
    uses ``lambda = 1 / (2 C N)``. One Gram matrix is shared across the grid.

    :param costs: Cost parameters.
    :param loss: Training loss ``c``.
    :param spec: KernelSpec.
    :param eval_loss: Validation loss ``g`` (absolute loss by default).
    :param solver_cfg: SolverConfig.
    :rtype: RuleFamily
    """
    cfg = solver_cfg or SolverConfig()

    def fit(cost, data):
        return fit_kernel(cost_to_lambda(cost, data.n), data, loss, spec, cfg)[0]

    def fit_all(data):
        G = gram(spec, data.x, data.x)
        return [fit_kernel(cost_to_lambda(cost, data.n), data, loss, spec, cfg, G)[0]
                for cost in costs]

    return RuleFamily(tuple(costs), fit, eval_loss or LossSpec.absolute(), fit_all)


def knn_family(ks):
    """k-NN classifiers for every ``k`` in ``ks``, scored with the zero-one loss."""
    def fit(k, data):
        return KnnModel(data, int(k))

    return RuleFamily(tuple(int(k) for k in ks), fit, LossSpec.zero_one())
