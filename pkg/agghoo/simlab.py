"""
Simulated regression and classification problems, their excess-risk estimators, and
the Monte-Carlo harness comparing Agghoo / Majhoo with cross-validation over
training fractions and split counts.
"""
import hashlib
import json
import logging
import math
import os

from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import pandas as pd

from scipy import integrate, stats
from scipy.special import expit

from agghoo.core import (
    CLASSIFICATION, REGRESSION, ContractViolation, Dataset, LossSpec, Predictor,
    derive_seed, make_rng, make_split_plan, n_train,
)
from agghoo.kernel import KernelSpec, SolverConfig
from agghoo.knn import odd_grid
from agghoo.select import (
    agghoo_fit, cost_grid, cv_select, kernel_family, knn_family, majhoo_fit, selection_path,
)

LOGGER = logging.getLogger('agghoo')

TASKS = ('eps_svr', 'knn')
THREADS_ENV = 'AGGHOO_THREADS'
FLOAT_FORMAT = '%.17g'
REPORT_COLUMNS = ('method', 'tau', 'V', 'mean_excess', 'se', 'replicates')
REPLICATE_COLUMNS = ('replicate', 'method', 'tau', 'V', 'excess')


@dataclass(frozen=True)
class RegressionSimSpec:
    """
    ``X ~ N(0, x_var)``, ``Y = exp(cos X) + Z`` with ``Z ~ N(0, noise_var)`` independent
    of ``X``. Both normal laws are parametrised by their variance.
    """
    n: int
    seed: int = 0
    x_var: float = math.pi
    noise_var: float = 0.5


@dataclass(frozen=True)
class ClassifSimSpec:
    """
    ``X`` uniform on the unit square, ``P(Y = 1 | X) = expit((g(X) - b) / scale)`` with
    ``g(u, v) = exp(-(u^2 + v)^3) + u^2 + v^2``.
    """
    n: int
    seed: int = 0
    b: float = 1.18
    scale: float = 0.05


def _check_size(n):
    if int(n) < 1:
        raise ContractViolation('sample size must be >= 1, got {}'.format(n))


def gen_regression(spec):
    """
    Draw an i.i.d. regression sample; deterministic in ``spec.seed``.

    :rtype: Dataset
    """
    _check_size(spec.n)
    rng = make_rng(spec.seed)
    x = rng.normal(0.0, math.sqrt(spec.x_var), size=spec.n)
    noise = rng.normal(0.0, math.sqrt(spec.noise_var), size=spec.n)
    return Dataset(x.reshape(-1, 1), np.exp(np.cos(x)) + noise)


def link_argument(x):
    """``g(u, v)`` on every row of ``x``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    u, v = x[:, 0], x[:, 1]
    return np.exp(-(u ** 2 + v) ** 3) + u ** 2 + v ** 2


def eta(x, spec=None):
    """``P(Y = 1 | X = x)`` for every row of ``x``."""
    spec = spec or ClassifSimSpec(n=1)
    return expit((link_argument(x) - spec.b) / spec.scale)


def gen_classification(spec):
    """
    Draw an i.i.d. binary classification sample with labels in {0, 1}.

    :rtype: Dataset
    """
    _check_size(spec.n)
    rng = make_rng(spec.seed)
    x = rng.uniform(0.0, 1.0, size=(spec.n, 2))
    y = (rng.uniform(0.0, 1.0, size=spec.n) < eta(x, spec)).astype(float)
    return Dataset(x, y)


class RegressionFunction(Predictor):
    """``x -> exp(cos x)``, the regression function of the regression simulator."""

    def predict(self, x):
        return np.exp(np.cos(np.atleast_2d(x)[:, 0]))


class BayesClassifier(Predictor):
    """``x -> 1{g(x) >= b}``."""
    task = CLASSIFICATION

    def __init__(self, spec=None):
        self.spec = spec or ClassifSimSpec(n=1)

    def predict(self, x):
        return (link_argument(x) >= self.spec.b).astype(float)


def regression_function():
    return RegressionFunction()


def bayes_classifier(spec=None):
    return BayesClassifier(spec)


def excess_risk_estimate(pred, test, task, spec=None):
    """
    Test-sample estimate of the excess risk of ``pred``.

    Regression: mean absolute error of ``pred`` minus that of the regression function
    on the same test rows. Classification: mean of ``|2 eta(x) - 1|`` over the test rows
    where ``pred`` disagrees with the Bayes classifier.

    :param pred: Predictor whose task matches ``task``.
    :param test: Test sample from the matching simulator.
    :param task: ``regression`` or ``classification``.
    :param spec: ClassifSimSpec for the conditional law (classification only).
    :raises: ContractViolation on a task mismatch.
    :rtype: float
    """
    if task not in (REGRESSION, CLASSIFICATION):
        raise ContractViolation('unknown task: {}'.format(task))
    if pred.task != task:
        raise ContractViolation('a {} predictor cannot be scored on a {} sample'.format(pred.task, task))
    predictions = pred.predict(test.x)
    if task == REGRESSION:
        if test.d != 1:
            raise ContractViolation('the regression simulator has one feature')
        absolute = LossSpec.absolute()
        truth = RegressionFunction().predict(test.x)
        return float(np.mean(absolute.values(predictions, test.y))
                     - np.mean(absolute.values(truth, test.y)))
    if test.d != 2:
        raise ContractViolation('the classification simulator has two features')
    spec = spec or ClassifSimSpec(n=1)
    margin = np.abs(2.0 * eta(test.x, spec) - 1.0)
    wrong = np.rint(predictions) != BayesClassifier(spec).predict(test.x)
    return float(np.mean(margin * wrong))


def _unit_square_nodes(nodes):
    t, w = np.polynomial.legendre.leggauss(int(nodes))
    t, w = 0.5 * (t + 1.0), 0.5 * w
    u, v = np.meshgrid(t, t, indexing='ij')
    return np.column_stack([u.ravel(), v.ravel()]), np.outer(w, w).ravel()


def classif_bayes_risk(spec=None, nodes=1000):
    """``E[min(eta, 1 - eta)]`` by tensor Gauss-Legendre quadrature on the unit square."""
    points, weights = _unit_square_nodes(nodes)
    p = eta(points, spec)
    return float(weights @ np.minimum(p, 1.0 - p))


def classif_positive_rate(spec=None, nodes=1000):
    """``P(Y = 1)`` by quadrature."""
    points, weights = _unit_square_nodes(nodes)
    return float(weights @ eta(points, spec))


def classif_expected_excess(pred, spec=None, nodes=1000):
    """Population excess risk of a classifier on the unit square, by quadrature."""
    points, weights = _unit_square_nodes(nodes)
    margin = np.abs(2.0 * eta(points, spec) - 1.0)
    wrong = np.rint(pred.predict(points)) != BayesClassifier(spec).predict(points)
    return float(weights @ (margin * wrong))


def regression_target_mean(spec=None):
    """``E[exp(cos X)]`` under the regression simulator's design law."""
    spec = spec or RegressionSimSpec(n=1)
    law = stats.norm(0.0, math.sqrt(spec.x_var))
    value, _ = integrate.quad(lambda x: math.exp(math.cos(x)) * law.pdf(x), -np.inf, np.inf)
    return value


@dataclass(frozen=True)
class ExperimentConfig:
    """
    Everything a simulation study depends on. ``output``, ``workers`` and ``database``
    only affect where and how it runs, not its results.
    """
    task: str = 'eps_svr'
    n: int = 500
    n_test: int = 1000
    replicates: int = 1000
    taus: tuple = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
    vs: tuple = (1, 2, 5, 10)
    seed: int = 0
    epsilon: float = 0.25
    bandwidth: float = 0.5
    cost_scale: float = 500.0
    cost_steps: int = 17
    max_k: int = 99
    solver: SolverConfig = field(default_factory=SolverConfig)
    output: str = None
    workers: int = None
    database: object = None

    def __post_init__(self):
        if self.task not in TASKS:
            raise ContractViolation('task must be one of {}, got {!r}'.format(', '.join(TASKS), self.task))
        if self.n < 2 or self.n_test < 1 or self.replicates < 1:
            raise ContractViolation('need n >= 2, n_test >= 1 and replicates >= 1')
        taus = tuple(float(tau) for tau in self.taus)
        vs = tuple(int(V) for V in self.vs)
        if not taus or any(not 0 < tau < 1 for tau in taus):
            raise ContractViolation('taus must be a nonempty list of fractions in (0, 1)')
        if not vs or min(vs) < 1:
            raise ContractViolation('vs must be a nonempty list of positive integers')
        if self.workers is not None and self.workers < 1:
            raise ContractViolation('workers must be >= 1')
        solver = self.solver
        if not isinstance(solver, SolverConfig):
            solver = SolverConfig.from_dict(solver)
        object.__setattr__(self, 'taus', taus)
        object.__setattr__(self, 'vs', vs)
        object.__setattr__(self, 'solver', solver)

    @classmethod
    def load(cls, source):
        """
        Load a configuration, whatever it might be.

        An ExperimentConfig instance, a dictionary of fields, or a path to a JSON file.

        :raises: ContractViolation on unknown keys or invalid values, OSError if the file
            cannot be read.
        :rtype: ExperimentConfig
        """
        if isinstance(source, cls):
            return source
        if not isinstance(source, dict):
            with open(str(source), encoding='utf-8') as handle:
                try:
                    source = json.load(handle)
                except ValueError as exc:
                    raise ContractViolation('invalid JSON config: {}'.format(exc))
            if not isinstance(source, dict):
                raise ContractViolation('a JSON config must be an object')
        unknown = set(source) - {f.name for f in fields(cls)}
        if unknown:
            raise ContractViolation('unknown config keys: {}'.format(', '.join(sorted(unknown))))
        try:
            return cls(**source)
        except TypeError as exc:
            raise ContractViolation('invalid config value: {}'.format(exc))

    def to_dict(self):
        values = asdict(replace(self, database=None))
        if isinstance(self.database, (str, dict)):
            values['database'] = self.database
        values['taus'] = list(self.taus)
        values['vs'] = list(self.vs)
        values['solver']['mu_schedule'] = list(self.solver.mu_schedule)
        return values

    def digest(self):
        """Hash of the settings that determine the results."""
        values = self.to_dict()
        for key in ('output', 'workers', 'database'):
            values.pop(key)
        text = json.dumps(values, sort_keys=True)
        return hashlib.sha256(text.encode('utf-8')).hexdigest()

    @property
    def aggregate_method(self):
        return 'agghoo' if self.task == 'eps_svr' else 'majhoo'

    @property
    def sim_task(self):
        return REGRESSION if self.task == 'eps_svr' else CLASSIFICATION


def simulate(task, n, seed):
    """Draw a sample of size ``n`` from the simulator of ``task`` (``eps_svr`` or ``knn``)."""
    if task == 'eps_svr':
        return gen_regression(RegressionSimSpec(n=n, seed=seed))
    if task == 'knn':
        return gen_classification(ClassifSimSpec(n=n, seed=seed))
    raise ContractViolation('unknown task: {}'.format(task))


def build_family(cfg, n_t):
    """Rule family of ``cfg`` for training sets of size ``n_t``."""
    if cfg.task == 'eps_svr':
        return kernel_family(
            cost_grid(cfg.cost_scale, cfg.cost_steps),
            LossSpec.eps_insensitive(cfg.epsilon),
            KernelSpec(cfg.bandwidth),
            LossSpec.absolute(),
            cfg.solver)
    return knn_family(odd_grid(n_t, cfg.max_k))


def train_sizes(cfg, warn=False):
    """
    ``(tau, n_t)`` for every training fraction whose ``floor(tau * n)`` leaves both
    sets nonempty; the others are skipped.
    """
    sizes = []
    for tau in cfg.taus:
        try:
            sizes.append((tau, n_train(tau, cfg.n)))
        except ContractViolation as exc:
            if warn:
                LOGGER.warning('experiment: skipping tau={}: {}'.format(tau, exc))
    return tuple(sizes)


class _FullFits:
    """Fits on the full sample, computed once per hyperparameter."""

    def __init__(self, cfg, data):
        self.family = build_family(cfg, data.n)
        self.data = data
        self.cache = {}

    def fit(self, name):
        if name not in self.cache:
            self.cache[name] = self.family.fit(name, self.data)
        return self.cache[name]

    def all(self):
        if not self.cache:
            self.cache.update(zip(self.family.names, self.family.fit_every(self.data)))
        return [self.fit(name) for name in self.family.names]


def _run_replicate(cfg, r):
    """
    Excess risks of one replicate: the oracle, then for every tau and V the aggregated
    hold-out and the cross-validation predictors.

    :return: List of rows ``{replicate, method, tau, V, excess}``.
    :rtype: list
    """
    data = simulate(cfg.task, cfg.n, derive_seed(cfg.seed, r))
    test = simulate(cfg.task, cfg.n_test, derive_seed(cfg.seed, r, 'test'))
    task = cfg.sim_task
    full = _FullFits(cfg, data)

    def excess(pred):
        return excess_risk_estimate(pred, test, task)

    rows = [{'replicate': r, 'method': 'oracle', 'tau': None, 'V': None,
             'excess': min(excess(pred) for pred in full.all())}]
    aggregate = agghoo_fit if cfg.task == 'eps_svr' else majhoo_fit

    for tau, n_t in train_sizes(cfg):
        family = build_family(cfg, n_t)
        plan = make_split_plan(cfg.n, n_t, max(cfg.vs), derive_seed(cfg.seed, r, 'splits'))
        path = selection_path(family, data, plan)
        refit = _refit_family(family, full)
        for V in cfg.vs:
            head = plan.head(V)
            model = aggregate(family, data, head, path=path[:V])
            _, chosen = cv_select(refit, data, head, path=path[:V])
            rows.append({'replicate': r, 'method': cfg.aggregate_method, 'tau': tau, 'V': V,
                         'excess': excess(model)})
            rows.append({'replicate': r, 'method': 'cv', 'tau': tau, 'V': V,
                         'excess': excess(chosen)})
    return rows


def _refit_family(family, full):
    def fit(name, data):
        if data is full.data:
            return full.fit(name)
        return family.fit(name, data)

    return replace(family, fit=fit)


def resolve_workers(cfg):
    """Worker count: ``cfg.workers`` (default: CPU count) capped by AGGHOO_THREADS."""
    workers = cfg.workers or os.cpu_count() or 1
    cap = os.environ.get(THREADS_ENV)
    if cap:
        try:
            workers = min(workers, max(1, int(cap)))
        except ValueError:
            raise ContractViolation('{} must be an integer, got {!r}'.format(THREADS_ENV, cap))
    return max(1, min(workers, cfg.replicates))


@dataclass(frozen=True, eq=False)
class RiskReport:
    """
    Mean excess risk and standard error per (method, tau, V), plus the per-replicate rows
    they were computed from. Oracle rows leave tau and V empty.
    """
    table: pd.DataFrame
    replicates: pd.DataFrame
    skipped: tuple = ()

    @classmethod
    def from_rows(cls, rows, skipped=()):
        replicates = pd.DataFrame(rows, columns=list(REPLICATE_COLUMNS))
        replicates['tau'] = replicates['tau'].astype(float)
        replicates['V'] = replicates['V'].astype('Int64')
        replicates['excess'] = replicates['excess'].astype(float)
        grouped = replicates.groupby(['method', 'tau', 'V'], sort=False, dropna=False)['excess']
        table = grouped.agg(['mean', 'std', 'count']).reset_index()
        table['se'] = (table['std'] / np.sqrt(table['count'])).where(table['count'] > 1, 0.0)
        table = table.rename(columns={'mean': 'mean_excess', 'count': 'replicates'})
        table = table[list(REPORT_COLUMNS)]
        return cls(table, replicates, tuple(skipped))

    def row(self, method, tau=None, V=None):
        """The aggregated row of ``method`` at ``(tau, V)`` (oracle: no tau or V)."""
        table = self.table[self.table['method'] == method]
        if tau is None:
            table = table[table['tau'].isna()]
        else:
            same_v = (table['V'] == V).fillna(False).to_numpy(dtype=bool)
            table = table[np.isclose(table['tau'], tau) & same_v]
        if len(table) != 1:
            raise KeyError((method, tau, V))
        return table.iloc[0]

    def to_csv(self, frame=None):
        frame = self.table if frame is None else frame
        return frame.to_csv(index=False, float_format=FLOAT_FORMAT, na_rep='', lineterminator='\n')

    def replicates_path(self, path):
        path = Path(path)
        return path.with_name('{}_replicates{}'.format(path.stem, path.suffix or '.csv'))

    def write(self, path):
        """
        Write the report to ``path`` and the per-replicate rows next to it.

        :return: Both paths written.
        :rtype: tuple
        """
        path = Path(path)
        path.write_text(self.to_csv(), encoding='utf-8')
        details = self.replicates_path(path)
        details.write_text(self.to_csv(self.replicates), encoding='utf-8')
        LOGGER.info('wrote: {}'.format(path))
        LOGGER.info('wrote: {}'.format(details))
        return path, details


def run_experiment(cfg):
    """
    Run the simulation study described by ``cfg``.

    Each replicate draws fresh training and test samples from seeds derived from
    ``cfg.seed`` and its index, so replicates are independent, individually re-runnable,
    and reduced in index order whatever the number of workers. With ``cfg.database``
    set, replicates already stored for the same configuration are reused.

    :param cfg: ExperimentConfig, dict or JSON path.
    :rtype: RiskReport
    """
    cfg = ExperimentConfig.load(cfg)
    feasible = [tau for tau, _ in train_sizes(cfg, warn=True)]
    skipped = tuple(tau for tau in cfg.taus if tau not in feasible)
    if not feasible:
        LOGGER.warning('experiment: no feasible tau, reporting the oracle only')

    store = run = None
    done = {}
    if cfg.database:
        from agghoo.store import ResultStore
        store = ResultStore(cfg.database)
        run = store.run_for(cfg.digest(), json.dumps(cfg.to_dict(), sort_keys=True, default=str))
        done = {r: rows for r, rows in store.recorded(run).items() if r < cfg.replicates}
        if done:
            LOGGER.info('experiment: reusing {} stored replicates'.format(len(done)))

    todo = [r for r in range(cfg.replicates) if r not in done]
    workers = resolve_workers(cfg)
    payload = replace(cfg, output=None, database=None)
    results = dict(done)
    if workers == 1 or len(todo) <= 1:
        computed = (_run_replicate(payload, r) for r in todo)
        results.update(_collect(cfg, todo, computed, store, run))
    else:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            computed = executor.map(_run_replicate, [payload] * len(todo), todo)
            results.update(_collect(cfg, todo, computed, store, run))

    rows = [row for r in range(cfg.replicates) for row in results[r]]
    report = RiskReport.from_rows(rows, skipped)
    if cfg.output:
        report.write(cfg.output)
    return report


def _collect(cfg, todo, computed, store, run):
    results = {}
    for r, rows in zip(todo, computed):
        results[r] = rows
        if store is not None:
            store.record(run, r, rows)
        LOGGER.info('experiment: replicate {}/{}'.format(r + 1, cfg.replicates))
    return results
