"""
Gaussian kernels and the regularized kernel estimator

    theta = argmin (1/n) sum_i c((G theta)_i, y_i) + lam * theta' G theta

computed by smoothing continuation, plus the RKHS-norm helpers.
"""
import json
import logging
import math
import warnings

from dataclasses import dataclass

import numpy as np

from scipy import linalg
from scipy.optimize import lsq_linear
from scipy.spatial.distance import cdist

from agghoo.core import REGRESSION, ContractViolation, Predictor

LOGGER = logging.getLogger('agghoo')

SQUARED_DIAGONAL_JITTER = 1e-10
POLISH_TOLERANCES = (1e-10, 1e-8, 1e-6, 1e-5, 1e-4, 1e-3)


@dataclass(frozen=True)
class KernelSpec:
    """
    Gaussian kernel ``K(x, x') = exp(-|x - x'|^2 / (2 h^2))``, so ``kappa = sup K(x, x) = 1``.
    """
    bandwidth: float
    kind: str = 'gaussian'

    def __post_init__(self):
        if self.kind != 'gaussian':
            raise ContractViolation('unsupported kernel: {}'.format(self.kind))
        if not (math.isfinite(self.bandwidth) and self.bandwidth > 0):
            raise ContractViolation('bandwidth must be positive, got {}'.format(self.bandwidth))

    @property
    def kappa(self):
        return 1.0


@dataclass(frozen=True)
class SolverConfig:
    """
    Settings of the smoothing-continuation solver.

    :param mu_schedule: Decreasing smoothing parameters; each stage warm-starts the next.
    :param max_iter: Iteration cap per stage.
    :param rel_decrease: A stage stops when one step lowers the objective by less than this
        (relative to ``max(1, |F|)``).
    :param tolerance: ``converged`` means residual <= tolerance * (1 + |F|).
    :param armijo: Sufficient-decrease constant of the backtracking line search.
    :param polish: Try the exact kink polish after continuation.
    """
    mu_schedule: tuple = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6)
    max_iter: int = 5000
    rel_decrease: float = 1e-9
    tolerance: float = 1e-6
    armijo: float = 1e-4
    polish: bool = True

    @classmethod
    def from_dict(cls, values):
        values = dict(values or {})
        unknown = set(values) - set(cls.__dataclass_fields__)
        if unknown:
            raise ContractViolation('unknown solver settings: {}'.format(', '.join(sorted(unknown))))
        if 'mu_schedule' in values:
            values['mu_schedule'] = tuple(float(mu) for mu in values['mu_schedule'])
        return cls(**values)


@dataclass(frozen=True)
class SolveDiagnostics:
    final_objective: float
    subgradient_residual: float
    iterations: int
    converged: bool


@dataclass(frozen=True, eq=False)
class KernelModel(Predictor):
    """
    A kernel expansion ``x -> sum_j theta_j K(support_j, x)``.

    ``lam`` is the regularization used at fit time (None for an average of models).
    """
    support: np.ndarray
    theta: np.ndarray
    spec: KernelSpec
    lam: float = None

    task = REGRESSION

    def __post_init__(self):
        support = np.array(self.support, dtype=float)
        if support.ndim == 1:
            support = support.reshape(-1, 1)
        theta = np.array(self.theta, dtype=float).reshape(-1)
        if support.shape[0] != theta.shape[0]:
            raise ContractViolation('support has {} rows but theta has {} entries'
                                    .format(support.shape[0], theta.shape[0]))
        support.flags.writeable = False
        theta.flags.writeable = False
        object.__setattr__(self, 'support', support)
        object.__setattr__(self, 'theta', theta)

    def predict(self, x):
        return gram(self.spec, np.atleast_2d(x), self.support) @ self.theta


def gram(spec, a, b):
    """
    Kernel matrix between the rows of ``a`` and ``b``.

    :param spec: Kernel specification.
    :param a: Rows (m x d).
    :param b: Rows (p x d).
    :raises: ContractViolation on empty inputs or mismatched dimension.
    :return: Matrix with entries ``K(a_i, b_j)``.
    :rtype: numpy.ndarray
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ContractViolation('gram needs nonempty row sets')
    if a.shape[1] != b.shape[1]:
        raise ContractViolation('dimension mismatch: {} vs {}'.format(a.shape[1], b.shape[1]))
    return np.exp(-cdist(a, b, 'sqeuclidean') / (2.0 * spec.bandwidth ** 2))


def rkhs_norm_sq(model):
    """
    Squared RKHS norm ``theta' G theta`` of a kernel expansion.
    Values within 1e-12 of zero are reported as 0.

    :rtype: float
    """
    value = float(model.theta @ gram(model.spec, model.support, model.support) @ model.theta)
    if abs(value) <= 1e-12:
        return 0.0
    return value


def objective(loss, gram_matrix, y, lam, theta):
    """Exact penalized objective ``F(theta)``."""
    fitted = gram_matrix @ theta
    return float(np.mean(loss.values(fitted, y)) + lam * (theta @ fitted))


def _smoothed(z, mu):
    # Moreau envelope of max(0, z)
    return np.where(z <= 0.0, 0.0, np.where(z >= mu, z - 0.5 * mu, 0.5 * z * z / mu))


class _Problem:
    """The penalized objective of one fit, with its piecewise-linear loss decomposition."""

    def __init__(self, loss, gram_matrix, y, lam):
        self.loss = loss
        self.G = gram_matrix
        self.y = y
        self.lam = lam
        self.n = y.shape[0]
        self.a, self.b = loss.pieces(y)

    def exact(self, theta):
        return objective(self.loss, self.G, self.y, self.lam, theta)

    def smooth(self, theta, mu):
        fitted = self.G @ theta
        z = self.a * fitted + self.b
        value = _smoothed(z, mu).sum() / self.n + self.lam * (theta @ fitted)
        return float(value), fitted, z

    def newton_step(self, theta, fitted, z, mu):
        """
        Descent direction and directional derivative for the smoothed objective.
        Falls back to the RKHS gradient when the Newton direction is not a descent direction.
        """
        n, lam = self.n, self.lam
        slope = np.clip(z / mu, 0.0, 1.0)
        grad = (self.a * slope).sum(axis=0) / n + 2.0 * lam * theta
        curvature = (self.a ** 2 * ((z > 0.0) & (z < mu))).sum(axis=0) / mu

        step = -grad / (2.0 * lam)
        active = curvature > 0.0
        if active.any():
            inactive = ~active
            weights = curvature[active]
            rhs = -grad[active] - weights * (self.G[np.ix_(active, inactive)] @ step[inactive]) / n
            system = weights[:, np.newaxis] * self.G[np.ix_(active, active)] / n
            system[np.diag_indices_from(system)] += 2.0 * lam
            try:
                step[active] = np.linalg.solve(system, rhs)
            except np.linalg.LinAlgError:
                step = -grad

        derivative = float((self.G @ grad) @ step)
        if not derivative < 0.0:
            step = -grad
            derivative = -float(grad @ self.G @ grad)
        return step, derivative

    def intervals(self, theta, tol):
        """Per-point subdifferential interval ``[lo, hi]`` of the loss at the current fit."""
        z = self.a * (self.G @ theta) + self.b
        kink = np.abs(z) <= tol
        positive = z > tol
        fixed = np.where(positive, self.a, 0.0)
        lo = np.where(kink, np.minimum(self.a, 0.0), fixed).sum(axis=0)
        hi = np.where(kink, np.maximum(self.a, 0.0), fixed).sum(axis=0)
        return z, kink, positive, lo, hi

    def residual(self, theta, tol):
        """Euclidean norm of the minimum-norm subgradient of ``F`` at ``theta``."""
        _, _, _, lo, hi = self.intervals(theta, tol)
        free = hi > lo
        offset = self.G @ (2.0 * self.lam * theta + np.where(free, 0.0, lo) / self.n)
        if not free.any():
            return float(np.linalg.norm(offset))
        columns = self.G[:, free] / self.n
        result = lsq_linear(columns, -offset, bounds=(lo[free], hi[free]), method='bvls')
        return float(np.linalg.norm(columns @ result.x + offset))

    def polish(self, theta, tol):
        """
        Solve the optimality system with the kink set read off ``theta``.

        Points off their kinks get the loss slope ``v_i`` and ``theta_i = -v_i / (2 lam n)``;
        points on a kink are pinned to it. The candidate is returned only when every
        multiplier lands in its subdifferential and no point changes side.
        """
        n, lam = self.n, self.lam
        z, kink, positive, lo, hi = self.intervals(theta, tol)
        on_kink = kink.any(axis=0)
        off = ~on_kink

        candidate = np.empty_like(theta)
        candidate[off] = -lo[off] / (2.0 * lam * n)
        if on_kink.any():
            columns = np.flatnonzero(on_kink)
            piece = np.argmax(kink[:, on_kink], axis=0)
            target = -self.b[piece, columns] / self.a[piece, columns]
            rhs = target - self.G[np.ix_(on_kink, off)] @ candidate[off]
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter('ignore', linalg.LinAlgWarning)
                    candidate[on_kink] = linalg.solve(
                        self.G[np.ix_(on_kink, on_kink)], rhs, assume_a='pos')
            except linalg.LinAlgError:
                return None
            multipliers = -2.0 * lam * n * candidate[on_kink]
            slack = 1e-9
            if np.any(multipliers < lo[on_kink] - slack) or np.any(multipliers > hi[on_kink] + slack):
                return None

        z_new = self.a * (self.G @ candidate) + self.b
        scale = 1e-10 * (1.0 + np.max(np.abs(self.y)))
        negative = ~positive & ~kink
        if np.any(z_new[positive] < -scale) or np.any(z_new[negative] > scale):
            return None
        if np.any(np.abs(z_new[kink]) > max(scale, 1e-8)):
            return None
        return candidate


def _minimize_stage(problem, theta, mu, cfg):
    value, fitted, z = problem.smooth(theta, mu)
    iterations = 0
    while iterations < cfg.max_iter:
        iterations += 1
        step, derivative = problem.newton_step(theta, fitted, z, mu)
        if derivative > -1e-300:
            break
        t = 1.0
        for _ in range(60):
            trial = theta + t * step
            trial_value, trial_fitted, trial_z = problem.smooth(trial, mu)
            if trial_value <= value + cfg.armijo * t * derivative:
                break
            t *= 0.5
        else:
            break
        decrease = value - trial_value
        theta, value, fitted, z = trial, trial_value, trial_fitted, trial_z
        if decrease < cfg.rel_decrease * max(1.0, abs(value)):
            break
    return theta, iterations


def _fit_squared(gram_matrix, y, lam):
    n = y.shape[0]
    system = gram_matrix + (n * lam + SQUARED_DIAGONAL_JITTER) * np.eye(n)
    theta = linalg.solve(system, y, assume_a='pos')
    residual = gram_matrix @ (2.0 * (gram_matrix @ theta - y) / n + 2.0 * lam * theta)
    return theta, float(np.linalg.norm(residual))


def _finish(problem, theta, kink_tol, cfg):
    """Polish ``theta`` when it helps; return it with its exact objective and residual."""
    if cfg.polish:
        current = problem.exact(theta)
        for tol in POLISH_TOLERANCES:
            candidate = problem.polish(theta, tol)
            if candidate is not None and problem.exact(candidate) <= current + 1e-12 * (1 + abs(current)):
                theta, kink_tol = candidate, tol
                break
    return theta, problem.exact(theta), problem.residual(theta, max(kink_tol, 1e-12))


def fit_kernel(lam, train, c, spec, solver_cfg=None, gram_matrix=None):
    """
    Fit the regularized kernel estimator on ``train``.

    Squared loss is solved in closed form from ``(G + n lam I) theta = y``. The
    piecewise-linear losses (absolute, eps_insensitive, hinge) are smoothed with the
    Moreau envelope along ``solver_cfg.mu_schedule``; each stage runs Newton-direction
    descent with Armijo backtracking from the previous stage's solution (the first
    from zero). The result is then polished onto the exact kinks when the optimality
    conditions can be verified.

    :param lam: Regularization, > 0.
    :param train: Training dataset.
    :param c: Convex training loss.
    :param spec: Kernel specification.
    :param solver_cfg: SolverConfig (defaults apply when None).
    :param gram_matrix: Precomputed Gram matrix of ``train.x`` (optional).
    :raises: ContractViolation for non-positive ``lam`` or a non-convex loss.
    :return: The fitted model and the solver diagnostics.
    :rtype: tuple
    """
    if not (math.isfinite(lam) and lam > 0):
        raise ContractViolation('lambda must be positive, got {}'.format(lam))
    if not c.convex:
        raise ContractViolation('{} loss is not convex'.format(c.kind))
    cfg = solver_cfg or SolverConfig()
    G = gram(spec, train.x, train.x) if gram_matrix is None else gram_matrix
    y = np.asarray(train.y, dtype=float)

    if c.kind == 'squared':
        theta, residual = _fit_squared(G, y, lam)
        value = objective(c, G, y, lam, theta)
        iterations = 1
    else:
        problem = _Problem(c, G, y, lam)
        theta = np.zeros(train.n)
        iterations = 0
        for mu in cfg.mu_schedule:
            theta, used = _minimize_stage(problem, theta, mu, cfg)
            iterations += used

        theta, value, residual = _finish(problem, theta, cfg.mu_schedule[-1], cfg)
        if cfg.polish and residual > cfg.tolerance * (1.0 + abs(value)):
            # retry the polish after one finer stage
            retry, used = _minimize_stage(problem, theta, 0.1 * cfg.mu_schedule[-1], cfg)
            iterations += used
            retry, retry_value, retry_residual = _finish(problem, retry, 0.1 * cfg.mu_schedule[-1], cfg)
            if retry_value <= value + 1e-12 * (1 + abs(value)):
                theta, value, residual = retry, retry_value, retry_residual

    converged = residual <= cfg.tolerance * (1.0 + abs(value))
    if not converged:
        LOGGER.warning('fit_kernel: not converged (lambda={:g}, residual={:.3g})'.format(lam, residual))
    model = KernelModel(train.x, theta, spec, lam)
    return model, SolveDiagnostics(value, residual, iterations, converged)


def average_models(models, weights=None):
    """
    Combine kernel expansions into one whose prediction is their weighted mean.

    Supports are concatenated, never merged, so the averaged prediction is exact.

    :param models: Nonempty list of KernelModel sharing one KernelSpec.
    :param weights: Optional weights (default ``1/V`` each).
    :raises: ContractViolation on an empty list, mismatched specs or weight count.
    :rtype: KernelModel
    """
    models = list(models)
    if not models:
        raise ContractViolation('average_models needs at least one model')
    spec = models[0].spec
    if any(model.spec != spec for model in models):
        raise ContractViolation('all models must share the same kernel specification')
    if weights is None:
        weights = [1.0 / len(models)] * len(models)
    if len(weights) != len(models):
        raise ContractViolation('one weight per model is required')

    lams = {model.lam for model in models}
    support = np.vstack([model.support for model in models])
    theta = np.concatenate([weight * model.theta for weight, model in zip(weights, models)])
    return KernelModel(support, theta, spec, lams.pop() if len(lams) == 1 else None)


def model_to_dict(model):
    return {
        'kind': model.spec.kind,
        'h': model.spec.bandwidth,
        'lambda': model.lam,
        'support': model.support.tolist(),
        'theta': model.theta.tolist(),
    }


def model_from_dict(record):
    """
    Rebuild a KernelModel from its JSON record.

    :raises: ContractViolation when a field is missing.
    """
    try:
        spec = KernelSpec(float(record['h']), record['kind'])
        lam = record['lambda']
        return KernelModel(record['support'], record['theta'], spec, None if lam is None else float(lam))
    except KeyError as exc:
        raise ContractViolation('kernel model record lacks field {}'.format(exc))


def dumps_model(model):
    """Serialize a KernelModel to JSON (floats round-trip exactly)."""
    return json.dumps(model_to_dict(model))


def loads_model(text):
    return model_from_dict(json.loads(text))
