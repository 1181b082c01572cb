"""
Fixed points of rate functions and the explicit right-hand sides of the oracle
inequalities for kernel rules (general and epsilon-regression) and for classification.
"""
import logging
import math

from dataclasses import dataclass, replace

import numpy as np

from agghoo.core import ContractViolation

LOGGER = logging.getLogger('agghoo')

RATE_FORMS = ('power', 'linear', 'power_max')
BISECTION_STEPS = 200
SC_MULTIPLIER = 289.0


@dataclass(frozen=True)
class RateFunction:
    """
    A nondecreasing rate ``w`` on the half-line, in one of three forms:

    - ``power(c, beta)``: ``c * x**beta`` with ``0 <= beta < 2``
    - ``linear(b, c)``: ``b * x + c``
    - ``power_max(a, b, c)``: ``max(a * x, sqrt(b * x**3 + c * x**2))``

    In every form ``w(x) / x**2`` is nonincreasing, which makes the fixed point unique.
    """
    form: str
    params: tuple

    def __post_init__(self):
        if self.form not in RATE_FORMS:
            raise ContractViolation('unknown rate form: {}'.format(self.form))
        params = tuple(float(p) for p in self.params)
        expected = {'power': 2, 'linear': 2, 'power_max': 3}[self.form]
        if len(params) != expected:
            raise ContractViolation('{} takes {} parameters'.format(self.form, expected))
        if any(not math.isfinite(p) or p < 0 for p in params):
            raise ContractViolation('rate parameters must be finite and >= 0')
        if self.form == 'power' and params[1] >= 2:
            raise ContractViolation('power rate needs beta < 2')
        object.__setattr__(self, 'params', params)

    @classmethod
    def power(cls, c, beta):
        return cls('power', (c, beta))

    @classmethod
    def linear(cls, b, c):
        return cls('linear', (b, c))

    @classmethod
    def power_max(cls, a, b, c):
        return cls('power_max', (a, b, c))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.form == 'power':
            c, beta = self.params
            return c * np.power(x, beta)
        if self.form == 'linear':
            b, c = self.params
            return b * x + c
        a, b, c = self.params
        return np.maximum(a * x, np.sqrt(b * x ** 3 + c * x ** 2))


def _closed_form(w, r):
    if w.form == 'power':
        c, beta = w.params
        return 0.0 if c == 0 else (c / r) ** (1.0 / (2.0 - beta))
    if w.form == 'linear':
        b, c = w.params
        return b / (2.0 * r) + 0.5 * math.sqrt(b * b / (r * r) + 4.0 * c / r)
    return None


def _bisection(w, r):
    def below(x):
        return w(x) <= r * x * x

    hi = 1.0
    while not below(hi):
        hi *= 2.0
        if not math.isfinite(hi):
            return math.inf
    lo = 0.0
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if below(mid):
            hi = mid
        else:
            lo = mid
    return hi


def delta_fixed_point(w, r, method='auto'):
    """
    ``delta(w, r) = inf {delta >= 0 : w(x) <= r x^2 for all x >= delta}``.

    :param w: RateFunction.
    :param r: Positive real.
    :param method: ``auto`` uses the closed form for power and linear rates and
        bisection otherwise; ``bisection`` forces bisection.
    :return: The fixed point, ``inf`` when the set is empty.
    :raises: ContractViolation if ``r <= 0``.
    :rtype: float
    """
    if not r > 0:
        raise ContractViolation('r must be positive, got {}'.format(r))
    if method not in ('auto', 'bisection'):
        raise ContractViolation('unknown method: {}'.format(method))
    if method == 'auto':
        value = _closed_form(w, float(r))
        if value is not None:
            return value
    return _bisection(w, float(r))


@dataclass(frozen=True)
class RkhsBoundParams:
    """
    Constants of the kernel-rule oracle inequality.

    :param rho: Linear constant of the strong-convexity hypothesis (>= 0).
    :param nu: Quadratic constant of the strong-convexity hypothesis (>= 0).
    :param L: Lipschitz constant of the evaluation loss (> 0).
    :param kappa: ``sup_x K(x, x)`` (> 0).
    :param comp: Compatibility constant between training and evaluation losses (> 0).
    :param lambda_min: Smallest regularisation parameter of the grid (> 0).
    :param n_v: Validation-set size.
    :param n_t: Training-set size.
    :param grid_size: Number of regularisation parameters.
    :param theta: Trade-off parameter in ``(0, 1]``.
    """
    rho: float = 1.0
    nu: float = 1.0
    L: float = 1.0
    kappa: float = 1.0
    comp: float = 1.0
    lambda_min: float = 1.0
    n_v: int = 100
    n_t: int = 100
    grid_size: int = 3
    theta: float = 0.5

    def __post_init__(self):
        if self.rho < 0 or self.nu < 0:
            raise ContractViolation('rho and nu must be >= 0')
        if self.L <= 0 or self.kappa <= 0 or self.comp <= 0 or self.lambda_min <= 0:
            raise ContractViolation('L, kappa, comp and lambda_min must be positive')
        if self.n_v < 1 or self.n_t < 1 or self.grid_size < 1:
            raise ContractViolation('n_v, n_t and grid_size must be >= 1')
        if not 0 < self.theta <= 1:
            raise ContractViolation('theta must lie in (0, 1], got {}'.format(self.theta))

    @property
    def b1(self):
        return SC_MULTIPLIER * max(self.nu, self.L) ** 2 * self.kappa * self.comp

    @property
    def b2(self):
        return SC_MULTIPLIER * self.L * max(self.nu, self.L) * self.kappa

    def regime_flags(self):
        """Names of the stated assumptions these parameters break (empty when all hold)."""
        flags = []
        if self.n_v < 100:
            flags.append('n_v < 100')
        if self.grid_size < 3:
            flags.append('|grid| < 3')
        if math.log(self.grid_size) > math.sqrt(self.n_v):
            flags.append('|grid| > exp(sqrt(n_v))')
        return tuple(flags)


@dataclass(frozen=True)
class ClassifBoundParams:
    """
    Constants of the classification oracle inequality under the margin condition
    ``P(|2 eta(X) - 1| <= h) <= r h^beta``.
    """
    beta: float = 0.0
    r: float = 1.0
    family_size: int = 1
    n_v: int = 100
    oracle: float = 0.0

    def __post_init__(self):
        if self.beta < 0:
            raise ContractViolation('beta must be >= 0')
        if self.r < 1:
            raise ContractViolation('the margin constant r must be >= 1, got {}'.format(self.r))
        if self.family_size < 1 or self.n_v < 1:
            raise ContractViolation('family_size and n_v must be >= 1')
        if self.oracle < 0:
            raise ContractViolation('oracle excess risk must be >= 0')


@dataclass(frozen=True)
class BoundTerms:
    """
    The two-sided form ``(1 - theta) E[loss] <= oracle_factor * oracle + remainder``.
    """
    branches: tuple
    remainder: float
    oracle_factor: float
    lhs_factor: float
    rhs: float
    flags: tuple

    @property
    def in_regime(self):
        return not self.flags


def _warn(flags, name):
    for flag in flags:
        LOGGER.warning('%s: outside stated regime (%s)', name, flag)


def rkhs_bound_terms(p, oracle=0.0, first_branch=None):
    """
    Branches, remainder and right-hand side of the kernel-rule inequality in its raw
    two-sided form, defined for every ``theta`` in ``(0, 1]``.

    :param p: RkhsBoundParams.
    :param oracle: Expected oracle excess risk (>= 0).
    :param first_branch: Override for the leading branch (the epsilon-regression case).
    :rtype: BoundTerms
    """
    if oracle < 0:
        raise ContractViolation('oracle excess risk must be >= 0')
    log_term = math.log(p.n_v * p.grid_size)
    theta = p.theta
    if first_branch is None:
        first_branch = 18.0 * p.rho * log_term / (theta * p.n_v)
    branches = (
        first_branch,
        p.b1 * log_term ** 2 / (theta ** 3 * p.lambda_min * p.n_v ** 2),
        p.b2 * log_term ** 1.5 / (theta * p.lambda_min * p.n_v * math.sqrt(p.n_t)),
    )
    remainder = max(branches)
    oracle_factor = 1.0 + theta
    return BoundTerms(branches, remainder, oracle_factor, 1.0 - theta,
                      oracle_factor * oracle + remainder, p.regime_flags())


def rkhs_bound_rhs(p, oracle=0.0):
    """
    Upper bound on the expected excess risk of Agghoo over a kernel-rule grid:
    ``((1 + theta) oracle + max(branches)) / (1 - theta)``.

    :raises: ContractViolation when ``theta = 1`` (use ``rkhs_bound_terms``).
    :rtype: float
    """
    if p.theta >= 1:
        raise ContractViolation('theta must lie in (0, 1) for the bound on the excess risk')
    terms = rkhs_bound_terms(p, oracle)
    _warn(terms.flags, 'rkhs_bound_rhs')
    return terms.rhs / terms.lhs_factor


def eps_reg_params(sigma, p):
    """The kernel-rule constants for epsilon-regression with robust noise parameter ``sigma``."""
    if not sigma >= 0:
        raise ContractViolation('sigma must be >= 0')
    return replace(p, rho=4.0 * sigma, nu=8.0, L=1.0, kappa=1.0, comp=1.0)


def eps_reg_bound_terms(sigma, p, oracle=0.0):
    params = eps_reg_params(sigma, p)
    log_term = math.log(params.n_v * params.grid_size)
    return rkhs_bound_terms(params, oracle, 72.0 * sigma * log_term / (params.theta * params.n_v))


def eps_reg_bound_rhs(sigma, p, oracle=0.0):
    """
    Upper bound for epsilon-regression rules evaluated with the absolute loss.

    Only ``lambda_min``, ``n_v``, ``n_t``, ``grid_size`` and ``theta`` are read from ``p``.

    :param sigma: Robust noise parameter (>= 0).
    :param p: RkhsBoundParams.
    :rtype: float
    """
    if p.theta >= 1:
        raise ContractViolation('theta must lie in (0, 1) for the bound on the excess risk')
    terms = eps_reg_bound_terms(sigma, p, oracle)
    _warn(terms.flags, 'eps_reg_bound_rhs')
    return terms.rhs / terms.lhs_factor


def classif_remainder(p):
    exponent = (p.beta + 1.0) / (p.beta + 2.0)
    return (29.0 * p.r ** (1.0 / (p.beta + 2.0)) * math.log(math.e * p.family_size)
            / p.n_v ** exponent)


def classif_bound_rhs(p):
    """
    ``3 oracle + 29 r^(1/(beta+2)) log(e |M|) / n_v^((beta+1)/(beta+2))``.

    :param p: ClassifBoundParams.
    :rtype: float
    """
    return 3.0 * p.oracle + classif_remainder(p)


def median_sc_constants(a_m, mu_m):
    """
    Strong-convexity constants ``(rho, nu) = (4 / a_m, 2 / mu_m)`` for the absolute loss
    when the conditional CDFs grow at least linearly around the median.
    """
    if not (a_m > 0 and mu_m > 0):
        raise ContractViolation('a_m and mu_m must be positive')
    return 4.0 / a_m, 2.0 / mu_m


def robust_noise_parameter(conditional, xs):
    """
    Largest inter-quartile width of the conditional laws of ``Y`` given ``X = x``.

    :param conditional: Callable mapping ``x`` to a frozen ``scipy.stats`` distribution.
    :param xs: Points ``x`` over which the supremum is taken.
    :rtype: float
    """
    widths = []
    for x in xs:
        law = conditional(x)
        widths.append(float(law.ppf(0.75) - law.ppf(0.25)))
    if not widths:
        raise ContractViolation('robust_noise_parameter needs at least one point')
    return max(widths)


def majority_vote_factors(n_labels):
    """
    Constants of the majority-vote inequalities with ``n_labels`` classes.

    :return: ``(zero_one, excess)``: the vote's 0-1 risk is at most ``zero_one`` times the
        mean component 0-1 risk, its excess risk at most ``excess`` times the mean
        component excess risk.
    :rtype: tuple
    """
    if n_labels < 2:
        raise ContractViolation('a classification problem has at least two labels')
    return 2.0, float(n_labels)
