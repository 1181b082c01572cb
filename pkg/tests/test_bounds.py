import math

from dataclasses import replace

import numpy as np
import pytest

from scipy import stats

from agghoo.bounds import (
    ClassifBoundParams, RateFunction, RkhsBoundParams, classif_bound_rhs, classif_remainder,
    delta_fixed_point, eps_reg_bound_rhs, eps_reg_bound_terms, majority_vote_factors,
    median_sc_constants, rkhs_bound_rhs, rkhs_bound_terms, robust_noise_parameter,
)
from agghoo.core import ContractViolation


def power_max_closed(a, b, c, r):
    return max(a / r, (b + math.sqrt(b * b + 4 * r * r * c)) / (2 * r * r))


def test_power_fixed_point():
    assert delta_fixed_point(RateFunction.power(1.0, 1.0), 2.0) == pytest.approx(0.5)
    assert delta_fixed_point(RateFunction.power(0.0, 1.5), 3.0) == 0.0


def test_linear_fixed_point():
    value = delta_fixed_point(RateFunction.linear(1.0, 1.0), 1.0)
    assert value == pytest.approx((1 + math.sqrt(5)) / 2, rel=1e-12)


def test_power_max_fixed_point():
    rng = np.random.default_rng(0)
    for _ in range(20):
        a, b, c = rng.uniform(0.0, 3.0, size=3)
        r = float(10 ** rng.uniform(-1, 1))
        value = delta_fixed_point(RateFunction.power_max(a, b, c), r)
        assert value == pytest.approx(power_max_closed(a, b, c, r), rel=1e-9)


def test_fixed_point_errors():
    with pytest.raises(ContractViolation):
        delta_fixed_point(RateFunction.power(1.0, 1.0), 0.0)
    with pytest.raises(ContractViolation):
        delta_fixed_point(RateFunction.power(1.0, 1.0), 1.0, method='newton')
    with pytest.raises(ContractViolation):
        RateFunction.power(1.0, 2.0)
    with pytest.raises(ContractViolation):
        RateFunction.linear(-1.0, 1.0)
    with pytest.raises(ContractViolation):
        RateFunction('power', (1.0,))
    with pytest.raises(ContractViolation):
        RateFunction('cubic', (1.0, 1.0))


def test_closed_forms_agree_with_bisection():
    rng = np.random.default_rng(1)
    for _ in range(50):
        c, beta = rng.uniform(0.1, 5.0), rng.uniform(0.0, 1.5)
        r = float(10 ** rng.uniform(-1, 1))
        w = RateFunction.power(c, beta)
        closed = delta_fixed_point(w, r)
        assert closed == pytest.approx((c / r) ** (1 / (2 - beta)), rel=1e-12)
        assert delta_fixed_point(w, r, method='bisection') == pytest.approx(closed, rel=1e-9)

    for _ in range(50):
        b, c = rng.uniform(0.0, 5.0, size=2)
        r = float(10 ** rng.uniform(-2, 2))
        w = RateFunction.linear(b, c)
        closed = delta_fixed_point(w, r)
        assert r * closed ** 2 == pytest.approx(b * closed + c, rel=1e-9, abs=1e-12)
        assert delta_fixed_point(w, r, method='bisection') == pytest.approx(closed, rel=1e-9, abs=1e-12)


def random_rate(rng):
    form = rng.choice(['power', 'linear', 'power_max'])
    if form == 'power':
        return RateFunction.power(rng.uniform(0.1, 3.0), rng.uniform(0.0, 1.9))
    if form == 'linear':
        return RateFunction.linear(*rng.uniform(0.0, 3.0, size=2))
    return RateFunction.power_max(*rng.uniform(0.0, 3.0, size=3))


def test_fixed_point_nonincreasing_in_r():
    rng = np.random.default_rng(2)
    rs = np.logspace(-2, 2, 25)
    for _ in range(20):
        w = random_rate(rng)
        values = [delta_fixed_point(w, r) for r in rs]
        assert all(later <= earlier * (1 + 1e-12) for earlier, later in zip(values, values[1:]))


def test_fixed_point_definition():
    rng = np.random.default_rng(3)
    for _ in range(30):
        w = random_rate(rng)
        r = float(10 ** rng.uniform(-1, 1))
        delta = delta_fixed_point(w, r)
        probes = delta * (1 + 1e-9) * np.logspace(0, 3, 200)
        probes = probes[probes > 0]
        assert np.all(w(probes) <= r * probes ** 2 * (1 + 1e-12))


def reference_rkhs(rho, nu, L, kappa, comp, lam, n_v, n_t, size, theta, oracle):
    scale = max(nu, L)
    b1 = 289 * scale * scale * kappa * comp
    b2 = 289 * L * scale * kappa
    log = math.log(n_v) + math.log(size)
    first = 18 * rho * log / theta / n_v
    second = b1 * log * log / (theta * theta * theta) / lam / (n_v * n_v)
    third = b2 * log * math.sqrt(log) / theta / lam / n_v / math.sqrt(n_t)
    return ((1 + theta) * oracle + max(first, second, third)) / (1 - theta)


def test_rkhs_example():
    params = RkhsBoundParams(rho=1.0, nu=1.0, L=1.0, kappa=1.0, comp=1.0, lambda_min=1.0,
                             n_v=100, n_t=100, grid_size=3, theta=0.5)
    log = math.log(300)
    expected = max(18 * log / 50, 289 * log ** 2 / (0.125 * 1e4), 289 * log ** 1.5 / (0.5 * 100 * 10)) / 0.5
    assert rkhs_bound_rhs(params, 0.0) == pytest.approx(expected, rel=1e-12)

    terms = rkhs_bound_terms(params)
    assert terms.in_regime
    assert terms.remainder == max(terms.branches)
    assert params.b1 == 289.0
    assert params.b2 == 289.0


def test_rkhs_theta_one():
    params = RkhsBoundParams(theta=1.0)
    with pytest.raises(ContractViolation):
        rkhs_bound_rhs(params)
    terms = rkhs_bound_terms(params, oracle=0.2)
    assert terms.lhs_factor == 0.0
    assert terms.rhs == pytest.approx(2 * 0.2 + terms.remainder)

    with pytest.raises(ContractViolation):
        RkhsBoundParams(theta=0.0)
    with pytest.raises(ContractViolation):
        RkhsBoundParams(theta=1.5)


def test_rkhs_matches_reference():
    rng = np.random.default_rng(4)
    for _ in range(100):
        values = dict(
            rho=rng.uniform(0, 5), nu=rng.uniform(0, 5), L=rng.uniform(0.1, 3),
            kappa=rng.uniform(0.1, 2), comp=rng.uniform(0.1, 2), lambda_min=10 ** rng.uniform(-4, 0),
            n_v=int(rng.integers(100, 5000)), n_t=int(rng.integers(10, 5000)),
            grid_size=int(rng.integers(3, 50)), theta=rng.uniform(0.05, 0.95))
        oracle = rng.uniform(0, 1)
        params = RkhsBoundParams(**values)
        expected = reference_rkhs(values['rho'], values['nu'], values['L'], values['kappa'],
                                  values['comp'], values['lambda_min'], values['n_v'],
                                  values['n_t'], values['grid_size'], values['theta'], oracle)
        assert rkhs_bound_rhs(params, oracle) == pytest.approx(expected, rel=1e-12)


def test_bounds_nonincreasing_in_n_v():
    base = RkhsBoundParams(rho=2.0, nu=3.0, lambda_min=0.01, n_t=400, grid_size=18, theta=0.3)
    classif = ClassifBoundParams(beta=1.0, r=2.0, family_size=50)
    previous = None
    for n_v in (100, 200, 400, 800, 1600, 3200):
        p = replace(base, n_v=n_v)
        values = (rkhs_bound_rhs(p), eps_reg_bound_rhs(0.7, p),
                  classif_bound_rhs(replace(classif, n_v=n_v)))
        if previous is not None:
            assert all(now <= before for now, before in zip(values, previous))
        previous = values


def test_regime_warnings(caplog):
    params = RkhsBoundParams(n_v=50, grid_size=2)
    rkhs_bound_rhs(params)
    assert 'outside stated regime (n_v < 100)' in caplog.text
    assert 'outside stated regime (|grid| < 3)' in caplog.text
    assert not rkhs_bound_terms(params).in_regime


def test_eps_reg_zero_noise():
    params = RkhsBoundParams(lambda_min=0.1, n_v=100, n_t=100, grid_size=3, theta=0.5)
    terms = eps_reg_bound_terms(0.0, params)
    assert terms.branches[0] == 0.0
    assert eps_reg_bound_rhs(0.0, params) == pytest.approx(max(terms.branches[1:]) / 0.5)


def test_eps_reg_first_branch():
    params = RkhsBoundParams(lambda_min=1.0, n_v=100, n_t=100, grid_size=3, theta=0.5)
    terms = eps_reg_bound_terms(1.0, params)
    assert terms.branches[0] == pytest.approx(72 * math.log(300) / 50, rel=1e-12)
    assert terms.branches[0] == pytest.approx(8.2135, abs=1e-4)


def test_eps_reg_is_rkhs_specialisation():
    rng = np.random.default_rng(5)
    for _ in range(100):
        sigma = rng.uniform(0, 3)
        params = RkhsBoundParams(rho=9.0, nu=0.5, L=2.0, kappa=3.0, comp=4.0,
                                 lambda_min=10 ** rng.uniform(-4, 0),
                                 n_v=int(rng.integers(100, 3000)), n_t=int(rng.integers(10, 3000)),
                                 grid_size=int(rng.integers(3, 30)), theta=rng.uniform(0.05, 0.95))
        substituted = replace(params, rho=4 * sigma, nu=8.0, L=1.0, kappa=1.0, comp=1.0)
        assert eps_reg_bound_rhs(sigma, params, 0.1) == pytest.approx(
            rkhs_bound_rhs(substituted, 0.1), rel=1e-12)

    with pytest.raises(ContractViolation):
        eps_reg_bound_rhs(-1.0, params)


def test_classif_example():
    params = ClassifBoundParams(beta=0.0, r=1.0, family_size=10, n_v=100)
    assert classif_bound_rhs(params) == pytest.approx(29 * (1 + math.log(10)) / 10, rel=1e-12)
    assert classif_bound_rhs(params) == pytest.approx(9.5775, abs=1e-4)


def test_classif_matches_reference():
    rng = np.random.default_rng(6)
    for _ in range(100):
        beta, r = rng.uniform(0, 10), rng.uniform(1, 5)
        m, n_v, oracle = int(rng.integers(1, 200)), int(rng.integers(1, 10000)), rng.uniform(0, 1)
        expected = 3 * oracle + 29 * math.exp(math.log(r) / (beta + 2)) * (1 + math.log(m)) \
            * math.exp(-math.log(n_v) * (beta + 1) / (beta + 2))
        params = ClassifBoundParams(beta=beta, r=r, family_size=m, n_v=n_v, oracle=oracle)
        assert classif_bound_rhs(params) == pytest.approx(expected, rel=1e-12)


def test_classif_scaling():
    params = ClassifBoundParams(beta=0.0, r=3.0, family_size=7, n_v=250)
    quadrupled = replace(params, n_v=1000)
    assert classif_remainder(quadrupled) == pytest.approx(classif_remainder(params) / 2, rel=1e-12)

    sharp = ClassifBoundParams(beta=100.0, r=1.0, family_size=10, n_v=5)
    limit = 29 * math.log(math.e * 10) / 5
    assert abs(classif_bound_rhs(sharp) - limit) <= 0.02 * limit


def test_classif_errors():
    with pytest.raises(ContractViolation):
        ClassifBoundParams(r=0.5)
    with pytest.raises(ContractViolation):
        ClassifBoundParams(beta=-1.0)
    with pytest.raises(ContractViolation):
        ClassifBoundParams(family_size=0)


def test_median_sc_constants():
    assert median_sc_constants(0.5, 0.25) == (8.0, 8.0)
    with pytest.raises(ContractViolation):
        median_sc_constants(0.0, 1.0)


def test_robust_noise_parameter():
    sigma = robust_noise_parameter(lambda x: stats.norm(0.0, 2.0), [0.0])
    assert sigma == pytest.approx(2 * 2.0 * stats.norm.ppf(0.75), rel=1e-12)

    widest = robust_noise_parameter(lambda x: stats.norm(x, 1.0 + abs(x)), np.linspace(-1, 1, 5))
    assert widest == pytest.approx(2 * 2.0 * stats.norm.ppf(0.75), rel=1e-12)

    uniform = robust_noise_parameter(lambda x: stats.uniform(-1.0, 2.0), [0.0])
    assert uniform == pytest.approx(1.0)


def test_majority_vote_factors():
    assert majority_vote_factors(2) == (2.0, 2.0)
    assert majority_vote_factors(5) == (2.0, 5.0)
    with pytest.raises(ContractViolation):
        majority_vote_factors(1)
