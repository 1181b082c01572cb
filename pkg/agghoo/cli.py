"""
Command line interface: simulate samples, fit one procedure, run simulation studies,
tabulate the oracle-inequality bounds and list stored experiments.

Exit codes: 0 on success, 1 on a contract violation or a usage error, 2 on an I/O error.
"""
import functools
import json
import logging
import math
import sys

from dataclasses import replace

import click
import pandas as pd
import peewee

from scipy import stats

from agghoo.bounds import (
    ClassifBoundParams, RkhsBoundParams, classif_bound_rhs, classif_remainder,
    eps_reg_bound_rhs, eps_reg_bound_terms, rkhs_bound_rhs, rkhs_bound_terms,
    robust_noise_parameter,
)
from agghoo.core import ContractViolation, DomainError, derive_seed, make_split_plan, n_train
from agghoo.kernel import KernelModel, model_to_dict
from agghoo.knn import KnnModel
from agghoo.select import AggregateModel, agghoo_fit, cv_select, holdout_select, majhoo_fit
from agghoo.simlab import (
    FLOAT_FORMAT, TASKS, ExperimentConfig, build_family, excess_risk_estimate,
    run_experiment, simulate,
)
from agghoo.store import ResultStore

LOGGER = logging.getLogger('agghoo')

METHODS = ('agghoo', 'majhoo', 'cv', 'holdout')
THEOREMS = ('rkhs', 'eps_reg', 'classif')


class UsageExitCode:
    """Report click usage errors with exit status 1."""

    def make_context(self, info_name, args, parent=None, **extra):
        try:
            return super().make_context(info_name, args, parent=parent, **extra)
        except click.UsageError as exc:
            exc.exit_code = 1
            raise


class AgghooCommand(UsageExitCode, click.Command):
    pass


class AgghooGroup(UsageExitCode, click.Group):
    command_class = AgghooCommand

    def resolve_command(self, ctx, args):
        try:
            return super().resolve_command(ctx, args)
        except click.UsageError as exc:
            exc.exit_code = 1
            raise


def reports_errors(func):
    """Map failures of a command to its exit status."""
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except (ContractViolation, DomainError) as exc:
            LOGGER.error(exc)
            sys.exit(1)
        except (OSError, peewee.DatabaseError) as exc:
            LOGGER.error(exc)
            sys.exit(2)
    return wrapper


def emit_csv(frame, output=None):
    text = frame.to_csv(index=False, float_format=FLOAT_FORMAT, na_rep='', lineterminator='\n')
    if output:
        with open(output, 'w', encoding='utf-8', newline='') as handle:
            handle.write(text)
        LOGGER.info('wrote: {}'.format(output))
    else:
        click.echo(text, nl=False)


def model_record(pred):
    """JSON-ready description of a fitted predictor."""
    if isinstance(pred, KernelModel):
        return model_to_dict(pred)
    if isinstance(pred, KnnModel):
        return {'kind': 'knn', 'k': pred.k, 'n': pred.train.n}
    if isinstance(pred, AggregateModel):
        if pred.kernel is not None:
            return model_to_dict(pred.kernel)
        return {'kind': pred.mode, 'components': [model_record(c) for c in pred.components]}
    return {'kind': type(pred).__name__}


@click.group(cls=AgghooGroup)
@click.option('--quiet', is_flag=True, help='Only log warnings and errors.')
def cli_command(quiet=False):
    """Aggregated hold-out simulations and bounds."""
    LOGGER.setLevel(logging.WARNING if quiet else logging.DEBUG)


@cli_command.command('simulate')
@click.option('--task', type=click.Choice(TASKS), default='eps_svr', show_default=True)
@click.option('--n', type=int, required=True)
@click.option('--seed', type=int, default=0, show_default=True)
@click.option('--output', help='CSV file (default: standard output).')
@reports_errors
def cli_simulate(task, n, seed, output):
    """Draw a sample from a simulator and emit it as CSV."""
    data = simulate(task, n, seed)
    frame = pd.DataFrame(data.x, columns=['x{}'.format(j) for j in range(data.d)])
    frame['y'] = data.y
    emit_csv(frame, output)


@cli_command.command('fit')
@click.option('--task', type=click.Choice(TASKS), default='eps_svr', show_default=True)
@click.option('--method', type=click.Choice(METHODS), default='agghoo', show_default=True)
@click.option('--n', type=int, default=500, show_default=True)
@click.option('--n-test', type=int, default=1000, show_default=True)
@click.option('--tau', type=float, default=0.7, show_default=True)
@click.option('--V', 'V', type=int, default=10, show_default=True)
@click.option('--seed', type=int, default=0, show_default=True)
@click.option('--epsilon', type=float, default=0.25, show_default=True)
@click.option('--bandwidth', type=float, default=0.5, show_default=True)
@click.option('--cost-scale', type=float, default=500.0, show_default=True)
@click.option('--cost-steps', type=int, default=17, show_default=True)
@click.option('--max-k', type=int, default=99, show_default=True)
@click.option('--output', help='JSON file for the trace, the model and the excess risk.')
@reports_errors
def cli_fit(task, method, n, n_test, tau, V, seed, epsilon, bandwidth, cost_scale, cost_steps,
            max_k, output):
    """Fit one procedure on a simulated sample and report its test excess risk."""
    cfg = ExperimentConfig(task=task, n=n, n_test=n_test, replicates=1, taus=(tau,), vs=(V,),
                           seed=seed, epsilon=epsilon, bandwidth=bandwidth,
                           cost_scale=cost_scale, cost_steps=cost_steps, max_k=max_k)
    data = simulate(task, n, derive_seed(seed, 0))
    test = simulate(task, n_test, derive_seed(seed, 0, 'test'))
    n_t = n_train(tau, n)
    family = build_family(cfg, n_t)
    plan = make_split_plan(n, n_t, V, derive_seed(seed, 0, 'splits'))

    if method == 'agghoo':
        model = agghoo_fit(family, data, plan)
        trace = model.trace
    elif method == 'majhoo':
        model = majhoo_fit(family, data, plan)
        trace = model.trace
    elif method == 'cv':
        trace, model = cv_select(family, data, plan)
    else:
        trace, model = holdout_select(family, data, plan.subsets[0])

    excess = excess_risk_estimate(model, test, cfg.sim_task)
    click.echo('excess_risk: {}'.format(FLOAT_FORMAT % excess))
    if output:
        document = {'trace': trace.to_dict(), 'model': model_record(model), 'excess_risk': excess}
        with open(output, 'w', encoding='utf-8') as handle:
            json.dump(document, handle)
        LOGGER.info('wrote: {}'.format(output))


@cli_command.command('experiment')
@click.option('--config', 'config_path', required=True, help='JSON experiment configuration.')
@click.option('--output', help='Report CSV (overrides the config).')
@click.option('--workers', type=int, help='Worker processes (overrides the config).')
@click.option('--database', help='Result history database URL (overrides the config).')
@reports_errors
def cli_experiment(config_path, output, workers, database):
    """Run a simulation study and write its risk report."""
    cfg = ExperimentConfig.load(config_path)
    overrides = {'output': output, 'workers': workers, 'database': database}
    cfg = replace(cfg, **{key: value for key, value in overrides.items() if value is not None})
    report = run_experiment(cfg)
    if not cfg.output:
        click.echo(report.to_csv(), nl=False)


def _rkhs_rows(theorem, nvs, nt, grid_size, theta, lambda_min, oracle, constants, sigma):
    rows = []
    for n_v in nvs:
        params = RkhsBoundParams(n_v=n_v, n_t=nt, grid_size=grid_size, theta=theta,
                                 lambda_min=lambda_min, **constants)
        if theorem == 'rkhs':
            terms = rkhs_bound_terms(params, oracle)
            rhs = rkhs_bound_rhs(params, oracle) if theta < 1 else math.nan
        else:
            terms = eps_reg_bound_terms(sigma, params, oracle)
            rhs = eps_reg_bound_rhs(sigma, params, oracle) if theta < 1 else math.nan
        row = {'n_v': n_v, 'n_t': nt, 'grid_size': grid_size, 'theta': theta,
               'lambda_min': lambda_min, 'oracle': oracle}
        if theorem == 'eps_reg':
            row['sigma'] = sigma
        row.update({'branch1': terms.branches[0], 'branch2': terms.branches[1],
                    'branch3': terms.branches[2], 'remainder': terms.remainder,
                    'raw_rhs': terms.rhs, 'rhs': rhs})
        rows.append(row)
    return rows


@cli_command.command('bounds')
@click.option('--theorem', type=click.Choice(THEOREMS), required=True)
@click.option('--nv', type=int, multiple=True, default=(100,), show_default=True,
              help='Validation sizes to sweep (repeatable).')
@click.option('--nt', type=int, default=100, show_default=True)
@click.option('--grid-size', type=int, default=3, show_default=True)
@click.option('--theta', type=float, default=0.5, show_default=True)
@click.option('--lambda-min', type=float, default=1.0, show_default=True)
@click.option('--oracle', type=float, default=0.0, show_default=True)
@click.option('--rho', type=float, default=1.0, show_default=True)
@click.option('--nu', type=float, default=1.0, show_default=True)
@click.option('--lipschitz', type=float, default=1.0, show_default=True)
@click.option('--kappa', type=float, default=1.0, show_default=True)
@click.option('--comp', type=float, default=1.0, show_default=True)
@click.option('--sigma', type=float, help='Robust noise parameter (eps_reg).')
@click.option('--noise-var', type=float, help='Gaussian noise variance giving sigma (eps_reg).')
@click.option('--beta', type=float, default=0.0, show_default=True)
@click.option('--r', type=float, default=1.0, show_default=True)
@click.option('--m', type=int, default=1, show_default=True, help='Number of candidate rules.')
@click.option('--output', help='CSV file (default: standard output).')
@reports_errors
def cli_bounds(theorem, nv, nt, grid_size, theta, lambda_min, oracle, rho, nu, lipschitz, kappa,
               comp, sigma, noise_var, beta, r, m, output):
    """Tabulate an oracle-inequality bound over validation sizes."""
    if theorem == 'classif':
        rows = []
        for n_v in nv:
            params = ClassifBoundParams(beta=beta, r=r, family_size=m, n_v=n_v, oracle=oracle)
            rows.append({'beta': beta, 'r': r, 'm': m, 'n_v': n_v, 'oracle': oracle,
                         'remainder': classif_remainder(params), 'rhs': classif_bound_rhs(params)})
        emit_csv(pd.DataFrame(rows), output)
        return

    if theorem == 'eps_reg' and sigma is None:
        if noise_var is None:
            raise ContractViolation('eps_reg needs --sigma or --noise-var')
        if noise_var < 0:
            raise ContractViolation('--noise-var must be >= 0')
        sigma = 0.0
        if noise_var > 0:
            noise = stats.norm(0.0, math.sqrt(noise_var))
            sigma = robust_noise_parameter(lambda x: noise, [0.0])
    constants = {'rho': rho, 'nu': nu, 'L': lipschitz, 'kappa': kappa, 'comp': comp}
    rows = _rkhs_rows(theorem, nv, nt, grid_size, theta, lambda_min, oracle, constants, sigma)
    emit_csv(pd.DataFrame(rows), output)


@cli_command.command('status')
@click.option('--database', required=True, help='Result history database URL.')
@reports_errors
def cli_status(database):
    """Show the experiment runs stored in a database."""
    ResultStore(database).status()


def cli_main(argv=None):
    """
    Run the command line with ``argv`` and return its exit status instead of exiting.

    :rtype: int
    """
    try:
        cli_command.main(args=argv, prog_name='agghoo')
    except SystemExit as exc:
        if exc.code is None:
            return 0
        return exc.code if isinstance(exc.code, int) else 1
    return 0
