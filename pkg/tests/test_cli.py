import io
import json
import logging
import math

import pandas as pd
import pytest

from click.testing import CliRunner
from scipy import stats

from agghoo.cli import cli_command, cli_main

runner = CliRunner()


def read_csv(result):
    return pd.read_csv(io.StringIO(result.output))


@pytest.fixture(scope='function')
def config(tmp_path):
    path = tmp_path / 'config.json'
    path.write_text(json.dumps({
        'task': 'knn', 'n': 20, 'n_test': 50, 'replicates': 2, 'taus': [0.5],
        'vs': [1, 2], 'max_k': 5, 'workers': 1,
    }))
    return str(path)


def test_simulate():
    result = runner.invoke(cli_command, ['simulate', '--task', 'eps_svr', '--n', '10', '--seed', '3'])
    assert result.exit_code == 0
    lines = result.output.splitlines()
    assert lines[0] == 'x0,y'
    assert len(lines) == 11

    again = runner.invoke(cli_command, ['simulate', '--task', 'eps_svr', '--n', '10', '--seed', '3'])
    assert again.output == result.output

    result = runner.invoke(cli_command, ['simulate', '--task', 'knn', '--n', '5'])
    assert result.exit_code == 0
    assert result.output.splitlines()[0] == 'x0,x1,y'


def test_simulate_output(tmp_path):
    output = tmp_path / 'sample.csv'
    result = runner.invoke(cli_command, ['simulate', '--n', '4', '--output', str(output)])
    assert result.exit_code == 0
    assert len(output.read_text().splitlines()) == 5


def test_usage_errors():
    assert runner.invoke(cli_command, ['simulate', '--n', '5', '--bogus']).exit_code == 1
    assert runner.invoke(cli_command, ['nope']).exit_code == 1
    assert runner.invoke(cli_command, ['simulate']).exit_code == 1
    assert runner.invoke(cli_command, ['simulate', '--n', '0']).exit_code == 1


def test_experiment(config, tmp_path):
    result = runner.invoke(cli_command, ['experiment', '--config', config])
    assert result.exit_code == 0
    frame = read_csv(result)
    assert list(frame.columns) == ['method', 'tau', 'V', 'mean_excess', 'se', 'replicates']
    assert set(frame['method']) == {'oracle', 'majhoo', 'cv'}

    output = tmp_path / 'report.csv'
    result = runner.invoke(cli_command, ['experiment', '--config', config, '--output', str(output)])
    assert result.exit_code == 0
    assert output.exists()
    assert (tmp_path / 'report_replicates.csv').exists()


def test_experiment_errors(tmp_path):
    missing = str(tmp_path / 'missing.json')
    assert runner.invoke(cli_command, ['experiment', '--config', missing]).exit_code == 2

    bad = tmp_path / 'bad.json'
    bad.write_text(json.dumps({'task': 'knn', 'bogus': 1}))
    assert runner.invoke(cli_command, ['experiment', '--config', str(bad)]).exit_code == 1


def test_experiment_database(config, tmp_path):
    database = 'sqlite:///{}'.format(tmp_path / 'history.sqlite')
    command = ['experiment', '--config', config, '--database', database]
    first = runner.invoke(cli_command, command)
    second = runner.invoke(cli_command, command)
    assert first.exit_code == 0 and second.exit_code == 0
    assert first.output == second.output

    result = runner.invoke(cli_command, ['status', '--database', database])
    assert result.exit_code == 0


def test_bounds_classif():
    result = runner.invoke(cli_command, ['bounds', '--theorem', 'classif', '--m', '10', '--nv', '100'])
    assert result.exit_code == 0
    frame = read_csv(result)
    assert frame.loc[0, 'rhs'] == pytest.approx(29 * (1 + math.log(10)) / 10, rel=1e-12)

    result = runner.invoke(cli_command, ['bounds', '--theorem', 'classif', '--r', '0.5'])
    assert result.exit_code == 1


def test_bounds_rkhs_sweep():
    result = runner.invoke(cli_command, ['bounds', '--theorem', 'rkhs', '--nv', '100', '--nv', '400'])
    assert result.exit_code == 0
    frame = read_csv(result)
    assert frame['n_v'].tolist() == [100, 400]
    assert frame.loc[1, 'rhs'] < frame.loc[0, 'rhs']
    assert frame.loc[0, 'rhs'] == pytest.approx(2 * frame.loc[0, 'remainder'])


def test_bounds_rkhs_theta():
    result = runner.invoke(cli_command, ['bounds', '--theorem', 'rkhs', '--theta', '1'])
    assert result.exit_code == 0
    frame = read_csv(result)
    assert math.isnan(frame.loc[0, 'rhs'])
    assert frame.loc[0, 'raw_rhs'] == pytest.approx(frame.loc[0, 'remainder'])

    result = runner.invoke(cli_command, ['bounds', '--theorem', 'rkhs', '--theta', '1.5'])
    assert result.exit_code == 1


def test_bounds_eps_reg():
    result = runner.invoke(cli_command, ['bounds', '--theorem', 'eps_reg'])
    assert result.exit_code == 1

    result = runner.invoke(cli_command, ['bounds', '--theorem', 'eps_reg', '--noise-var', '0.5'])
    assert result.exit_code == 0
    frame = read_csv(result)
    expected = 2 * math.sqrt(0.5) * stats.norm.ppf(0.75)
    assert frame.loc[0, 'sigma'] == pytest.approx(expected, rel=1e-12)

    result = runner.invoke(cli_command, ['bounds', '--theorem', 'eps_reg', '--sigma', '0'])
    assert result.exit_code == 0
    assert read_csv(result).loc[0, 'branch1'] == 0.0


def test_fit_agghoo(tmp_path):
    output = tmp_path / 'fit.json'
    command = ['fit', '--task', 'eps_svr', '--method', 'agghoo', '--n', '30', '--n-test', '100',
               '--V', '2', '--cost-steps', '2', '--output', str(output)]
    result = runner.invoke(cli_command, command)
    assert result.exit_code == 0
    assert result.output.startswith('excess_risk: ')

    document = json.loads(output.read_text())
    assert set(document) == {'trace', 'model', 'excess_risk'}
    assert len(document['trace']['splits']) == 2
    assert len(document['trace']['names']) == 3
    assert document['excess_risk'] == float(result.output.split()[1])


def test_fit_methods():
    base = ['fit', '--task', 'knn', '--n', '40', '--n-test', '100', '--V', '2', '--max-k', '9']
    assert runner.invoke(cli_command, base + ['--method', 'agghoo']).exit_code == 1
    for method in ('majhoo', 'cv', 'holdout'):
        result = runner.invoke(cli_command, base + ['--method', method])
        assert result.exit_code == 0
        assert float(result.output.split()[1]) >= 0.0


def test_status_empty(tmp_path):
    database = 'sqlite:///{}'.format(tmp_path / 'empty.sqlite')
    assert runner.invoke(cli_command, ['status', '--database', database]).exit_code == 0


def test_quiet():
    logger = logging.getLogger('agghoo')
    runner.invoke(cli_command, ['--quiet', 'bounds', '--theorem', 'classif'])
    assert logger.level == logging.WARNING
    runner.invoke(cli_command, ['bounds', '--theorem', 'classif'])
    assert logger.level == logging.DEBUG


def test_cli_main():
    assert cli_main(['bounds', '--theorem', 'classif']) == 0
    assert cli_main(['nope']) == 1
    assert cli_main(['bounds', '--theorem', 'rkhs', '--theta', '2']) == 1
