"""
Test suite for the chaplab run pipeline.

Tests configuration, scenario parsing, the model and check registries,
reports and the command-line exit codes.
"""

import json
from pathlib import Path

import numpy as np
import pytest

from chaplab import cli_run, config, reports, runner
from chaplab.checks import CHECKS, RunContext, list_checks, run_check
from chaplab.inertia import ParameterError
from chaplab.models import MODEL_NAMES, bind_model, initial_state
from chaplab.numerics import IntegratorConfig, Trajectory
from chaplab.scenarios import ScenarioError, load_scenario, parse_scenario, save_scenario


SCENARIO_DIR = Path(__file__).parent.parent / 'scenarios'

HOMOGENEOUS = {
    'name': 'short_homogeneous',
    'model': 'chaplygin_homogeneous',
    'parameters': {'n': 3, 's': 1.0, 'D': 10.0},
    'initial': {'seed': 1},
    'integrator': {'method': 'rk4', 'step': 0.001, 't_end': 1.0},
    'checks': [
        {'name': 'conservation:H', 'tolerance': 1e-8},
        {'name': 'constraints', 'tolerance': 1e-8},
        {'name': 'great_circle', 'tolerance': 1e-8},
    ],
}


def valid_config():
    return dict(config.BUILTIN_DEFAULTS)


def write_json(path, data):
    with open(path, 'w') as f:
        json.dump(data, f)
    return str(path)


def context(name, parameters, t_end=0.5, seed=0):
    model = bind_model(name, parameters)
    rng = np.random.default_rng(seed)
    y0 = initial_state(model, {}, rng)
    integrator = IntegratorConfig(step=1e-3, t_end=t_end)
    traj = runner.simulate(model, y0, integrator)
    return RunContext(model=model, traj=traj, y0=y0, integrator=integrator, rng=rng)


class TestConfig:
    """Test configuration management."""

    def test_load_config(self):
        """Test configuration loads with every key."""
        loaded = config.load_config()
        assert set(loaded) == set(config.BUILTIN_DEFAULTS)
        assert loaded['default_step'] > 0

    def test_environment_overrides(self, monkeypatch):
        """Test CHAPLAB_* variables override the defaults."""
        monkeypatch.setenv('CHAPLAB_DEFAULT_STEP', '0.0005')
        monkeypatch.setenv('CHAPLAB_LOG_LEVEL', 'debug')
        loaded = config.load_config()
        assert loaded['default_step'] == pytest.approx(5e-4)
        assert loaded['log_level'] == 'DEBUG'

    def test_malformed_number(self, monkeypatch):
        """Test a non-numeric setting is reported."""
        monkeypatch.setenv('CHAPLAB_MAX_WORKERS', 'many')
        with pytest.raises(ValueError, match="Malformed numeric setting"):
            config.load_config()

    def test_validate_config_success(self):
        """Test valid configuration passes validation."""
        config.validate_config(valid_config())

    @pytest.mark.parametrize('key, value, variable', [
        ('output_dir', '', 'CHAPLAB_OUTPUT_DIR'),
        ('default_step', 0.0, 'CHAPLAB_DEFAULT_STEP'),
        ('default_method', 'euler', 'CHAPLAB_DEFAULT_METHOD'),
        ('max_workers', 0, 'CHAPLAB_MAX_WORKERS'),
        ('log_level', 'LOUD', 'CHAPLAB_LOG_LEVEL'),
        ('default_seed', -1, 'CHAPLAB_DEFAULT_SEED'),
    ])
    def test_validate_config_invalid(self, key, value, variable):
        """Test each invalid value names its environment variable."""
        settings = valid_config()
        settings[key] = value
        with pytest.raises(ValueError, match=variable):
            config.validate_config(settings)

    def test_defaults_file(self, tmp_path):
        """Test config.json values are read and unknown keys ignored."""
        path = tmp_path / 'config.json'
        path.write_text(json.dumps({'default_t_end': 3.0, 'colour': 'blue'}))
        defaults = config.load_defaults(path)
        assert defaults['default_t_end'] == 3.0
        assert 'colour' not in defaults

    def test_corrupted_defaults_file(self, tmp_path, capsys):
        """Test a corrupted config.json falls back to built-in values."""
        path = tmp_path / 'config.json'
        path.write_text('{not json')
        assert config.load_defaults(path) == config.BUILTIN_DEFAULTS
        assert "corrupted" in capsys.readouterr().out


class TestScenarios:
    """Test scenario parsing and validation."""

    def test_bundled_scenarios_parse(self):
        """Test every scenario shipped with the project is valid."""
        paths = sorted(SCENARIO_DIR.glob('*.json'))
        assert paths
        for path in paths:
            scenario = load_scenario(str(path))
            assert scenario.model in MODEL_NAMES

    def test_unknown_keys(self):
        """Test unknown keys are rejected at every level."""
        with pytest.raises(ScenarioError, match="Unknown keys in 'scenario'"):
            parse_scenario(dict(HOMOGENEOUS, colour='blue'))
        with pytest.raises(ScenarioError, match="Unknown keys in 'integrator'"):
            parse_scenario(dict(HOMOGENEOUS, integrator={'dt': 0.1}))
        with pytest.raises(ScenarioError, match=r"Unknown keys in 'checks\[0\]'"):
            parse_scenario(dict(HOMOGENEOUS, checks=[{'name': 'constraints', 'tolerance': 1e-8, 'tol': 1}]))

    def test_missing_fields(self):
        """Test name, model and checks are required."""
        with pytest.raises(ScenarioError, match="non-empty 'name'"):
            parse_scenario(dict(HOMOGENEOUS, name=''))
        with pytest.raises(ScenarioError, match="Unknown model"):
            parse_scenario(dict(HOMOGENEOUS, model='spinning_top'))
        with pytest.raises(ScenarioError, match="no checks and no comparison"):
            parse_scenario(dict(HOMOGENEOUS, checks=[]))
        with pytest.raises(ScenarioError, match="must be positive"):
            parse_scenario(dict(HOMOGENEOUS, checks=[{'name': 'constraints', 'tolerance': -1}]))

    @pytest.mark.parametrize('options, match', [
        ({'points': None}, "must be a number"),
        ({'points': 2.5}, "positive integer"),
        ({'points': True}, "must be a number"),
        ({'margin': '0.1'}, "must be a number"),
        ({'step': 0}, "must be positive"),
        ({'strict': 1}, "true or false"),
        ({'pairs': [1, 2]}, "index pairs"),
        ({'section': -1}, "state index"),
    ])
    def test_option_types(self, options, match):
        """Test check options of the wrong type are refused when the scenario loads."""
        data = dict(HOMOGENEOUS, checks=[{'name': 'constraints', 'tolerance': 1e-8, 'options': options}])
        with pytest.raises(ScenarioError, match=match):
            parse_scenario(data)

    def test_mapping_must_match_model(self):
        """Test a comparison starting from another model is refused."""
        data = dict(HOMOGENEOUS, compare={'mapping': 'reparametrize', 'tolerance': 1e-6})
        with pytest.raises(ScenarioError, match="starts from model 'chaplygin_cotangent'"):
            parse_scenario(data)
        with pytest.raises(ScenarioError, match="Unknown mapping"):
            parse_scenario(dict(HOMOGENEOUS, compare={'mapping': 'teleport', 'tolerance': 1e-6}))

    def test_integrator_settings(self):
        """Test scenario settings override the configured defaults."""
        scenario = parse_scenario(HOMOGENEOUS)
        settings = scenario.integrator_config(valid_config())
        assert settings.t_end == 1.0
        assert settings.tolerance == config.BUILTIN_DEFAULTS['rkf45_tolerance']
        with pytest.raises(ScenarioError, match="Invalid integrator settings"):
            scenario.integrator_config(valid_config(), {'step': -1.0})

    def test_load_errors(self, tmp_path):
        """Test missing and malformed files."""
        with pytest.raises(ScenarioError, match="not found"):
            load_scenario(str(tmp_path / 'missing.json'))
        broken = tmp_path / 'broken.json'
        broken.write_text('{')
        with pytest.raises(ScenarioError, match="not valid JSON"):
            load_scenario(str(broken))

    def test_save_scenario(self, tmp_path):
        """Test a saved scenario loads back with its source recorded."""
        path = tmp_path / 'saved.json'
        save_scenario(HOMOGENEOUS, str(path))
        scenario = load_scenario(str(path))
        assert scenario.name == 'short_homogeneous'
        assert scenario.source == str(path)
        assert [check.name for check in scenario.checks][0] == 'conservation:H'


class TestModels:
    """Test the model registry."""

    def test_unknown_model(self):
        """Test an unknown model name."""
        with pytest.raises(ValueError, match="Unknown model"):
            bind_model('spinning_top', {})

    def test_missing_parameters(self):
        """Test required parameters are named."""
        with pytest.raises(ParameterError, match="needs parameters: D"):
            bind_model('chaplygin_cotangent', {'a': [1.0, 2.0, 3.0]})

    def test_inadmissible_parameters(self):
        """Test a_i a_j >= D is refused."""
        with pytest.raises(ParameterError, match="Inadmissible parameters"):
            bind_model('chaplygin_cotangent', {'a': [1.0, 2.0, 3.0], 'D': 5.0})
        with pytest.raises(ParameterError, match="does not match"):
            bind_model('chaplygin_cotangent', {'a': [1.0, 2.0, 3.0], 'D': 10.0, 'n': 4})

    def test_seeded_initial_state(self):
        """Test the same seed gives the same admissible state."""
        model = bind_model('chaplygin_cotangent', {'a': [0.7, 1.1, 1.6], 'D': 12.0})
        first = initial_state(model, {}, np.random.default_rng(5))
        second = initial_state(model, {}, np.random.default_rng(5))
        assert np.array_equal(first, second)
        assert first[:3] @ first[:3] == pytest.approx(1.0)
        assert first[:3] @ first[3:] == pytest.approx(0.0, abs=1e-14)

    def test_every_model_binds(self):
        """Test each registered model integrates a few steps from seeded data."""
        parameters = {
            'chaplygin_cotangent': {'a': [0.7, 1.1, 1.6], 'D': 12.0},
            'chaplygin_full': {'a': [0.7, 1.1, 1.6], 'D': 12.0},
            'chaplygin_homogeneous': {'n': 3, 's': 1.0, 'D': 10.0},
            'classical3d': {'inertia': [1.0, 2.0, 2.5], 'D': 10.0},
            'geodesic_tilde': {'a': [0.7, 1.1, 1.6], 'D': 12.0},
            'veselova_reduced': {'a': [0.7, 1.1, 1.6]},
            'veselova3d': {'inertia': [1.5, 2.0, 3.0]},
            'ellipsoid': {'a': [0.7, 1.1, 1.6]},
        }
        assert set(parameters) == set(MODEL_NAMES)
        for name, values in parameters.items():
            ctx = context(name, values, t_end=0.01)
            assert ctx.traj.states.shape[1] == len(ctx.model.columns)
            for values_along in ctx.model.evaluate(ctx.traj).values():
                assert np.all(np.isfinite(values_along))


class TestChecks:
    """Test the check registry."""

    def test_registry(self):
        """Test the listing is sorted and covers the main families."""
        names = [check.name for check in list_checks()]
        assert names == sorted(names)
        for name in ('conservation', 'constraints', 'liouville', 'involution', 'lagrange_integrals'):
            assert name in CHECKS

    def test_run_check_errors(self):
        """Test unknown checks, unsupported models and missing arguments."""
        ctx = context('chaplygin_homogeneous', {'n': 3, 's': 1.0, 'D': 10.0}, t_end=0.05)
        with pytest.raises(ValueError, match="Unknown check"):
            run_check('wobble', 1e-8, ctx)
        with pytest.raises(ValueError, match="not defined for model"):
            run_check('liouville', 1e-8, ctx)
        with pytest.raises(ValueError, match="needs an argument"):
            run_check('conservation', 1e-8, ctx)
        with pytest.raises(ValueError, match="does not track"):
            run_check('conservation:energy', 1e-8, ctx)

    def test_liouville_veselova_body(self):
        """Test the Veselova body density passes the finite-difference Liouville check."""
        ctx = context('veselova3d', {'inertia': [2.0, 3.0, 5.0]}, t_end=0.01)
        result = run_check('liouville', 1e-8, ctx, {'points': 50})
        assert result.passed
        assert result.details['mode'] == 'finite-difference'
        assert result.details['points'] == 50

    def test_projection_bound(self):
        """Test the projection displacement is reported against the truncation estimate."""
        ctx = context('chaplygin_cotangent', {'a': [0.7, 1.1, 1.6], 'D': 12.0}, t_end=0.2)
        with pytest.raises(ValueError, match="needs 'projection': true"):
            run_check('projection_bound', 10.0, ctx)
        integrator = IntegratorConfig(step=1e-3, t_end=0.5, projection=True)
        traj = runner.simulate(ctx.model, ctx.y0, integrator)
        projected = RunContext(model=ctx.model, traj=traj, y0=ctx.y0, integrator=integrator, rng=ctx.rng)
        result = run_check('projection_bound', 10.0, projected)
        assert result.passed
        assert result.details['within_bound']
        assert result.value == traj.metadata['max_projection_ratio']

    def test_conservation_passes(self):
        """Test the homogeneous ball conserves H and stays on the constraints."""
        ctx = context('chaplygin_homogeneous', {'n': 3, 's': 1.0, 'D': 10.0})
        assert run_check('conservation:H', 1e-8, ctx).passed
        assert run_check('constraints', 1e-8, ctx).passed

    def test_lagrange_integrals(self):
        """Test F_ij is conserved in the Lagrange case and the product form is reported."""
        ctx = context('chaplygin_cotangent', {'a': [1.0, 1.0, 1.8], 'D': 10.0})
        result = run_check('lagrange_integrals', 1e-8, ctx)
        assert result.passed
        assert result.details['lagrange_case'] is True
        assert 'product_form_12' in result.details

    def test_linear_integral_negative_control(self):
        """Test f_12 drifts when a_1 != a_2 and the note says so."""
        ctx = context('chaplygin_cotangent', {'a': [0.5, 1.0, 1.5, 2.5], 'D': 10.0}, seed=3)
        result = run_check('conservation:f_12', 1e-8, ctx)
        assert not result.passed
        assert 'f_12_note' in result.details


class TestReports:
    """Test reports and trajectory tables."""

    def test_check_result(self):
        """Test pass/fail including non-finite values."""
        assert reports.CheckResult('a', 1e-9, 1e-8).passed
        assert not reports.CheckResult('b', 1e-7, 1e-8).passed
        assert not reports.CheckResult('c', float('nan'), 1e-8).passed
        assert reports.CheckResult('c', float('nan'), 1e-8).to_dict()['value'] == 'nan'

    def test_write_and_load_report(self, tmp_path):
        """Test the JSON report keeps the checks and adds a timestamp."""
        report = reports.CheckReport('demo', [reports.CheckResult('x', np.float64(1e-10), 1e-8,
                                                                  {'samples': np.int64(3)})])
        path = reports.write_report(report, tmp_path / 'out')
        data = reports.load_report(path)
        assert data['overall_pass'] is True
        assert data['checks'][0]['details']['samples'] == 3
        assert 'timestamp' in data['metadata']

    def test_trajectory_table(self, tmp_path):
        """Test the table keeps t, tau, states and extra columns."""
        traj = Trajectory([0.0, 0.5, 1.0], np.arange(6.0).reshape(3, 2), tau=[0.0, 0.1, 0.2])
        path = reports.write_trajectory(traj, ['x', 'y'], tmp_path / 't.csv', extra={'E': [1.0, 1.0, 1.0]})
        table = reports.read_trajectory(path)
        assert list(table) == ['t', 'tau', 'x', 'y', 'E']
        assert np.allclose(table['y'], [1.0, 3.0, 5.0])
        with pytest.raises(ValueError, match="Expected 2 column names"):
            reports.write_trajectory(traj, ['x'], tmp_path / 'bad.csv')


class TestCommandLine:
    """Test exit codes of the command-line entry point."""

    def test_run_passes(self, tmp_path):
        """Test a passing scenario exits 0 and writes its outputs."""
        path = write_json(tmp_path / 'ok.json', HOMOGENEOUS)
        out = tmp_path / 'runs'
        assert cli_run.main(['run', path, '--out', str(out), '--quiet']) == runner.EXIT_OK
        assert (out / 'short_homogeneous_report.json').exists()
        assert (out / 'short_homogeneous_trajectory.csv').exists()

    def test_failing_check(self, tmp_path):
        """Test the f_12 negative control exits 1."""
        data = {
            'name': 'negative',
            'model': 'chaplygin_cotangent',
            'parameters': {'a': [0.5, 1.0, 1.5, 2.5], 'D': 10.0},
            'initial': {'seed': 3},
            'integrator': {'step': 0.001, 't_end': 0.5},
            'checks': [{'name': 'conservation:f_12', 'tolerance': 1e-8}],
            'output': {'trajectory': False},
        }
        path = write_json(tmp_path / 'neg.json', data)
        assert cli_run.main(['run', path, '--out', str(tmp_path), '--quiet']) == runner.EXIT_FAILED

    def test_configuration_errors(self, tmp_path):
        """Test inadmissible parameters, missing files and compare without a block exit 2."""
        data = dict(HOMOGENEOUS, model='chaplygin_cotangent', parameters={'a': [1.0, 2.0, 3.0], 'D': 5.0},
                    checks=[{'name': 'conservation:H', 'tolerance': 1e-8}])
        path = write_json(tmp_path / 'bad.json', data)
        assert cli_run.main(['run', path, '--out', str(tmp_path), '--quiet']) == runner.EXIT_CONFIG
        assert cli_run.main(['run', str(tmp_path / 'missing.json'), '--quiet']) == runner.EXIT_CONFIG
        ok = write_json(tmp_path / 'ok.json', HOMOGENEOUS)
        assert cli_run.main(['compare', ok, '--out', str(tmp_path), '--quiet']) == runner.EXIT_CONFIG

    def test_checks_list(self, capsys):
        """Test the check listing."""
        assert cli_run.main(['checks', '--list']) == runner.EXIT_OK
        output = capsys.readouterr().out
        assert 'conservation:<name>' in output
        assert 'lagrange_integrals' in output

    def test_no_command(self, capsys):
        """Test a bare invocation prints help and exits 2."""
        assert cli_run.main([]) == runner.EXIT_CONFIG
        assert 'usage' in capsys.readouterr().out

    def test_execute_never_raises(self, tmp_path):
        """Test the batch worker turns errors into exit codes."""
        _, code, message = runner.execute(str(tmp_path / 'missing.json'))
        assert code == runner.EXIT_CONFIG
        assert 'not found' in message
        path = write_json(tmp_path / 'ok.json', HOMOGENEOUS)
        _, code, message = runner.execute(path, out_dir=str(tmp_path))
        assert code == runner.EXIT_OK
        assert message.startswith('report')

    def test_execute_bad_option_value(self, tmp_path):
        """Test a null option value is a configuration error, not a crash."""
        data = {
            'name': 'null_points',
            'model': 'chaplygin_cotangent',
            'parameters': {'a': [0.5, 1.0, 1.5], 'D': 10.0},
            'initial': {'seed': 2},
            'integrator': {'step': 0.001, 't_end': 0.1},
            'checks': [{'name': 'liouville', 'tolerance': 1e-10, 'options': {'points': None}}],
            'output': {'trajectory': False},
        }
        path = write_json(tmp_path / 'null.json', data)
        _, code, message = runner.execute(path, out_dir=str(tmp_path))
        assert code == runner.EXIT_CONFIG
        assert 'checks[0].options.points' in message

    def test_execute_unexpected_error(self, tmp_path, monkeypatch):
        """Test an error outside the known families still yields exit 2."""
        def broken(*args, **kwargs):
            raise RuntimeError("only 3 of 50 points inside the chart")

        monkeypatch.setattr(runner, 'run_scenario', broken)
        path = write_json(tmp_path / 'ok.json', HOMOGENEOUS)
        _, code, message = runner.execute(path, out_dir=str(tmp_path))
        assert code == runner.EXIT_CONFIG
        assert message == "Unexpected error: only 3 of 50 points inside the chart"

    def test_unexpected_error_goes_to_stderr(self, tmp_path, monkeypatch, capsys):
        """Test the catch-all branch of main reports on stderr."""
        def broken(*args, **kwargs):
            raise RuntimeError("worker lost")

        monkeypatch.setattr(cli_run, 'run_scenario', broken)
        path = write_json(tmp_path / 'ok.json', HOMOGENEOUS)
        assert cli_run.main(['run', path, '--out', str(tmp_path), '--quiet']) == runner.EXIT_CONFIG
        captured = capsys.readouterr()
        assert 'Unexpected error: worker lost' in captured.err
        assert 'Unexpected error' not in captured.out


@pytest.mark.integration
class TestBundledScenarios:
    """Test bundled scenarios end to end."""

    @pytest.mark.parametrize('name, expected', [
        ('homogeneous_ball', runner.EXIT_OK),
        ('lagrange', runner.EXIT_OK),
        ('negative_control_fij', runner.EXIT_FAILED),
        ('inadmissible_D', runner.EXIT_CONFIG),
    ])
    def test_exit_code(self, tmp_path, name, expected):
        """Test each scenario ends with its documented exit code."""
        _, code, message = runner.execute(str(SCENARIO_DIR / f'{name}.json'), out_dir=str(tmp_path))
        assert code == expected, message


if __name__ == '__main__':
    pytest.main([__file__, '-v'])
