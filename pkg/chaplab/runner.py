"""
Scenario execution.

run_scenario binds the model, builds the initial state, integrates,
runs the named checks and the optional comparison, then writes the
trajectory table and the JSON report.
"""

import logging
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np

from chaplab import __version__, chaplygin, hamiltonization, integrability, veselova
from chaplab.checks import RunContext, run_check
from chaplab.config import load_config
from chaplab.inertia import ParameterError, fedorov_map_3d
from chaplab.models import BoundModel, bind_model, embed_state, initial_state
from chaplab.numerics import IntegrationError, IntegratorConfig, Trajectory, compare_trajectories, integrate
from chaplab.reports import CheckReport, CheckResult, write_report, write_trajectory
from chaplab.scenarios import ScenarioConfig, ScenarioError, load_scenario


logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2

CONFIG_ERRORS = (ScenarioError, ParameterError, ValueError, OSError)


def resolve_seed(scenario: ScenarioConfig, config: Dict, seed: Optional[int] = None) -> int:
    """--seed, then the scenario's own seed, then the configured default."""
    if seed is not None:
        return int(seed)
    return scenario.seed(int(config['default_seed']))


def resolve_output_dir(scenario: ScenarioConfig, config: Dict, out_dir: Optional[str] = None) -> Path:
    return Path(out_dir or scenario.output.get('dir') or config['output_dir'])


def simulate(model: BoundModel, y0: np.ndarray, integrator: IntegratorConfig,
             seed: Optional[int] = None, progress: bool = False) -> Trajectory:
    """Integrate a bound model with its projector and clock."""
    metadata = {'model': model.name, 'parameters': model.parameters, 'seed': seed}
    return integrate(model.rhs, y0, integrator, project=model.project, clock=model.clock,
                     metadata=metadata, progress=progress)


def _compare_integrator(scenario: ScenarioConfig, config: Dict, base: IntegratorConfig,
                        step_scale: float = 1.0, t_end: Optional[float] = None) -> IntegratorConfig:
    overrides = dict(scenario.compare.integrator)
    overrides.setdefault('step', base.step * step_scale)
    overrides.setdefault('method', base.method)
    overrides.setdefault('projection', base.projection)
    overrides.setdefault('stride', base.stride)
    if t_end is not None:
        overrides['t_end'] = t_end
    else:
        overrides.setdefault('t_end', base.t_end)
    return scenario.integrator_config(config, overrides)


def run_comparison(scenario: ScenarioConfig, config: Dict, model: BoundModel, traj: Trajectory,
                   y0: np.ndarray, integrator: IntegratorConfig
                   ) -> Tuple[CheckResult, Optional[Tuple[BoundModel, Trajectory]]]:
    """
    Run the second flow of a comparison and measure the discrepancy.

    Returns:
        (CheckResult named 'compare:<mapping>', (second model, trajectory) or None)
    """
    compare = scenario.compare
    mapping = compare.mapping
    n = model.n
    second = None

    if mapping == 'reparametrize':
        a, D = model.a, model.D
        _, mapped = hamiltonization.reparametrize(traj, a, D)
        target = bind_model('geodesic_tilde', scenario.parameters)
        z0 = np.concatenate([y0[:n], hamiltonization.to_tilde(y0[:n], y0[n:], a, D)])
        settings = _compare_integrator(scenario, config, integrator,
                                       step_scale=hamiltonization.multiplier(y0[:n], a, D),
                                       t_end=float(mapped.times[-1]))
        second = (target, simulate(target, z0, settings))
        details = compare_trajectories(mapped, second[1], mode='time')
        details['tau_end'] = float(mapped.times[-1])
        value = details['sup_distance']

    elif mapping == 'embed':
        target = bind_model('chaplygin_full', scenario.parameters)
        second = (target, simulate(target, embed_state(y0, n), _compare_integrator(scenario, config, integrator)))
        embedded = Trajectory(traj.times, np.array([embed_state(y, n) for y in traj.states]))
        details = compare_trajectories(embedded, second[1], mode='time')
        value = details['sup_distance']

    elif mapping == 'foliation':
        settings = _compare_integrator(scenario, config, integrator)
        section = compare.options.get('section')
        details = integrability.foliation_check(y0[:n], y0[n:], model.params, settings,
                                                section=None if section is None else int(section))
        value = details['max_drift']

    elif mapping == 'gauss':
        target = bind_model('ellipsoid', {'a': scenario.parameters['a']})
        x0, v0 = veselova.veselova_reduced_to_ellipsoid(y0[:n], y0[n:], model.a)
        second = (target, simulate(target, np.concatenate([x0, v0]), _compare_integrator(scenario, config, integrator)))
        details = veselova.gauss_curve_distance(traj, second[1], model.a)
        value = details['sup_distance']

    elif mapping == 'fedorov':
        value, details, second = _fedorov_comparison(scenario, config, model, traj, y0, integrator)

    else:
        overrides = _compare_integrator(scenario, config, integrator)
        second = (model, simulate(model, y0, overrides))
        details = compare_trajectories(traj, second[1], mode='time')
        value = details['sup_distance']

    logger.info("Comparison %s: %.3e", mapping, value)
    return CheckResult(f'compare:{mapping}', float(value), compare.tolerance, details), second


def _fedorov_comparison(scenario, config, model, traj, y0, integrator):
    """
    Level-map residuals along the Veselova run, and the classical ball
    started at the mapped state holding the mapped levels.
    """
    D = scenario.parameters.get('D')
    if D is None:
        raise ParameterError("The fedorov mapping needs parameter D")
    D = float(D)
    J = np.asarray(scenario.parameters['inertia'], dtype=float)
    stride = max(1, int(scenario.compare.options.get('stride', 1)))
    residuals = [veselova.fedorov_check(y[:3], y[3:], J, D)['max_residual'] for y in traj.states[::stride]]

    I, omega, gamma = fedorov_map_3d(J, D, y0[:3], y0[3:])
    k0 = chaplygin.classical3d_momentum(omega, gamma, I, D)
    target = bind_model('classical3d', {'inertia': I.tolist(), 'D': D})
    second = simulate(target, np.concatenate([k0, gamma]), _compare_integrator(scenario, config, integrator))
    f = veselova.veselova3d_integrals(y0[:3], y0[3:], J)
    levels = np.array([-f[0], f[1], (f[3] - 2.0 * f[2]) / (2.0 * D), f[3]])
    integrals = np.array([chaplygin.classical3d_integrals(y[:3], y[3:], I, D) for y in second.states])
    level_drift = float(np.max(np.abs(integrals - levels) / (1.0 + np.abs(levels))))
    details = {
        'max_level_residual': float(max(residuals)),
        'classical_level_drift': level_drift,
        'chaplygin_inertia': I.tolist(),
    }
    return max(details['max_level_residual'], level_drift), details, (target, second)


def run_scenario(scenario: ScenarioConfig, config: Dict, out_dir: Optional[str] = None,
                 seed: Optional[int] = None, progress: bool = False,
                 require_compare: bool = False) -> Tuple[CheckReport, Path]:
    """
    Integrate a scenario, run its checks and write outputs.

    Args:
        scenario: Validated scenario
        config: Configuration from load_config()
        out_dir: Output directory override
        seed: Seed override
        progress: Show integration progress bars
        require_compare: Refuse scenarios without a comparison block

    Returns:
        Tuple of (CheckReport, report path)

    Raises:
        ScenarioError, ParameterError: On configuration problems
        IntegrationError: If the integration breaks down
    """
    if require_compare and scenario.compare is None:
        raise ScenarioError(f"Scenario '{scenario.name}' has no 'compare' block")
    seed = resolve_seed(scenario, config, seed)
    directory = resolve_output_dir(scenario, config, out_dir)

    model = bind_model(scenario.model, scenario.parameters)
    rng = np.random.default_rng(seed)
    y0 = initial_state(model, scenario.initial, rng)
    integrator = scenario.integrator_config(config)
    traj = simulate(model, y0, integrator, seed=seed, progress=progress)

    ctx = RunContext(model=model, traj=traj, y0=y0, integrator=integrator, rng=rng)
    results = [run_check(check.name, check.tolerance, ctx, check.options) for check in scenario.checks]

    second = None
    if scenario.compare is not None:
        result, second = run_comparison(scenario, config, model, traj, y0, integrator)
        results.append(result)

    metadata = {
        'version': __version__,
        'model': model.name,
        'parameters': scenario.parameters,
        'seed': seed,
        'integrator': integrator.to_dict(),
        'samples': len(traj),
        'source': scenario.source,
    }
    if scenario.output.get('trajectory', True):
        table = directory / f"{scenario.name}_trajectory.csv"
        write_trajectory(traj, model.columns, table, extra=model.evaluate(traj))
        metadata['trajectory'] = str(table)
        if second is not None:
            second_table = directory / f"{scenario.name}_{scenario.compare.mapping}_trajectory.csv"
            write_trajectory(second[1], second[0].columns, second_table)
            metadata['compare_trajectory'] = str(second_table)

    report = CheckReport(scenario.name, results, metadata)
    path = write_report(report, directory)
    return report, path


def execute(path: str, out_dir: Optional[str] = None, seed: Optional[int] = None,
            require_compare: bool = False) -> Tuple[str, int, str]:
    """
    Run one scenario file in a worker; never raises.

    Returns:
        Tuple of (path, exit code, message)
    """
    try:
        config = load_config()
        scenario = load_scenario(path)
        report, report_path = run_scenario(scenario, config, out_dir, seed, require_compare=require_compare)
    except IntegrationError as e:
        return path, EXIT_FAILED, f"Integration failed: {e}"
    except CONFIG_ERRORS as e:
        return path, EXIT_CONFIG, f"Configuration error: {e}"
    except Exception as e:
        logger.exception("Unexpected error in scenario %s", path)
        return path, EXIT_CONFIG, f"Unexpected error: {e}"
    code = EXIT_OK if report.overall_pass else EXIT_FAILED
    failed = ', '.join(check.name for check in report.failed())
    message = f"report {report_path}" + (f" (failed: {failed})" if failed else "")
    return path, code, message
