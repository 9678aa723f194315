#!/usr/bin/python
# -*- coding: utf-8 -*-

""" Run orchestration: builds the models from a config, drives each
algorithm over the scenario and writes the CSV artifacts.

Files written to the output directory:

    reference.csv        t, ax, ay, az, wx, wy, wz
    trace_<algo>.csv     t, ref_fx..ref_wz, fx..wz, ax..az, wx..wz,
                         x, y, z, roll, pitch, yaw, leg0..leg5
    switch_<algo>.csv    t, active, alpha, qp_status
    limits_<algo>.csv    t, channel, value, bound
    metrics.csv          algorithm, channel, naad, aas
    compare.csv          algorithm, naad, aas, improvement
    report.txt           human-readable comparison
"""

from __future__ import absolute_import, division, print_function, \
    with_statement

import os
import time
import logging
import collections
import multiprocessing

import numpy as np

from motioncue import kinematics, vestibular, scenarios, metrics, mpc, \
    supervisor, cwf, utils
from motioncue.common import ConfigError, DimensionError
from motioncue.prediction import build_prediction, INPUT, OUTPUT, \
    PERCEIVED, TILT_TO_BODY


FLOAT_FORMAT = '%.9e'

# row layouts of the mixed text / number CSVs
SWITCH_ROW = '%.9e,%s,%.9e,%s\n'
LIMIT_ROW = '%.9e,%s,%.9e,%.9e\n'
METRIC_ROW = '%s,%s,%.9e,%.9e\n'
COMPARE_ROW = '%s,%.9e,%.9e,%.9e\n'

TRACE_COLUMNS = (['t'] + ['ref_%s' % c for c in metrics.CHANNELS] +
                 list(metrics.CHANNELS) +
                 ['ax', 'ay', 'az', 'wx', 'wy', 'wz'] +
                 list(kinematics.AXES) +
                 ['leg%d' % i for i in range(kinematics.LEGS)])

# keys every run reads; load_config fills them from DEFAULTS
RUN_KEYS = ('scenario', 'scenario.duration', 'prediction.ts', 'mpc.np',
            'mpc.nc', 'algorithms', 'seed', 'out', 'strict')


class Setup(collections.namedtuple('Setup',
                                   ('config', 'vest', 'geom', 'l0', 'J',
                                    'limits', 'integrated', 'discrete',
                                    'aug', 'weights', 'constraints'))):
    """ Everything the closed loops share, built once per run. """

    __slots__ = ()

    @property
    def Ts(self):
        return self.discrete.dt


AlgoRun = collections.namedtuple('AlgoRun',
                                 ('name', 'result', 'motion', 'violations',
                                  'metrics', 'clamps', 'elapsed'))


def build_setup(config):
    utils.required(config, RUN_KEYS)
    geom = kinematics.geometry_from_config(config)
    limits = kinematics.ActuatorLimits.from_config(config)
    geom.validate(limits)
    l0 = kinematics.leg_vectors(geom, kinematics.neutral_pose(geom))[1]
    integrated, discrete, aug = build_prediction(config, geom)
    weights = mpc.MpcWeights.from_config(config)
    constraints = mpc.build_constraints(
        limits, l0, integrated.J, discrete.dt,
        np.radians(config['mpc.tilt_rate_limit_deg']))
    return Setup(config, integrated.vestibular, geom, l0, integrated.J,
                 limits, integrated, discrete, aug, weights, constraints)


def controller(setup, cotc):
    config = setup.config
    return mpc.MpcController(
        setup.aug, setup.weights, setup.constraints, cotc=cotc,
        terminal_states=config['mpc.terminal_states'],
        max_iter=config['mpc.max_iter'], tol=config['mpc.tol'],
        riccati_tol=config['mpc.riccati_tol'],
        riccati_max_iter=config['mpc.riccati_max_iter'],
        riccati_reg=config['mpc.riccati_reg'])


def motion_trace(setup, result):
    """ Platform signals of a closed loop in the limit-check layout. """
    u, y, Ts = result.u, result.y, setup.Ts
    omega = u.dot(mpc.OMEGA_MAP.T)
    alpha = np.diff(omega, axis=0, prepend=np.zeros((1, 3))) / Ts
    v = y[:, OUTPUT['v']]
    return kinematics.MotionTrace(
        result.t, y[:, OUTPUT['r']], v, u[:, INPUT['a']],
        y[:, OUTPUT['beta']], omega, alpha, setup.l0 + y[:, OUTPUT['dl']],
        np.hstack([v, omega]).dot(setup.J.T))


def run_algorithm(setup, trace, name):
    """ One closed loop of algorithm `name` over `trace`. """
    felt = trace.felt(setup.vest)
    Ts = setup.Ts
    started = time.time()
    clamps = []
    if name == 'smpc':
        result = supervisor.run_smpc(
            setup.discrete, felt, Ts, controller(setup, True),
            controller(setup, False),
            supervisor.SupervisorState.from_config(setup.config))
    elif name == 'mpc_cotc':
        result = mpc.run_mpc(controller(setup, True), setup.discrete, felt,
                             Ts)
    elif name == 'mpc_nocotc':
        result = mpc.run_mpc(controller(setup, False), setup.discrete, felt,
                             Ts)
    elif name == 'cwf':
        bank = cwf.cwf_build(cwf.CwfConfig.from_config(setup.config), Ts,
                             setup.vest.params.g)
        u, y, clamps = cwf.run_cwf(bank, trace.samples, setup.vest, setup.J,
                                   setup.limits)
        N = len(trace.t)
        result = mpc.LoopResult(trace.t, u, y, ['none'] * N, ['cwf'] * N,
                                np.ones(N), [])
    else:
        raise ConfigError('unknown algorithm %r' % name)
    elapsed = time.time() - started
    motion = motion_trace(setup, result)
    violations = kinematics.check_limits(motion, setup.limits,
                                         setup.geom.home_height)
    report = metrics.report(felt, result.y[:, PERCEIVED])
    logging.info('%s: AAS %.4f, NAAD %.4f, %d limit violations' %
                 (name, report.aas_total, report.naad_total,
                  len(violations)))
    return AlgoRun(name, result, motion, violations, report, clamps, elapsed)


def _run_one(args):
    config, name = args
    setup = build_setup(config)
    trace = scenarios.from_config(config, setup.vest)
    return run_algorithm(setup, trace, name)


def run(config):
    """ Closed loops of every configured algorithm, artifacts on disk.

    :return: (scenario trace, list of AlgoRun in config order)
    """
    setup = build_setup(config)
    trace = scenarios.from_config(config, setup.vest)
    names = list(config['algorithms'])
    if not names:
        raise ConfigError('no algorithm selected')
    logging.info('scenario %s: %d samples at %g s' %
                 (trace.id, len(trace.t), setup.Ts))
    if config['workers'] > 1 and len(names) > 1:
        pool = multiprocessing.Pool(min(config['workers'], len(names)))
        try:
            runs = pool.map(_run_one, [(config, n) for n in names])
        finally:
            pool.close()
            pool.join()
    else:
        runs = [run_algorithm(setup, trace, n) for n in names]
    write_artifacts(config['out'], setup, trace, runs)
    return trace, runs


def compare(config, algorithms=None):
    """ Run the algorithms side by side.

    :return: (report text, list of AlgoRun)
    """
    if algorithms is not None:
        config = dict(config)
        config['algorithms'] = list(algorithms)
    trace, runs = run(config)
    return format_report(trace, runs), runs


def _ensure_dir(path):
    if not os.path.isdir(path):
        os.makedirs(path)


def _save(path, data, columns):
    np.savetxt(path, data, fmt=FLOAT_FORMAT, delimiter=',',
               header=','.join(columns), comments='')


def write_trace(path, setup, trace, run):
    result = run.result
    felt = trace.felt(setup.vest)
    m = run.motion
    data = np.hstack([np.asarray(result.t).reshape(-1, 1), felt,
                      result.y[:, PERCEIVED], m.a, m.omega, m.r, m.beta,
                      m.legs])
    _save(path, data, TRACE_COLUMNS)


def write_switch_log(path, run):
    result = run.result
    with open(path, 'w') as f:
        f.write('t,active,alpha,qp_status\n')
        for k in range(len(result.t)):
            f.write(SWITCH_ROW % (result.t[k], result.active[k],
                                  result.alpha[k], result.status[k]))


def write_limits(path, run):
    with open(path, 'w') as f:
        f.write('t,channel,value,bound\n')
        for v in run.violations + list(run.clamps):
            f.write(LIMIT_ROW % (v.t, v.channel, v.value, v.bound))


def write_metrics(path, runs):
    with open(path, 'w') as f:
        f.write('algorithm,channel,naad,aas\n')
        for run in runs:
            for channel, n, a in run.metrics.rows():
                f.write(METRIC_ROW % (run.name, channel, n, a))


def improvements(runs, baseline='smpc'):
    """ Rows (name, naad, aas, improvement of baseline over name). """
    by_name = dict((r.name, r) for r in runs)
    base = by_name.get(baseline)
    rows = []
    for r in runs:
        gain = metrics.improvement(r.metrics.aas_total,
                                   base.metrics.aas_total) if base else 0.0
        rows.append((r.name, r.metrics.naad_total, r.metrics.aas_total,
                     gain))
    return rows


def format_report(trace, runs, baseline='smpc'):
    lines = ['scenario %s (seed %s), %d samples' %
             (trace.id, trace.seed, len(trace.t)), '']
    header = '%-8s' % 'channel' + ''.join('%22s' % r.name for r in runs)
    lines.append(header)
    for i, channel in enumerate(metrics.CHANNELS):
        lines.append('%-8s' % channel + ''.join(
            '%11.4f%11.4f' % (r.metrics.naad[i], r.metrics.aas[i])
            for r in runs))
    lines.append('%-8s' % 'all' + ''.join(
        '%11.4f%11.4f' % (r.metrics.naad_total, r.metrics.aas_total)
        for r in runs))
    lines.append('')
    for name, n, a, gain in improvements(runs, baseline):
        lines.append('%-12s NAAD %.4f  AAS %.4f  %s better by %6.2f%%' %
                     (name, n, a, baseline, 100.0 * gain))
    for r in runs:
        switches = getattr(r.result, 'switches', [])
        if switches:
            lines.append('%s switches: %s' % (r.name, ', '.join(
                '%.2f s %s->%s' % s for s in switches)))
        if r.violations:
            lines.append('%s: %d limit violations' %
                         (r.name, len(r.violations)))
    return '\n'.join(lines) + '\n'


def write_artifacts(out, setup, trace, runs):
    _ensure_dir(out)
    scenarios.export_csv(trace, os.path.join(out, 'reference.csv'))
    for run in runs:
        write_trace(os.path.join(out, 'trace_%s.csv' % run.name), setup,
                    trace, run)
        write_switch_log(os.path.join(out, 'switch_%s.csv' % run.name), run)
        write_limits(os.path.join(out, 'limits_%s.csv' % run.name), run)
    write_metrics(os.path.join(out, 'metrics.csv'), runs)
    with open(os.path.join(out, 'compare.csv'), 'w') as f:
        f.write('algorithm,naad,aas,improvement\n')
        for name, n, a, gain in improvements(runs):
            f.write(COMPARE_ROW % (name, n, a, gain))
    with open(os.path.join(out, 'report.txt'), 'w') as f:
        f.write(format_report(trace, runs))
    logging.info('artifacts written to %s' % out)


def violations(runs):
    return sum(len(r.violations) for r in runs)


def kinematics_report(config):
    """ Neutral legs, Jacobian conditioning and, when kinematics.pose is
    set, the limit check of that pose ([x, y, z] m from neutral, then
    [roll, pitch, yaw] deg).
    """
    geom = kinematics.geometry_from_config(config)
    limits = kinematics.ActuatorLimits.from_config(config)
    home = kinematics.neutral_pose(geom)
    pose = home
    if config.get('kinematics.pose') is not None:
        values = np.asarray(config['kinematics.pose'], dtype=float)
        if values.shape != (6,):
            raise DimensionError('kinematics.pose needs 6 values')
        pose = kinematics.PlatformPose(home.r + values[:3],
                                       np.radians(values[3:]))
    result = kinematics.workspace_query(geom, limits, pose)
    neutral = kinematics.leg_vectors(geom, home)[1]
    lines = ['neutral legs: %s m' % ' '.join('%.4f' % l for l in neutral),
             'pose legs:    %s m' % ' '.join('%.4f' % l
                                             for l in result['legs']),
             'jacobian condition number: %.3f' % result['jacobian_cond']]
    for v in result['violations']:
        lines.append('violation: %s = %.4f (bound %.4f)' %
                     (v.channel, v.value, v.bound))
    if not result['violations']:
        lines.append('pose inside the limits')
    result['neutral_legs'] = neutral
    result['text'] = '\n'.join(lines) + '\n'
    return result


def generate(config):
    """ Write the configured scenario as CSV, return the path. """
    vest = vestibular.assemble_vestibular(
        vestibular.VestibularParams.from_config(config))
    trace = scenarios.from_config(config, vest)
    _ensure_dir(config['out'])
    path = os.path.join(config['out'], 'scenario_%s.csv' % trace.id)
    scenarios.export_csv(trace, path)
    logging.info('%s: %d samples written to %s' %
                 (trace.id, len(trace.t), path))
    return path


def check(config):
    """ Build every model of a run and verify the stability assumptions.

    :return: StabilityReport of the receding-horizon feedback law
    """
    setup = build_setup(config)
    mpc.augmented_terminal_weight(setup.aug, setup.weights.Q,
                                  setup.weights.R, config['mpc.riccati_reg'],
                                  config['mpc.riccati_tol'],
                                  config['mpc.riccati_max_iter'])
    _, report = supervisor.verify_stability(setup.discrete,
                                            setup.weights.Np,
                                            setup.weights.R)
    logging.info('closed-loop spectral radius %.6f over a %.2f s horizon' %
                 (report.spectral_radius, report.horizon))
    if report.spectral_radius >= 1.0:
        logging.warning('receding-horizon law is not stabilizing at '
                        'mpc.np = %d' % setup.weights.Np)
    return report


def time_steps(config, horizons, steps=20, repeats=3):
    """ Mean wall time (s) of one COTC-free MPC step per horizon length,
    the minimum over `repeats` runs.
    """
    timings = {}
    for Np in horizons:
        cfg = dict(config)
        cfg['mpc.np'] = Np
        cfg['mpc.nc'] = min(config['mpc.nc'], Np)
        setup = build_setup(cfg)
        ctrl = controller(setup, False)
        x0 = np.zeros(setup.aug.n)
        ref = np.zeros((Np, setup.aug.p))
        best = None
        for _ in range(repeats):
            ctrl.reset()
            started = time.time()
            for _ in range(steps):
                ctrl.step(x0, ref)
            elapsed = (time.time() - started) / steps
            best = elapsed if best is None else min(best, elapsed)
        timings[Np] = best
        logging.debug('Np %d: %.3f ms per step' % (Np, 1e3 * best))
    return timings


def _light_config(**kw):
    config = utils.defaults()
    config.update({'prediction.ts': 0.05, 'mpc.np': 20, 'mpc.nc': 5,
                   'scenario.duration': 2.0})
    config.update(kw)
    return config


def test_motion_trace_layout():
    config = _light_config()
    setup = build_setup(config)
    N = 4
    u = np.zeros((N, 8))
    u[:, INPUT['w_rot']] = [0.1, 0.0, 0.0]
    u[:, INPUT['w_tilt']] = [0.05, 0.0]
    y = np.zeros((N, 24))
    result = mpc.LoopResult(np.arange(N) * setup.Ts, u, y, [], [], None, [])
    m = motion_trace(setup, result)
    assert np.allclose(m.omega[:, 0], 0.15)
    assert np.allclose(m.alpha[0], [0.15 / setup.Ts, 0, 0])
    assert np.allclose(m.alpha[1:], 0.0)
    assert np.allclose(m.legs, setup.l0)
    assert np.allclose(TILT_TO_BODY.dot([0.05, 0.0]), [0.05, 0, 0])


def test_zero_scenario_all_algorithms():
    import tempfile
    config = _light_config(scenario='zero', out=tempfile.mkdtemp())
    trace, runs = run(config)
    assert [r.name for r in runs] == list(utils.ALGORITHMS)
    for r in runs:
        assert np.max(np.abs(r.result.u)) < 1e-9
        assert r.metrics.aas_total < 1e-9
        assert r.violations == []
    for name in ('reference.csv', 'metrics.csv', 'compare.csv',
                 'report.txt', 'trace_smpc.csv', 'switch_cwf.csv'):
        assert os.path.exists(os.path.join(config['out'], name))


def test_compare_self():
    import tempfile
    config = _light_config(scenario='bumpy', algorithms=['cwf'],
                           out=tempfile.mkdtemp())
    _, runs = run(config)
    rows = improvements(runs + [runs[0]._replace(name='smpc')])
    assert all(abs(gain) < 1e-15 for _, _, _, gain in rows)


def test_kinematics_report():
    config = utils.defaults()
    rep = kinematics_report(config)
    assert rep['violations'] == []
    assert np.allclose(rep['legs'], rep['neutral_legs'])
    config['kinematics.pose'] = [0.0, 0.0, 1.0, 0.0, 0.0, 0.0]
    rep = kinematics_report(config)
    assert any(v.channel == 'z' for v in rep['violations'])


def test_missing_key():
    config = _light_config()
    del config['mpc.np']
    try:
        build_setup(config)
    except ConfigError as e:
        assert 'mpc.np' in str(e)
    else:
        assert False, 'missing key accepted'


if __name__ == '__main__':
    test_motion_trace_layout()
    test_zero_scenario_all_algorithms()
    test_compare_self()
    test_kinematics_report()
    test_missing_key()
