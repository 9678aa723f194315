#!/usr/bin/python
# -*- coding: utf-8 -*-

from __future__ import absolute_import, division, print_function, \
    with_statement

import os
import sys
import copy
import json
import getopt
import logging
import numbers

from motioncue.common import ConfigError


VERBOSE_LEVEL = 5

CONFIG_ENV = 'MOTIONCUE_CONFIG'

ALGORITHMS = ('smpc', 'mpc_cotc', 'mpc_nocotc', 'cwf')
SCENARIOS = ('bumpy', 'stall', 'wind_shear', 'zero', 'csv')

# flat key namespace; every key a config file may set, with its default
DEFAULTS = {
    'scenario': 'bumpy',
    'scenario.duration': 20.0,
    'scenario.intensity': 1.0,
    'scenario.band': [0.5, 5.0],
    'scenario.vertical_rms': 1.0,
    'scenario.lateral_rms': 0.5,
    'scenario.rate_envelope_deg': 0.5,
    'scenario.csv': None,
    'stall.peak': 8.0,
    'stall.trim': 2.0,
    'stall.onset': 1.0,
    'stall.hold': 2.0,
    'stall.recovery': 6.0,
    'stall.return': 3.0,
    'stall.frequency': 0.5,
    'stall.damping': 0.3,
    'stall.vertical': 0.0,
    'stall.roll_rate_deg': 0.0,

    'vestibular.T_L': 5.73,
    'vestibular.T_a': 80.0,
    'vestibular.T_S': 0.005,
    'vestibular.Gamma_a': 10.0,
    'vestibular.Gamma_L': 5.0,
    'vestibular.Gamma_s': 0.016,
    'vestibular.K': 0.4,
    'vestibular.g': 9.81,

    'geometry.base_radius': 2.1,
    'geometry.platform_radius': 1.5,
    'geometry.home_height': 3.0,
    'geometry.base_half_angle': 15.0,
    'geometry.twist': 57.23,
    'geometry.base_points': None,
    'geometry.platform_points': None,

    'limits.xy_excursion': 1.7,
    'limits.z_min': 2.2,
    'limits.z_max': 3.8,
    'limits.roll_pitch_deg': 25.0,
    'limits.yaw_deg': 30.0,
    'limits.velocity': [1.5, 1.5, 1.0],
    'limits.acceleration': [10.0, 10.0, 7.0],
    'limits.angular_velocity_deg': 30.0,
    'limits.angular_acceleration_deg': 200.0,
    'limits.leg_min': 2.5,
    'limits.leg_max': 4.5,
    'limits.leg_rate': 1.0,
    'kinematics.pose': None,

    'prediction.ts': 0.01,
    'prediction.q_P': [0.0, 0.0, 0.0],
    'prediction.C_D0': [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    'discretization': 'zoh',

    'mpc.np': 100,
    'mpc.nc': 20,
    'mpc.q_perceived': 1.0,
    'mpc.q_workspace': 0.0,
    'mpc.q_legs': 1e-3,
    'mpc.r': 1e-2,
    'mpc.s': 1e-4,
    'mpc.max_iter': 500,
    'mpc.tol': 1e-9,
    'mpc.terminal_states': 'workspace',
    'mpc.riccati_tol': 1e-10,
    'mpc.riccati_max_iter': 100,
    'mpc.riccati_reg': 1e-8,
    'mpc.tilt_rate_limit_deg': 30.0,

    'supervisor.blend_time': 0.5,
    'supervisor.epsilon': 0.05,
    'supervisor.hold_time': 0.5,

    'cwf.hp_omega': 2.5,
    'cwf.hp_zeta': 1.0,
    'cwf.hp_order': 3,
    'cwf.hp_washout': 0.5,
    'cwf.tilt_omega': 2.0,
    'cwf.rot_omega': 1.0,
    'cwf.tilt_rate_limit_deg': 3.0,
    'cwf.gain_translation': 0.6,
    'cwf.gain_tilt': 0.6,
    'cwf.gain_rotation': 0.6,

    'algorithms': list(ALGORITHMS),
    'seed': 0,
    'out': 'out',
    'strict': False,
    'workers': 1,
    'verbose': 0,
}


def defaults():
    return copy.deepcopy(DEFAULTS)


def find_config():
    """ Return the default config path if one exists, else None.

    Looks at $MOTIONCUE_CONFIG, then `config.json` in the working directory,
    then `config.json` next to the package.
    """
    config_path = os.environ.get(CONFIG_ENV)
    if config_path:
        return config_path
    config_path = 'config.json'
    if os.path.exists(config_path):
        return config_path
    config_path = os.path.join(os.path.dirname(__file__), '../', 'config.json')
    if os.path.exists(config_path):
        return config_path
    return None


def _type_ok(default, value):
    if default is None or value is None:
        return default is None
    if isinstance(default, bool):
        return isinstance(value, bool)
    if isinstance(default, numbers.Number):
        if isinstance(value, bool) or not isinstance(value, numbers.Number):
            return False
        return isinstance(value, numbers.Integral) or \
            not isinstance(default, numbers.Integral)
    if isinstance(default, list):
        return isinstance(value, list)
    return isinstance(value, type(default))


def validate(overrides):
    """ Reject unknown keys and wrongly typed values. """
    for key in sorted(overrides):
        if key not in DEFAULTS:
            raise ConfigError('unknown config key %r' % key)
        if not _type_ok(DEFAULTS[key], overrides[key]):
            raise ConfigError('config key %r has wrong type: %r' %
                              (key, overrides[key]))
    return overrides


def load_config(path):
    """ Read a JSON config file, validate it and merge it over DEFAULTS. """
    logging.info('loading config from %s' % path)
    try:
        with open(path, 'rb') as f:
            data = json.loads(f.read().decode('utf8'))
    except (IOError, OSError) as e:
        raise ConfigError('cannot read %s: %s' % (path, e))
    except ValueError as e:
        raise ConfigError('found an error in %s: %s' % (path, e))
    if not isinstance(data, dict):
        raise ConfigError('%s must hold a JSON object' % path)
    config = defaults()
    config.update(validate(data))
    return config


def required(config, keys):
    """ Make sure every key a run depends on is present. """
    for key in keys:
        if key not in config:
            raise ConfigError('missing config key %r' % key)


def check_config(config):
    """ Give some warning messages for legal but suspicious settings. """
    horizon = config['mpc.np'] * config['prediction.ts']
    if horizon < 0.5:
        logging.warning('prediction horizon %.2f s seems too short' %
                        horizon)
    if config['mpc.nc'] > config['mpc.np']:
        raise ConfigError('mpc.nc (%d) exceeds mpc.np (%d)' %
                          (config['mpc.nc'], config['mpc.np']))
    if config['supervisor.blend_time'] > config['supervisor.hold_time']:
        logging.warning('blend time %.2f s is longer than hold time %.2f s' %
                        (config['supervisor.blend_time'],
                         config['supervisor.hold_time']))
    if config['prediction.ts'] > 0.1:
        logging.warning('sample time %g s is coarse for the vestibular '
                        'dynamics' % config['prediction.ts'])
    for algo in config['algorithms']:
        if algo not in ALGORITHMS:
            raise ConfigError('unknown algorithm %r' % algo)
    if config['scenario'] not in SCENARIOS:
        raise ConfigError('unknown scenario %r' % config['scenario'])
    if config['scenario'] == 'csv' and not config['scenario.csv']:
        raise ConfigError('scenario csv needs scenario.csv')
    if config['workers'] < 1:
        raise ConfigError('workers must be at least 1')


def setup_logging(verbose):
    logging.getLogger('').handlers = []
    logging.addLevelName(VERBOSE_LEVEL, 'VERBOSE')
    if verbose >= 2:
        level = VERBOSE_LEVEL
    elif verbose == 1:
        level = logging.DEBUG
    elif verbose == -1:
        level = logging.WARN
    elif verbose <= -2:
        level = logging.ERROR
    else:
        level = logging.INFO
    logging.basicConfig(level=level,
                        format='%(asctime)s %(levelname)-8s %(message)s',
                        datefmt='%Y-%m-%d %H:%M:%S')


SHORTOPTS = 'hc:vq'
LONGOPTS = ['help', 'config=', 'scenario=', 'algo=', 'seed=', 'out=',
            'strict', 'workers=']


def get_config(argv):
    """ Parse command-line options and load the config file.

    :param argv: arguments after the verb
    :return: merged config dict
    """
    logging.basicConfig(level=logging.INFO,
                        format='%(levelname)-s: %(message)s')
    try:
        optlist, args = getopt.getopt(argv, SHORTOPTS, LONGOPTS)
    except getopt.GetoptError as e:
        print(e, file=sys.stderr)
        print_help()
        sys.exit(2)
    if args:
        print('unexpected arguments: %s' % ' '.join(args), file=sys.stderr)
        print_help()
        sys.exit(2)

    config_path = find_config()
    for key, value in optlist:
        if key in ('-c', '--config'):
            config_path = value
        elif key in ('-h', '--help'):
            print_help()
            sys.exit(0)

    try:
        config = load_config(config_path) if config_path else defaults()
        v_count = config.get('verbose', 0)
        for key, value in optlist:
            if key == '--scenario':
                config['scenario'] = value
            elif key == '--algo':
                config['algorithms'] = [a.strip() for a in value.split(',')
                                        if a.strip()]
            elif key == '--seed':
                config['seed'] = int(value)
            elif key == '--out':
                config['out'] = value
            elif key == '--strict':
                config['strict'] = True
            elif key == '--workers':
                config['workers'] = int(value)
            elif key == '-v':
                v_count += 1
                # '-vv' turns on more verbose mode
                config['verbose'] = v_count
            elif key == '-q':
                v_count -= 1
                config['verbose'] = v_count
        setup_logging(config['verbose'])
        check_config(config)
    except ValueError as e:
        # ConfigError is a ValueError, and so are bad --seed / --workers
        logging.error('%s' % e)
        sys.exit(2)
    config['config_path'] = config_path
    return config


def print_help():
    print('''usage: mcue VERB [-h] [-c CONFIG] [--scenario NAME] [--algo LIST]
            [--seed N] [--out DIR] [--strict] [--workers N] [-v] [-q]
Motion cueing with switchable model predictive control.

Verbs:
  run                    closed-loop runs of the selected algorithms
  compare                runs plus a side-by-side metrics report
  kinematics             neutral legs, Jacobian and workspace limits
  gen                    write the scenario reference as CSV
  check                  validate the config and the stability assumptions

Options:
  -h, --help             show this help message and exit
  -c, --config CONFIG    path to config file, default: $MOTIONCUE_CONFIG
                         or ./config.json
  --scenario NAME        bumpy, stall, wind_shear, zero or csv
  --algo LIST            comma separated subset of smpc, mpc_cotc,
                         mpc_nocotc, cwf
  --seed N               scenario random seed
  --out DIR              output directory, default: out
  --strict               exit with status 3 on any platform limit violation
  --workers N            parallel runs, default: 1
  -v, -vv                verbose mode
  -q, -qq                quiet mode, only show warnings/errors
''')


def test_validate_rejects_unknown_key():
    try:
        validate({'mpc.horizon': 10})
    except ConfigError as e:
        assert 'mpc.horizon' in str(e)
    else:
        assert False, 'unknown key accepted'


def test_validate_types():
    validate({'mpc.np': 40, 'mpc.r': 1, 'scenario.csv': 'a.csv',
              'strict': True})
    for bad in ({'mpc.np': 4.5}, {'strict': 1}, {'limits.velocity': 1.0},
                {'scenario': 3}):
        try:
            validate(bad)
        except ConfigError:
            pass
        else:
            assert False, '%r accepted' % bad


def test_find_config_env():
    old = os.environ.get(CONFIG_ENV)
    os.environ[CONFIG_ENV] = '/tmp/some-motioncue.json'
    try:
        assert find_config() == '/tmp/some-motioncue.json'
    finally:
        if old is None:
            del os.environ[CONFIG_ENV]
        else:
            os.environ[CONFIG_ENV] = old


def test_load_config():
    import tempfile
    d = tempfile.mkdtemp()
    path = os.path.join(d, 'c.json')
    with open(path, 'w') as f:
        json.dump({'mpc.np': 30, 'seed': 7}, f)
    config = load_config(path)
    assert config['mpc.np'] == 30 and config['seed'] == 7
    assert config['mpc.nc'] == DEFAULTS['mpc.nc']
    with open(path, 'w') as f:
        f.write('{not json')
    try:
        load_config(path)
    except ConfigError:
        pass
    else:
        assert False, 'broken JSON accepted'


def test_defaults_are_copies():
    a = defaults()
    a['limits.velocity'].append(9.0)
    assert len(DEFAULTS['limits.velocity']) == 3


if __name__ == '__main__':
    test_validate_rejects_unknown_key()
    test_validate_types()
    test_find_config_env()
    test_load_config()
    test_defaults_are_copies()
