#!/usr/bin/env python
# -*- coding: utf-8 -*-

from __future__ import absolute_import, division, print_function, \
    with_statement

import sys
import os
import logging

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '../'))
from motioncue import utils, harness
from motioncue.common import MotionCueError, ConfigError


VERBS = ('run', 'compare', 'kinematics', 'gen', 'check')

EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_LIMITS = 3


def dispatch(verb, config):
    """ Run one verb, return the exit status. """
    if verb in ('run', 'compare'):
        if verb == 'compare':
            report, runs = harness.compare(config)
            print(report, end='')
        else:
            runs = harness.run(config)[1]
        count = harness.violations(runs)
        if count and config['strict']:
            logging.error('strict mode: %d limit violations' % count)
            return EXIT_LIMITS
    elif verb == 'kinematics':
        result = harness.kinematics_report(config)
        print(result['text'], end='')
        if result['violations'] and config['strict']:
            return EXIT_LIMITS
    elif verb == 'gen':
        print(harness.generate(config))
    elif verb == 'check':
        report = harness.check(config)
        print('config ok, closed-loop spectral radius %.6f' %
              report.spectral_radius)
    return 0


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    if not argv or argv[0] in ('-h', '--help'):
        utils.print_help()
        sys.exit(0 if argv else EXIT_CONFIG)
    verb = argv[0]
    if verb not in VERBS:
        print('unknown verb %r' % verb, file=sys.stderr)
        utils.print_help()
        sys.exit(EXIT_CONFIG)

    config = utils.get_config(argv[1:])

    try:
        status = dispatch(verb, config)
    except ConfigError as e:
        logging.error(e)
        sys.exit(EXIT_CONFIG)
    except (MotionCueError, IOError, OSError) as e:
        logging.error(e)
        if config['verbose']:
            import traceback
            traceback.print_exc()
        sys.exit(EXIT_ERROR)
    sys.exit(status)


if __name__ == '__main__':
    main()
