#!/usr/bin/python
# -*- coding: utf-8 -*-

""" End-to-end runs of the mcue command line on the JSON configs in this
directory.
"""

from __future__ import absolute_import, division, print_function, \
    with_statement

import os
import sys
import csv
import time
import shutil
import tempfile
from subprocess import Popen, PIPE

import numpy as np

HERE = os.path.dirname(os.path.abspath(__file__))
ROOT = os.path.dirname(HERE)
sys.path.insert(0, ROOT)

from motioncue import harness, utils  # noqa: E402


def mcue(verb, conf, *args):
    cmd = [sys.executable, os.path.join(ROOT, 'motioncue', 'cli.py'), verb,
           '-c', os.path.join(HERE, conf)] + list(args)
    p = Popen(cmd, stdout=PIPE, stderr=PIPE, close_fds=True, cwd=ROOT)
    out, err = p.communicate()
    return p.returncode, out.decode('utf8'), err.decode('utf8')


def read_csv(path):
    with open(path) as f:
        return list(csv.DictReader(f))


def aas_by_algorithm(out):
    return dict((row['algorithm'], float(row['aas']))
                for row in read_csv(os.path.join(out, 'compare.csv')))


def test_zero_scenario_smoke():
    out = tempfile.mkdtemp()
    try:
        code, _, err = mcue('run', 'zero.json', '--out', out, '--strict')
        assert code == 0, err
        for name, aas in aas_by_algorithm(out).items():
            assert aas == 0.0, name
        rows = read_csv(os.path.join(out, 'trace_smpc.csv'))
        assert len(rows) == 20
        assert all(float(r['ay']) == 0.0 for r in rows)
    finally:
        shutil.rmtree(out)


def same_files(first, second):
    names = sorted(os.listdir(first))
    assert names == sorted(os.listdir(second))
    for name in names:
        with open(os.path.join(first, name), 'rb') as a:
            with open(os.path.join(second, name), 'rb') as b:
                assert a.read() == b.read(), name
    return names


def test_runs_are_byte_identical():
    outs = [tempfile.mkdtemp() for _ in range(3)]
    try:
        # serial once, then the worker pool twice
        for out, workers in zip(outs, ('1', '2', '2')):
            code, _, err = mcue('compare', 'bumpy.json', '--out', out,
                                '--workers', workers)
            assert code == 0, err
        names = same_files(outs[0], outs[1])
        same_files(outs[1], outs[2])
        for name in ('trace_smpc.csv', 'switch_smpc.csv', 'trace_cwf.csv',
                     'metrics.csv'):
            assert name in names, name
    finally:
        for out in outs:
            shutil.rmtree(out)


def test_stall_switching_strict():
    out = tempfile.mkdtemp()
    try:
        started = time.time()
        code, _, err = mcue('run', 'stall.json', '--algo', 'smpc', '--out',
                            out, '--strict')
        elapsed = time.time() - started
        assert code == 0, err
        assert elapsed < 30.0, elapsed

        log = read_csv(os.path.join(out, 'switch_smpc.csv'))
        active = [r['active'] for r in log]
        changes = [(a, b) for a, b in zip(active, active[1:]) if a != b]
        assert ('with_cotc', 'without_cotc') in changes
        first = changes.index(('with_cotc', 'without_cotc'))
        assert ('without_cotc', 'with_cotc') in changes[first + 1:]

        alpha = [float(r['alpha']) for r in log]
        step = 0.05 / 0.25
        for k in range(1, len(log)):
            assert 0.0 <= alpha[k] <= 1.0
            if active[k] == active[k - 1]:
                assert alpha[k] >= alpha[k - 1] - 1e-12
                assert alpha[k] - alpha[k - 1] <= step + 1e-9

        assert read_csv(os.path.join(out, 'limits_smpc.csv')) == []
    finally:
        shutil.rmtree(out)


def test_ordering_on_both_scenarios():
    for conf in ('bumpy.json', 'stall.json'):
        out = tempfile.mkdtemp()
        try:
            code, report, err = mcue('compare', conf, '--out', out,
                                     '--workers', '4')
            assert code == 0, err
            assert 'smpc better by' in report
            aas = aas_by_algorithm(out)
            assert len(aas) == 4, conf
            # each step of the ordering at least 5% relative
            assert aas['smpc'] <= 0.95 * aas['mpc_cotc'], (conf, aas)
            assert aas['mpc_cotc'] <= 0.95 * aas['cwf'], (conf, aas)
        finally:
            shutil.rmtree(out)


def test_unknown_key_exits_2():
    code, _, err = mcue('run', 'unknown-key.json')
    assert code == 2
    assert 'mpc.horizon' in err


def test_strict_pose_exits_3():
    code, out, _ = mcue('kinematics', 'pose.json', '--strict')
    assert code == 3
    assert 'violation: z' in out
    code, out, _ = mcue('kinematics', 'pose.json')
    assert code == 0


def test_gen_writes_scenario():
    out = tempfile.mkdtemp()
    try:
        code, printed, err = mcue('gen', 'bumpy.json', '--out', out,
                                  '--seed', '7')
        assert code == 0, err
        path = printed.strip()
        assert os.path.basename(path) == 'scenario_bumpy.csv'
        rows = read_csv(path)
        assert len(rows) == 200
        assert list(rows[0].keys()) == ['t', 'ax', 'ay', 'az', 'wx', 'wy',
                                        'wz']
    finally:
        shutil.rmtree(out)


def test_check_verb():
    code, out, err = mcue('check', 'zero.json')
    assert code == 0, err
    assert 'spectral radius' in out


def test_step_time_grows_linearly_with_horizon():
    config = utils.defaults()
    config.update({'prediction.ts': 0.05, 'mpc.nc': 5})
    horizons = [10, 20, 40, 80]
    timings = harness.time_steps(config, horizons, steps=20, repeats=3)
    slope = np.polyfit(np.log(horizons),
                       np.log([timings[n] for n in horizons]), 1)[0]
    assert slope <= 1.3, slope


if __name__ == '__main__':
    test_zero_scenario_smoke()
    test_runs_are_byte_identical()
    test_stall_switching_strict()
    test_ordering_on_both_scenarios()
    test_unknown_key_exits_2()
    test_strict_pose_exits_3()
    test_gen_writes_scenario()
    test_check_verb()
    test_step_time_grows_linearly_with_horizon()
