#!/usr/bin/python
# -*- coding: utf-8 -*-

""" Tracking-fidelity metrics of the perceived signals.

NAAD = mean|ref - actual| / (max|ref| + delta)
AAS  = mean|ref - actual| / (mean|ref| + delta)
"""

from __future__ import absolute_import, division, print_function, \
    with_statement

import collections

import numpy as np

from motioncue.common import DimensionError


DELTA = 1e-12

CHANNELS = ('fx', 'fy', 'fz', 'wx', 'wy', 'wz')


def _pair(ref, actual):
    ref = np.asarray(ref, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if ref.shape != actual.shape:
        raise DimensionError('series shapes differ: %s vs %s' %
                             (ref.shape, actual.shape))
    return ref, actual


def naad(ref, actual):
    ref, actual = _pair(ref, actual)
    if ref.size == 0:
        return 0.0
    return float(np.mean(np.abs(ref - actual)) /
                 (np.max(np.abs(ref)) + DELTA))


def aas(ref, actual):
    ref, actual = _pair(ref, actual)
    if ref.size == 0:
        return 0.0
    return float(np.mean(np.abs(ref - actual)) /
                 (np.mean(np.abs(ref)) + DELTA))


class MetricsReport(collections.namedtuple('MetricsReport',
                                           ('channels', 'naad', 'aas',
                                            'naad_total', 'aas_total',
                                            'samples'))):
    """ Per-channel NAAD and AAS plus the pooled values over all channels.
    """

    __slots__ = ()

    def rows(self):
        for i, name in enumerate(self.channels):
            yield name, self.naad[i], self.aas[i]
        yield 'all', self.naad_total, self.aas_total


def report(ref, actual, channels=CHANNELS):
    """ Metrics of (N, k) perceived signals against their reference. """
    ref, actual = _pair(ref, actual)
    if ref.ndim != 2 or ref.shape[1] != len(channels):
        raise DimensionError('expected (N, %d) series, got %s' %
                             (len(channels), ref.shape))
    return MetricsReport(tuple(channels),
                         [naad(ref[:, i], actual[:, i])
                          for i in range(ref.shape[1])],
                         [aas(ref[:, i], actual[:, i])
                          for i in range(ref.shape[1])],
                         naad(ref, actual), aas(ref, actual), ref.shape[0])


def improvement(other, smpc):
    """ Relative improvement (other - smpc) / other, 0 when both vanish. """
    if other == 0.0:
        return 0.0
    return (other - smpc) / other


def test_identical():
    x = np.sin(np.linspace(0, 10, 50))
    assert naad(x, x) == 0.0
    assert aas(x, x) == 0.0


def test_constant_pair():
    assert abs(naad([2.0] * 10, [1.0] * 10) - 0.5) < 1e-12
    assert abs(aas([2.0] * 10, [1.0] * 10) - 0.5) < 1e-12


def test_zero_guarded():
    assert naad(np.zeros(5), np.zeros(5)) == 0.0
    assert aas(np.zeros(5), np.zeros(5)) == 0.0


def test_scale_invariance():
    rng = np.random.RandomState(1)
    r, a = rng.randn(100), rng.randn(100)
    for c in (0.1, 3.0, 250.0):
        assert abs(aas(c * r, c * a) - aas(r, a)) < 1e-9
        assert abs(naad(c * r, c * a) - naad(r, a)) < 1e-9


def test_report_and_improvement():
    ref = np.ones((20, 6))
    rep = report(ref, 0.5 * ref)
    assert rep.samples == 20
    assert np.allclose(rep.aas, 0.5) and abs(rep.aas_total - 0.5) < 1e-12
    assert len(list(rep.rows())) == 7
    assert improvement(0.5, 0.5) == 0.0
    assert abs(improvement(0.324, 0.196) - 0.395) < 1e-3
    try:
        naad(np.ones(3), np.ones(4))
    except DimensionError:
        pass
    else:
        assert False, 'shape mismatch accepted'


if __name__ == '__main__':
    test_identical()
    test_constant_pair()
    test_zero_guarded()
    test_scale_invariance()
    test_report_and_improvement()
