#!/usr/bin/python
# -*- coding: utf-8 -*-

""" Synthetic reference trajectories at the pilot's eye point.

The generators produce kinematic references only: linear acceleration
(m/s^2) and angular rate (rad/s) on a uniform time base, plus what the
vestibular model makes of them.
"""

from __future__ import absolute_import, division, print_function, \
    with_statement

import math
import logging
import collections

import numpy as np
from scipy import signal

from motioncue import vestibular
from motioncue.common import ParameterError, DomainError, DimensionError, \
    cosine_ramp


CSV_COLUMNS = ('t', 'ax', 'ay', 'az', 'wx', 'wy', 'wz')
CSV_FORMAT = '%.9e'

BAND_ORDER = 4
WARMUP_CYCLES = 3


class ScenarioTrace(collections.namedtuple('ScenarioTrace',
                                           ('t', 'a', 'omega', 'perceived',
                                            'id', 'seed', 'params',
                                            'stages'))):
    """ One reference trajectory.

    perceived holds the 8 vestibular outputs (otolith, tilt, canal);
    stages is a tuple of (name, start, end) for staged manoeuvres.
    """

    __slots__ = ()

    @property
    def Ts(self):
        return float(self.t[1] - self.t[0]) if len(self.t) > 1 else 0.0

    @property
    def samples(self):
        return np.hstack([self.a, self.omega])

    def felt(self, vest):
        """ (N, 6) specific force and angular velocity the pilot feels. """
        return vestibular.combined_perception(vest, self.perceived)


class StallParams(collections.namedtuple('StallParams',
                                         ('peak', 'trim', 'onset', 'hold',
                                          'recovery', 'ret', 'frequency',
                                          'damping', 'vertical',
                                          'roll_rate'))):
    """ Staged stall manoeuvre; times in s, peak / vertical in m/s^2,
    roll_rate in rad/s at the peak of the lateral acceleration.
    """

    __slots__ = ()

    def validate(self):
        for name in ('trim', 'hold'):
            if getattr(self, name) < 0:
                raise ParameterError('stall %s must be >= 0' % name)
        for name in ('onset', 'recovery', 'ret', 'frequency'):
            if not getattr(self, name) > 0:
                raise ParameterError('stall %s must be > 0' % name)
        if self.damping < 0:
            raise ParameterError('stall damping must be >= 0')
        return self

    @classmethod
    def from_config(cls, config):
        return cls(config['stall.peak'], config['stall.trim'],
                   config['stall.onset'], config['stall.hold'],
                   config['stall.recovery'], config['stall.return'],
                   config['stall.frequency'], config['stall.damping'],
                   config['stall.vertical'],
                   math.radians(config['stall.roll_rate_deg'])).validate()


DEFAULT_STALL = StallParams(8.0, 2.0, 1.0, 2.0, 6.0, 3.0, 0.5, 0.3, 0.0, 0.0)


def _time_base(duration, Ts):
    if not Ts > 0:
        raise ParameterError('sample time must be positive, got %r' % Ts)
    if duration < 0:
        raise ParameterError('duration must be >= 0, got %r' % duration)
    return np.arange(int(round(duration / Ts))) * Ts


def perceived_reference(trace, vest):
    """ Run the aircraft-side signals through the vestibular model.

    The aircraft does not tilt-coordinate, so the tilt inputs stay zero.

    :return: (N, 8) vestibular outputs
    """
    a = np.atleast_2d(trace.a)
    omega = np.atleast_2d(trace.omega)
    if a.shape != omega.shape or a.shape[1:] != (3,):
        raise DimensionError('expected (N, 3) acceleration and rate')
    vin = np.zeros((a.shape[0], vest.model.m))
    vin[:, vest.inputs['a']] = a
    vin[:, vest.inputs['w_rot']] = omega
    Ts = float(trace.t[1] - trace.t[0]) if len(trace.t) > 1 else 1.0
    return vestibular.simulate(vest.model, vin, Ts)


def _trace(t, a, omega, scenario_id, seed, params, stages, vest):
    if vest is None:
        vest = vestibular.assemble_vestibular()
    trace = ScenarioTrace(t, a, omega, None, scenario_id, seed, params,
                          tuple(stages))
    return trace._replace(perceived=perceived_reference(trace, vest))


def _band_noise(rng, n, band, Ts):
    nyquist = 0.5 / Ts
    lo, hi = band
    if not 0 < lo < hi < nyquist:
        raise ParameterError('band %r must lie inside (0, %g) Hz' %
                             (band, nyquist))
    sos = signal.butter(BAND_ORDER, [lo, hi], btype='bandpass', fs=1.0 / Ts,
                        output='sos')
    # settle for WARMUP_CYCLES of the lower band edge at both ends, then crop
    pad = int(math.ceil(WARMUP_CYCLES / (lo * Ts)))
    x = signal.sosfiltfilt(sos, rng.standard_normal(n + 2 * pad))
    x = x[pad:pad + n]
    x -= x.mean()
    return x


def _unit_rms(x):
    rms = np.sqrt(np.mean(x * x)) if x.size else 0.0
    return x / rms if rms > 0 else x


def _unit_peak(x):
    peak = np.max(np.abs(x)) if x.size else 0.0
    return x / peak if peak > 0 else x


def gen_bumpy(seed, duration=20.0, intensity=1.0, Ts=0.01, band=(0.5, 5.0),
              vertical_rms=1.0, lateral_rms=0.5,
              rate_envelope=math.radians(0.5), vest=None):
    """ Turbulence: band-limited random vertical and lateral accelerations.

    Roll rate follows the lateral and pitch rate the vertical channel and
    both stay inside rate_envelope * min(1, intensity).
    """
    if intensity < 0:
        raise ParameterError('intensity must be >= 0, got %r' % intensity)
    t = _time_base(duration, Ts)
    n = len(t)
    a = np.zeros((n, 3))
    omega = np.zeros((n, 3))
    if n > 0:
        rng = np.random.RandomState(seed)
        lateral = _band_noise(rng, n, band, Ts)
        vertical = _band_noise(rng, n, band, Ts)
        a[:, 1] = intensity * lateral_rms * _unit_rms(lateral)
        a[:, 2] = intensity * vertical_rms * _unit_rms(vertical)
        envelope = rate_envelope * min(1.0, intensity)
        omega[:, 0] = envelope * _unit_peak(lateral)
        omega[:, 1] = envelope * _unit_peak(vertical)
    params = {'duration': duration, 'intensity': intensity, 'Ts': Ts,
              'band': list(band), 'vertical_rms': vertical_rms,
              'lateral_rms': lateral_rms, 'rate_envelope': rate_envelope}
    logging.debug('bumpy: seed %r, %d samples' % (seed, n))
    return _trace(t, a, omega, 'bumpy', seed, params, (), vest)


def stall_profile(params, t):
    """ Unit-peak lateral profile and the stage table of a stall. """
    p = params.validate()
    edges = np.cumsum([0.0, p.trim, p.onset, p.hold, p.recovery, p.ret])
    names = ('trim', 'onset', 'hold', 'recovery', 'return')
    stages = [(name, float(edges[i]), float(edges[i + 1]))
              for i, name in enumerate(names) if edges[i + 1] > edges[i]]
    w = 2.0 * math.pi * p.frequency
    shape = np.zeros(len(t))
    for k, tk in enumerate(t):
        if tk < edges[1]:
            continue
        elif tk < edges[2]:
            shape[k] = cosine_ramp((tk - edges[1]) / p.onset)
        elif tk < edges[3]:
            shape[k] = 1.0
        elif tk < edges[5]:
            tau = tk - edges[3]
            value = math.exp(-p.damping * w * tau) * math.cos(w * tau)
            if tk >= edges[4]:
                value *= 1.0 - cosine_ramp((tk - edges[4]) / p.ret)
            shape[k] = value
    return shape, stages


def gen_horizontal_stall(params=DEFAULT_STALL, duration=20.0, Ts=0.01,
                         vest=None, scenario_id='stall'):
    """ Trim, rapid lateral-acceleration onset, oscillatory recovery and
    return to trim.
    """
    t = _time_base(duration, Ts)
    shape, stages = stall_profile(params, t)
    a = np.zeros((len(t), 3))
    omega = np.zeros((len(t), 3))
    a[:, 1] = params.peak * shape
    a[:, 2] = -params.vertical * shape
    omega[:, 0] = params.roll_rate * shape
    if params.peak == 0 and params.vertical == 0:
        omega[:] = 0.0
    logging.debug('%s: peak %g m/s^2, stages %s' %
                  (scenario_id, params.peak,
                   ', '.join('%s@%.2f' % (s[0], s[1]) for s in stages)))
    return _trace(t, a, omega, scenario_id, None, params._asdict(), stages,
                  vest)


def wind_shear_preset(base=DEFAULT_STALL):
    """ Stall with a vertical sink component and a slower lateral swing. """
    return base._replace(peak=0.5 * base.peak,
                         vertical=max(base.vertical, 4.0),
                         frequency=0.6 * base.frequency,
                         roll_rate=max(base.roll_rate, math.radians(2.0)))


def zero_scenario(duration=1.0, Ts=0.01, vest=None):
    t = _time_base(duration, Ts)
    z = np.zeros((len(t), 3))
    return _trace(t, z, z.copy(), 'zero', None, {'duration': duration},
                  (), vest)


def export_csv(trace, path):
    """ Write t, ax, ay, az, wx, wy, wz with fixed formatting. """
    data = np.hstack([np.asarray(trace.t).reshape(-1, 1), trace.a,
                      trace.omega])
    np.savetxt(path, data, fmt=CSV_FORMAT, delimiter=',',
               header=','.join(CSV_COLUMNS), comments='')


def import_csv(path, vest=None):
    """ Read a trace written by export_csv or an external recorder. """
    with open(path, 'r') as f:
        header = f.readline().strip().split(',')
    if tuple(h.strip() for h in header) != CSV_COLUMNS:
        raise DimensionError('%s: expected columns %s' %
                             (path, ','.join(CSV_COLUMNS)))
    data = np.loadtxt(path, delimiter=',', skiprows=1, ndmin=2)
    if data.shape[0] < 2:
        raise DomainError('%s: need at least two samples' % path)
    t = data[:, 0]
    dt = np.diff(t)
    if dt[0] <= 0 or np.max(np.abs(dt - dt[0])) > 1e-6 * dt[0]:
        raise DomainError('%s: time base is not uniform' % path)
    return _trace(t, data[:, 1:4], data[:, 4:7], 'csv', None,
                  {'path': path}, (), vest)


def from_config(config, vest=None):
    """ Build the configured scenario at the configured sample time. """
    name = config['scenario']
    Ts = config['prediction.ts']
    duration = config['scenario.duration']
    if name == 'bumpy':
        return gen_bumpy(config['seed'], duration,
                         config['scenario.intensity'], Ts,
                         tuple(config['scenario.band']),
                         config['scenario.vertical_rms'],
                         config['scenario.lateral_rms'],
                         math.radians(config['scenario.rate_envelope_deg']),
                         vest)
    elif name == 'stall':
        return gen_horizontal_stall(StallParams.from_config(config),
                                    duration, Ts, vest)
    elif name == 'wind_shear':
        return gen_horizontal_stall(
            wind_shear_preset(StallParams.from_config(config)), duration,
            Ts, vest, 'wind_shear')
    elif name == 'zero':
        return zero_scenario(duration, Ts, vest)
    elif name == 'csv':
        trace = import_csv(config['scenario.csv'], vest)
        if abs(trace.Ts - Ts) > 1e-9:
            raise DomainError('%s is sampled at %g s, prediction.ts is %g s' %
                              (config['scenario.csv'], trace.Ts, Ts))
        return trace
    raise ParameterError('unknown scenario %r' % name)


def test_bumpy_deterministic():
    a = gen_bumpy(3, duration=5.0)
    b = gen_bumpy(3, duration=5.0)
    assert np.array_equal(a.a, b.a) and np.array_equal(a.omega, b.omega)
    assert np.array_equal(a.perceived, b.perceived)
    c = gen_bumpy(4, duration=5.0)
    assert not np.array_equal(a.a, c.a)


def test_bumpy_intensity_zero():
    trace = gen_bumpy(1, duration=3.0, intensity=0.0)
    assert not np.any(trace.a) and not np.any(trace.omega)
    assert not np.any(trace.perceived)


def test_bumpy_rate_envelope():
    for intensity in (0.3, 1.0, 4.0):
        trace = gen_bumpy(9, duration=20.0, intensity=intensity)
        bound = math.radians(0.5) * min(1.0, intensity)
        assert np.max(np.abs(trace.omega)) <= bound + 1e-15
    trace = gen_bumpy(9, duration=20.0, intensity=2.0)
    assert abs(np.sqrt(np.mean(trace.a[:, 2] ** 2)) - 2.0) < 1e-9


def test_bumpy_band_leakage():
    Ts = 0.01
    trace = gen_bumpy(5, duration=40.0, Ts=Ts)
    x = trace.a[:, 2]
    assert abs(x.mean()) < 1e-12
    spectrum = np.abs(np.fft.rfft(x * np.hanning(len(x)))) ** 2
    f = np.fft.rfftfreq(len(x), Ts)
    total = spectrum.sum()
    # bins 0 and 1 carry the removed mean under the window
    low = (f >= 2 * f[1]) & (f < 0.25)
    stop = spectrum[low | (f > 10.0)].sum()
    assert stop / total < 1e-4


def test_bumpy_rejects_band_above_nyquist():
    try:
        gen_bumpy(0, duration=2.0, Ts=0.1)
    except ParameterError:
        pass
    else:
        assert False, 'band above Nyquist accepted'


def test_stall_stages():
    trace = gen_horizontal_stall(duration=20.0, Ts=0.01)
    starts = [s[1] for s in trace.stages]
    ends = [s[2] for s in trace.stages]
    assert all(b > a for a, b in zip(starts, starts[1:]))
    assert all(e > s for s, e in zip(starts, ends))
    assert [s[0] for s in trace.stages] == ['trim', 'onset', 'hold',
                                            'recovery', 'return']
    assert abs(np.max(trace.a[:, 1]) - 8.0) < 1e-12
    # trim at both ends
    assert trace.a[0, 1] == 0.0 and trace.a[-1, 1] == 0.0
    assert np.max(np.abs(np.diff(trace.a[:, 1]))) < 0.5


def test_stall_zero_peak():
    trace = gen_horizontal_stall(DEFAULT_STALL._replace(peak=0.0),
                                 duration=15.0, Ts=0.02)
    assert not np.any(trace.a) and not np.any(trace.omega)
    assert not np.any(trace.perceived)


def test_wind_shear_vertical():
    trace = gen_horizontal_stall(wind_shear_preset(), duration=15.0,
                                 Ts=0.02, scenario_id='wind_shear')
    assert np.min(trace.a[:, 2]) < -3.9
    assert np.max(np.abs(trace.a[:, 1])) <= 4.0 + 1e-12
    assert trace.id == 'wind_shear'


def test_perceived_zero_and_linearity():
    vest = vestibular.assemble_vestibular(vestibular.FAST)
    zero = zero_scenario(2.0, 0.01, vest)
    assert zero.perceived.shape == (200, 8)
    assert not np.any(zero.perceived)
    trace = gen_bumpy(2, duration=4.0, vest=vest)
    double = trace._replace(a=2 * trace.a, omega=2 * trace.omega)
    y1 = perceived_reference(trace, vest)
    y2 = perceived_reference(double, vest)
    assert np.max(np.abs(y2 - 2 * y1)) < 1e-9 * max(1.0, np.max(np.abs(y1)))


def test_perceived_matches_simulation():
    vest = vestibular.assemble_vestibular(vestibular.FAST)
    trace = gen_horizontal_stall(duration=8.0, Ts=0.01, vest=vest)
    vin = np.zeros((len(trace.t), 8))
    vin[:, 0:3] = trace.a
    vin[:, 5:8] = trace.omega
    expected = vestibular.simulate(vest.model, vin, 0.01)
    assert np.max(np.abs(trace.perceived - expected)) < 1e-12
    felt = trace.felt(vest)
    assert felt.shape == (len(trace.t), 6)


def test_csv_roundtrip():
    import os
    import tempfile
    trace = gen_bumpy(6, duration=2.0)
    path = os.path.join(tempfile.mkdtemp(), 'trace.csv')
    export_csv(trace, path)
    with open(path) as f:
        assert f.readline().strip() == 't,ax,ay,az,wx,wy,wz'
    back = import_csv(path)
    assert np.max(np.abs(back.a - trace.a)) < 1e-8
    assert np.max(np.abs(back.omega - trace.omega)) < 1e-8
    assert abs(back.Ts - 0.01) < 1e-12


if __name__ == '__main__':
    test_bumpy_deterministic()
    test_bumpy_intensity_zero()
    test_bumpy_rate_envelope()
    test_bumpy_band_leakage()
    test_bumpy_rejects_band_above_nyquist()
    test_stall_stages()
    test_stall_zero_peak()
    test_wind_shear_vertical()
    test_perceived_zero_and_linearity()
    test_perceived_matches_simulation()
    test_csv_roundtrip()
