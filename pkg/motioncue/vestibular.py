#!/usr/bin/python
# -*- coding: utf-8 -*-

""" Human vestibular perception model.

Semicircular canals (rotation), otoliths (translation) and tilt
coordination, each realized per axis in controllable canonical form and
composed block-diagonally into one 21-state model:

    states   x_oth (3 x 2) | x_tilt (2 x 3) | x_acc (3 x 3)
    inputs   a_p (3)       | w_tilt (2)     | w_rot (3)
    outputs  a_hat (3)     | a_tilt_hat (2) | w_hat (3)

Tilt channel 0 is the roll tilt felt as lateral (y) force, channel 1 the
pitch tilt felt as longitudinal (x) force. The vertical axis has no tilt.
"""

from __future__ import absolute_import, division, print_function, \
    with_statement

import math
import logging
import collections

import numpy as np
from scipy import signal
from scipy.linalg import block_diag

from motioncue.common import StateSpaceModel, ParameterError, DomainError, \
    discretize_matrices, to_matrix


GRAVITY = 9.81

_FIELDS = ('T_L', 'T_a', 'T_S', 'Gamma_a', 'Gamma_L', 'Gamma_s', 'K', 'g')


class VestibularParams(collections.namedtuple('VestibularParams', _FIELDS)):
    """ Canal time constants T_L, T_a, T_S, otolith time constants
    Gamma_a, Gamma_L, Gamma_s (all seconds), otolith gain K and gravity g.
    """

    __slots__ = ()

    def validate(self):
        for name in _FIELDS:
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value)
                    and value > 0):
                raise ParameterError('vestibular parameter %s must be '
                                     'positive, got %r' % (name, value))
        return self

    @classmethod
    def from_config(cls, config):
        return cls(*[float(config['vestibular.%s' % f]) for f in _FIELDS]) \
            .validate()


DEFAULT_PARAMS = VestibularParams(T_L=5.73, T_a=80.0, T_S=0.005,
                                  Gamma_a=10.0, Gamma_L=5.0, Gamma_s=0.016,
                                  K=0.4, g=GRAVITY)

# input / output slot layout of the assembled model
INPUTS = collections.OrderedDict([
    ('a', slice(0, 3)),
    ('w_tilt', slice(3, 5)),
    ('w_rot', slice(5, 8)),
])
OUTPUTS = collections.OrderedDict([
    ('a_hat', slice(0, 3)),
    ('a_tilt_hat', slice(3, 5)),
    ('w_hat', slice(5, 8)),
])

# which translational axis each tilt channel is felt on (0 -> y, 1 -> x)
TILT_AXES = (1, 0)


class VestibularModel(collections.namedtuple('VestibularModel',
                                             ('model', 'inputs', 'outputs',
                                              'params'))):
    __slots__ = ()

    @property
    def tilt_force_map(self):
        """ 3x2 matrix taking the tilt outputs to the force axes. """
        M = np.zeros((3, 2))
        for channel, axis in enumerate(TILT_AXES):
            M[axis, channel] = 1.0
        return M


def _canonical(num, den):
    A, B, C, D = signal.tf2ss(num, den)
    if np.any(np.abs(D) > 1e-12):
        raise ParameterError('transfer function is not strictly proper')
    return StateSpaceModel(A, B, C)


def canal_model(params):
    """ Semicircular canal, T_L T_a s^2 / ((T_L s+1)(T_a s+1)(T_S s+1)). """
    return _canonical(*canal_tf(params.validate()))


def otolith_model(params):
    """ Otolith, (Gamma_a s+1)/(Gamma_L s+1) * K/(Gamma_s s+1). """
    return _canonical(*otolith_tf(params.validate()))


def tilt_model(params):
    """ Tilt coordination, g K (Gamma_a s+1) / (s (Gamma_L s+1)(Gamma_s s+1)).

    The pole at the origin integrates the tilt rate into a tilt angle.
    """
    return _canonical(*tilt_tf(params.validate()))


# numerator / denominator coefficients, highest power first

def canal_tf(params):
    num = [params.T_L * params.T_a, 0.0, 0.0]
    den = np.polymul(np.polymul([params.T_L, 1.0], [params.T_a, 1.0]),
                     [params.T_S, 1.0])
    return num, den


def otolith_tf(params):
    num = [params.K * params.Gamma_a, params.K]
    den = np.polymul([params.Gamma_L, 1.0], [params.Gamma_s, 1.0])
    return num, den


def tilt_tf(params):
    gk = params.g * params.K
    num = [gk * params.Gamma_a, gk]
    den = np.polymul([params.Gamma_L, 1.0, 0.0], [params.Gamma_s, 1.0])
    return num, den


def tilt_angle(a_tilt, g=GRAVITY, small_angle=False):
    """ Tilt angle (rad) that makes gravity emulate a_tilt (m/s^2).

    Exact mode is arcsin(a_tilt / g); small-angle mode is a_tilt / g.
    """
    if not g > 0:
        raise ParameterError('gravity must be positive, got %r' % g)
    ratio = a_tilt / g
    if small_angle:
        return ratio
    if abs(ratio) > 1.0:
        raise DomainError('|a_tilt| = %g exceeds g = %g' % (abs(a_tilt), g))
    return math.asin(ratio)


def assemble_vestibular(params=DEFAULT_PARAMS):
    """ Compose 3 otolith axes, 2 tilt channels and 3 canal axes. """
    params.validate()
    blocks = [otolith_model(params)] * 3 + [tilt_model(params)] * 2 + \
        [canal_model(params)] * 3
    A = block_diag(*[b.A for b in blocks])
    B = block_diag(*[b.B for b in blocks])
    C = block_diag(*[b.C for b in blocks])
    model = StateSpaceModel(A, B, C)
    assert (model.n, model.m, model.p) == (21, 8, 8)
    logging.debug('assembled vestibular model %r' % model)
    return VestibularModel(model, INPUTS, OUTPUTS, params)


def frequency_response(model, omegas):
    """ Return H(jw) = C (jw I - A)^-1 B for every w, shape (len, p, m). """
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    eye = np.eye(model.n)
    out = np.empty((omegas.size, model.p, model.m), dtype=complex)
    for i, w in enumerate(omegas):
        out[i] = model.C.dot(np.linalg.solve(1j * w * eye - model.A, model.B))
    return out


def simulate(model, inputs, Ts, x0=None, method='zoh'):
    """ Simulate a continuous model under zero-order-held inputs.

    :param inputs: array (N, m) of input samples, held over each period
    :param Ts: sample time (s)
    :param x0: optional initial state, zero by default
    :return: array (N, p) with y[k] = C x[k]
    """
    u = np.asarray(inputs, dtype=float)
    if u.ndim == 1:
        u = u.reshape(-1, 1)
    if u.shape[1] != model.m:
        raise ParameterError('expected %d input channels, got %d' %
                             (model.m, u.shape[1]))
    if u.shape[0] == 0:
        return np.zeros((0, model.p))
    Ad, Bd = discretize_matrices(model.A, model.B, Ts, method)
    x0 = np.zeros(model.n) if x0 is None else np.asarray(x0,
                                                         float).ravel()
    D = np.zeros((model.p, model.m))
    if u.shape[0] == 1:
        return model.C.dot(x0).reshape(1, -1)
    _, y, _ = signal.dlsim((Ad, Bd, model.C, D, Ts), u, x0=x0)
    return np.asarray(y).reshape(u.shape[0], model.p)


def combined_perception(vestibular, y):
    """ Operator-felt signals from the 8 vestibular outputs.

    :return: array (N, 6), specific force (3) then angular velocity (3);
        the force adds the tilt channels onto their translational axes
    """
    y = np.atleast_2d(y)
    out = vestibular.outputs
    force = y[:, out['a_hat']] + y[:, out['a_tilt_hat']].dot(
        vestibular.tilt_force_map.T)
    return np.hstack([force, y[:, out['w_hat']]])


def _eval_tf(num, den, w):
    s = 1j * w
    return np.polyval(num, s) / np.polyval(den, s)


FAST = VestibularParams(T_L=0.5, T_a=1.0, T_S=0.005, Gamma_a=1.0,
                        Gamma_L=0.5, Gamma_s=0.016, K=0.4, g=GRAVITY)


def test_invalid_params():
    bad = DEFAULT_PARAMS._replace(T_a=0.0)
    for f in (canal_model, otolith_model, tilt_model, assemble_vestibular):
        try:
            f(bad)
        except ParameterError:
            pass
        else:
            assert False, '%s accepted T_a=0' % f.__name__


def test_canal_frequency_response():
    m = canal_model(DEFAULT_PARAMS)
    num, den = canal_tf(DEFAULT_PARAMS)
    ws = np.logspace(-2, 2, 10)
    h = frequency_response(m, ws)[:, 0, 0]
    ref = np.array([_eval_tf(num, den, w) for w in ws])
    assert np.allclose(h, ref, rtol=1e-9, atol=1e-12)
    # double zero at the origin: no response to a constant rate
    assert abs(m.C.dot(np.linalg.solve(-m.A, m.B))[0, 0]) < 1e-12


def test_canal_washout():
    m = canal_model(FAST)
    y = simulate(m, np.ones((4000, 1)), 0.005)
    assert abs(y[-1, 0]) < 1e-6
    assert abs(y[200, 0]) > 1e-2


def test_canal_impulse_response():
    m = canal_model(DEFAULT_PARAMS)
    num, den = canal_tf(DEFAULT_PARAMS)
    r, p, _ = signal.residue(num, den)
    Ts = 0.001
    t = np.arange(2000) * Ts
    h_ref = np.real(sum(ri * np.exp(pi * t) for ri, pi in zip(r, p)))
    h = simulate(m, np.zeros((t.size, 1)), Ts, x0=m.B[:, 0])[:, 0]
    assert np.max(np.abs(h - h_ref)) < 1e-6 * np.max(np.abs(h_ref))


def test_otolith_dc_gain():
    m = otolith_model(DEFAULT_PARAMS)
    dc = m.C.dot(np.linalg.solve(-m.A, m.B))[0, 0]
    assert abs(dc - DEFAULT_PARAMS.K) < 1e-12
    y = simulate(otolith_model(FAST), 2.0 * np.ones((3000, 1)), 0.01)
    assert abs(y[-1, 0] - 2.0 * FAST.K) < 1e-6


def test_otolith_reduces_to_lag():
    p = DEFAULT_PARAMS._replace(K=1.0, Gamma_a=3.0, Gamma_L=3.0)
    m = otolith_model(p)
    ws = np.logspace(-1, 2, 10)
    h = frequency_response(m, ws)[:, 0, 0]
    ref = 1.0 / (1j * ws * p.Gamma_s + 1.0)
    assert np.allclose(h, ref, rtol=1e-9, atol=1e-12)


def test_otolith_frequency_response():
    m = otolith_model(DEFAULT_PARAMS)
    num, den = otolith_tf(DEFAULT_PARAMS)
    ws = np.logspace(-2, 2, 10)
    h = frequency_response(m, ws)[:, 0, 0]
    ref = np.array([_eval_tf(num, den, w) for w in ws])
    assert np.allclose(h, ref, rtol=1e-9, atol=1e-12)


def test_tilt_angle():
    assert tilt_angle(0.0, 9.81) == 0.0
    assert abs(tilt_angle(9.81 / 2, 9.81) - 0.523599) < 1e-6
    assert abs(tilt_angle(9.81 / 2, 9.81, small_angle=True) - 0.5) < 1e-15
    try:
        tilt_angle(1.2 * 9.81, 9.81)
    except DomainError:
        pass
    else:
        assert False, 'arcsin domain not checked'


def test_tilt_model():
    m = tilt_model(DEFAULT_PARAMS)
    num, den = tilt_tf(DEFAULT_PARAMS)
    ws = np.array([0.1, 1.0, 10.0])
    h = frequency_response(m, ws)[:, 0, 0]
    ref = np.array([_eval_tf(num, den, w) for w in ws])
    assert np.allclose(h, ref, rtol=1e-9, atol=1e-12)
    assert np.min(np.abs(np.linalg.eigvals(m.A))) < 1e-12
    # constant tilt rate: output slope tends to g K w
    Ts, w = 0.01, 0.02
    y = simulate(tilt_model(FAST), w * np.ones((3000, 1)), Ts)[:, 0]
    slope = (y[-1] - y[-2]) / Ts
    assert abs(slope - FAST.g * FAST.K * w) < 1e-6
    assert np.all(simulate(m, np.zeros((50, 1)), Ts) == 0.0)


def test_assemble_dimensions():
    v = assemble_vestibular(DEFAULT_PARAMS)
    assert (v.model.n, v.model.m, v.model.p) == (21, 8, 8)
    for layout in (v.inputs, v.outputs):
        slots = []
        for s in layout.values():
            slots.extend(range(s.start, s.stop))
        assert sorted(slots) == list(range(8))
    y = simulate(v.model, np.zeros((20, 8)), 0.01)
    assert np.all(y == 0.0)


def test_assemble_block_diagonal():
    v = assemble_vestibular(DEFAULT_PARAMS)
    u = np.zeros((200, 8))
    u[:, 0] = 1.0
    y = simulate(v.model, u, 0.01)
    assert np.any(y[:, 0] != 0.0)
    assert np.all(y[:, 1:] == 0.0)
    # the structure itself has no coupling
    H = frequency_response(v.model, [0.7])[0]
    groups = [(0, 3), (3, 5), (5, 8)]
    for gi in groups:
        for gj in groups:
            if gi != gj:
                assert np.all(H[gi[0]:gi[1], gj[0]:gj[1]] == 0.0)


def test_assemble_realization_independence():
    v = assemble_vestibular(DEFAULT_PARAMS)
    ws = np.logspace(-2, 2, 20)
    H = frequency_response(v.model, ws)
    tfs = [otolith_tf] * 3 + [tilt_tf] * 2 + [canal_tf] * 3
    for ch, tf in enumerate(tfs):
        num, den = tf(DEFAULT_PARAMS)
        ref = np.array([_eval_tf(num, den, w) for w in ws])
        assert np.allclose(H[:, ch, ch], ref, rtol=1e-9, atol=1e-12)


def test_combined_perception():
    v = assemble_vestibular(DEFAULT_PARAMS)
    y = np.arange(8.0).reshape(1, 8)
    c = combined_perception(v, y)
    # x gets pitch tilt (slot 4), y gets roll tilt (slot 3)
    assert np.allclose(c[0], [0 + 4, 1 + 3, 2, 5, 6, 7])
    assert to_matrix(c).shape == (1, 6)


if __name__ == '__main__':
    test_invalid_params()
    test_canal_frequency_response()
    test_canal_washout()
    test_canal_impulse_response()
    test_otolith_dc_gain()
    test_otolith_reduces_to_lag()
    test_otolith_frequency_response()
    test_tilt_angle()
    test_tilt_model()
    test_assemble_dimensions()
    test_assemble_block_diagonal()
    test_assemble_realization_independence()
    test_combined_perception()
