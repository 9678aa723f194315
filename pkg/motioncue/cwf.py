#!/usr/bin/python
# -*- coding: utf-8 -*-

""" Classical washout filter.

Translational channel: scale, high-pass, integrate twice to displacement.
Tilt channel: scale the horizontal accelerations, low-pass, turn into tilt
angles through arcsin(a / g) and rate limit. Rotational channel: scale and
high-pass the angular rates. Commands are clamped to the platform limits.
"""

from __future__ import absolute_import, division, print_function, \
    with_statement

import math
import logging
import collections

import numpy as np
from scipy import signal

from motioncue.common import ParameterError, discretize_matrices, deg, \
    to_vector
from motioncue.prediction import OUTPUT, N_OUTPUT, N_INPUT, INPUT, \
    TILT_TO_BODY
from motioncue.kinematics import Violation
from motioncue import vestibular


_FIELDS = ('hp_omega', 'hp_zeta', 'hp_order', 'hp_washout', 'tilt_omega',
           'rot_omega', 'tilt_rate_limit', 'gain_translation', 'gain_tilt',
           'gain_rotation')


class CwfConfig(collections.namedtuple('CwfConfig', _FIELDS)):
    """ Break frequencies in rad/s, tilt rate limit in rad/s, gains in
    (0, 1]. hp_order 3 adds a first-order washout at hp_washout behind the
    second-order high-pass so the displacement returns to neutral.
    """

    __slots__ = ()

    def validate(self):
        for name in ('hp_omega', 'hp_zeta', 'hp_washout', 'tilt_omega',
                     'rot_omega', 'tilt_rate_limit'):
            if not getattr(self, name) > 0:
                raise ParameterError('cwf %s must be positive' % name)
        for name in ('gain_translation', 'gain_tilt', 'gain_rotation'):
            if not 0.0 < getattr(self, name) <= 1.0:
                raise ParameterError('cwf %s must lie in (0, 1]' % name)
        if self.hp_order not in (2, 3):
            raise ParameterError('cwf hp_order must be 2 or 3')
        return self

    @classmethod
    def from_config(cls, config):
        values = []
        for name in _FIELDS:
            if name == 'tilt_rate_limit':
                values.append(deg(config['cwf.tilt_rate_limit_deg']))
            else:
                values.append(config['cwf.%s' % name])
        return cls(*values).validate()


DEFAULT_CONFIG = CwfConfig(2.5, 1.0, 3, 0.5, 2.0, 1.0, deg(3.0), 0.6, 0.6,
                           0.6)


def translational_tf(cfg):
    """ Displacement per unit acceleration: HP(s) / s^2. """
    w, z = cfg.hp_omega, cfg.hp_zeta
    den = [1.0, 2.0 * z * w, w * w]
    num = [1.0]
    if cfg.hp_order == 3:
        num = [1.0, 0.0]
        den = np.polymul(den, [1.0, cfg.hp_washout])
    return num, den


def tilt_tf(cfg):
    return [cfg.tilt_omega], [1.0, cfg.tilt_omega]


def rotational_tf(cfg):
    """ Angle per unit angular rate: HP(s) / s. """
    return [1.0], [1.0, cfg.rot_omega]


class _Filter(collections.namedtuple('_Filter', ('A', 'B', 'Cy', 'Dy'))):
    """ Discrete SISO filter with several outputs y = Cy x + Dy u. """

    __slots__ = ()

    @classmethod
    def build(cls, num, den, Ts, derivatives):
        A, B, C, _ = signal.tf2ss(num, den)
        rows, feed = [C], [0.0]
        Ck = C
        for _ in range(derivatives):
            feed.append(Ck.dot(B).item())
            Ck = Ck.dot(A)
            rows.append(Ck)
        # y^(k) = C A^k x + sum of C A^j B u terms; only the last can be
        # non-zero for these relative degrees
        Dy = np.zeros(len(rows))
        Dy[-1] = feed[-1]
        Ad, Bd = discretize_matrices(A, B, Ts)
        return cls(Ad, Bd.ravel(), np.vstack(rows), Dy)


CwfBank = collections.namedtuple('CwfBank', ('config', 'Ts', 'translation',
                                             'tilt', 'rotation', 'g'))


def cwf_build(cfg=DEFAULT_CONFIG, Ts=0.01, g=vestibular.GRAVITY):
    """ Discrete filter bank for sample time Ts. """
    cfg.validate()
    return CwfBank(cfg, Ts,
                   _Filter.build(*translational_tf(cfg), Ts=Ts,
                                 derivatives=2),
                   _Filter.build(*tilt_tf(cfg), Ts=Ts, derivatives=0),
                   _Filter.build(*rotational_tf(cfg), Ts=Ts, derivatives=1),
                   g)


class CwfState(object):
    """ Per-run filter states. """

    def __init__(self, bank):
        self.xt = np.zeros((3, bank.translation.A.shape[0]))
        self.xl = np.zeros((2, bank.tilt.A.shape[0]))
        self.xr = np.zeros((3, bank.rotation.A.shape[0]))
        self.theta = np.zeros(2)
        self.k = 0
        self.clamps = []


CwfCommand = collections.namedtuple('CwfCommand',
                                    ('r', 'v', 'a', 'beta_rot', 'omega_rot',
                                     'beta_tilt', 'omega_tilt', 'pre'))

# tilt channel 0 (roll) follows the lateral axis, channel 1 (pitch) the
# longitudinal one
_TILT_SOURCE = (1, 0)


def _clamp(state, t, name, value, bound):
    if abs(value) > bound:
        state.clamps.append(Violation(t, name, float(value), float(bound)))
        logging.debug('cwf clamp %s at t=%.3f: %.4g -> %.4g' %
                      (name, t, value, math.copysign(bound, value)))
        return math.copysign(bound, value)
    return value


def cwf_step(bank, state, sample, limits=None):
    """ One filter update.

    :param sample: reference acceleration (3) and angular rate (3)
    :param limits: ActuatorLimits for the clamps, None to skip them
    :return: CwfCommand; `pre` holds the linear outputs before the rate
        limiter and clamps
    """
    sample = to_vector(sample, 6, 'sample')
    cfg, Ts = bank.config, bank.Ts
    t = state.k * Ts
    a_in = cfg.gain_translation * sample[:3]
    w_in = cfg.gain_rotation * sample[3:]
    tilt_in = cfg.gain_tilt * sample[list(_TILT_SOURCE)]

    f = bank.translation
    trans = np.array([f.Cy.dot(state.xt[i]) + f.Dy * a_in[i]
                      for i in range(3)])
    state.xt = state.xt.dot(f.A.T) + np.outer(a_in, f.B)
    f = bank.tilt
    a_tilt = np.array([f.Cy.dot(state.xl[i])[0] for i in range(2)])
    state.xl = state.xl.dot(f.A.T) + np.outer(tilt_in, f.B)
    f = bank.rotation
    rot = np.array([f.Cy.dot(state.xr[i]) + f.Dy * w_in[i]
                    for i in range(3)])
    state.xr = state.xr.dot(f.A.T) + np.outer(w_in, f.B)

    pre = np.concatenate([trans[:, 2], a_tilt, rot[:, 1]])
    ratio = np.clip(a_tilt / bank.g, -1.0, 1.0)
    theta_des = np.arcsin(ratio)
    if limits is not None:
        for i, axis in enumerate(('roll', 'pitch')):
            theta_des[i] = _clamp(state, t, axis + '_tilt', theta_des[i],
                                  limits.excursion_max[3 + i])
    step = np.clip(theta_des - state.theta, -cfg.tilt_rate_limit * Ts,
                   cfg.tilt_rate_limit * Ts)
    theta = state.theta + step
    omega_tilt = step / Ts

    r, v, a = trans[:, 0].copy(), trans[:, 1].copy(), trans[:, 2].copy()
    beta_rot, omega_rot = rot[:, 0].copy(), rot[:, 1].copy()
    if limits is not None:
        for i, axis in enumerate('xyz'):
            lo, hi = limits.excursion_min[i], limits.excursion_max[i]
            if r[i] < lo or r[i] > hi:
                bound = lo if r[i] < lo else hi
                state.clamps.append(Violation(t, axis, float(r[i]),
                                              float(bound)))
                logging.debug('cwf clamp %s at t=%.3f' % (axis, t))
                r[i] = bound
            v[i] = _clamp(state, t, axis + '_vel', v[i], limits.velocity[i])
            a[i] = _clamp(state, t, axis + '_acc', a[i],
                          limits.acceleration[i])
        # roll and pitch: rotation and tilt add up, the tilt keeps priority
        for i, axis in enumerate(('roll', 'pitch')):
            total = _clamp(state, t, axis + '_vel',
                           omega_rot[i] + omega_tilt[i],
                           limits.velocity[3 + i])
            omega_rot[i] = total - omega_tilt[i]
            total = _clamp(state, t, axis, beta_rot[i] + theta[i],
                           limits.excursion_max[3 + i])
            beta_rot[i] = total - theta[i]
        omega_rot[2] = _clamp(state, t, 'yaw_vel', omega_rot[2],
                              limits.velocity[5])
        beta_rot[2] = _clamp(state, t, 'yaw', beta_rot[2],
                             limits.excursion_max[5])
    state.theta = theta
    state.k += 1
    return CwfCommand(r, v, a, beta_rot, omega_rot, theta, omega_tilt, pre)


def run_cwf(bank, reference, vest, J, limits=None):
    """ Drive the filter bank over a reference.

    :param reference: (N, 6) acceleration and angular rate samples
    :param vest: VestibularModel used to compute what the operator feels
    :param J: neutral leg-rate Jacobian, legs follow dl = J [r; beta]
    :return: (u (N, 8), y (N, p) in the prediction output layout, clamps)
    """
    reference = np.atleast_2d(reference)
    N = reference.shape[0]
    state = CwfState(bank)
    u = np.zeros((N, N_INPUT))
    y = np.zeros((N, N_OUTPUT))
    for k in range(N):
        cmd = cwf_step(bank, state, reference[k], limits)
        u[k, INPUT['a']] = cmd.a
        u[k, INPUT['w_rot']] = cmd.omega_rot
        u[k, INPUT['w_tilt']] = cmd.omega_tilt
        beta = cmd.beta_rot + TILT_TO_BODY.dot(cmd.beta_tilt)
        y[k, OUTPUT['r']] = cmd.r
        y[k, OUTPUT['v']] = cmd.v
        y[k, OUTPUT['beta']] = beta
        y[k, OUTPUT['beta_rot']] = cmd.beta_rot
        y[k, OUTPUT['dl']] = J.dot(np.concatenate([cmd.r, beta]))
    vin = np.zeros((N, 8))
    vin[:, vest.inputs['a']] = u[:, INPUT['a']]
    vin[:, vest.inputs['w_tilt']] = u[:, INPUT['w_tilt']]
    vin[:, vest.inputs['w_rot']] = u[:, INPUT['w_rot']]
    felt = vestibular.combined_perception(
        vest, vestibular.simulate(vest.model, vin, bank.Ts))
    y[:, :6] = felt
    if state.clamps:
        logging.info('cwf: %d clamp events' % len(state.clamps))
    return u, y, state.clamps


def _run(bank, samples, limits=None):
    state = CwfState(bank)
    return [cwf_step(bank, state, s, limits) for s in samples], state


def test_zero_input_neutral():
    bank = cwf_build()
    cmds, state = _run(bank, np.zeros((200, 6)))
    for c in cmds:
        for part in c:
            assert np.all(np.asarray(part) == 0.0)
    assert state.clamps == []


def test_translation_washes_out():
    bank = cwf_build(Ts=0.01)
    samples = np.zeros((6000, 6))
    samples[:, 0] = 1.0
    cmds, _ = _run(bank, samples)
    r = np.array([c.r[0] for c in cmds])
    assert np.max(np.abs(r)) > 0.01
    assert abs(r[-1]) < 1e-3
    num, den = translational_tf(DEFAULT_CONFIG)
    assert np.polyval(num, 0.0) == 0.0


def test_tilt_settles():
    bank = cwf_build(Ts=0.01)
    samples = np.zeros((1000, 6))
    samples[:, 0] = 1.0
    cmds, _ = _run(bank, samples)
    theta = cmds[-1].beta_tilt[1]
    expected = 0.6 * 1.0 / vestibular.GRAVITY
    assert abs(theta - expected) < 1e-3
    rates = np.array([c.omega_tilt for c in cmds])
    assert np.max(np.abs(rates)) <= deg(3.0) + 1e-12


def test_washout_dc_gains():
    cfg = DEFAULT_CONFIG
    num, den = translational_tf(cfg)
    # acceleration response s^2 * position
    acc_num = np.polymul(num, [1.0, 0.0, 0.0])
    assert np.polyval(acc_num, 0.0) / np.polyval(den, 0.0) == 0.0
    num, den = rotational_tf(cfg)
    rate_num = np.polymul(num, [1.0, 0.0])
    assert np.polyval(rate_num, 0.0) / np.polyval(den, 0.0) == 0.0


def test_linearity_before_limiter():
    bank = cwf_build(Ts=0.02)
    rng = np.random.RandomState(3)
    samples = rng.randn(300, 6)
    one, _ = _run(bank, samples)
    two, _ = _run(bank, 2.0 * samples)
    for a, b in zip(one, two):
        assert np.allclose(b.pre, 2.0 * a.pre, rtol=1e-12, atol=1e-12)


def test_clamp_logged():
    from motioncue.kinematics import default_limits
    cfg = DEFAULT_CONFIG._replace(gain_translation=1.0)
    bank = cwf_build(cfg, Ts=0.01)
    samples = np.zeros((50, 6))
    samples[:, 0] = 12.0
    cmds, state = _run(bank, samples, default_limits())
    assert any(v.channel == 'x_acc' for v in state.clamps)
    assert all(abs(c.a[0]) <= 10.0 for c in cmds)


def test_tilt_and_total_angle_clamped():
    from motioncue.kinematics import default_limits
    limits = default_limits()
    cfg = DEFAULT_CONFIG._replace(gain_tilt=1.0)
    bank = cwf_build(cfg, Ts=0.01)
    samples = np.zeros((2000, 6))
    # 5 m/s^2 lateral asks for about 30.6 deg of roll tilt
    samples[:, 1] = 5.0
    samples[:, 3] = 0.4 * np.sin(np.pi * 0.01 * np.arange(2000))
    cmds, state = _run(bank, samples, limits)
    bound = limits.excursion_max[3]
    tilt = np.array([c.beta_tilt[0] for c in cmds])
    total = np.array([c.beta_rot[0] for c in cmds]) + tilt
    rate = np.array([c.omega_rot[0] + c.omega_tilt[0] for c in cmds])
    assert np.max(np.abs(tilt)) <= bound + 1e-12
    assert abs(abs(tilt[-1]) - bound) < 1e-9
    assert np.max(np.abs(total)) <= bound + 1e-12
    assert np.max(np.abs(rate)) <= limits.velocity[3] + 1e-12
    assert any(v.channel == 'roll_tilt' for v in state.clamps)
    assert any(v.channel == 'roll' for v in state.clamps)


def test_run_cwf_layout():
    from motioncue.kinematics import default_geometry, leg_rate_jacobian, \
        neutral_pose
    g = default_geometry()
    J = leg_rate_jacobian(g, neutral_pose(g))
    vest = vestibular.assemble_vestibular()
    ref = np.zeros((100, 6))
    ref[:, 1] = 0.5
    u, y, clamps = run_cwf(cwf_build(Ts=0.01), ref, vest, J)
    assert u.shape == (100, 8) and y.shape == (100, 24)
    assert np.any(y[:, 1] != 0.0)
    assert clamps == []


if __name__ == '__main__':
    test_zero_input_neutral()
    test_translation_washes_out()
    test_tilt_settles()
    test_washout_dc_gains()
    test_linearity_before_limiter()
    test_clamp_logged()
    test_tilt_and_total_angle_clamped()
    test_run_cwf_layout()
