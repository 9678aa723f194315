#!/usr/bin/python
# -*- coding: utf-8 -*-

from __future__ import absolute_import, division, print_function, \
    with_statement

import math
import logging
import collections

import numpy as np
from scipy.spatial.transform import Rotation

from motioncue.common import DegeneratePoseError, ParameterError, \
    to_vector, deg


LEGS = 6
AXES = ('x', 'y', 'z', 'roll', 'pitch', 'yaw')


class PlatformGeometry(collections.namedtuple('PlatformGeometry',
                                              ('b', 'cP', 'home_height'))):
    """ b: (6, 3) base joints in the inertial frame, cP: (6, 3) platform
    joints in the platform frame, home_height: neutral platform height (m).
    """

    __slots__ = ()

    def validate(self, limits=None):
        b = np.asarray(self.b, float)
        cP = np.asarray(self.cP, float)
        if b.shape != (LEGS, 3) or cP.shape != (LEGS, 3):
            raise ParameterError('geometry needs 6 base and 6 platform '
                                 'points')
        for i in range(LEGS):
            for j in range(i + 1, LEGS):
                if np.linalg.norm(b[i] - b[j]) < 1e-9:
                    raise ParameterError('base points %d and %d coincide' %
                                         (i, j))
        if limits is not None:
            lengths = leg_vectors(self, neutral_pose(self))[1]
            if np.any(lengths < limits.leg_min) or \
                    np.any(lengths > limits.leg_max):
                raise ParameterError('neutral leg lengths %s outside [%g, %g]'
                                     % (np.round(lengths, 4), limits.leg_min,
                                        limits.leg_max))
        return self


class PlatformPose(collections.namedtuple('PlatformPose', ('r', 'euler'))):
    """ r: platform origin in the inertial frame (m), euler: (phi, theta,
    psi) in rad.
    """

    __slots__ = ()

    def rotation(self):
        return rotation_matrix(*self.euler)


_LIMIT_FIELDS = ('excursion_min', 'excursion_max', 'velocity', 'acceleration',
                 'leg_min', 'leg_max', 'leg_rate')


class ActuatorLimits(collections.namedtuple('ActuatorLimits',
                                            _LIMIT_FIELDS)):
    """ Table of platform limits.

    excursion_min / excursion_max, velocity and acceleration are 6-vectors
    over (x, y, z, roll, pitch, yaw) in m, m/s, m/s^2, rad, rad/s, rad/s^2.
    Excursions are displacements from the neutral pose; velocity and
    acceleration bounds are symmetric.
    """

    __slots__ = ()

    def validate(self):
        lo = np.asarray(self.excursion_min, float)
        hi = np.asarray(self.excursion_max, float)
        if lo.shape != (6,) or hi.shape != (6,) or np.any(lo >= hi):
            raise ParameterError('excursion bounds need min < max per axis')
        for name in ('velocity', 'acceleration'):
            v = np.asarray(getattr(self, name), float)
            if v.shape != (6,) or np.any(v <= 0):
                raise ParameterError('%s bounds must be positive' % name)
        if not self.leg_min < self.leg_max:
            raise ParameterError('leg length range needs min < max')
        if not self.leg_rate > 0:
            raise ParameterError('leg rate bound must be positive')
        return self

    @classmethod
    def from_config(cls, config):
        home = config['geometry.home_height']
        xy = config['limits.xy_excursion']
        lo = [-xy, -xy, config['limits.z_min'] - home]
        hi = [xy, xy, config['limits.z_max'] - home]
        rp, yaw = deg(config['limits.roll_pitch_deg']), \
            deg(config['limits.yaw_deg'])
        lo += [-rp, -rp, -yaw]
        hi += [rp, rp, yaw]
        vel = list(config['limits.velocity']) + \
            [deg(config['limits.angular_velocity_deg'])] * 3
        acc = list(config['limits.acceleration']) + \
            [deg(config['limits.angular_acceleration_deg'])] * 3
        return cls(np.array(lo), np.array(hi), np.array(vel), np.array(acc),
                   float(config['limits.leg_min']),
                   float(config['limits.leg_max']),
                   float(config['limits.leg_rate'])).validate()


def default_limits(home_height=3.0):
    """ The 6-DoF simulator limits; leg rate 1 m/s is a harness default. """
    rp, yaw = deg(25.0), deg(30.0)
    return ActuatorLimits(
        excursion_min=np.array([-1.7, -1.7, 2.2 - home_height, -rp, -rp,
                                -yaw]),
        excursion_max=np.array([1.7, 1.7, 3.8 - home_height, rp, rp, yaw]),
        velocity=np.array([1.5, 1.5, 1.0] + [deg(30.0)] * 3),
        acceleration=np.array([10.0, 10.0, 7.0] + [deg(200.0)] * 3),
        leg_min=2.5, leg_max=4.5, leg_rate=1.0)


def default_geometry(base_radius=2.1, platform_radius=1.5, home_height=3.0,
                     base_half_angle=15.0, twist=57.23):
    """ Joints on two circles with 120 degree symmetry.

    Base joints sit in pairs at 120k +- base_half_angle degrees; each platform
    joint is its base joint's azimuth turned by +-twist degrees, which with
    the default radii puts the neutral legs at 3.5 m, mid-range of
    [2.5, 4.5] m.
    """
    b, cP = [], []
    for k in range(3):
        for sign in (-1.0, 1.0):
            ab = math.radians(120.0 * k + sign * base_half_angle)
            ap = ab + sign * math.radians(twist)
            b.append([base_radius * math.cos(ab),
                      base_radius * math.sin(ab), 0.0])
            cP.append([platform_radius * math.cos(ap),
                       platform_radius * math.sin(ap), 0.0])
    return PlatformGeometry(np.array(b), np.array(cP), float(home_height))


def geometry_from_config(config):
    if config.get('geometry.base_points') is not None:
        geom = PlatformGeometry(np.asarray(config['geometry.base_points'],
                                           float),
                                np.asarray(config['geometry.platform_points'],
                                           float),
                                float(config['geometry.home_height']))
    else:
        geom = default_geometry(config['geometry.base_radius'],
                                config['geometry.platform_radius'],
                                config['geometry.home_height'],
                                config['geometry.base_half_angle'],
                                config['geometry.twist'])
    return geom


def neutral_pose(geom):
    return PlatformPose(np.array([0.0, 0.0, geom.home_height]),
                        np.zeros(3))


def rotation_matrix(phi, theta, psi):
    """ Platform-to-inertial rotation written out in cosines and sines. """
    cf, sf = math.cos(phi), math.sin(phi)
    ct, st = math.cos(theta), math.sin(theta)
    cp, sp = math.cos(psi), math.sin(psi)
    return np.array([
        [cp * cf - ct * sf * sp, -sp * cf - ct * sf * cp, st * sf],
        [cp * sf + ct * cf * sp, -sp * sf + ct * cf * cp, -st * cf],
        [sp * st, cp * st, ct],
    ])


def _legs(geom, r, R):
    L = r + np.asarray(geom.cP).dot(R.T) - np.asarray(geom.b)
    lengths = np.linalg.norm(L, axis=1)
    if np.any(lengths < 1e-9):
        raise DegeneratePoseError('leg %d has zero length' %
                                  int(np.argmin(lengths)))
    return L, lengths, L / lengths[:, None]


def leg_vectors(geom, pose):
    """ Leg vectors L_i = r + R cP_i - b_i, lengths and unit directions.

    :return: (L (6, 3), l (6,), s_hat (6, 3))
    """
    r = to_vector(pose.r, 3, 'pose.r')
    euler = to_vector(pose.euler, 3, 'pose.euler')
    return _legs(geom, r, rotation_matrix(*euler))


def leg_rate_jacobian(geom, pose):
    """ J with rows [s_i^T, ((R cP_i) x s_i)^T], so that dl = J [v; w]. """
    R = pose.rotation()
    _, _, s = leg_vectors(geom, pose)
    rc = np.asarray(geom.cP).dot(R.T)
    return np.hstack([s, np.cross(rc, s)])


def linear_leg_lengths(geom, l0, J, r, beta):
    """ Leg lengths from the Jacobian linearization at the neutral pose.

    :param r: (N, 3) displacements from neutral, beta: (N, 3) small angles
    """
    return l0 + np.hstack([np.atleast_2d(r), np.atleast_2d(beta)]).dot(J.T)


Violation = collections.namedtuple('Violation', ('t', 'channel', 'value',
                                                 'bound'))


class MotionTrace(collections.namedtuple('MotionTrace',
                                         ('t', 'r', 'v', 'a', 'beta', 'omega',
                                          'alpha', 'legs', 'leg_rates'))):
    """ Platform signals over time, each (N, k); r and beta relative to the
    neutral pose. legs / leg_rates may be None.
    """

    __slots__ = ()


def _check_band(report, t, name, values, lo, hi, offset=0.0):
    tol = 1e-6 * max(1.0, abs(lo), abs(hi))
    bad = np.nonzero((values < lo - tol) | (values > hi + tol))[0]
    for k in bad:
        value = values[k] + offset
        bound = (lo + offset) if values[k] < lo else (hi + offset)
        report.append(Violation(float(t[k]), name, float(value),
                                float(bound)))


def check_limits(trace, limits, home_height=0.0):
    """ List every sample where the trace leaves the limits.

    z values are reported as absolute heights (home_height + dz) so they read
    against the [z_min, z_max] row of the table.

    :return: list of Violation(t, channel, value, bound), empty if feasible
    """
    report = []
    t = np.asarray(trace.t)
    pos = np.hstack([trace.r, trace.beta])
    vel = np.hstack([trace.v, trace.omega])
    for i, axis in enumerate(AXES):
        offset = home_height if axis == 'z' else 0.0
        _check_band(report, t, axis, pos[:, i], limits.excursion_min[i],
                    limits.excursion_max[i], offset)
        _check_band(report, t, axis + '_vel', vel[:, i],
                    -limits.velocity[i], limits.velocity[i])
        acc = trace.a[:, i] if i < 3 else \
            (trace.alpha[:, i - 3] if trace.alpha is not None else None)
        if acc is not None:
            _check_band(report, t, axis + '_acc', acc,
                        -limits.acceleration[i], limits.acceleration[i])
    if trace.legs is not None:
        for i in range(LEGS):
            _check_band(report, t, 'leg%d' % i, trace.legs[:, i],
                        limits.leg_min, limits.leg_max)
    if trace.leg_rates is not None:
        for i in range(LEGS):
            _check_band(report, t, 'leg%d_rate' % i, trace.leg_rates[:, i],
                        -limits.leg_rate, limits.leg_rate)
    report.sort(key=lambda v: (v.t, v.channel))
    if report:
        logging.warning('%d limit violations, first at t=%.3f on %s' %
                        (len(report), report[0].t, report[0].channel))
    return report


def workspace_query(geom, limits, pose):
    """ Legs, Jacobian conditioning and limit check of a single pose. """
    L, lengths, _ = leg_vectors(geom, pose)
    J = leg_rate_jacobian(geom, pose)
    home = neutral_pose(geom)
    dz = np.asarray(pose.r) - home.r
    one = np.zeros((1, 3))
    trace = MotionTrace(np.zeros(1), dz.reshape(1, 3), one, one,
                        np.asarray(pose.euler, float).reshape(1, 3), one,
                        one, lengths.reshape(1, 6), None)
    return {
        'legs': lengths,
        'jacobian_cond': float(np.linalg.cond(J)),
        'violations': check_limits(trace, limits, geom.home_height),
    }


def _zero_trace(n=5):
    z3 = np.zeros((n, 3))
    return MotionTrace(np.arange(n) * 0.1, z3, z3, z3, z3, z3, z3, None, None)


def test_rotation_matrix():
    assert np.allclose(rotation_matrix(0, 0, 0), np.eye(3))
    R = rotation_matrix(math.pi / 2, 0, 0)
    assert np.allclose(R, [[0, -1, 0], [1, 0, 0], [0, 0, 1]], atol=1e-15)
    rng = np.random.RandomState(1)
    for _ in range(50):
        R = rotation_matrix(*rng.uniform(-math.pi, math.pi, 3))
        assert np.max(np.abs(R.T.dot(R) - np.eye(3))) < 1e-12
        assert abs(np.linalg.det(R) - 1.0) < 1e-12


def test_leg_vectors_simple():
    g = PlatformGeometry(np.tile([1.0, 0.0, 0.0], (6, 1)),
                         np.tile([1.0, 0.0, 0.0], (6, 1)), 3.0)
    L, l, s = leg_vectors(g, PlatformPose([0, 0, 3.0], [0, 0, 0]))
    assert np.allclose(L[0], [0, 0, 3])
    assert abs(l[0] - 3.0) < 1e-15
    assert np.allclose(s[0], [0, 0, 1])


def test_degenerate_pose():
    g = default_geometry()
    pose = PlatformPose([g.b[0][0] - g.cP[0][0], g.b[0][1] - g.cP[0][1], 0.0],
                        [0, 0, 0])
    try:
        leg_vectors(g, pose)
    except DegeneratePoseError:
        pass
    else:
        assert False, 'zero-length leg accepted'


def test_default_geometry_neutral():
    g = default_geometry()
    g.validate(default_limits())
    _, l, _ = leg_vectors(g, neutral_pose(g))
    assert np.max(l) - np.min(l) < 1e-12
    assert 2.5 < l[0] < 4.5
    assert abs(l[0] - 3.5) < 0.01


def test_yaw_keeps_symmetric_legs():
    # all six legs twisted the same way: yaw rotates the pattern onto itself
    ang = np.radians(60.0 * np.arange(6))
    b = np.stack([2.0 * np.cos(ang), 2.0 * np.sin(ang), 0 * ang], axis=1)
    cP = np.stack([1.5 * np.cos(ang + 0.8), 1.5 * np.sin(ang + 0.8),
                   0 * ang], axis=1)
    g = PlatformGeometry(b, cP, 3.0)
    _, l, _ = leg_vectors(g, PlatformPose([0, 0, 3.0], [0, 0, 0.3]))
    assert np.max(l) - np.min(l) < 1e-12


def test_translation_equivariance():
    g = default_geometry()
    pose = PlatformPose([0.1, -0.2, 3.1], [0.05, 0.1, -0.02])
    shift = np.array([0.3, 0.7, -0.4])
    g2 = PlatformGeometry(np.asarray(g.b) + shift, g.cP, g.home_height)
    l1 = leg_vectors(g, pose)[1]
    l2 = leg_vectors(g2, PlatformPose(np.asarray(pose.r) + shift,
                                      pose.euler))[1]
    assert np.allclose(l1, l2, atol=1e-12)


def test_jacobian_vertical_legs():
    b = np.array([[math.cos(a), math.sin(a), 0.0]
                  for a in np.radians(60.0 * np.arange(6))])
    g = PlatformGeometry(b, b.copy(), 3.0)
    J = leg_rate_jacobian(g, PlatformPose([0, 0, 3.0], [0, 0, 0]))
    assert np.allclose(J.dot([0, 0, 1, 0, 0, 0]), np.ones(6))


def test_jacobian_finite_differences():
    g = default_geometry()
    rng = np.random.RandomState(7)
    h = 1e-6
    worst = 0.0
    for _ in range(100):
        pose = PlatformPose(np.array([0, 0, g.home_height]) +
                            rng.uniform(-0.3, 0.3, 3),
                            rng.uniform(-0.2, 0.2, 3))
        twist = rng.randn(6)
        v, w = twist[:3], twist[3:]
        R = pose.rotation()
        J = leg_rate_jacobian(g, pose)
        plus = _legs(g, pose.r + h * v,
                     Rotation.from_rotvec(h * w).as_matrix().dot(R))[1]
        minus = _legs(g, pose.r - h * v,
                      Rotation.from_rotvec(-h * w).as_matrix().dot(R))[1]
        fd = (plus - minus) / (2 * h)
        exact = J.dot(twist)
        worst = max(worst, np.max(np.abs(fd - exact)) /
                    np.max(np.abs(exact)))
    assert worst < 1e-5


def test_angular_rate_along_moment_arm_is_fastest():
    g = default_geometry()
    rng = np.random.RandomState(11)
    h = 1e-6
    pose = PlatformPose(np.array([0.1, -0.2, g.home_height + 0.1]),
                        np.array([0.05, -0.1, 0.2]))
    R = pose.rotation()
    _, _, s = leg_vectors(g, pose)
    arm = np.cross(np.asarray(g.cP).dot(R.T), s)

    def leg_rate(i, w):
        turn = Rotation.from_rotvec(h * w).as_matrix()
        plus = _legs(g, pose.r, turn.dot(R))[1][i]
        minus = _legs(g, pose.r, turn.T.dot(R))[1][i]
        return (plus - minus) / (2 * h)

    for i in range(LEGS):
        best = leg_rate(i, arm[i] / np.linalg.norm(arm[i]))
        assert abs(best - np.linalg.norm(arm[i])) < 1e-6
        for _ in range(50):
            other = rng.randn(3)
            other /= np.linalg.norm(other)
            assert abs(leg_rate(i, other)) <= best + 1e-6


def test_check_limits():
    limits = default_limits()
    assert check_limits(_zero_trace(), limits, 3.0) == []
    tr = _zero_trace()
    r = tr.r.copy()
    r[2, 2] = 1.0
    report = check_limits(tr._replace(r=r), limits, 3.0)
    assert len(report) == 1
    assert report[0].channel == 'z'
    assert abs(report[0].value - 4.0) < 1e-12
    assert abs(report[0].bound - 3.8) < 1e-12
    omega = tr.omega.copy()
    omega[1, 0] = deg(31.0)
    report = check_limits(tr._replace(omega=omega), limits, 3.0)
    assert [v.channel for v in report] == ['roll_vel']
    assert abs(report[0].bound - deg(30.0)) < 1e-12


def test_workspace_query():
    g = default_geometry()
    q = workspace_query(g, default_limits(), neutral_pose(g))
    assert q['violations'] == []
    assert q['jacobian_cond'] > 1.0


if __name__ == '__main__':
    test_rotation_matrix()
    test_leg_vectors_simple()
    test_degenerate_pose()
    test_default_geometry_neutral()
    test_yaw_keeps_symmetric_legs()
    test_translation_equivariance()
    test_jacobian_vertical_legs()
    test_jacobian_finite_differences()
    test_angular_rate_along_moment_arm_is_fastest()
    test_check_limits()
    test_workspace_query()
