#!/usr/bin/python
# -*- coding: utf-8 -*-

from __future__ import absolute_import, division, print_function, \
    with_statement

import math
import logging

import numpy as np
from scipy.linalg import expm


class MotionCueError(Exception):
    """ Base class of every error raised by the motioncue package. """


class ParameterError(MotionCueError, ValueError):
    pass


class DomainError(MotionCueError, ValueError):
    pass


class DimensionError(MotionCueError, ValueError):
    pass


class DegeneratePoseError(MotionCueError, ValueError):
    pass


class ConvergenceError(MotionCueError, RuntimeError):
    pass


class RegularityError(MotionCueError, RuntimeError):
    pass


class AssumptionError(MotionCueError, ValueError):
    pass


class ConfigError(MotionCueError, ValueError):
    pass


def deg(x):
    """ Convert degrees (scalar or array) to radians. """
    return np.deg2rad(x)


def to_matrix(a, name='matrix'):
    """ Return `a` as a finite 2-d float array.

    Scalars become 1x1 matrices, 1-d arrays become column vectors, the same
    way the DLQR helpers of python-control coerce their arguments with
    ``np.array(a, ndmin=2)``.
    """
    m = np.array(a, dtype=float, ndmin=2)
    if m.ndim != 2:
        raise DimensionError('%s must be 2-d, got shape %s' % (name, m.shape))
    if not np.all(np.isfinite(m)):
        raise ParameterError('%s has non-finite entries' % name)
    return m


def to_vector(a, size=None, name='vector'):
    v = np.array(a, dtype=float).ravel()
    if size is not None and v.size != size:
        raise DimensionError('%s must have %d entries, got %d' %
                             (name, size, v.size))
    if not np.all(np.isfinite(v)):
        raise ParameterError('%s has non-finite entries' % name)
    return v


class StateSpaceModel(object):
    """ Linear time-invariant model dx = A x + B u, y = C x.

    The same container is used for continuous and discrete models; `dt` is
    None for the continuous case. Instances are treated as immutable: the
    matrices are copied and flagged read-only on construction.
    """

    def __init__(self, A, B, C, dt=None):
        A = to_matrix(A, 'A')
        B = to_matrix(B, 'B')
        C = to_matrix(C, 'C')
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionError('A must be square, got %s' % (A.shape,))
        if B.shape[0] != n:
            raise DimensionError('B must have %d rows, got %d' %
                                 (n, B.shape[0]))
        if C.shape[1] != n:
            raise DimensionError('C must have %d columns, got %d' %
                                 (n, C.shape[1]))
        if dt is not None and not dt > 0:
            raise ParameterError('sample time must be positive, got %r' % dt)
        for m in (A, B, C):
            m.flags.writeable = False
        self.A, self.B, self.C = A, B, C
        self.dt = dt

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def p(self):
        return self.C.shape[0]

    def __repr__(self):
        kind = 'continuous' if self.dt is None else 'dt=%g' % self.dt
        return 'StateSpaceModel(n=%d, m=%d, p=%d, %s)' % (self.n, self.m,
                                                          self.p, kind)


def zoh(A, B, dt):
    """ Exact zero-order-hold discretization of (A, B).

    Uses the block exponential

            |A B|      |A_d B_d|
        exp(|0 0| dt) = |0   I |

    :return: (A_d, B_d)
    """
    n = A.shape[0]
    m = B.shape[1]
    M = np.zeros((n + m, n + m))
    M[:n, :n] = A
    M[:n, n:] = B
    Md = expm(M * dt)
    return Md[:n, :n], Md[:n, n:]


def euler(A, B, dt):
    """ Explicit Euler discretization, only used when asked for by config. """
    return np.eye(A.shape[0]) + A * dt, B * dt


DISCRETIZATIONS = {
    'zoh': zoh,
    'euler': euler,
}


def discretize_matrices(A, B, dt, method='zoh'):
    try:
        f = DISCRETIZATIONS[method]
    except KeyError:
        raise ParameterError('unknown discretization method %r' % method)
    if method != 'zoh':
        logging.debug('using %s discretization with dt=%g' % (method, dt))
    return f(A, B, dt)


def spectral_radius(A):
    if A.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(A))))


def cosine_ramp(s):
    """ Smooth 0 -> 1 ease on s in [0, 1], clipped outside. """
    s = min(max(s, 0.0), 1.0)
    if s >= 1.0:
        return 1.0
    return 0.5 - 0.5 * math.cos(math.pi * s)


def test_zoh_integrator():
    Ad, Bd = zoh(np.zeros((2, 2)), np.eye(2), 0.1)
    assert np.allclose(Ad, np.eye(2), atol=1e-14)
    assert np.allclose(Bd, 0.1 * np.eye(2), atol=1e-14)


def test_zoh_scalar():
    Ad, Bd = zoh(np.array([[-2.0]]), np.array([[1.0]]), 0.1)
    assert abs(Ad[0, 0] - math.exp(-0.2)) < 1e-10
    assert abs(Bd[0, 0] - (1 - math.exp(-0.2)) / 2) < 1e-10


def test_zoh_second_order():
    # eigenvalues -1 and -2, closed form from partial fractions
    A = np.array([[0.0, 1.0], [-2.0, -3.0]])
    B = np.array([[0.0], [1.0]])
    T = 0.3
    e1, e2 = math.exp(-T), math.exp(-2 * T)
    Ad_ref = np.array([[2 * e1 - e2, e1 - e2],
                       [-2 * e1 + 2 * e2, -e1 + 2 * e2]])
    Bd_ref = np.array([[(1 - e1) - (1 - e2) / 2],
                       [-(1 - e1) + (1 - e2)]])
    Ad, Bd = zoh(A, B, T)
    assert np.max(np.abs(Ad - Ad_ref)) < 1e-10
    assert np.max(np.abs(Bd - Bd_ref)) < 1e-10


def test_zoh_semigroup():
    rng = np.random.RandomState(3)
    A = rng.randn(4, 4) - 2 * np.eye(4)
    B = rng.randn(4, 2)
    Ad, Bd = zoh(A, B, 0.1)
    Ah, Bh = zoh(A, B, 0.05)
    assert np.max(np.abs(Ah.dot(Ah) - Ad)) < 1e-10
    assert np.max(np.abs(Ah.dot(Bh) + Bh - Bd)) < 1e-10


def test_state_space_dimensions():
    try:
        StateSpaceModel(np.eye(2), np.ones((3, 1)), np.ones((1, 2)))
    except DimensionError:
        pass
    else:
        assert False, 'inconsistent B accepted'
    m = StateSpaceModel(np.eye(2), np.ones((2, 1)), np.ones((1, 2)), dt=0.1)
    assert (m.n, m.m, m.p) == (2, 1, 1)


def test_cosine_ramp():
    assert cosine_ramp(0.0) == 0.0
    assert cosine_ramp(1.0) == 1.0
    assert cosine_ramp(2.0) == 1.0
    assert abs(cosine_ramp(0.5) - 0.5) < 1e-15


if __name__ == '__main__':
    test_zoh_integrator()
    test_zoh_scalar()
    test_zoh_second_order()
    test_zoh_semigroup()
    test_state_space_dimensions()
    test_cosine_ramp()
