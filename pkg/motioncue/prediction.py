#!/usr/bin/python
# -*- coding: utf-8 -*-

""" Prediction models used by the MPC controllers.

The integrated continuous model stacks the platform double integrators, the
rotation and tilt angles, the vestibular model driven by what the operator
feels, and the leg-length deviations from the linearized kinematics:

    x_t = [r (3), v (3), beta_rot (3), beta_tilt (2), x_p (21), dl (6)]
    u   = [a_p (3), w_rot (3), w_tilt (2)]
    y   = [f_hat (3), w_hat (3), r (3), v (3), beta (3), beta_rot (3), dl (6)]

r is measured from the neutral pose and dl from the neutral leg lengths. The
total platform angular velocity is w_rot + E w_tilt, where E puts the two
tilt channels on the roll and pitch axes.
"""

from __future__ import absolute_import, division, print_function, \
    with_statement

import logging
import collections

import numpy as np

from motioncue.common import StateSpaceModel, DimensionError, \
    ParameterError, discretize_matrices, spectral_radius, to_matrix, \
    to_vector
from motioncue import vestibular


STATE = collections.OrderedDict([
    ('r', slice(0, 3)),
    ('v', slice(3, 6)),
    ('beta_rot', slice(6, 9)),
    ('beta_tilt', slice(9, 11)),
    ('x_p', slice(11, 32)),
    ('dl', slice(32, 38)),
])
INPUT = collections.OrderedDict([
    ('a', slice(0, 3)),
    ('w_rot', slice(3, 6)),
    ('w_tilt', slice(6, 8)),
])
OUTPUT = collections.OrderedDict([
    ('force', slice(0, 3)),
    ('omega_hat', slice(3, 6)),
    ('r', slice(6, 9)),
    ('v', slice(9, 12)),
    ('beta', slice(12, 15)),
    ('beta_rot', slice(15, 18)),
    ('dl', slice(18, 24)),
])
N_STATE = 38
N_INPUT = 8
N_OUTPUT = 24
PERCEIVED = slice(0, 6)

# tilt channel 0 is roll, channel 1 is pitch
TILT_TO_BODY = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])


class IntegratedModel(collections.namedtuple('IntegratedModel',
                                             ('model', 'q_P', 'C_D0',
                                              'vestibular', 'J'))):
    """ Continuous integrated model with its eye-point offset q_P, the
    operator-frame rotation C_D0, the vestibular model and the neutral-pose
    leg-rate Jacobian it was built from.
    """

    __slots__ = ()


def build_integrated(vest, J, q_P=None, C_D0=None):
    """ Assemble the 38-state integrated model.

    The operator-frame acceleration a_D = C_D0 a_p keeps only the linear
    term: at the neutral operating point the eye-point cross terms are of
    second order, so q_P does not enter the LTI matrices.

    :param vest: VestibularModel from vestibular.assemble_vestibular
    :param J: 6x6 leg-rate Jacobian at the neutral pose
    """
    J = to_matrix(J, 'J')
    if J.shape != (6, 6):
        raise DimensionError('J must be 6x6, got %s' % (J.shape,))
    q_P = np.zeros(3) if q_P is None else to_vector(q_P, 3, 'q_P')
    C_D0 = np.eye(3) if C_D0 is None else to_matrix(C_D0, 'C_D0')
    if C_D0.shape != (3, 3):
        raise DimensionError('C_D0 must be 3x3, got %s' % (C_D0.shape,))
    vm = vest.model
    if (vm.n, vm.m, vm.p) != (21, 8, 8):
        raise DimensionError('vestibular model must be 21x8x8, got %r' % vm)

    A = np.zeros((N_STATE, N_STATE))
    B = np.zeros((N_STATE, N_INPUT))
    s, u = STATE, INPUT
    A[s['r'], s['v']] = np.eye(3)
    B[s['v'], u['a']] = np.eye(3)
    B[s['beta_rot'], u['w_rot']] = np.eye(3)
    B[s['beta_tilt'], u['w_tilt']] = np.eye(2)

    # vestibular inputs in the operator frame
    to_vest = np.zeros((8, N_INPUT))
    to_vest[vest.inputs['a'], u['a']] = C_D0
    to_vest[vest.inputs['w_rot'], u['w_rot']] = C_D0
    to_vest[vest.inputs['w_tilt'], u['w_tilt']] = np.eye(2)
    A[s['x_p'], s['x_p']] = vm.A
    B[s['x_p'], :] = vm.B.dot(to_vest)

    # dl' = J [v; w_rot + E w_tilt]
    A[s['dl'], s['v']] = J[:, :3]
    B[s['dl'], u['w_rot']] = J[:, 3:]
    B[s['dl'], u['w_tilt']] = J[:, 3:].dot(TILT_TO_BODY)

    C = np.zeros((N_OUTPUT, N_STATE))
    o = OUTPUT
    Cv = vm.C
    C[o['force'], s['x_p']] = Cv[vest.outputs['a_hat'], :] + \
        vest.tilt_force_map.dot(Cv[vest.outputs['a_tilt_hat'], :])
    C[o['omega_hat'], s['x_p']] = Cv[vest.outputs['w_hat'], :]
    C[o['r'], s['r']] = np.eye(3)
    C[o['v'], s['v']] = np.eye(3)
    C[o['beta'], s['beta_rot']] = np.eye(3)
    C[o['beta'], s['beta_tilt']] = TILT_TO_BODY
    C[o['beta_rot'], s['beta_rot']] = np.eye(3)
    C[o['dl'], s['dl']] = np.eye(6)

    model = StateSpaceModel(A, B, C)
    logging.debug('integrated model %r' % model)
    return IntegratedModel(model, q_P, C_D0, vest, J)


def discretize(model, Ts, method='zoh'):
    """ Discretize a continuous model (or an IntegratedModel) with sample
    time Ts, exact zero-order hold by default.

    :return: StateSpaceModel with dt=Ts, C unchanged
    """
    model = getattr(model, 'model', model)
    if not Ts > 0:
        raise ParameterError('sample time must be positive, got %r' % Ts)
    Am, Bm = discretize_matrices(model.A, model.B, Ts, method)
    return StateSpaceModel(Am, Bm, model.C, dt=Ts)


class AugmentedModel(StateSpaceModel):
    """ Incremental model with state [dx_m(k); y(k)] and input du(k).

        A = | A_m      0 |   B = | B_m     |   C = [0 I]
            | C_m A_m  I |       | C_m B_m |
    """

    def __init__(self, base):
        Am, Bm, Cm = base.A, base.B, base.C
        n, p = base.n, base.p
        A = np.zeros((n + p, n + p))
        A[:n, :n] = Am
        A[n:, :n] = Cm.dot(Am)
        A[n:, n:] = np.eye(p)
        B = np.vstack([Bm, Cm.dot(Bm)])
        C = np.hstack([np.zeros((p, n)), np.eye(p)])
        super(AugmentedModel, self).__init__(A, B, C, dt=base.dt)
        self.base = base

    @property
    def n_base(self):
        return self.base.n


def augment(discrete):
    return AugmentedModel(discrete)


class Plant(object):
    """ Discrete platform model stepped with absolute inputs.

    Keeps x_m(k) and x_m(k-1) so the controllers can read the augmented
    state [x_m(k) - x_m(k-1); C_m x_m(k)].
    """

    def __init__(self, discrete):
        self.model = discrete
        self.x = np.zeros(discrete.n)
        self.x_prev = np.zeros(discrete.n)

    def reset(self):
        self.x[:] = 0.0
        self.x_prev[:] = 0.0

    def step(self, u):
        u = to_vector(u, self.model.m, 'u')
        self.x_prev = self.x
        self.x = self.model.A.dot(self.x) + self.model.B.dot(u)
        return self.x

    @property
    def y(self):
        return self.model.C.dot(self.x)

    def augmented_state(self):
        return np.concatenate([self.x - self.x_prev, self.y])

    def signals(self):
        """ Current r, v, beta_rot, beta_tilt and dl as a dict. """
        return dict((k, self.x[STATE[k]].copy())
                    for k in ('r', 'v', 'beta_rot', 'beta_tilt', 'dl'))


def build_prediction(config, geom=None):
    """ Integrated, discrete and augmented models from a config dict. """
    from motioncue import kinematics
    if geom is None:
        geom = kinematics.geometry_from_config(config)
    vest = vestibular.assemble_vestibular(
        vestibular.VestibularParams.from_config(config))
    J = kinematics.leg_rate_jacobian(geom, kinematics.neutral_pose(geom))
    integrated = build_integrated(vest, J, config['prediction.q_P'],
                                  config['prediction.C_D0'])
    discrete = discretize(integrated, config['prediction.ts'],
                          config['discretization'])
    return integrated, discrete, augment(discrete)


def _random_stable(rng, n, m, p):
    A = rng.randn(n, n)
    A = A - (np.max(np.real(np.linalg.eigvals(A))) + 0.5) * np.eye(n)
    return StateSpaceModel(A, rng.randn(n, m), rng.randn(p, n))


def _default_integrated(**kw):
    from motioncue import kinematics
    g = kinematics.default_geometry()
    J = kinematics.leg_rate_jacobian(g, kinematics.neutral_pose(g))
    return build_integrated(vestibular.assemble_vestibular(), J, **kw)


def test_integrated_dimensions():
    im = _default_integrated()
    assert (im.model.n, im.model.m, im.model.p) == (38, 8, 24)
    try:
        build_integrated(vestibular.assemble_vestibular(), np.eye(5))
    except DimensionError:
        pass
    else:
        assert False, '5x5 Jacobian accepted'


def test_integrated_zero_input():
    d = discretize(_default_integrated(), 0.01)
    plant = Plant(d)
    for _ in range(50):
        plant.step(np.zeros(8))
    assert np.all(plant.x == 0.0)


def test_integrated_double_integrator():
    Ts = 0.01
    d = discretize(_default_integrated(), Ts)
    plant = Plant(d)
    u = np.zeros(8)
    u[0] = 1.0
    for _ in range(100):
        plant.step(u)
    t = 100 * Ts
    sig = plant.signals()
    assert abs(sig['v'][0] - t) < 1e-9
    assert abs(sig['r'][0] - 0.5 * t * t) < 1e-9
    assert np.allclose(sig['v'][1:], 0.0)


def test_integrated_leg_rows():
    im = _default_integrated()
    A, B = im.model.A, im.model.B
    rows = STATE['dl']
    assert np.array_equal(A[rows, STATE['v']], im.J[:, :3])
    assert np.array_equal(B[rows, INPUT['w_rot']], im.J[:, 3:])
    assert np.array_equal(B[rows, INPUT['w_tilt']], im.J[:, 3:5])
    assert np.all(A[rows, :3] == 0.0)


def test_integrated_neutral_eye_point():
    # with C_D0 = I the vestibular block sees the platform inputs unchanged
    im = _default_integrated()
    vest = im.vestibular
    Bx = im.model.B[STATE['x_p'], :]
    Bv = vest.model.B
    assert np.array_equal(Bx[:, INPUT['a']], Bv[:, vest.inputs['a']])
    assert np.array_equal(Bx[:, INPUT['w_rot']], Bv[:, vest.inputs['w_rot']])
    assert np.array_equal(Bx[:, INPUT['w_tilt']],
                          Bv[:, vest.inputs['w_tilt']])
    shifted = _default_integrated(q_P=[0.2, 0.0, 0.5])
    assert np.array_equal(shifted.model.A, im.model.A)


def test_discretize_integrator():
    d = discretize(StateSpaceModel(np.zeros((2, 2)), np.eye(2), np.eye(2)),
                   0.1)
    assert np.allclose(d.A, np.eye(2), atol=1e-14)
    assert np.allclose(d.B, 0.1 * np.eye(2), atol=1e-14)
    assert d.dt == 0.1


def test_discretize_scalar():
    d = discretize(StateSpaceModel([[-2.0]], [[1.0]], [[1.0]]), 0.1)
    assert abs(d.A[0, 0] - np.exp(-0.2)) < 1e-10
    assert abs(d.B[0, 0] - (1 - np.exp(-0.2)) / 2) < 1e-10


def test_discretize_hurwitz():
    rng = np.random.RandomState(11)
    for _ in range(10):
        d = discretize(_random_stable(rng, 5, 2, 2), 0.05)
        assert spectral_radius(d.A) < 1.0


def test_augment_layout():
    rng = np.random.RandomState(5)
    d = discretize(_random_stable(rng, 4, 2, 3), 0.1)
    aug = augment(d)
    assert np.array_equal(aug.C, np.hstack([np.zeros((3, 4)), np.eye(3)]))
    assert np.array_equal(aug.A[4:, :4], d.C.dot(d.A))
    assert np.array_equal(aug.A[:4, 4:], np.zeros((4, 3)))


def test_augment_parallel_simulation():
    for seed in range(20):
        rng = np.random.RandomState(seed)
        n, m, p = rng.randint(1, 7), rng.randint(1, 4), rng.randint(1, 5)
        d = discretize(_random_stable(rng, n, m, p), 0.05)
        aug = augment(d)
        plant = Plant(d)
        xa = plant.augmented_state()
        u_prev = np.zeros(m)
        worst = 0.0
        for _ in range(100):
            u = rng.randn(m)
            xa = aug.A.dot(xa) + aug.B.dot(u - u_prev)
            plant.step(u)
            u_prev = u
            worst = max(worst, np.max(np.abs(aug.C.dot(xa) - plant.y)))
        assert worst < 1e-10, (seed, worst)


def test_augment_static_model():
    d = StateSpaceModel(np.eye(2), np.zeros((2, 1)), [[1.0, 2.0]], dt=0.1)
    aug = augment(d)
    xa = np.array([0.0, 0.0, 3.0])
    for _ in range(10):
        xa = aug.A.dot(xa) + aug.B.dot([1.0])
    assert np.allclose(aug.C.dot(xa), [3.0])


if __name__ == '__main__':
    test_integrated_dimensions()
    test_integrated_zero_input()
    test_integrated_double_integrator()
    test_integrated_leg_rows()
    test_integrated_neutral_eye_point()
    test_discretize_integrator()
    test_discretize_scalar()
    test_discretize_hurwitz()
    test_augment_layout()
    test_augment_parallel_simulation()
    test_augment_static_model()
