#!/usr/bin/python
# -*- coding: utf-8 -*-

""" Switchable MPC: supervisory switching, command blending and the
receding-horizon feedback-law stability check.
"""

from __future__ import absolute_import, division, print_function, \
    with_statement

import time
import logging
import collections

import numpy as np

from motioncue.common import AssumptionError, ParameterError, \
    RegularityError, cosine_ramp, spectral_radius, to_matrix
from motioncue.prediction import Plant, OUTPUT
from motioncue.mpc import LoopResult, full_reference, reference_window, \
    terminal_target, controllable_subspace, TERMINAL_FORCE_AXES
from motioncue import qp


WITH_COTC = 'with_cotc'
WITHOUT_COTC = 'without_cotc'


class SupervisorState(collections.namedtuple('SupervisorState',
                                             ('active', 'alpha',
                                              'blend_time', 'epsilon',
                                              'hold_time', 'timer',
                                              'elapsed'))):
    """ Which controller is active, the blend weight alpha towards it, the
    ramp duration, the switch-back threshold epsilon (m/s^2), the hold time,
    how long the errors have stayed below epsilon, and the time since the
    last switch (None once the ramp has finished).
    """

    __slots__ = ()

    def validate(self):
        if self.active not in (WITH_COTC, WITHOUT_COTC):
            raise ParameterError('unknown controller %r' % (self.active,))
        if not 0.0 <= self.alpha <= 1.0:
            raise ParameterError('alpha must lie in [0, 1]')
        if not self.epsilon > 0:
            raise ParameterError('epsilon must be positive')
        if not self.blend_time > 0 or not self.hold_time >= 0:
            raise ParameterError('blend time must be positive and hold '
                                 'time non-negative')
        return self

    @property
    def ramping(self):
        return self.elapsed is not None

    @classmethod
    def initial(cls, blend_time=0.5, epsilon=0.05, hold_time=0.5):
        return cls(WITH_COTC, 1.0, float(blend_time), float(epsilon),
                   float(hold_time), 0.0, None).validate()

    @classmethod
    def from_config(cls, config):
        return cls.initial(config['supervisor.blend_time'],
                           config['supervisor.epsilon'],
                           config['supervisor.hold_time'])


def _switch(sup, target):
    # reversing mid-ramp mirrors the ramp so the blended command stays put
    elapsed = 0.0
    if sup.ramping:
        elapsed = max(sup.blend_time - sup.elapsed, 0.0)
    return sup._replace(active=target, timer=0.0, elapsed=elapsed,
                        alpha=cosine_ramp(elapsed / sup.blend_time))


def revert_due(sup, tracking_error, dt):
    """ True when the hold timer would expire this sample, the point at
    which the COTC problem has to be solved to allow a revert.
    """
    if sup.active != WITHOUT_COTC:
        return False
    small = all(abs(e) < sup.epsilon for e in tracking_error)
    return small and sup.timer + dt >= sup.hold_time - 1e-12


def decide(status, tracking_error, sup, dt):
    """ Advance the supervisor by one sample.

    Only a certified infeasible COTC problem hands over; an iteration limit
    keeps the current mode. The way back needs the perceived-force errors
    below epsilon for the hold time and an optimal COTC solve.

    :param status: QP status of the COTC controller this step, None when it
        was not solved
    :param tracking_error: (longitudinal, lateral) perceived-force errors
    :param dt: sample time (s)
    :return: new SupervisorState
    """
    if sup.ramping:
        elapsed = sup.elapsed + dt
        alpha = cosine_ramp(elapsed / sup.blend_time)
        sup = sup._replace(alpha=alpha,
                           elapsed=None if alpha >= 1.0 else elapsed)
    if sup.active == WITH_COTC:
        if status == qp.INFEASIBLE:
            logging.info('COTC QP infeasible, switching to MPC without COTC')
            return _switch(sup, WITHOUT_COTC)
        return sup
    small = all(abs(e) < sup.epsilon for e in tracking_error)
    timer = sup.timer + dt if small else 0.0
    if small and timer >= sup.hold_time - 1e-12 and status == qp.OPTIMAL:
        logging.info('tracking errors below %.3g for %.2f s, switching back '
                     'to COTC' % (sup.epsilon, timer))
        return _switch(sup, WITH_COTC)
    return sup._replace(timer=timer)


def blend(u_old, u_new, alpha):
    """ (1 - alpha) u_old + alpha u_new, exact at both ends. """
    if alpha <= 0.0:
        return np.array(u_old, dtype=float)
    if alpha >= 1.0:
        return np.array(u_new, dtype=float)
    return (1.0 - alpha) * np.asarray(u_old, float) + \
        alpha * np.asarray(u_new, float)


StabilityReport = collections.namedtuple('StabilityReport',
                                         ('residuals', 'spectral_radius',
                                          'controllable', 'observable',
                                          'horizon'))


def _rank_checks(A, B, C):
    n = A.shape[0]
    return controllable_subspace(A, B).shape[1] == n, \
        controllable_subspace(A.T, C.T).shape[1] == n


def feedback_gain(A, B, C, R, Np, Ts):
    """ Receding-horizon gains from the inverse Riccati recursion.

    With W = P^-1 and the terminal boundary W(Np) = 0 the recursion runs

        V    = A^-1 (W(k+1) + B R^-1 B') A^-T
        W(k) = V - V C' (I + C V C')^-1 C V

    and the gain at stage k is K(k) = R^-1 B' (W(k+1) + B R^-1 B')^-1 A, so
    that u = -K(0) x is the receding-horizon law.

    :return: (list of Np gains, StabilityReport)
    :raise AssumptionError: (A, B) uncontrollable or (A, C) unobservable
    :raise RegularityError: A singular, or W(1) + B R^-1 B' singular
        because the horizon is shorter than the controllability index
    """
    A, B, C, R = [to_matrix(M, name) for M, name in
                  ((A, 'A'), (B, 'B'), (C, 'C'), (R, 'R'))]
    if Np < 1:
        raise ParameterError('horizon must be at least one step')
    controllable, observable = _rank_checks(A, B, C)
    if not controllable:
        raise AssumptionError('(A, B) is not controllable')
    if not observable:
        raise AssumptionError('(A, C) is not observable')
    n = A.shape[0]
    if np.linalg.cond(A) > 1e12:
        raise RegularityError('A is singular, the recursion needs A^-1')
    Ainv = np.linalg.inv(A)
    BRB = B.dot(np.linalg.solve(R, B.T))
    W = np.zeros((n, n))
    gains, residuals = [], []
    RB = np.linalg.solve(R, B.T)
    for k in range(Np):
        M = W + BRB
        if np.linalg.cond(M) > 1e12:
            # W has full rank only once the recursion has run n / m stages
            if k == Np - 1:
                raise RegularityError('W + B R^-1 B\' is singular at the '
                                      'first stage, horizon too short')
            gains.append(RB.dot(np.linalg.pinv(M, rcond=1e-12)).dot(A))
        else:
            gains.append(RB.dot(np.linalg.solve(M, A)))
        V = Ainv.dot(M).dot(Ainv.T)
        S = np.eye(C.shape[0]) + C.dot(V).dot(C.T)
        W_next = V - V.dot(C.T).dot(np.linalg.solve(S, C.dot(V)))
        W_next = 0.5 * (W_next + W_next.T)
        residuals.append(float(np.max(np.abs(W_next - W))))
        W = W_next
    # built backwards from the terminal stage
    gains.reverse()
    radius = spectral_radius(A - B.dot(gains[0]))
    report = StabilityReport(residuals, radius, controllable, observable,
                             Np * Ts)
    logging.debug('feedback gain: closed-loop spectral radius %.6f' % radius)
    return gains, report


def verify_stability(discrete, Np, R):
    """ feedback_gain on the minimal part of a discrete model.

    The model is restricted to its reachable subspace and then projected
    onto the complement of the unobservable one.
    """
    V = controllable_subspace(discrete.A, discrete.B)
    A = V.T.dot(discrete.A).dot(V)
    B = V.T.dot(discrete.B)
    C = discrete.C.dot(V)
    W = controllable_subspace(A.T, C.T)
    A, B, C = W.T.dot(A).dot(W), W.T.dot(B), C.dot(W)
    logging.debug('stability check on %d of %d states' %
                  (A.shape[0], discrete.n))
    return feedback_gain(A, B, C, R, Np, discrete.dt)


def run_smpc(discrete, perceived, Ts, cotc, nocotc, sup):
    """ Closed loop of the switchable controller.

    The COTC controller runs while its QP is solvable; on a certified
    infeasible problem the supervisor hands over to the controller without
    COTC and blends the two commands over the ramp. Within the ramp an
    infeasible COTC problem contributes its relaxed plan. Control returns
    once the perceived lateral and longitudinal errors stay small for the
    hold time and the COTC problem is solvable again.

    :return: LoopResult with the per-step active controller, alpha and
        status, and the switch log (t, from, to)
    """
    plant = Plant(discrete)
    cotc.reset()
    nocotc.reset()
    sup.validate()
    ref = full_reference(perceived)
    N, Np = ref.shape[0], cotc.weights.Np
    axes = list(TERMINAL_FORCE_AXES)
    force = OUTPUT['force']
    u_log = np.zeros((N, discrete.m))
    y_log = np.zeros((N, discrete.p))
    status_log, active_log, alpha_log, switches = [], [], np.zeros(N), []
    controllers = {WITH_COTC: cotc, WITHOUT_COTC: nocotc}
    started = time.time()
    for k in range(N):
        y = plant.y
        y_log[k] = y
        x = plant.augmented_state()
        window = reference_window(ref, k, Np)
        target = terminal_target(ref, k)
        errors = (y[force] - ref[k, force])[axes]
        outputs, status = {}, None
        if sup.active == WITH_COTC or sup.ramping or \
                revert_due(sup, errors, Ts):
            outputs[WITH_COTC], sol = cotc.step(x, window, target,
                                                relax=True)
            status = sol.status
        if sup.active == WITHOUT_COTC or sup.ramping or \
                status == qp.INFEASIBLE:
            outputs[WITHOUT_COTC], sol_n = nocotc.step(x, window, target)
        before = sup.active
        sup = decide(status, errors, sup, Ts)
        if sup.active != before:
            switches.append((k * Ts, before, sup.active))
        if sup.active not in outputs:
            outputs[sup.active] = controllers[sup.active].u_prev
        other = WITHOUT_COTC if sup.active == WITH_COTC else WITH_COTC
        if other in outputs and sup.alpha < 1.0:
            u = blend(outputs[other], outputs[sup.active], sup.alpha)
        else:
            u = outputs[sup.active]
        leader = controllers[sup.active]
        for name, ctrl in controllers.items():
            ctrl.sync(u)
            if ctrl is not leader and leader.tail is not None:
                ctrl.tail = leader.tail.copy()
        u_log[k] = u
        status_log.append(status if status is not None else
                          nocotc.last.status)
        active_log.append(sup.active)
        alpha_log[k] = sup.alpha
        plant.step(u)
    logging.info('smpc: %d steps in %.2f s, %d switches' %
                 (N, time.time() - started, len(switches)))
    return LoopResult(np.arange(N) * Ts, u_log, y_log, status_log,
                      active_log, alpha_log, switches)


def _sup():
    return SupervisorState.initial(0.5, 0.05, 0.5)


def test_decide_switches_on_infeasible():
    sup = decide(qp.INFEASIBLE, (0.0, 0.0), _sup(), 0.01)
    assert sup.active == WITHOUT_COTC
    assert sup.ramping and sup.alpha == 0.0


def test_decide_unchanged_when_optimal():
    sup = _sup()
    for err in ((0.0, 0.0), (5.0, -3.0)):
        assert decide(qp.OPTIMAL, err, sup, 0.01) == sup


def test_decide_reverts_after_hold():
    sup = decide(qp.INFEASIBLE, (0.0, 0.0), _sup(), 0.01)
    steps = 0
    while sup.active == WITHOUT_COTC:
        sup = decide(qp.OPTIMAL, (0.01, -0.02), sup, 0.01)
        steps += 1
        assert steps < 1000
    assert abs(steps * 0.01 - 0.5) < 0.011


def test_decide_iteration_limit_keeps_mode():
    sup = _sup()
    assert decide(qp.ITERATION_LIMIT, (3.0, 3.0), sup, 0.01) == sup
    assert decide(None, (0.0, 0.0), sup, 0.01) == sup


def test_decide_revert_needs_feasible_cotc():
    sup = decide(qp.INFEASIBLE, (0.0, 0.0), _sup(), 0.1)
    for status in (None, None, None, None, qp.INFEASIBLE, None,
                   qp.ITERATION_LIMIT):
        sup = decide(status, (0.0, 0.0), sup, 0.1)
        assert sup.active == WITHOUT_COTC
    assert sup.timer >= 0.5
    assert revert_due(sup, (0.0, 0.0), 0.1)
    assert not revert_due(sup, (0.0, 0.2), 0.1)
    sup = decide(qp.OPTIMAL, (0.0, 0.0), sup, 0.1)
    assert sup.active == WITH_COTC and sup.ramping
    assert not revert_due(sup, (0.0, 0.0), 0.1)


def test_decide_error_resets_timer():
    sup = decide(qp.INFEASIBLE, (0.0, 0.0), _sup(), 0.1)
    sup = decide(qp.OPTIMAL, (0.0, 0.0), sup, 0.1)
    sup = decide(qp.OPTIMAL, (0.0, 0.0), sup, 0.1)
    assert sup.timer > 0.15
    sup = decide(qp.OPTIMAL, (0.0, 0.2), sup, 0.1)
    assert sup.timer == 0.0 and sup.active == WITHOUT_COTC


def test_decide_deterministic():
    rng = np.random.RandomState(0)
    events = [(rng.choice([qp.OPTIMAL, qp.INFEASIBLE]), rng.randn(2) * 0.05)
              for _ in range(300)]
    runs = []
    for _ in range(2):
        sup, log = _sup(), []
        for status, err in events:
            sup = decide(status, err, sup, 0.01)
            log.append((sup.active, sup.alpha))
        runs.append(log)
    assert runs[0] == runs[1]


def test_alpha_ramp():
    sup = decide(qp.INFEASIBLE, (1.0, 1.0), _sup(), 0.01)
    alphas = [sup.alpha]
    for _ in range(60):
        sup = decide(qp.OPTIMAL, (1.0, 1.0), sup, 0.01)
        alphas.append(sup.alpha)
    assert np.all(np.diff(alphas) >= 0.0)
    assert np.max(np.diff(alphas)) < 0.05
    assert alphas[50] == 1.0 and not sup.ramping


def test_reversal_mid_ramp_is_continuous():
    sup = decide(qp.INFEASIBLE, (1.0, 1.0), _sup(), 0.01)
    for _ in range(10):
        sup = decide(qp.OPTIMAL, (1.0, 1.0), sup, 0.01)
    weight_nocotc = sup.alpha
    reverted = _switch(sup, WITH_COTC)
    assert abs((1.0 - reverted.alpha) - weight_nocotc) < 1e-12


def test_blend():
    a, b = np.array([1.0, -2.0]), np.array([3.0, 4.0])
    assert np.array_equal(blend(a, b, 0.0), a)
    assert np.array_equal(blend(a, b, 1.0), b)
    for alpha in np.linspace(0, 1, 11):
        u = blend(a, b, alpha)
        assert np.all(u >= np.minimum(a, b) - 1e-15)
        assert np.all(u <= np.maximum(a, b) + 1e-15)
        assert np.array_equal(blend(a, a, alpha), a)


def test_feedback_gain_scalar():
    gains, report = feedback_gain([[1.2]], [[1.0]], [[1.0]], [[1.0]], 60,
                                  0.01)
    assert len(gains) == 60
    assert report.spectral_radius < 1.0
    p = (1.44 + np.sqrt(1.44 ** 2 + 4.0)) / 2.0
    assert abs(gains[0][0, 0] - 1.2 * p / (1.0 + p)) < 1e-9
    assert abs(report.spectral_radius - (1.2 - 1.2 * p / (1.0 + p))) < 1e-9


def test_feedback_gain_rank_rejection():
    try:
        feedback_gain(np.eye(2) * 0.5, np.zeros((2, 1)), np.eye(2), [[1.0]],
                      10, 0.1)
    except AssumptionError:
        pass
    else:
        assert False, 'uncontrollable pair accepted'
    try:
        feedback_gain(np.diag([0.5, 0.7]), [[1.0], [1.0]], [[1.0, 0.0]],
                      [[1.0]], 10, 0.1)
    except AssumptionError:
        pass
    else:
        assert False, 'unobservable pair accepted'


def test_feedback_gain_singular_a():
    try:
        feedback_gain([[0.0, 1.0], [0.0, 0.0]], [[0.0], [1.0]],
                      [[1.0, 0.0]], [[1.0]], 10, 0.1)
    except RegularityError:
        pass
    else:
        assert False, 'singular A accepted'


def test_feedback_gain_converges_with_horizon():
    A = np.array([[1.1, 0.2], [0.0, 0.95]])
    B = np.array([[0.0], [1.0]])
    C = np.array([[1.0, 0.0]])
    g40, r40 = feedback_gain(A, B, C, [[0.5]], 40, 0.1)
    g80, r80 = feedback_gain(A, B, C, [[0.5]], 80, 0.1)
    assert np.max(np.abs(g40[0] - g80[0])) < 1e-6
    assert r80.spectral_radius < 1.0
    assert r40.controllable and r40.observable


if __name__ == '__main__':
    test_decide_switches_on_infeasible()
    test_decide_unchanged_when_optimal()
    test_decide_reverts_after_hold()
    test_decide_iteration_limit_keeps_mode()
    test_decide_revert_needs_feasible_cotc()
    test_decide_error_resets_timer()
    test_decide_deterministic()
    test_alpha_ramp()
    test_reversal_mid_ramp_is_continuous()
    test_blend()
    test_feedback_gain_scalar()
    test_feedback_gain_rank_rejection()
    test_feedback_gain_singular_a()
    test_feedback_gain_converges_with_horizon()
