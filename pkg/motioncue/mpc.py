#!/usr/bin/python
# -*- coding: utf-8 -*-

""" Receding-horizon controllers on the augmented prediction model.

The decision vector is the stacked input increments du(0..Nc-1); the inputs
are held after Nc. With COTC the problem carries a Riccati terminal weight
and terminal equalities (platform back at rest in the neutral position, and
the terminal lateral / longitudinal specific force equal to the reference at
the start of the window). Without COTC the terminal weight is Q and there are
no terminal rows.
"""

from __future__ import absolute_import, division, print_function, \
    with_statement

import time
import logging
import collections

import numpy as np
from scipy import linalg

from motioncue.common import ConvergenceError, ParameterError, \
    DimensionError, to_matrix, to_vector, spectral_radius
from motioncue.prediction import OUTPUT, INPUT, N_OUTPUT, N_INPUT, \
    TILT_TO_BODY, Plant, PERCEIVED
from motioncue import qp


VERBOSE_LEVEL = 5

TERMINAL_MODES = ('workspace', 'all')

# total platform angular velocity from the input vector
OMEGA_MAP = np.hstack([np.zeros((3, 3)), np.eye(3), TILT_TO_BODY])

# specific-force axes held by the terminal equality: longitudinal, lateral
TERMINAL_FORCE_AXES = (0, 1)


class MpcWeights(collections.namedtuple('MpcWeights',
                                        ('Q', 'R', 'S', 'Q_Np', 'Np', 'Nc'))):
    """ Output weight Q (p x p), input-rate weight R and input weight S
    (m x m), horizons Np >= Nc >= 1. Q_Np is the terminal state weight on the
    augmented model, None to let the controller derive it.
    """

    __slots__ = ()

    def validate(self):
        for name in ('Q', 'R', 'S'):
            M = to_matrix(getattr(self, name), name)
            if M.shape[0] != M.shape[1]:
                raise DimensionError('%s must be square' % name)
            if np.any(M != np.diag(np.diag(M))):
                raise ParameterError('%s must be diagonal' % name)
            if np.any(np.diag(M) < 0):
                raise ParameterError('%s has negative entries' % name)
        if np.any(np.diag(self.R) <= 0):
            raise ParameterError('R must be positive definite')
        if not (isinstance(self.Np, int) and isinstance(self.Nc, int) and
                1 <= self.Nc <= self.Np):
            raise ParameterError('need 1 <= Nc <= Np, got Nc=%r Np=%r' %
                                 (self.Nc, self.Np))
        return self

    @classmethod
    def from_config(cls, config):
        q = np.zeros(N_OUTPUT)
        q[PERCEIVED] = config['mpc.q_perceived']
        for key in ('r', 'v', 'beta', 'beta_rot'):
            q[OUTPUT[key]] = config['mpc.q_workspace']
        q[OUTPUT['dl']] = config['mpc.q_legs']
        return cls(np.diag(q), config['mpc.r'] * np.eye(N_INPUT),
                   config['mpc.s'] * np.eye(N_INPUT), None,
                   int(config['mpc.np']), int(config['mpc.nc'])).validate()


class Constraints(collections.namedtuple('Constraints',
                                         ('y_lo', 'y_hi', 'u_lo', 'u_hi',
                                          'du_lo', 'du_hi', 'omega_max',
                                          'leg_rate', 'J'))):
    """ Box constraints over outputs, inputs and input increments, the total
    angular-velocity bound and the leg-rate bound with its Jacobian. Infinite
    entries are unconstrained.
    """

    __slots__ = ()


def unconstrained(p=N_OUTPUT, m=N_INPUT):
    inf = np.inf
    return Constraints(np.full(p, -inf), np.full(p, inf), np.full(m, -inf),
                       np.full(m, inf), np.full(m, -inf), np.full(m, inf),
                       None, None, None)


def build_constraints(limits, l0, J, Ts, tilt_rate_limit):
    """ Constraint sets populated from the actuator limits.

    :param l0: neutral leg lengths (the dl outputs are deviations from them)
    :param tilt_rate_limit: bound on the tilt-rate inputs (rad/s)
    """
    c = unconstrained()
    y_lo, y_hi = c.y_lo.copy(), c.y_hi.copy()
    y_lo[OUTPUT['r']] = limits.excursion_min[:3]
    y_hi[OUTPUT['r']] = limits.excursion_max[:3]
    y_lo[OUTPUT['v']] = -limits.velocity[:3]
    y_hi[OUTPUT['v']] = limits.velocity[:3]
    y_lo[OUTPUT['beta']] = limits.excursion_min[3:]
    y_hi[OUTPUT['beta']] = limits.excursion_max[3:]
    y_lo[OUTPUT['dl']] = limits.leg_min - l0
    y_hi[OUTPUT['dl']] = limits.leg_max - l0

    u_hi = np.concatenate([limits.acceleration[:3], limits.velocity[3:],
                           [tilt_rate_limit] * 2])
    du_hi = np.full(N_INPUT, np.inf)
    du_hi[INPUT['w_rot']] = limits.acceleration[3:] * Ts
    du_hi[INPUT['w_tilt']] = limits.acceleration[3:5] * Ts
    return Constraints(y_lo, y_hi, -u_hi, u_hi, -du_hi, du_hi,
                       np.asarray(limits.velocity[3:], float),
                       float(limits.leg_rate), np.asarray(J, float))


def riccati_residual(A, B, Q, R, P):
    """ max |A'PA - A'PB (R + B'PB)^-1 B'PA + Q - P| """
    BtPA = B.T.dot(P).dot(A)
    rhs = A.T.dot(P).dot(A) - BtPA.T.dot(
        np.linalg.solve(R + B.T.dot(P).dot(B), BtPA)) + Q
    return float(np.max(np.abs(rhs - P))) if P.size else 0.0


def terminal_weight(A, B, Q, R, tol=1e-10, max_iter=100):
    """ Stabilizing solution of the discrete algebraic Riccati equation

        P = A'PA - A'PB (R + B'PB)^-1 B'PA + Q

    by the structure-preserving doubling iteration started from
    G = B R^-1 B', H = Q.

    :raise ConvergenceError: when the iteration does not settle within
        max_iter doublings or the final residual exceeds tol
    """
    A = to_matrix(A, 'A')
    B = to_matrix(B, 'B')
    Q = to_matrix(Q, 'Q')
    R = to_matrix(R, 'R')
    n = A.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    Ak = A.copy()
    Gk = B.dot(np.linalg.solve(R, B.T))
    Hk = 0.5 * (Q + Q.T)
    eye = np.eye(n)
    for it in range(1, max_iter + 1):
        W = eye + Gk.dot(Hk)
        WA = np.linalg.solve(W, Ak)
        WG = np.linalg.solve(W, Gk)
        H_next = Hk + Ak.T.dot(Hk).dot(WA)
        Gk = Gk + Ak.dot(WG).dot(Ak.T)
        Ak = Ak.dot(WA)
        H_next = 0.5 * (H_next + H_next.T)
        if not np.all(np.isfinite(H_next)):
            raise ConvergenceError('Riccati iteration diverged after %d '
                                   'doublings' % it)
        step = np.max(np.abs(H_next - Hk))
        Hk = H_next
        if step <= 1e-15 * max(1.0, np.max(np.abs(Hk))):
            break
    else:
        raise ConvergenceError('Riccati iteration did not converge in %d '
                               'doublings' % max_iter)
    res = riccati_residual(A, B, Q, R, Hk)
    logging.debug('riccati: %d doublings, residual %.3e' % (it, res))
    if res > tol * max(1.0, float(np.max(np.abs(Hk)))):
        raise ConvergenceError('Riccati residual %.3e above tolerance %.1e' %
                               (res, tol))
    return Hk


def controllable_subspace(A, B, tol=1e-7):
    """ Orthonormal basis of the reachable subspace of (A, B).

    Staircase construction: each pass deflates A V_new against the basis
    found so far and keeps the directions whose singular value exceeds
    tol * max(1, |A|, |B|).
    """
    A = to_matrix(A, 'A')
    B = to_matrix(B, 'B')
    n = A.shape[0]
    floor = tol * max(1.0, np.linalg.norm(A, 2),
                      np.linalg.norm(B, 2) if B.size else 0.0)

    def directions(M):
        if M.size == 0:
            return np.zeros((n, 0))
        U, s, _ = linalg.svd(M, full_matrices=False)
        return U[:, s > floor]

    V = directions(B)
    new = V
    while new.shape[1] and V.shape[1] < n:
        M = A.dot(new)
        # twice is enough to be orthogonal to working precision
        M -= V.dot(V.T.dot(M))
        M -= V.dot(V.T.dot(M))
        new = directions(M)[:, :n - V.shape[1]]
        V = np.hstack([V, new])
    return V


def unstabilizable_modes(A, B, tol=1e-7):
    """ Eigenvalues on or outside the unit circle that fail the PBH test
    rank [lambda I - A, B] = n at the relative tolerance tol.
    """
    A = to_matrix(A, 'A')
    B = to_matrix(B, 'B')
    n = A.shape[0]
    if n == 0:
        return []
    scale = max(1.0, np.linalg.norm(np.hstack([A, B]), 2))
    bad = []
    for lam in np.linalg.eigvals(A):
        if abs(lam) < 1.0 - 1e-6:
            continue
        M = np.hstack([lam * np.eye(n) - A, B.astype(complex)])
        s = linalg.svdvals(M)
        if s[-1] <= tol * scale:
            bad.append(lam)
    return bad


def augmented_terminal_weight(aug, Q, R, reg=1e-8, tol=1e-10,
                              max_iter=100, rank_tol=1e-7):
    """ Riccati terminal weight of the augmented model with the output
    weight lifted to C'QC, solved on the controllable subspace and mapped
    back as V P_c V'.

    Weakly reachable integrator combinations (leg lengths against pose,
    tilt angle against its rate) sit on the unit circle; the rank
    tolerance is coarsened until the reduced pair has none left.

    :raise ConvergenceError: no tolerance up to 1e4 rank_tol gives a
        stabilizable reduced pair, or the doubling fails on it
    """
    error = None
    for rank in rank_tol * 10.0 ** np.arange(5):
        V = controllable_subspace(aug.A, aug.B, rank)
        Ac = V.T.dot(aug.A).dot(V)
        Bc = V.T.dot(aug.B)
        bad = unstabilizable_modes(Ac, Bc, rank_tol)
        if bad:
            error = ConvergenceError('%d unstabilizable modes remain on the '
                                     'reachable subspace' % len(bad))
            logging.debug('%d weakly reachable modes at rank tolerance '
                          '%.0e' % (len(bad), rank))
            continue
        Qc = V.T.dot(aug.C.T).dot(Q).dot(aug.C).dot(V) + \
            reg * np.eye(V.shape[1])
        try:
            Pc = terminal_weight(Ac, Bc, Qc, R, tol, max_iter)
        except ConvergenceError as e:
            error = e
            logging.debug('rank tolerance %.0e: %s' % (rank, e))
            continue
        logging.debug('terminal weight on %d of %d augmented states' %
                      (V.shape[1], aug.n))
        return V.dot(Pc).dot(V.T)
    raise error


class Condensed(object):
    """ Prediction matrices of the augmented model over the horizon.

    x(i) = A^i x0 + Phi[i] z and u(i) = u_prev + T[i] z for the stacked
    increments z; both built by forward recursion, once per controller.
    """

    def __init__(self, aug, Np, Nc):
        n, m = aug.n, aug.m
        nz = m * Nc
        self.aug, self.Np, self.Nc, self.nz = aug, Np, Nc, nz
        self.Phi = np.zeros((Np + 1, n, nz))
        for i in range(1, Np + 1):
            self.Phi[i] = aug.A.dot(self.Phi[i - 1])
            if i - 1 < Nc:
                self.Phi[i][:, (i - 1) * m:i * m] += aug.B
        self.Psi = np.einsum('pn,inz->ipz', aug.C, self.Phi)
        self.T = np.zeros((Np, m, nz))
        for j in range(Np):
            for l in range(min(j, Nc - 1) + 1):
                self.T[j][:, l * m:(l + 1) * m] = np.eye(m)

    def free(self, x0):
        X = np.empty((self.Np + 1, self.aug.n))
        X[0] = x0
        for i in range(1, self.Np + 1):
            X[i] = self.aug.A.dot(X[i - 1])
        return X

    def predict(self, x0, z):
        """ Predicted augmented states x(0..Np) for the increments z. """
        return self.free(x0) + self.Phi.dot(z)


def _rows(M, idx):
    return M[..., idx, :].reshape(-1, M.shape[-1])


class MpcController(object):
    """ One MPC variant: builds its QP each step and keeps u(k-1).

    :param cotc: True for the terminal-constrained variant
    :param terminal_states: 'workspace' holds r, v and beta_rot at zero at
        the end of the horizon, 'all' the whole augmented state
    """

    def __init__(self, aug, weights, constraints=None, cotc=True,
                 terminal_states='workspace', max_iter=500, tol=1e-9,
                 riccati_tol=1e-10, riccati_max_iter=100, riccati_reg=1e-8):
        weights.validate()
        if terminal_states not in TERMINAL_MODES:
            raise ParameterError('terminal_states must be one of %s' %
                                 (TERMINAL_MODES,))
        if weights.Q.shape[0] != aug.p or weights.R.shape[0] != aug.m:
            raise DimensionError('weights do not match the model')
        self.aug, self.weights, self.cotc = aug, weights, cotc
        self.constraints = constraints if constraints is not None else \
            unconstrained(aug.p, aug.m)
        self.terminal_states = terminal_states
        self.max_iter, self.tol = max_iter, tol
        self.name = 'mpc_cotc' if cotc else 'mpc_nocotc'
        self.cond = Condensed(aug, weights.Np, weights.Nc)

        Cq = aug.C.T.dot(weights.Q).dot(aug.C)
        if weights.Q_Np is not None:
            P = to_matrix(weights.Q_Np, 'Q_Np')
            if P.shape == weights.Q.shape and P.shape[0] != aug.n:
                P = aug.C.T.dot(P).dot(aug.C)
        elif cotc:
            P = augmented_terminal_weight(aug, weights.Q, weights.R,
                                          riccati_reg, riccati_tol,
                                          riccati_max_iter)
        else:
            P = Cq
        self.P = P
        self._build_hessian()
        self._build_inequalities()
        self.reset()

    def reset(self):
        self.u_prev = np.zeros(self.aug.m)
        self.tail = None
        self.last = None

    def sync(self, u):
        """ Take an externally applied input as u(k-1). """
        self.u_prev = to_vector(u, self.aug.m, 'u').copy()

    def _build_hessian(self):
        c, w = self.cond, self.weights
        Np, Nc = w.Np, w.Nc
        H = np.zeros((c.nz, c.nz))
        for i in range(1, Np):
            H += c.Psi[i].T.dot(w.Q).dot(c.Psi[i])
        H += c.Phi[Np].T.dot(self.P).dot(c.Phi[Np])
        H += np.kron(np.eye(Nc), w.R)
        for j in range(Nc):
            H += c.T[j].T.dot(w.S).dot(c.T[j])
        self.H = H + H.T

    def _build_inequalities(self):
        c, k = self.cond, self.constraints
        Np, Nc, nz = self.weights.Np, self.weights.Nc, c.nz
        self._y_hi = np.nonzero(np.isfinite(k.y_hi))[0]
        self._y_lo = np.nonzero(np.isfinite(k.y_lo))[0]
        self._u_hi = np.nonzero(np.isfinite(k.u_hi))[0]
        self._u_lo = np.nonzero(np.isfinite(k.u_lo))[0]
        self._du_hi = np.nonzero(np.isfinite(k.du_hi))[0]
        self._du_lo = np.nonzero(np.isfinite(k.du_lo))[0]
        Psi = c.Psi[1:Np + 1]
        state = [_rows(Psi, self._y_hi), -_rows(Psi, self._y_lo)]
        if k.J is not None and k.leg_rate is not None:
            # leg rates J [v(i); omega(i)] for i = 0 .. Np-1
            Jv, Jw = k.J[:, :3], k.J[:, 3:]
            self._leg = Jv.dot(c.Psi[:Np, OUTPUT['v'], :]).transpose(
                1, 0, 2) + np.einsum('lk,ikz->ilz', Jw.dot(OMEGA_MAP),
                                     c.T[:Np])
            L = self._leg.reshape(-1, nz)
            state += [L, -L]
        else:
            self._leg = None
        T = c.T[:Nc]
        inputs = [_rows(T, self._u_hi), -_rows(T, self._u_lo)]
        if k.omega_max is not None:
            WT = np.einsum('lk,jkz->jlz', OMEGA_MAP, T).reshape(-1, nz)
            inputs += [WT, -WT]
        D = np.eye(nz).reshape(Nc, self.aug.m, nz)
        inputs += [_rows(D, self._du_hi), -_rows(D, self._du_lo)]
        # rotation and tilt rates add up on roll and pitch
        self._dw = k.du_hi[INPUT['w_rot']]
        if k.omega_max is not None and np.all(np.isfinite(self._dw)):
            DW = np.einsum('lk,jkz->jlz', OMEGA_MAP, D).reshape(-1, nz)
            inputs += [DW, -DW]
        else:
            self._dw = None
        self.G_state = np.vstack(state) if state else np.zeros((0, nz))
        self.G_input = np.vstack(inputs)
        logging.debug('%s: %d state rows, %d input rows, %d variables' %
                      (self.name, self.G_state.shape[0],
                       self.G_input.shape[0], nz))

    def _h_state(self, X):
        c, k = self.cond, self.constraints
        Np = self.weights.Np
        Y = X[1:Np + 1, c.aug.n_base:]
        V = X[:Np, c.aug.n_base:][:, OUTPUT['v']]
        parts = [(k.y_hi[self._y_hi] - Y[:, self._y_hi]).ravel(),
                 (Y[:, self._y_lo] - k.y_lo[self._y_lo]).ravel()]
        if self._leg is not None:
            Jv, Jw = k.J[:, :3], k.J[:, 3:]
            offset = V.dot(Jv.T) + Jw.dot(OMEGA_MAP).dot(self.u_prev)
            parts += [(k.leg_rate - offset).ravel(),
                      (k.leg_rate + offset).ravel()]
        return np.concatenate(parts)

    def _h_input(self):
        k, Nc = self.constraints, self.weights.Nc
        u = self.u_prev
        parts = [np.tile(k.u_hi[self._u_hi] - u[self._u_hi], Nc),
                 np.tile(u[self._u_lo] - k.u_lo[self._u_lo], Nc)]
        if k.omega_max is not None:
            w = OMEGA_MAP.dot(u)
            parts += [np.tile(k.omega_max - w, Nc),
                      np.tile(k.omega_max + w, Nc)]
        parts += [np.tile(k.du_hi[self._du_hi], Nc),
                  np.tile(-k.du_lo[self._du_lo], Nc)]
        if self._dw is not None:
            parts += [np.tile(self._dw, Nc), np.tile(self._dw, Nc)]
        return np.concatenate(parts)

    def _terminal_rows(self, X, terminal_ref):
        c, Np = self.cond, self.weights.Np
        nb = c.aug.n_base
        if self.terminal_states == 'all':
            E, e = [c.Phi[Np]], [-X[Np]]
        else:
            sel = np.r_[OUTPUT['r'], OUTPUT['v'], OUTPUT['beta_rot']]
            E, e = [c.Psi[Np][sel]], [-X[Np][nb + sel]]
        force = np.arange(OUTPUT['force'].start,
                          OUTPUT['force'].stop)[list(TERMINAL_FORCE_AXES)]
        E.append(c.Psi[Np][force])
        e.append(to_vector(terminal_ref, len(TERMINAL_FORCE_AXES),
                           'terminal_ref') - X[Np][nb + force])
        return np.vstack(E), np.concatenate(e)

    def problem(self, x0, ref, terminal_ref=None, terminal=True):
        """ Condensed QP for the current step.

        :param x0: augmented state [dx_m(k); y(k)]
        :param ref: (Np, p) output references for steps k+1 .. k+Np
        :param terminal_ref: longitudinal and lateral specific force at the
            start of the window, required with COTC
        :param terminal: False leaves out the terminal equalities
        """
        c, w = self.cond, self.weights
        Np, Nc = w.Np, w.Nc
        x0 = to_vector(x0, c.aug.n, 'x0')
        ref = np.asarray(ref, float)
        if ref.shape != (Np, c.aug.p):
            raise DimensionError('reference window must be %dx%d, got %s' %
                                 (Np, c.aug.p, ref.shape))
        X = c.free(x0)
        nb = c.aug.n_base
        E = e = None

        f = np.zeros(c.nz)
        const = 0.0
        for i in range(1, Np):
            err = X[i, nb:] - ref[i - 1]
            qe = w.Q.dot(err)
            f += c.Psi[i].T.dot(qe)
            const += err.dot(qe)
        xr = np.concatenate([np.zeros(nb), ref[Np - 1]])
        err = X[Np] - xr
        f += c.Phi[Np].T.dot(self.P.dot(err))
        const += err.dot(self.P).dot(err)
        su = w.S.dot(self.u_prev)
        for j in range(Nc):
            f += c.T[j].T.dot(su)
        const += Nc * self.u_prev.dot(su)

        G = np.vstack([self.G_state, self.G_input])
        h = np.concatenate([self._h_state(X), self._h_input()])
        if self.cotc and terminal:
            if terminal_ref is None:
                terminal_ref = ref[0, OUTPUT['force']][
                    list(TERMINAL_FORCE_AXES)]
            E, e = self._terminal_rows(X, terminal_ref)
        return qp.make_problem(self.H, 2.0 * f, G, h, E, e, const)

    def warm_start(self):
        # previous plan shifted by one step, zero increments past its end
        if self.tail is None:
            return np.zeros(self.cond.nz)
        return np.concatenate([self.tail,
                               np.zeros(self.cond.nz - self.tail.size)])

    def solve(self, x0, ref, terminal_ref=None):
        problem = self.problem(x0, ref, terminal_ref)
        return problem, qp.solve_qp(problem, self.max_iter, self.tol,
                                    self.warm_start())

    def relaxed(self, x0, ref):
        """ Plan without terminal rows and with the state rows softened by
        one penalized slack. Input rows stay hard.

        :return: (increments or None, slack)
        """
        problem = soften(self.problem(x0, ref, terminal=False),
                         self.G_state.shape[0])
        z0 = np.append(self.warm_start(), 0.0)
        z0[-1] = max(0.0, qp.violation(problem, z0))
        sol = qp.solve_qp(problem, self.max_iter, self.tol, z0)
        if sol.status != qp.OPTIMAL:
            return None, float('inf')
        return sol.z[:-1], float(sol.z[-1])

    def step(self, x0, ref, terminal_ref=None, relax=None):
        """ Solve, apply the first increment and remember the plan.

        An infeasible problem falls back to the relaxed plan (always without
        COTC, with COTC only when relax is set); an iteration limit, or a
        failed relaxation, continues the last plan.

        :return: (u(k), QpSolution of the primary problem)
        """
        m = self.aug.m
        relax = not self.cotc if relax is None else relax
        _, sol = self.solve(x0, ref, terminal_ref)
        self.last = sol
        z = None
        if sol.status == qp.OPTIMAL:
            z = sol.z
        elif sol.status == qp.INFEASIBLE and relax:
            z, slack = self.relaxed(x0, ref)
            if z is not None and slack > self.tol:
                logging.debug('%s: state rows relaxed by %.3e' %
                              (self.name, slack))
        if z is None:
            z = self.warm_start()
            logging.debug('%s: %s, continuing last plan' %
                          (self.name, sol.status))
        du, self.tail = z[:m], z[m:]
        u = self.clip(self.u_prev + du)
        self.u_prev = u
        return u, sol

    def clip(self, u):
        k = self.constraints
        lo = np.maximum(k.u_lo, self.u_prev + k.du_lo)
        hi = np.minimum(k.u_hi, self.u_prev + k.du_hi)
        return np.minimum(np.maximum(u, lo), hi)

    def predict_outputs(self, x0, z):
        return self.cond.predict(x0, z)[:, self.aug.n_base:]


SLACK_WEIGHT = 1e6


def soften(problem, rows, weight=SLACK_WEIGHT):
    """ Append one slack s >= 0 to the first `rows` inequalities,
    G z - s <= h, with cost w (s + s^2) and w scaled by the largest
    Hessian entry.
    """
    n, mg = problem.size, problem.G.shape[0]
    w = weight * max(1.0, float(np.max(np.abs(problem.H))))
    H = np.zeros((n + 1, n + 1))
    H[:n, :n] = problem.H
    H[n, n] = 2.0 * w
    col = np.zeros((mg, 1))
    col[:rows] = -1.0
    G = np.vstack([np.hstack([problem.G, col]),
                   np.append(np.zeros(n), -1.0)])
    h = np.append(problem.h, 0.0)
    E = np.hstack([problem.E, np.zeros((problem.E.shape[0], 1))])
    return qp.make_problem(H, np.append(problem.f, w), G, h, E, problem.e,
                           problem.const)


def build_qp_with_cotc(aug, weights, x0, ref, constraints, terminal_ref,
                       **kw):
    return MpcController(aug, weights, constraints, True, **kw).problem(
        x0, ref, terminal_ref)


def build_qp_without_cotc(aug, weights, x0, ref, constraints, **kw):
    return MpcController(aug, weights, constraints, False, **kw).problem(
        x0, ref)


def mpc_step(controller, x0, ref, terminal_ref=None):
    return controller.step(x0, ref, terminal_ref)


def full_reference(perceived):
    """ (N, 6) perceived references padded to the (N, p) output layout. """
    perceived = np.atleast_2d(perceived)
    ref = np.zeros((perceived.shape[0], N_OUTPUT))
    ref[:, PERCEIVED] = perceived
    return ref


def terminal_target(ref, k):
    """ Longitudinal and lateral reference specific force at step k. """
    return ref[k, OUTPUT['force']][list(TERMINAL_FORCE_AXES)]


def reference_window(ref, k, Np):
    """ Rows k+1 .. k+Np of ref, repeating the last row past the end. """
    idx = np.minimum(np.arange(k + 1, k + Np + 1), ref.shape[0] - 1)
    return ref[idx]


LoopResult = collections.namedtuple('LoopResult',
                                    ('t', 'u', 'y', 'status', 'active',
                                     'alpha', 'switches'))


def run_mpc(controller, discrete, perceived, Ts):
    """ Closed loop of one MPC variant against a perceived reference.

    :param discrete: discrete integrated model driven by the inputs
    :param perceived: (N, 6) reference specific force and angular velocity
    :return: LoopResult, y sampled before the input of the same step
    """
    plant = Plant(discrete)
    controller.reset()
    ref = full_reference(perceived)
    N, Np = ref.shape[0], controller.weights.Np
    u_log = np.zeros((N, discrete.m))
    y_log = np.zeros((N, discrete.p))
    status = []
    started = time.time()
    for k in range(N):
        y_log[k] = plant.y
        u, sol = controller.step(plant.augmented_state(),
                                 reference_window(ref, k, Np),
                                 terminal_target(ref, k))
        u_log[k] = u
        status.append(sol.status)
        plant.step(u)
    logging.info('%s: %d steps in %.2f s, %d not optimal' %
                 (controller.name, N, time.time() - started,
                  sum(1 for s in status if s != qp.OPTIMAL)))
    t = np.arange(N) * Ts
    return LoopResult(t, u_log, y_log, status, [controller.name] * N,
                      np.ones(N), [])


def _light_setup(Np=20, Nc=5, Ts=0.05):
    from motioncue import kinematics, utils
    from motioncue.prediction import build_prediction
    config = utils.defaults()
    config.update({'prediction.ts': Ts, 'mpc.np': Np, 'mpc.nc': Nc})
    integrated, discrete, aug = build_prediction(config)
    geom = kinematics.geometry_from_config(config)
    pose = kinematics.neutral_pose(geom)
    l0 = kinematics.leg_vectors(geom, pose)[1]
    limits = kinematics.ActuatorLimits.from_config(config)
    cons = build_constraints(limits, l0, integrated.J, Ts,
                             np.radians(config['mpc.tilt_rate_limit_deg']))
    return config, discrete, aug, MpcWeights.from_config(config), cons


def test_terminal_weight_scalar():
    P = terminal_weight([[0.5]], [[1.0]], [[1.0]], [[1.0]])
    # fixed-point oracle
    p = 1.0
    for _ in range(200):
        p = 0.25 * p - 0.25 * p * p / (1.0 + p) + 1.0
    assert abs(P[0, 0] - p) < 1e-12
    assert abs(P[0, 0] - (0.25 + np.sqrt(4.0625)) / 2) < 1e-12
    assert abs(P[0, 0] - 1.1328) < 1e-4


def test_terminal_weight_lyapunov():
    rng = np.random.RandomState(12)
    A = rng.randn(3, 3)
    A *= 0.8 / spectral_radius(A)
    Q = np.diag([1.0, 2.0, 0.5])
    P = terminal_weight(A, np.zeros((3, 1)), Q, [[1.0]])
    S, Ak = np.zeros((3, 3)), np.eye(3)
    for _ in range(2000):
        S += Ak.T.dot(Q).dot(Ak)
        Ak = Ak.dot(A)
    assert np.max(np.abs(P - S)) < 1e-9


def test_terminal_weight_zero_q():
    P = terminal_weight([[0.9, 0.1], [0.0, 0.7]], [[1.0], [1.0]],
                        np.zeros((2, 2)), [[1.0]])
    assert np.all(P == 0.0)


def test_terminal_weight_random():
    rng = np.random.RandomState(21)
    for _ in range(5):
        A = rng.randn(4, 4)
        B = rng.randn(4, 2)
        M = rng.randn(4, 4)
        Q = M.dot(M.T) + np.eye(4)
        R = np.diag(rng.uniform(0.5, 2.0, 2))
        P = terminal_weight(A, B, Q, R)
        assert riccati_residual(A, B, Q, R, P) < 1e-10 * max(
            1.0, np.max(np.abs(P)))
        K = np.linalg.solve(R + B.T.dot(P).dot(B), B.T.dot(P).dot(A))
        assert spectral_radius(A - B.dot(K)) < 1.0


def test_terminal_weight_unstabilizable():
    try:
        terminal_weight([[2.0]], [[0.0]], [[1.0]], [[1.0]], max_iter=30)
    except ConvergenceError:
        pass
    else:
        assert False, 'unstabilizable pair accepted'


def test_controllable_subspace():
    A = np.diag([0.5, 0.7, 0.9])
    B = np.array([[1.0], [1.0], [0.0]])
    V = controllable_subspace(A, B)
    assert V.shape == (3, 2)
    assert np.allclose(V[2], 0.0)


def test_unconstrained_matches_least_squares():
    config, discrete, aug, w, _ = _light_setup(Np=12, Nc=4)
    w = w._replace(S=np.zeros((8, 8)))
    ctrl = MpcController(aug, w, None, cotc=False)
    rng = np.random.RandomState(2)
    x0 = 0.01 * rng.randn(aug.n)
    ref = full_reference(0.3 * rng.randn(12, 6))
    p = ctrl.problem(x0, ref)
    assert p.G.shape[0] == 0 and p.E.shape[0] == 0
    z = qp.solve_qp(p).z

    # batch least squares from direct simulation of unit increments
    def outputs(zz):
        x, ys = x0.copy(), []
        for i in range(12):
            du = zz[i * 8:(i + 1) * 8] if i < 4 else np.zeros(8)
            x = aug.A.dot(x) + aug.B.dot(du)
            ys.append(x.copy())
        return ys
    base = outputs(np.zeros(32))
    rows, rhs = [], []
    qh = np.sqrt(np.diag(w.Q))
    cols = [outputs(e) for e in np.eye(32)]
    for i in range(11):
        M = np.array([(cols[j][i] - base[i])[aug.n_base:]
                      for j in range(32)]).T
        rows.append(qh[:, None] * M)
        rhs.append(-qh * (base[i][aug.n_base:] - ref[i]))
    ev, U = np.linalg.eigh(ctrl.P)
    Ph = U.dot(np.diag(np.sqrt(np.maximum(ev, 0.0)))).T
    xr = np.concatenate([np.zeros(aug.n_base), ref[11]])
    M = np.array([cols[j][11] - base[11] for j in range(32)]).T
    rows.append(Ph.dot(M))
    rhs.append(-Ph.dot(base[11] - xr))
    rows.append(np.kron(np.eye(4), np.sqrt(w.R)))
    rhs.append(np.zeros(32))
    z_ls = np.linalg.lstsq(np.vstack(rows), np.concatenate(rhs),
                           rcond=None)[0]
    assert np.max(np.abs(z - z_ls)) < 1e-8


def test_zero_reference_zero_plan():
    config, discrete, aug, w, cons = _light_setup()
    for cotc in (True, False):
        ctrl = MpcController(aug, w, cons, cotc=cotc)
        ref = np.zeros((w.Np, aug.p))
        sol = qp.solve_qp(ctrl.problem(np.zeros(aug.n), ref, [0.0, 0.0]))
        assert sol.status == qp.OPTIMAL
        assert np.max(np.abs(sol.z)) < 1e-9


def test_terminal_row_counts():
    config, discrete, aug, w, cons = _light_setup()
    ref = np.zeros((w.Np, aug.p))
    x0 = np.zeros(aug.n)
    with_c = build_qp_with_cotc(aug, w, x0, ref, cons, [0.0, 0.0])
    without = build_qp_without_cotc(aug, w, x0, ref, cons)
    assert with_c.E.shape[0] == 9 + 2
    assert without.E.shape[0] == 0
    assert with_c.G.shape == without.G.shape
    full = build_qp_with_cotc(aug, w, x0, ref, cons, [0.0, 0.0],
                              terminal_states='all')
    # one row per augmented state plus the two force rows
    assert full.E.shape[0] == aug.n + 2


def test_relaxation_never_costs_more():
    config, discrete, aug, w, cons = _light_setup()
    with_c = MpcController(aug, w, cons, cotc=True)
    without = MpcController(aug, w, cons, cotc=False)
    without.P = with_c.P
    without._build_hessian()
    rng = np.random.RandomState(6)
    ref = full_reference(np.tile(0.2 * rng.randn(1, 6), (w.Np, 1)))
    x0 = np.zeros(aug.n)
    a = qp.solve_qp(with_c.problem(x0, ref, [0.0, 0.0]))
    b = qp.solve_qp(without.problem(x0, ref))
    assert a.status == qp.OPTIMAL and b.status == qp.OPTIMAL
    assert b.objective <= a.objective + 1e-9


def test_cotc_terminal_behaviour():
    config, discrete, aug, w, cons = _light_setup()
    ctrl = MpcController(aug, w, cons, cotc=True)
    plant = Plant(discrete)
    t = np.arange(60) * 0.05
    perceived = np.zeros((60, 6))
    perceived[:, 1] = 0.15 * np.sin(np.pi * t / 3.0) ** 2
    ref = full_reference(perceived)
    sel = np.r_[OUTPUT['r'], OUTPUT['v'], OUTPUT['beta_rot']]
    checked = 0
    for k in range(60):
        x0 = plant.augmented_state()
        window = reference_window(ref, k, w.Np)
        target = perceived[k, list(TERMINAL_FORCE_AXES)]
        u, sol = ctrl.step(x0, window, target)
        assert sol.status == qp.OPTIMAL
        Y = ctrl.predict_outputs(x0, sol.z)
        assert np.linalg.norm(Y[w.Np][sel]) < 1e-6
        force = Y[w.Np][OUTPUT['force']][list(TERMINAL_FORCE_AXES)]
        assert np.max(np.abs(force - target)) < 1e-6
        assert sol.kkt_residual < 1e-8 * max(1.0, np.max(np.abs(ctrl.H)))
        checked += 1
        plant.step(u)
    assert checked == 60


def test_zero_reference_closed_loop():
    config, discrete, aug, w, cons = _light_setup()
    res = run_mpc(MpcController(aug, w, cons, cotc=True), discrete,
                  np.zeros((20, 6)), 0.05)
    assert np.max(np.abs(res.u)) < 1e-9
    assert all(s == qp.OPTIMAL for s in res.status)


def test_step_reference_tracks():
    config, discrete, aug, w, _ = _light_setup()
    ctrl = MpcController(aug, w, None, cotc=False)
    perceived = np.zeros((200, 6))
    perceived[:, 1] = 0.2
    res = run_mpc(ctrl, discrete, perceived, 0.05)
    lateral = res.y[:, OUTPUT['force']][:, 1]
    err = np.abs(lateral - 0.2)
    assert err[0] == 0.2
    # tracked within a second and held there
    assert np.max(err[20:]) < 0.02
    assert np.all(np.isfinite(res.u))


def test_default_models_have_terminal_weight():
    for Ts in (0.01, 0.02, 0.05):
        config, discrete, aug, w, cons = _light_setup(Ts=Ts)
        P = augmented_terminal_weight(aug, w.Q, w.R)
        scale = max(1.0, np.max(np.abs(P)))
        assert np.all(np.isfinite(P))
        assert np.max(np.abs(P - P.T)) < 1e-9 * scale
        assert np.min(np.linalg.eigvalsh(0.5 * (P + P.T))) > -1e-8 * scale


def test_default_config_cotc_controller():
    config, discrete, aug, w, cons = _light_setup(Np=100, Nc=20, Ts=0.01)
    assert (w.Np, w.Nc) == (100, 20)
    ctrl = MpcController(aug, w, cons, cotc=True)
    problem = ctrl.problem(np.zeros(aug.n), np.zeros((w.Np, aug.p)),
                           [0.0, 0.0])
    sol = qp.solve_qp(problem, z0=np.zeros(ctrl.cond.nz))
    assert sol.status == qp.OPTIMAL
    assert np.max(np.abs(sol.z)) < 1e-9


def test_soften_keeps_hard_rows():
    # z >= 2 softened, z <= 1 hard
    p = qp.make_problem([[2.0]], [0.0], G=[[-1.0], [1.0]], h=[-2.0, 1.0])
    assert qp.solve_qp(p).status == qp.INFEASIBLE
    s = qp.solve_qp(soften(p, 1))
    assert s.status == qp.OPTIMAL
    assert abs(s.z[0] - 1.0) < 1e-9 and abs(s.z[1] - 1.0) < 1e-9
    # a feasible problem keeps its solution and a zero slack
    p = qp.make_problem([[2.0]], [-6.0], G=[[1.0]], h=[2.0])
    s = qp.solve_qp(soften(p, 1))
    assert abs(s.z[0] - 2.0) < 1e-9 and abs(s.z[1]) < 1e-9


def test_infeasible_step_keeps_state_rows():
    from motioncue.prediction import STATE
    config, discrete, aug, w, cons = _light_setup()
    ctrl = MpcController(aug, w, cons, cotc=False)
    x = np.zeros(discrete.n)
    # heading for the lateral bound faster than the brakes allow
    x[STATE['r']] = [0.0, 1.64, 0.0]
    x[STATE['v']] = [0.0, 0.9, 0.0]
    x[STATE['dl']] = cons.J[:, :3].dot(x[STATE['r']])
    plant = Plant(discrete)
    plant.x_prev = x
    plant.x = discrete.A.dot(x)
    window = np.zeros((w.Np, aug.p))
    z, slack = ctrl.relaxed(plant.augmented_state(), window)
    assert z is not None and 0.0 < slack < np.inf
    u, sol = ctrl.step(plant.augmented_state(), window)
    assert sol.status == qp.INFEASIBLE
    assert u[INPUT['a']][1] < -5.0
    assert np.all(u <= cons.u_hi + 1e-12) and np.all(u >= cons.u_lo - 1e-12)


if __name__ == '__main__':
    test_terminal_weight_scalar()
    test_terminal_weight_lyapunov()
    test_terminal_weight_zero_q()
    test_terminal_weight_random()
    test_terminal_weight_unstabilizable()
    test_controllable_subspace()
    test_unconstrained_matches_least_squares()
    test_zero_reference_zero_plan()
    test_terminal_row_counts()
    test_relaxation_never_costs_more()
    test_cotc_terminal_behaviour()
    test_zero_reference_closed_loop()
    test_step_reference_tracks()
    test_default_models_have_terminal_weight()
    test_default_config_cotc_controller()
    test_soften_keeps_hard_rows()
    test_infeasible_step_keeps_state_rows()
