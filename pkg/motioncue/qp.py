#!/usr/bin/python
# -*- coding: utf-8 -*-
#
# Dense convex QP solver used by the MPC controllers.
#
#     minimize    1/2 z' H z + f' z + const
#     subject to  G z <= h
#                 E z  = e
#
# A phase-1 linear program (scipy HiGHS) either finds a feasible point or
# certifies infeasibility. Equalities are then eliminated over the null space
# of E and a primal active-set method runs on the reduced problem.

from __future__ import absolute_import, division, print_function, \
    with_statement

import logging
import itertools
import collections

import numpy as np
from scipy import linalg
from scipy.optimize import linprog

from motioncue.common import DimensionError, to_matrix, to_vector


VERBOSE_LEVEL = 5

OPTIMAL = 'optimal'
INFEASIBLE = 'infeasible'
ITERATION_LIMIT = 'iteration_limit'

# optimal only with a KKT residual below this, relative to the data scale
KKT_TOL = 1e-8


class QpProblem(collections.namedtuple('QpProblem',
                                       ('H', 'f', 'G', 'h', 'E', 'e',
                                        'const'))):
    __slots__ = ()

    @property
    def size(self):
        return self.H.shape[0]

    def objective(self, z):
        return float(0.5 * z.dot(self.H).dot(z) + self.f.dot(z) + self.const)


QpSolution = collections.namedtuple('QpSolution',
                                    ('z', 'status', 'objective', 'active',
                                     'iterations', 'kkt_residual',
                                     'violation', 'lam', 'nu'))


def make_problem(H, f, G=None, h=None, E=None, e=None, const=0.0):
    """ Build a QpProblem, filling absent constraint blocks with empty
    arrays and checking that all dimensions agree.
    """
    H = to_matrix(H, 'H')
    n = H.shape[0]
    if H.shape != (n, n):
        raise DimensionError('H must be square, got %s' % (H.shape,))
    H = 0.5 * (H + H.T)
    f = to_vector(f, n, 'f')
    blocks = []
    for M, v, name in ((G, h, 'G'), (E, e, 'E')):
        if M is None or np.size(M) == 0:
            M, v = np.zeros((0, n)), np.zeros(0)
        else:
            M = to_matrix(M, name)
            if M.shape[1] != n:
                raise DimensionError('%s must have %d columns, got %d' %
                                     (name, n, M.shape[1]))
            v = to_vector(v, M.shape[0], name.lower())
        blocks.append((M, v))
    (G, h), (E, e) = blocks
    return QpProblem(H, f, G, h, E, e, float(const))


def violation(problem, z):
    """ Largest constraint violation of z, 0 for a feasible point. """
    worst = 0.0
    if problem.G.shape[0]:
        worst = max(worst, float(np.max(problem.G.dot(z) - problem.h)))
    if problem.E.shape[0]:
        worst = max(worst, float(np.max(np.abs(problem.E.dot(z) -
                                               problem.e))))
    return worst


def _feasibility_tol(problem, tol):
    scale = 1.0
    for v in (problem.h, problem.e):
        if v.size:
            scale = max(scale, float(np.max(np.abs(v))))
    return tol * scale


def phase_one(problem):
    """ Minimize the summed constraint violation with an LP.

    :return: (z, total violation, ok) where ok is False when the LP solver
        itself failed
    """
    n = problem.size
    mg, me = problem.G.shape[0], problem.E.shape[0]
    nv = n + mg + 2 * me
    c = np.zeros(nv)
    c[n:] = 1.0
    A_ub = np.hstack([problem.G, -np.eye(mg), np.zeros((mg, 2 * me))]) \
        if mg else None
    A_eq = np.hstack([problem.E, np.zeros((me, mg)), np.eye(me),
                      -np.eye(me)]) if me else None
    bounds = [(None, None)] * n + [(0, None)] * (mg + 2 * me)
    res = linprog(c, A_ub=A_ub, b_ub=problem.h if mg else None, A_eq=A_eq,
                  b_eq=problem.e if me else None, bounds=bounds,
                  method='highs',
                  options={'primal_feasibility_tolerance': 1e-10,
                           'dual_feasibility_tolerance': 1e-10})
    if res.status != 0 or res.x is None:
        logging.warning('phase-1 LP failed: %s' % res.message)
        return np.zeros(n), float('inf'), False
    return res.x[:n], float(res.fun), True


def _independent(rows, tol=1e-10):
    """ Indices of a maximal linearly independent subset of the rows. """
    if rows.shape[0] == 0:
        return []
    _, R, piv = linalg.qr(rows.T, mode='economic', pivoting=True)
    d = np.abs(np.diag(R))
    if d.size == 0 or d[0] == 0.0:
        return []
    rank = int(np.sum(d > tol * d[0]))
    return sorted(piv[:rank].tolist())


def _active_set(H, g, G, h, w, max_iter, tol):
    """ Primal active-set iterations on min 1/2 w'Hw + g'w, G w <= h,
    starting from the feasible point w.

    :return: (w, working set, multipliers on the working set, iterations,
        converged)
    """
    n = H.shape[0]
    slack = h - G.dot(w)
    active = np.nonzero(slack <= tol)[0]
    W = [int(active[i]) for i in _independent(G[active], tol)] \
        if active.size else []
    lam = np.zeros(0)
    for it in range(1, max_iter + 1):
        k = len(W)
        grad = H.dot(w) + g
        K = np.zeros((n + k, n + k))
        K[:n, :n] = H
        if k:
            K[:n, n:] = G[W].T
            K[n:, :n] = G[W]
        rhs = np.concatenate([-grad, np.zeros(k)])
        sol = linalg.lstsq(K, rhs, lapack_driver='gelsy')[0]
        p, lam = sol[:n], sol[n:]
        if np.linalg.norm(p, np.inf) <= 1e-11 * (1.0 + np.linalg.norm(
                w, np.inf)):
            w = w + p
            if k == 0 or np.min(lam) >= -tol:
                return w, W, lam, it, True
            drop = int(np.argmin(lam))
            logging.log(VERBOSE_LEVEL, 'qp: drop row %d (lambda %.3e)' %
                        (W[drop], lam[drop]))
            del W[drop]
            continue
        alpha, block = 1.0, None
        Gp = G.dot(p)
        inside = np.ones(G.shape[0], dtype=bool)
        inside[W] = False
        candidates = np.nonzero(inside & (Gp > 1e-14))[0]
        if candidates.size:
            steps = (h[candidates] - G[candidates].dot(w)) / Gp[candidates]
            j = int(np.argmin(steps))
            if steps[j] < alpha:
                alpha, block = max(float(steps[j]), 0.0), int(candidates[j])
        w = w + alpha * p
        if block is not None:
            logging.log(VERBOSE_LEVEL, 'qp: add row %d (step %.3e)' %
                        (block, alpha))
            W.append(block)
    return w, W, lam, max_iter, False


def kkt_residual(problem, z, lam, nu):
    """ Largest of stationarity, primal and dual feasibility and
    complementarity errors.
    """
    r = problem.H.dot(z) + problem.f
    if problem.G.shape[0]:
        r = r + problem.G.T.dot(lam)
    if problem.E.shape[0]:
        r = r + problem.E.T.dot(nu)
    worst = float(np.max(np.abs(r))) if r.size else 0.0
    worst = max(worst, violation(problem, z))
    if lam.size:
        worst = max(worst, float(np.max(-lam)),
                    float(np.max(np.abs(lam * (problem.G.dot(z) -
                                               problem.h)))))
    return worst


def kkt_scale(problem, z):
    """ max(1, |H| |z|, |f|, |h|, |e|), infinity norms. """
    scale = max(1.0, float(np.max(np.abs(problem.H))) *
                max(1.0, float(np.max(np.abs(z)))) if z.size else 1.0)
    for v in (problem.f, problem.h, problem.e):
        if v.size:
            scale = max(scale, float(np.max(np.abs(v))))
    return scale


def solve_qp(problem, max_iter=500, tol=1e-9, z0=None, kkt_tol=KKT_TOL):
    """ Solve a convex QP.

    :param problem: QpProblem, H positive semidefinite
    :param max_iter: active-set iteration budget
    :param tol: feasibility / multiplier tolerance (scaled by the data)
    :param z0: optional warm start; used as is when feasible, which skips
        the phase-1 LP
    :param kkt_tol: a converged solve whose KKT residual exceeds
        kkt_tol * kkt_scale is reported as iteration_limit
    :return: QpSolution with status optimal, infeasible or iteration_limit
    """
    n = problem.size
    ftol = _feasibility_tol(problem, tol)
    start = None
    if z0 is not None:
        z0 = to_vector(z0, n, 'z0')
        if violation(problem, z0) <= ftol:
            start = z0
    if start is None and (problem.G.shape[0] or problem.E.shape[0]):
        start, viol, ok = phase_one(problem)
        if not ok:
            return QpSolution(start, ITERATION_LIMIT, float('nan'), [], 0,
                              float('inf'), float('inf'), None, None)
        if viol > ftol:
            logging.debug('qp infeasible, phase-1 violation %.3e' % viol)
            return QpSolution(start, INFEASIBLE, float('nan'), [], 0,
                              float('inf'), viol, None, None)
    if start is None:
        start = np.zeros(n)

    if problem.E.shape[0]:
        N = linalg.null_space(problem.E)
    else:
        N = np.eye(n)
    Hr = N.T.dot(problem.H).dot(N)
    gr = N.T.dot(problem.H.dot(start) + problem.f)
    Gr = problem.G.dot(N)
    hr = problem.h - problem.G.dot(start)
    w0 = np.zeros(N.shape[1])
    w, W, lam_w, iterations, converged = _active_set(Hr, gr, Gr, hr, w0,
                                                     max_iter, tol)
    z = start + N.dot(w)

    lam = np.zeros(problem.G.shape[0])
    if W and len(lam_w) == len(W):
        lam[W] = np.maximum(lam_w, 0.0)
    nu = np.zeros(problem.E.shape[0])
    if problem.E.shape[0]:
        r = problem.H.dot(z) + problem.f + problem.G.T.dot(lam)
        nu = linalg.lstsq(problem.E.T, -r)[0]
    status = OPTIMAL if converged else ITERATION_LIMIT
    if not converged:
        logging.warning('qp stopped after %d iterations' % iterations)
    res = kkt_residual(problem, z, lam, nu)
    if converged and not res <= kkt_tol * kkt_scale(problem, z):
        logging.warning('qp converged with KKT residual %.2e' % res)
        status = ITERATION_LIMIT
    logging.log(VERBOSE_LEVEL, 'qp %s in %d iterations, %d active, kkt %.2e'
                % (status, iterations, len(W), res))
    return QpSolution(z, status, problem.objective(z), sorted(W), iterations,
                      res, violation(problem, z), lam, nu)


def test_unconstrained():
    s = solve_qp(make_problem(np.eye(2), [-1.0, -2.0]))
    assert s.status == OPTIMAL
    assert np.allclose(s.z, [1.0, 2.0], atol=1e-12)
    assert abs(s.objective + 2.5) < 1e-12


def test_active_bound():
    # min z^2 s.t. z >= 1
    s = solve_qp(make_problem([[2.0]], [0.0], G=[[-1.0]], h=[-1.0]))
    assert s.status == OPTIMAL
    assert abs(s.z[0] - 1.0) < 1e-10
    assert s.active == [0]
    assert abs(s.lam[0] - 2.0) < 1e-9
    assert s.kkt_residual < 1e-8


def test_infeasible():
    s = solve_qp(make_problem([[1.0]], [0.0], G=[[1.0]], h=[0.0],
                              E=[[1.0]], e=[1.0]))
    assert s.status == INFEASIBLE
    assert s.violation > 0.5


def test_equality():
    # min |z|^2 s.t. z0 + z1 + z2 = 3
    s = solve_qp(make_problem(2 * np.eye(3), np.zeros(3), E=[[1, 1, 1]],
                              e=[3.0]))
    assert s.status == OPTIMAL
    assert np.allclose(s.z, [1.0, 1.0, 1.0], atol=1e-10)
    assert np.allclose(s.nu, [-2.0], atol=1e-9)


def test_redundant_equalities():
    s = solve_qp(make_problem(np.eye(2), [1.0, 1.0], E=[[1, 0], [2, 0]],
                              e=[1.0, 2.0]))
    assert s.status == OPTIMAL
    assert np.allclose(s.z, [1.0, -1.0], atol=1e-10)


def test_warm_start_skips_phase_one():
    p = make_problem(np.eye(2), [-3.0, 0.0], G=np.eye(2), h=[1.0, 1.0])
    cold = solve_qp(p)
    warm = solve_qp(p, z0=[0.5, 0.0])
    assert np.allclose(cold.z, [1.0, 0.0], atol=1e-10)
    assert np.allclose(warm.z, cold.z, atol=1e-10)


def _box_optimum(H, f, lo, hi):
    """ Exact box-QP optimum by enumerating every lower / upper / free
    pattern of the variables.
    """
    n = len(f)
    best = None
    for pattern in itertools.product((-1, 0, 1), repeat=n):
        z = np.where(np.array(pattern) < 0, lo, hi).astype(float)
        free = [i for i in range(n) if pattern[i] == 0]
        fixed = [i for i in range(n) if pattern[i] != 0]
        if free:
            rhs = -f[free] - H[np.ix_(free, fixed)].dot(z[fixed])
            z[free] = np.linalg.solve(H[np.ix_(free, free)], rhs)
        if np.any(z < lo - 1e-12) or np.any(z > hi + 1e-12):
            continue
        value = 0.5 * z.dot(H).dot(z) + f.dot(z)
        if best is None or value < best:
            best = value
    return best


def test_random_box_qps():
    rng = np.random.RandomState(4)
    ticks = np.linspace(0.0, 1.0, 11)
    for _ in range(50):
        M = rng.randn(4, 4)
        H = M.dot(M.T) + 0.1 * np.eye(4)
        f = 3 * rng.randn(4)
        lo = -rng.uniform(0.2, 1.0, 4)
        hi = rng.uniform(0.2, 1.0, 4)
        p = make_problem(H, f, G=np.vstack([np.eye(4), -np.eye(4)]),
                         h=np.concatenate([hi, -lo]))
        s = solve_qp(p)
        assert s.status == OPTIMAL
        assert s.kkt_residual < 1e-8
        # 11^4 grid over the box: nothing on it beats the solver
        axes = [l + (u - l) * ticks for l, u in zip(lo, hi)]
        Z = np.stack(np.meshgrid(*axes, indexing='ij'), -1).reshape(-1, 4)
        grid = 0.5 * np.einsum('ki,ij,kj->k', Z, H, Z) + Z.dot(f)
        assert s.objective <= grid.min() + 1e-10
        assert abs(s.objective - _box_optimum(H, f, lo, hi)) < 1e-4


def test_kkt_gate():
    rng = np.random.RandomState(13)
    M = rng.randn(4, 4)
    p = make_problem(M.dot(M.T) + np.eye(4), rng.randn(4), G=np.eye(4),
                     h=0.1 * np.ones(4))
    s = solve_qp(p)
    assert s.status == OPTIMAL and s.kkt_residual < 1e-8
    strict = solve_qp(p, kkt_tol=-1.0)
    assert strict.status == ITERATION_LIMIT
    assert np.allclose(strict.z, s.z)


def test_random_general_qps():
    rng = np.random.RandomState(8)
    for _ in range(20):
        n = 6
        M = rng.randn(n, n)
        H = M.dot(M.T) + 1e-3 * np.eye(n)
        G = rng.randn(10, n)
        h = rng.uniform(0.1, 1.0, 10)
        E = rng.randn(2, n)
        e = E.dot(rng.uniform(-0.01, 0.01, n))
        s = solve_qp(make_problem(H, rng.randn(n), G, h, E, e))
        assert s.status == OPTIMAL
        assert s.kkt_residual < 1e-8


def test_iteration_limit():
    p = make_problem(np.eye(3), [-5.0, -5.0, -5.0], G=np.eye(3),
                     h=np.ones(3))
    s = solve_qp(p, max_iter=1, z0=np.zeros(3))
    assert s.status == ITERATION_LIMIT


if __name__ == '__main__':
    test_unconstrained()
    test_active_bound()
    test_infeasible()
    test_equality()
    test_redundant_equalities()
    test_warm_start_skips_phase_one()
    test_random_box_qps()
    test_kkt_gate()
    test_random_general_qps()
    test_iteration_limit()
