"""The implicit two-point recursion of a discrete Lagrangian and its solvers.

``step`` advances one node by Newton on the stationarity conditions of the
summed action; ``run`` iterates it along a grid.  ``solve_boundary_path``
solves the whole-path two-point problem (both endpoint states pinned) with a
damped Newton on the stacked residual and a sparse block-tridiagonal
Jacobian, which stays well-behaved where the step recursion would amplify
errors exponentially.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .discretization import DiscreteLagrangian
from .errors import NoConvergence, SingularKKT, SingularWd
from .jets import DiscretePath, Grid, JetPoint, PairState
from .lagrangian import LagrangianModel


@dataclass
class StepWorkspace:
    """Reusable scratch arrays for one-step Newton solves (single-threaded)."""

    n: int
    z: np.ndarray = field(init=False)
    residual: np.ndarray = field(init=False)

    def __post_init__(self):
        self.z = np.zeros(2 * self.n)
        self.residual = np.zeros(2 * self.n)

    def clear(self):
        self.z[:] = 0.0
        self.residual[:] = 0.0


def _state(q, v) -> JetPoint:
    return JetPoint(q, (v,))


def del_residual(Ld: DiscreteLagrangian, prev: JetPoint, cur: JetPoint,
                 nxt: JetPoint, h: float) -> np.ndarray:
    """Stacked stationarity residual at the middle node.

    Zero iff (D3 + D1, D4 + D2) vanish across the two adjacent pairs, which
    is the condition for the summed action to be stationary at ``cur``.
    """
    D1b, D2b, _, _ = Ld.partials(PairState(cur, nxt, h))
    _, _, D3a, D4a = Ld.partials(PairState(prev, cur, h))
    return np.concatenate([D3a + D1b, D4a + D2b])


def Wd_matrix(Ld: DiscreteLagrangian, s: PairState) -> np.ndarray:
    """Cross-derivative block matrix [[D13, D14], [D23, D24]] at the pair."""
    n = s.n
    return Ld.second_partials(s)[:2 * n, 2 * n:]


def step(Ld: DiscreteLagrangian, prev: JetPoint, cur: JetPoint, h: float,
         guess: JetPoint = None, tol: float = 1e-12, max_iter: int = 50,
         workspace: StepWorkspace = None) -> JetPoint:
    """Solve the recursion for the next node by damped Newton.

    The Jacobian of the residual in the unknown next state is exactly the
    cross-derivative block matrix of the forward pair, so solvability is its
    regularity.  The default guess extrapolates linearly from (prev, cur).
    """
    n = cur.dim
    if guess is None:
        z = np.concatenate([2.0 * cur.q - prev.q,
                            2.0 * cur.deriv(1) - prev.deriv(1)])
    else:
        z = np.concatenate([guess.q, guess.deriv(1)])

    back = PairState(prev, cur, h)
    _, _, D3a, D4a = Ld.partials(back)
    fixed = np.concatenate([D3a, D4a])

    def residual(zv):
        D1b, D2b, _, _ = Ld.partials(PairState(cur, _state(zv[:n], zv[n:]), h))
        return fixed + np.concatenate([D1b, D2b])

    # the residual sums cancelling partials; it cannot be driven below
    # roundoff at the scheme's sensitivity scale, so two floors: a tight one
    # for regular exit and a loose one accepted when progress stops
    eps = np.finfo(float).eps
    scale0 = max(Ld.residual_scale(back),
                 Ld.residual_scale(PairState(cur, _state(z[:n], z[n:]), h)))
    tight = max(tol, 2.0 * eps * scale0)
    loose = max(tol, 64.0 * eps * scale0)

    r = residual(z)
    rnorm = np.max(np.abs(r))
    for it in range(max_iter):
        if rnorm <= tight:
            break
        pair = PairState(cur, _state(z[:n], z[n:]), h)
        J = Wd_matrix(Ld, pair)
        try:
            delta = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError as exc:
            raise SingularWd("cross-derivative block matrix is singular") from exc
        alpha, accepted = 1.0, False
        for _ in range(30):
            zt = z + alpha * delta
            rt = residual(zt)
            rt_norm = np.max(np.abs(rt))
            if rt_norm <= tight or rt_norm < (1.0 - 1e-4 * alpha) * rnorm:
                z, r, rnorm, accepted = zt, rt, rt_norm, True
                break
            alpha *= 0.5
        if not accepted:
            if rnorm <= loose:
                break
            raise NoConvergence("step Newton stalled", iterations=it,
                                residual_norm=rnorm)
    else:
        if rnorm > loose:
            raise NoConvergence("step Newton did not reach tolerance",
                                iterations=max_iter, residual_norm=rnorm)
    if workspace is not None:
        workspace.z[:] = z
        workspace.residual[:] = r
    return _state(z[:n], z[n:])


def phi_values(path: DiscretePath) -> np.ndarray:
    """Per-step values of (q_{k+1} - q_k)/h - (v_k + v_{k+1})/2.

    Both cubic-spline schemes conserve this quantity exactly; it is recorded
    for every path as a structure diagnostic.
    """
    h = path.grid.h
    q = path.positions()
    v = path.velocities()
    return (q[1:] - q[:-1]) / h - 0.5 * (v[:-1] + v[1:])


def run(Ld: DiscreteLagrangian, x0: JetPoint, x1: JetPoint, grid: Grid,
        tol: float = 1e-12, max_iter: int = 50) -> DiscretePath:
    """Iterate the one-step solve from two seed states along the grid.

    Initial guesses extrapolate linearly.  Failures carry the step index.
    Diagnostics record every interior residual norm and the per-step
    conserved-quantity samples.
    """
    h = grid.h
    states = [x0, x1]
    ws = StepWorkspace(x0.dim)
    res_norms = []
    for k in range(1, grid.N):
        try:
            nxt = step(Ld, states[k - 1], states[k], h, tol=tol,
                       max_iter=max_iter, workspace=ws)
        except (NoConvergence, SingularWd) as exc:
            if isinstance(exc, NoConvergence):
                exc.step_index = k
            raise
        res_norms.append(float(np.max(np.abs(ws.residual))))
        states.append(nxt)
    path = DiscretePath(grid, tuple(states))
    diags = {"del_residual": np.asarray(res_norms)}
    diags["phi"] = phi_values(path)
    return DiscretePath(grid, tuple(states), diags)


def initial_pair(L: LagrangianModel, jet3: JetPoint, h: float,
                 substeps: int = 16):
    """Seed states (x0, x1) for :func:`run` from one initial order-3 jet.

    x1 comes from one step of the continuous flow, so seeded runs start on
    the trajectory the scheme approximates.
    """
    from .bvp import integrate_el
    out = integrate_el(L, jet3, h, substeps)
    x0 = _state(jet3.q, jet3.deriv(1))
    x1 = _state(out.q, out.deriv(1))
    return x0, x1


def _hermite_path(x0: JetPoint, xN: JetPoint, grid: Grid) -> np.ndarray:
    """Cubic interpolant of the boundary data sampled at interior nodes."""
    T = grid.h * grid.N
    q0, v0 = x0.q, x0.deriv(1)
    q1, v1 = xN.q, xN.deriv(1)
    c2 = (3.0 * (q1 - q0) - T * (2.0 * v0 + v1)) / T**2
    c3 = (-2.0 * (q1 - q0) + T * (v0 + v1)) / T**3
    out = np.empty((grid.N - 1, 2 * x0.dim))
    for k in range(1, grid.N):
        t = k * grid.h
        out[k - 1, :x0.dim] = q0 + t * v0 + t * t * c2 + t**3 * c3
        out[k - 1, x0.dim:] = v0 + 2.0 * t * c2 + 3.0 * t * t * c3
    return out


def _path_residual(Ld, states, h):
    n = states[0].dim
    N = len(states) - 1
    parts = [Ld.partials(PairState(states[k], states[k + 1], h)) for k in range(N)]
    R = np.empty((N - 1, 2 * n))
    for k in range(1, N):
        D1b, D2b, _, _ = parts[k]
        _, _, D3a, D4a = parts[k - 1]
        R[k - 1] = np.concatenate([D3a + D1b, D4a + D2b])
    return R


def _path_scale(Ld, states, h):
    return max(Ld.residual_scale(PairState(states[k], states[k + 1], h))
               for k in range(len(states) - 1))


def _path_jacobian(Ld, states, h):
    n = states[0].dim
    N = len(states) - 1
    DD = [Ld.second_partials(PairState(states[k], states[k + 1], h)) for k in range(N)]
    rows, cols, vals = [], [], []

    def put(i, j, block):
        r0, c0 = i * 2 * n, j * 2 * n
        br, bc = np.nonzero(np.ones_like(block))
        rows.append(r0 + br)
        cols.append(c0 + bc)
        vals.append(block.reshape(-1))

    for k in range(1, N):
        A, B = DD[k - 1], DD[k]
        diag = A[2 * n:, 2 * n:] + B[:2 * n, :2 * n]
        put(k - 1, k - 1, diag)
        if k > 1:
            put(k - 1, k - 2, A[2 * n:, :2 * n])
        if k < N - 1:
            put(k - 1, k, B[:2 * n, 2 * n:])
    size = (N - 1) * 2 * n
    return sps.csr_matrix((np.concatenate(vals),
                           (np.concatenate(rows), np.concatenate(cols))),
                          shape=(size, size))


def _path_action(Ld, states, h):
    return float(sum(Ld.value(PairState(states[k], states[k + 1], h))
                     for k in range(len(states) - 1)))


def _newton_path(Ld, x0, xN, grid, interior, tol, max_iter):
    """Damped Newton on the stacked stationarity residual.

    The residual is the gradient of the summed discrete action in the
    interior states, so globalization works on the action itself: full Newton
    steps when they pass an Armijo test, Levenberg-regularized steps when the
    plain direction is not a descent direction, and residual-norm acceptance
    near the solution where action decrements sink below roundoff.
    """
    n = x0.dim
    N = grid.N
    h = grid.h
    eps = np.finfo(float).eps

    def to_states(U):
        states = [x0]
        for k in range(N - 1):
            states.append(_state(U[k, :n], U[k, n:]))
        states.append(xN)
        return states

    U = interior.copy()
    st = to_states(U)
    scale0 = _path_scale(Ld, st, h)
    tight = max(tol, 2.0 * eps * scale0)
    loose = max(tol, 64.0 * eps * scale0)
    R = _path_residual(Ld, st, h).reshape(-1)
    rnorm = np.max(np.abs(R))
    A = _path_action(Ld, st, h)
    lam = 0.0
    eye = sps.identity((N - 1) * 2 * n, format="csr")
    for it in range(max_iter):
        if rnorm <= tight:
            return U, rnorm, it
        J = _path_jacobian(Ld, to_states(U), h)
        # fast path: an undamped step that halves the residual is always taken,
        # restoring quadratic convergence near the solution
        try:
            newton = spla.spsolve(J, -R)
        except RuntimeError:
            newton = None
        if newton is not None and np.all(np.isfinite(newton)):
            Ut = U + newton.reshape(N - 1, 2 * n)
            stt = to_states(Ut)
            Rt = _path_residual(Ld, stt, h).reshape(-1)
            At = _path_action(Ld, stt, h)
            # residual must halve and the action must not climb, so the fast
            # path cannot hop to a worse stationary branch mid-globalization
            if (np.linalg.norm(Rt) <= 0.5 * np.linalg.norm(R)
                    and At <= A + 1e-10 * (1.0 + abs(A))):
                U, R, A = Ut, Rt, At
                rnorm = np.max(np.abs(R))
                lam = lam / 4.0
                continue
        delta, lam_try = None, lam
        for _ in range(60):
            M = J + lam_try * eye if lam_try > 0.0 else J
            try:
                cand = newton if lam_try == 0.0 else spla.spsolve(M, -R)
            except RuntimeError:
                cand = None
            if cand is not None and np.all(np.isfinite(cand)) and cand @ R < 0.0:
                delta = cand
                break
            lam_try = 1e-6 if lam_try == 0.0 else 4.0 * lam_try
        if delta is None:
            raise SingularKKT("stacked Newton system is singular")
        slope = float(delta @ R)
        alpha, accepted = 1.0, False
        for _ in range(50):
            Ut = U + alpha * delta.reshape(N - 1, 2 * n)
            stt = to_states(Ut)
            At = _path_action(Ld, stt, h)
            if At <= A + 1e-4 * alpha * slope:
                Rt = _path_residual(Ld, stt, h).reshape(-1)
                U, R, A, accepted = Ut, Rt, At, True
                rnorm = np.max(np.abs(R))
                break
            alpha *= 0.5
        if not accepted:
            # near the solution action decrements sink below roundoff; fall
            # back to plain residual-norm descent
            alpha = 1.0
            for _ in range(50):
                Ut = U + alpha * delta.reshape(N - 1, 2 * n)
                stt = to_states(Ut)
                Rt = _path_residual(Ld, stt, h).reshape(-1)
                if np.linalg.norm(Rt) < (1.0 - 1e-4 * alpha) * np.linalg.norm(R):
                    U, R, accepted = Ut, Rt, True
                    A = _path_action(Ld, stt, h)
                    rnorm = np.max(np.abs(R))
                    break
                alpha *= 0.5
        lam = lam_try / 3.0 if alpha >= 0.5 else min(max(lam_try, 1e-6) * 2.0, 1e8)
        if not accepted:
            # the sensitivity scale moves with the iterate (penalty bands in
            # particular), so refresh the floor before giving up
            loose = max(loose, 64.0 * eps * _path_scale(Ld, to_states(U), h))
            if rnorm <= loose:
                return U, rnorm, it
            raise NoConvergence("path Newton stalled", iterations=it,
                                residual_norm=rnorm)
    loose = max(loose, 64.0 * eps * _path_scale(Ld, to_states(U), h))
    if rnorm <= loose:
        return U, rnorm, max_iter
    raise NoConvergence("path Newton did not reach tolerance",
                        iterations=max_iter, residual_norm=rnorm)


def _refine_interior(U, x0, xN, coarse_grid, fine_grid):
    n = x0.dim
    told = coarse_grid.times
    tnew = fine_grid.times[1:-1]
    full = np.vstack([np.concatenate([x0.q, x0.deriv(1)]), U,
                      np.concatenate([xN.q, xN.deriv(1)])])
    return np.column_stack([np.interp(tnew, told, full[:, j])
                            for j in range(2 * n)])


def _continuation_levels(N):
    levels = [N]
    while levels[0] > 32 and levels[0] % 2 == 0:
        levels.insert(0, levels[0] // 2)
    return levels


def solve_boundary_path(Ld: DiscreteLagrangian, x0: JetPoint, xN: JetPoint,
                        grid: Grid, guess: np.ndarray = None, tol: float = 1e-10,
                        max_iter: int = 80) -> DiscretePath:
    """Two-point solve with both endpoint states pinned.

    Unknowns are the N-1 interior states; the residual stacks the node
    stationarity conditions and the Jacobian is block tridiagonal (assembled
    sparse).  The initial guess is the cubic interpolant of the boundary
    data.  Fine grids are reached by solving a coarsened grid first and
    refining by interpolation, which keeps the expensive levels warm-started.
    """
    N = grid.N
    if N < 2:
        raise ValueError("boundary solve needs at least N = 2 steps")
    if guess is not None:
        U, _, _ = _newton_path(Ld, x0, xN, grid, np.asarray(guess, dtype=float),
                               tol, max_iter)
    else:
        U, prev = None, None
        for Nc in _continuation_levels(N):
            g = grid if Nc == N else Grid(grid.t0, grid.h * N / Nc, Nc)
            start = (_hermite_path(x0, xN, g) if U is None
                     else _refine_interior(U, x0, xN, prev, g))
            U, _, _ = _newton_path(Ld, x0, xN, g, start, tol, max_iter)
            prev = g

    states = [x0] + [_state(u[:x0.dim], u[x0.dim:]) for u in U] + [xN]
    path = DiscretePath(grid, tuple(states))
    per_node = np.max(np.abs(_path_residual(Ld, states, grid.h)), axis=1)
    diags = {"del_residual": per_node, "phi": phi_values(path)}
    return DiscretePath(grid, tuple(states), diags)
