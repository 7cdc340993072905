"""Continuous Lagrangians and their pointwise calculus.

Second-order models L(q, qdot, qddot) expose value, first partials, and the
six distinct second-partial blocks.  Derivatives are analytic callbacks when
supplied (or generated symbolically via :meth:`LagrangianModel.from_sympy`);
otherwise central finite differences on the value are used and the model is
flagged as FD-backed.

Total time derivatives are always expanded by the chain rule on the supplied
partials, never by differencing along a trajectory, so identities involving
the momentum maps hold pointwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import sympy as sp

from .errors import SingularHessian
from .jets import JetPoint

_EPS = float(np.finfo(float).eps)
#: Central-difference step factor for first derivatives.
FD_STEP = _EPS ** (1.0 / 3.0)
#: Step factor for second differences of the value.
FD_STEP2 = _EPS ** 0.25

_BLOCKS2 = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]


def _as_vec(x, n, name):
    v = np.asarray(x, dtype=float).reshape(-1)
    if v.size != n:
        raise ValueError(f"{name} must have length {n}, got {v.size}")
    return v


def _fd_grad(f, x):
    """Central-difference gradient of scalar f at flat point x."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        d = FD_STEP * (1.0 + abs(x[i]))
        xp = x.copy(); xp[i] += d
        xm = x.copy(); xm[i] -= d
        g[i] = (f(xp) - f(xm)) / (2.0 * d)
    return g


def _fd_jac(f, x, m):
    """Central-difference Jacobian of vector f (length m) at flat point x."""
    x = np.asarray(x, dtype=float)
    J = np.empty((x.size, m))
    for i in range(x.size):
        d = FD_STEP * (1.0 + abs(x[i]))
        xp = x.copy(); xp[i] += d
        xm = x.copy(); xm[i] -= d
        J[i] = (np.asarray(f(xp)) - np.asarray(f(xm))) / (2.0 * d)
    return J


def _fd_hess(f, x):
    """Second differences of scalar f; returns the full symmetric matrix."""
    x = np.asarray(x, dtype=float)
    m = x.size
    H = np.empty((m, m))
    f0 = f(x)
    steps = FD_STEP2 * (1.0 + np.abs(x))
    for i in range(m):
        di = steps[i]
        xp = x.copy(); xp[i] += di
        xm = x.copy(); xm[i] -= di
        H[i, i] = (f(xp) - 2.0 * f0 + f(xm)) / di**2
        for j in range(i + 1, m):
            dj = steps[j]
            xpp = x.copy(); xpp[i] += di; xpp[j] += dj
            xpm = x.copy(); xpm[i] += di; xpm[j] -= dj
            xmp = x.copy(); xmp[i] -= di; xmp[j] += dj
            xmm = x.copy(); xmm[i] -= di; xmm[j] -= dj
            H[i, j] = H[j, i] = (f(xpp) - f(xpm) - f(xmp) + f(xmm)) / (4.0 * di * dj)
    return H


def _lambdify_scalar(args, expr):
    f = sp.lambdify(args, expr, modules="numpy", cse=True)
    return lambda flat: float(f(*flat))


def _lambdify_vector(args, exprs):
    f = sp.lambdify(args, sp.Matrix(exprs), modules="numpy", cse=True)
    return lambda flat: np.asarray(f(*flat), dtype=float).reshape(-1)


def _lambdify_matrix(args, mat):
    f = sp.lambdify(args, mat, modules="numpy", cse=True)
    return lambda flat: np.asarray(f(*flat), dtype=float)


class LagrangianModel:
    """A second-order Lagrangian on jets (q, qdot, qddot), all n-vectors.

    Parameters
    ----------
    n : state dimension.
    value : callable (q, dq, ddq) -> float.
    grad : optional callable returning the three first-partial covectors
        (dL/dq, dL/dqdot, dL/dqddot).  FD fallback when omitted.
    hess : optional callable returning a dict {(i, j): (n, n) array} for
        0 <= i <= j <= 2 with entry [a, b] = d^2 L / dx^i_a dx^j_b.
    el4 : optional callable (q, dq, ddq, d3q, d4q) -> n-vector evaluating the
        full equation-of-motion residual analytically.
    poly_degree : polynomial degree of L in the jet variables, if any; used
        only to size quadratures exactly.
    """

    order = 2

    def __init__(self, n, value, grad=None, hess=None, el4=None,
                 poly_degree=None, name=None):
        self.n = int(n)
        self._value = value
        self._grad = grad
        self._hess = hess
        self._hess_full = None
        self._el4 = el4
        self.poly_degree = poly_degree
        self.name = name or "lagrangian"
        self.analytic_grad = grad is not None
        self.analytic_hess = hess is not None
        self.sympy_data = None

    # -- raw evaluation -----------------------------------------------------

    def value_at(self, q, dq, ddq) -> float:
        return float(self._value(q, dq, ddq))

    def grad_at(self, q, dq, ddq):
        n = self.n
        if self._grad is not None:
            g = self._grad(q, dq, ddq)
            return tuple(_as_vec(g[i], n, "grad block") for i in range(3))
        flat = np.concatenate([q, dq, ddq])
        g = _fd_grad(lambda x: self._value(x[:n], x[n:2 * n], x[2 * n:]), flat)
        return g[:n], g[n:2 * n], g[2 * n:]

    def hess_at(self, q, dq, ddq):
        n = self.n
        if self._hess is not None:
            return self._hess(q, dq, ddq)
        if self._grad is not None:
            flat = np.concatenate([q, dq, ddq])
            J = _fd_jac(lambda x: np.concatenate(
                self.grad_at(x[:n], x[n:2 * n], x[2 * n:])), flat, 3 * n)
            full = 0.5 * (J + J.T)
        else:
            flat = np.concatenate([q, dq, ddq])
            full = _fd_hess(lambda x: self._value(x[:n], x[n:2 * n], x[2 * n:]), flat)
        return {(i, j): full[i * n:(i + 1) * n, j * n:(j + 1) * n] for i, j in _BLOCKS2}

    def hess_full_at(self, q, dq, ddq) -> np.ndarray:
        """Second partials as one symmetric (3n, 3n) matrix."""
        if self._hess_full is not None:
            return self._hess_full(q, dq, ddq)
        n = self.n
        H = self.hess_at(q, dq, ddq)
        full = np.zeros((3 * n, 3 * n))
        for (i, j), M in H.items():
            full[i * n:(i + 1) * n, j * n:(j + 1) * n] = M
            if i != j:
                full[j * n:(j + 1) * n, i * n:(i + 1) * n] = M.T
        return full

    def el4_at(self, q, dq, ddq, d3q, d4q):
        if self._el4 is None:
            return None
        return _as_vec(self._el4(q, dq, ddq, d3q, d4q), self.n, "el4")

    # -- jet-facing API -----------------------------------------------------

    def _split(self, jet: JetPoint, order: int):
        if jet.order < order:
            raise ValueError(f"jet must have order >= {order}, got {jet.order}")
        if jet.dim != self.n:
            raise ValueError(f"jet dimension {jet.dim} != model dimension {self.n}")
        return tuple(jet.deriv(j) for j in range(order + 1))

    def value(self, jet: JetPoint) -> float:
        return self.value_at(*self._split(jet, 2)[:3])

    def grad(self, jet: JetPoint):
        return self.grad_at(*self._split(jet, 2)[:3])

    def hess(self, jet: JetPoint):
        return self.hess_at(*self._split(jet, 2)[:3])

    # -- constructors ---------------------------------------------------------

    @classmethod
    def from_sympy(cls, n, expr, q, dq, ddq, poly_degree=None, name=None):
        """Build a fully analytic model from a sympy expression.

        ``q``, ``dq``, ``ddq`` are sequences of n symbols each.
        """
        q, dq, ddq = list(q), list(dq), list(ddq)
        d3q = list(sp.symbols(f"_d3q0:{n}", real=True))
        d4q = list(sp.symbols(f"_d4q0:{n}", real=True))
        args = q + dq + ddq
        syms = args

        grads = [sp.diff(expr, s) for s in syms]
        hess_mat = sp.Matrix([[sp.diff(g, s) for s in syms] for g in grads])

        def dt(e, include_d4=False):
            out = sum(sp.diff(e, q[i]) * dq[i] + sp.diff(e, dq[i]) * ddq[i]
                      + sp.diff(e, ddq[i]) * d3q[i] for i in range(n))
            if include_d4:
                out += sum(sp.diff(e, d3q[i]) * d4q[i] for i in range(n))
            return out

        el_exprs = [sp.diff(expr, q[i]) - dt(sp.diff(expr, dq[i]))
                    + dt(dt(sp.diff(expr, ddq[i])), include_d4=True)
                    for i in range(n)]

        f_val = _lambdify_scalar(args, expr)
        f_grad = _lambdify_vector(args, grads)
        f_hess = _lambdify_matrix(args, hess_mat)
        f_el = _lambdify_vector(args + d3q + d4q, el_exprs)

        def value(qv, dv, av):
            return f_val(np.concatenate([qv, dv, av]))

        def grad(qv, dv, av):
            g = f_grad(np.concatenate([qv, dv, av]))
            return g[:n], g[n:2 * n], g[2 * n:]

        def hess(qv, dv, av):
            full = f_hess(np.concatenate([qv, dv, av]))
            return {(i, j): full[i * n:(i + 1) * n, j * n:(j + 1) * n]
                    for i, j in _BLOCKS2}

        def el4(qv, dv, av, jv, sv):
            return f_el(np.concatenate([qv, dv, av, jv, sv]))

        def hess_full(qv, dv, av):
            return f_hess(np.concatenate([qv, dv, av]))

        model = cls(n, value, grad=grad, hess=hess, el4=el4,
                    poly_degree=poly_degree, name=name)
        model._hess_full = hess_full
        model.sympy_data = (expr, q, dq, ddq)
        return model

    def with_position_term(self, f, df, d2f, name=None):
        """New model whose value gains a configuration-only term f(q).

        ``df`` returns the n-gradient and ``d2f`` the (n, n) Hessian of f.
        """
        base = self

        def value(q, dq, ddq):
            return base.value_at(q, dq, ddq) + float(f(q))

        def grad(q, dq, ddq):
            Lq, Ldq, Lddq = base.grad_at(q, dq, ddq)
            return Lq + np.asarray(df(q), dtype=float), Ldq, Lddq

        def hess(q, dq, ddq):
            H = dict(base.hess_at(q, dq, ddq))
            H[(0, 0)] = H[(0, 0)] + np.asarray(d2f(q), dtype=float)
            return H

        el4 = None
        if base._el4 is not None:
            def el4(q, dq, ddq, d3q, d4q):
                return base.el4_at(q, dq, ddq, d3q, d4q) + np.asarray(df(q), dtype=float)

        out = LagrangianModel(base.n, value,
                              grad=grad if base.analytic_grad else None,
                              hess=hess if base.analytic_hess else None,
                              el4=el4, poly_degree=None,
                              name=name or f"{base.name}+penalty")
        if base._hess_full is not None:
            n = base.n

            def hess_full(q, dq, ddq):
                full = np.array(base._hess_full(q, dq, ddq))
                full[:n, :n] += np.asarray(d2f(q), dtype=float)
                return full

            out._hess_full = hess_full
        return out


class MechanicalModel:
    """A first-order Lagrangian L(q, qdot) for controlled mechanical systems."""

    order = 1

    def __init__(self, n, value, grad=None, hess=None, name=None):
        self.n = int(n)
        self._value = value
        self._grad = grad
        self._hess = hess
        self.name = name or "mechanical"
        self.analytic_grad = grad is not None
        self.analytic_hess = hess is not None
        self.sympy_data = None

    def value_at(self, q, dq) -> float:
        return float(self._value(q, dq))

    def grad_at(self, q, dq):
        n = self.n
        if self._grad is not None:
            g = self._grad(q, dq)
            return _as_vec(g[0], n, "dL/dq"), _as_vec(g[1], n, "dL/dqdot")
        flat = np.concatenate([q, dq])
        g = _fd_grad(lambda x: self._value(x[:n], x[n:]), flat)
        return g[:n], g[n:]

    def hess_at(self, q, dq):
        n = self.n
        if self._hess is not None:
            return self._hess(q, dq)
        if self._grad is not None:
            flat = np.concatenate([q, dq])
            J = _fd_jac(lambda x: np.concatenate(self.grad_at(x[:n], x[n:])), flat, 2 * n)
            full = 0.5 * (J + J.T)
        else:
            flat = np.concatenate([q, dq])
            full = _fd_hess(lambda x: self._value(x[:n], x[n:]), flat)
        return {(0, 0): full[:n, :n], (0, 1): full[:n, n:], (1, 1): full[n:, n:]}

    def value(self, jet: JetPoint) -> float:
        return self.value_at(jet.q, jet.deriv(1))

    def grad(self, jet: JetPoint):
        return self.grad_at(jet.q, jet.deriv(1))

    def hess(self, jet: JetPoint):
        return self.hess_at(jet.q, jet.deriv(1))

    @classmethod
    def from_sympy(cls, n, expr, q, dq, name=None):
        q, dq = list(q), list(dq)
        args = q + dq
        grads = [sp.diff(expr, s) for s in args]
        hess_mat = sp.Matrix([[sp.diff(g, s) for s in args] for g in grads])
        f_val = _lambdify_scalar(args, expr)
        f_grad = _lambdify_vector(args, grads)
        f_hess = _lambdify_matrix(args, hess_mat)

        def value(qv, dv):
            return f_val(np.concatenate([qv, dv]))

        def grad(qv, dv):
            g = f_grad(np.concatenate([qv, dv]))
            return g[:n], g[n:]

        def hess(qv, dv):
            full = f_hess(np.concatenate([qv, dv]))
            return {(0, 0): full[:n, :n], (0, 1): full[:n, n:2 * n], (1, 1): full[n:, n:]}

        model = cls(n, value, grad=grad, hess=hess, name=name)
        model.sympy_data = (expr, q, dq)
        return model


@dataclass(frozen=True, eq=False)
class CotangentTQPoint:
    """A point (q, v, p, pt) of the cotangent bundle over velocity phase space."""

    q: np.ndarray
    v: np.ndarray
    p: np.ndarray
    pt: np.ndarray

    def __post_init__(self):
        for name in ("q", "v", "p", "pt"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(-1))
        if not (self.q.size == self.v.size == self.p.size == self.pt.size):
            raise ValueError("q, v, p, pt must share one dimension")

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.q, self.v, self.p, self.pt])


def _momentum_rate(L: LagrangianModel, q, dq, ddq, d3q):
    """Total time derivative of dL/dqddot along the jet, from second partials."""
    H = L.hess_at(q, dq, ddq)
    return H[(0, 2)].T @ dq + H[(1, 2)].T @ ddq + H[(2, 2)] @ d3q


def el_residual_raw(L: LagrangianModel, q, dq, ddq, d3q, d4q) -> np.ndarray:
    """Array-argument form of :func:`el_residual` (hot-loop entry point)."""
    ana = L.el4_at(q, dq, ddq, d3q, d4q)
    if ana is not None:
        return ana
    Lq, Ldq, _ = L.grad_at(q, dq, ddq)
    H = L.hess_at(q, dq, ddq)
    p_rate = H[(0, 1)].T @ dq + H[(1, 1)] @ ddq + H[(1, 2)] @ d3q

    # step balances truncation against the noise level of the inner second
    # partials: exact for analytic ones, difference noise otherwise
    if L.analytic_hess:
        factor = FD_STEP
    elif L.analytic_grad:
        factor = _EPS ** (2.0 / 9.0)
    else:
        factor = _EPS ** (1.0 / 6.0)
    scale = 1.0 + max(np.max(np.abs(np.concatenate([q, dq, ddq]))), 0.0)
    drive = 1.0 + np.max(np.abs(np.concatenate([dq, ddq, d3q])))
    d = factor * scale / drive
    Gp = _momentum_rate(L, q + d * dq, dq + d * ddq, ddq + d * d3q, d3q)
    Gm = _momentum_rate(L, q - d * dq, dq - d * ddq, ddq - d * d3q, d3q)
    g_rate = (Gp - Gm) / (2.0 * d) + H[(2, 2)] @ d4q
    return g_rate - p_rate + Lq


def el_residual(L: LagrangianModel, jet: JetPoint) -> np.ndarray:
    """Equation-of-motion residual d^2/dt^2 dL/dqddot - d/dt dL/dqdot + dL/dq.

    The jet must have order 4.  The outer total derivative is the directional
    derivative of the momentum-rate map along the jet; it is evaluated
    analytically when the model provides ``el4`` and by a central difference
    in the jet direction otherwise (exact whenever L is quadratic).
    """
    if jet.order < 4:
        raise ValueError("el_residual needs a jet of order 4")
    return el_residual_raw(L, *(jet.deriv(j) for j in range(5)))


def hessian_W(L: LagrangianModel, jet: JetPoint):
    """Acceleration Hessian W = d^2 L / dqddot dqddot and a regularity flag.

    The flag uses a scale-aware threshold: |det W| > 1e-10 * max|W|**n.
    """
    q, dq, ddq = (jet.deriv(j) for j in range(3))
    W = L.hess_at(q, dq, ddq)[(2, 2)]
    W = 0.5 * (W + W.T)
    scale = np.max(np.abs(W)) if W.size else 0.0
    tol = 1e-10 * scale ** L.n
    is_regular = abs(np.linalg.det(W)) > tol
    return W, bool(is_regular)


def fourth_order_rhs_raw(L: LagrangianModel, q, dq, ddq, d3q) -> np.ndarray:
    """Array-argument form of :func:`fourth_order_rhs`."""
    W = L.hess_at(q, dq, ddq)[(2, 2)]
    W = 0.5 * (W + W.T)
    scale = np.max(np.abs(W)) if W.size else 0.0
    if not abs(np.linalg.det(W)) > 1e-10 * scale ** L.n:
        raise SingularHessian(f"acceleration Hessian of {L.name} is singular at this jet")
    R = el_residual_raw(L, q, dq, ddq, d3q, np.zeros(L.n))
    return np.linalg.solve(W, -R)


def fourth_order_rhs(L: LagrangianModel, jet: JetPoint) -> np.ndarray:
    """Explicit top derivative: the q4 making the equation of motion vanish.

    Requires a regular W at the (order-3) jet; the residual is linear in q4
    with coefficient W, so one linear solve inverts it exactly.
    """
    if jet.order < 3:
        raise ValueError("fourth_order_rhs needs a jet of order 3")
    return fourth_order_rhs_raw(L, *(jet.deriv(j) for j in range(4)))


def legendre(L: LagrangianModel, jet: JetPoint) -> CotangentTQPoint:
    """Continuous momentum map: (q, v, dL/dqdot - d/dt dL/dqddot, dL/dqddot)."""
    if jet.order < 3:
        raise ValueError("legendre needs a jet of order 3")
    q, dq, ddq, d3q = (jet.deriv(j) for j in range(4))
    _, Ldq, Lddq = L.grad_at(q, dq, ddq)
    p = Ldq - _momentum_rate(L, q, dq, ddq, d3q)
    return CotangentTQPoint(q, dq, p, Lddq)


def controlled_forces(M: MechanicalModel, jet: JetPoint) -> np.ndarray:
    """Generalized forces u = d/dt dL/dqdot - dL/dq for a fully actuated system."""
    if jet.order < 2:
        raise ValueError("controlled_forces needs a jet of order 2")
    q, dq, ddq = jet.q, jet.deriv(1), jet.deriv(2)
    Lq, _ = M.grad_at(q, dq)
    H = M.hess_at(q, dq)
    return H[(0, 1)].T @ dq + H[(1, 1)] @ ddq - Lq


# -- common model builders ----------------------------------------------------

def spline_lagrangian(n: int = 1) -> LagrangianModel:
    """L = 1/2 |qddot|^2, whose trajectories are componentwise cubics."""
    q = sp.symbols(f"q0:{n}", real=True)
    dq = sp.symbols(f"dq0:{n}", real=True)
    ddq = sp.symbols(f"ddq0:{n}", real=True)
    expr = sum(a**2 for a in ddq) / 2
    return LagrangianModel.from_sympy(n, expr, q, dq, ddq, poly_degree=2, name="spline")


def named_lagrangian(name: str, n: int = 1) -> LagrangianModel:
    """Registry of simple built-in second-order Lagrangians."""
    q = sp.symbols(f"q0:{n}", real=True)
    dq = sp.symbols(f"dq0:{n}", real=True)
    ddq = sp.symbols(f"ddq0:{n}", real=True)
    acc = sum(a**2 for a in ddq) / 2
    table = {
        "spline": acc,
        "spline-potential": acc + sum(x**2 for x in q) / 2,
        "spline-velocity": acc + sum(v**2 for v in dq) / 2,
    }
    if name not in table:
        raise KeyError(f"unknown lagrangian {name!r}; known: {sorted(table)}")
    return LagrangianModel.from_sympy(n, table[name], q, dq, ddq, poly_degree=2, name=name)
