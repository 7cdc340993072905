"""Discrete Lagrangians on pairs of tangent-space points.

Every scheme here approximates the one-step action of a second-order
Lagrangian by evaluating it at jets that are affine images of the pair state
(q0, v0, q1, v1).  That structure makes the four block partials D1..D4 and
all second-derivative blocks exact chain-rule images of the continuous
gradient and Hessian.  The closed-form cubic-spline action is also provided
with hand-written partials.
"""

from __future__ import annotations

import numpy as np

from .jets import PairState
from .lagrangian import FD_STEP, LagrangianModel


class DiscreteLagrangian:
    """Scalar one-step action approximation with block partials.

    ``value`` maps a :class:`PairState` to a float.  ``partials`` returns the
    four covectors (D1, D2, D3, D4) with respect to (q0, v0, q1, v1), and
    ``second_partials`` the full symmetric (4n, 4n) second-derivative matrix.
    Subclasses either supply analytic derivatives or inherit the central
    finite-difference fallbacks on ``value``.
    """

    def __init__(self, n=None, name="discrete-lagrangian"):
        self.n = n
        self.name = name

    def value(self, s: PairState) -> float:
        raise NotImplementedError

    def _value_flat(self, x, h):
        n = x.size // 4
        return self.value(_pair_from_flat(x, n, h))

    def partials(self, s: PairState):
        n = s.n
        x = _flat_from_pair(s)
        g = np.empty(4 * n)
        for i in range(4 * n):
            d = FD_STEP * (1.0 + abs(x[i]))
            xp = x.copy(); xp[i] += d
            xm = x.copy(); xm[i] -= d
            g[i] = (self._value_flat(xp, s.h) - self._value_flat(xm, s.h)) / (2.0 * d)
        return g[:n], g[n:2 * n], g[2 * n:3 * n], g[3 * n:]

    def second_partials(self, s: PairState) -> np.ndarray:
        n = s.n
        x = _flat_from_pair(s)
        J = np.empty((4 * n, 4 * n))
        for i in range(4 * n):
            d = FD_STEP * (1.0 + abs(x[i]))
            xp = x.copy(); xp[i] += d
            xm = x.copy(); xm[i] -= d
            gp = np.concatenate(self.partials(_pair_from_flat(xp, n, s.h)))
            gm = np.concatenate(self.partials(_pair_from_flat(xm, n, s.h)))
            J[i] = (gp - gm) / (2.0 * d)
        return 0.5 * (J + J.T)

    def residual_scale(self, s: PairState) -> float:
        """Sensitivity of stationarity residuals to last-place state error.

        The residuals cancel partials against each other, so they cannot be
        driven below roundoff at this scale: the second-derivative norm times
        the state magnitude, plus difference noise when the partials
        themselves come from finite differences.
        """
        x = max(1.0, float(np.max(np.abs(_flat_from_pair(s)))))
        dd = float(np.linalg.norm(self.second_partials(s), np.inf))
        return dd * x + self._fd_noise_scale(s)

    def _fd_noise_scale(self, s: PairState) -> float:
        return max(1.0, abs(self.value(s))) / FD_STEP


def _flat_from_pair(s: PairState) -> np.ndarray:
    return np.concatenate([s.left.q, s.left.deriv(1), s.right.q, s.right.deriv(1)])


def _pair_from_flat(x, n, h) -> PairState:
    from .jets import JetPoint
    return PairState(JetPoint(x[:n], (x[n:2 * n],)),
                     JetPoint(x[2 * n:3 * n], (x[3 * n:],)), h)


class _AffineJetScheme(DiscreteLagrangian):
    """Weighted sum of L evaluated at affine images of the pair state.

    ``terms(h)`` yields (weight, C) with C a (3, 4) coefficient matrix; the
    evaluation jet is kron(C, I_n) @ (q0, v0, q1, v1).
    """

    def __init__(self, L: LagrangianModel, terms, name):
        super().__init__(L.n, name)
        self.L = L
        self._terms = terms
        self._cache_h = None
        self._cache = None

    def _maps(self, h, n):
        if self._cache_h != (h, n):
            self._cache = [(w, np.kron(C, np.eye(n))) for w, C in self._terms(h)]
            self._cache_h = (h, n)
        return self._cache

    def _points(self, s: PairState):
        n = s.n
        x = _flat_from_pair(s)
        for w, P in self._maps(s.h, n):
            y = P @ x
            yield w, P, y[:n], y[n:2 * n], y[2 * n:]

    def value(self, s: PairState) -> float:
        return float(sum(w * self.L.value_at(q, dq, ddq)
                         for w, _, q, dq, ddq in self._points(s)))

    def partials(self, s: PairState):
        n = s.n
        g = np.zeros(4 * n)
        for w, P, q, dq, ddq in self._points(s):
            g += w * (P.T @ np.concatenate(self.L.grad_at(q, dq, ddq)))
        return g[:n], g[n:2 * n], g[2 * n:3 * n], g[3 * n:]

    def second_partials(self, s: PairState) -> np.ndarray:
        n = s.n
        H = np.zeros((4 * n, 4 * n))
        for w, P, q, dq, ddq in self._points(s):
            H += w * (P.T @ self.L.hess_full_at(q, dq, ddq) @ P)
        return H

    def _fd_noise_scale(self, s: PairState) -> float:
        if self.L.analytic_grad:
            return 0.0
        return max(1.0, abs(self.value(s))) / FD_STEP


def taylor_average(L: LagrangianModel, midpoint_averages: bool = False) -> DiscreteLagrangian:
    """Average of L at the two endpoints with Taylor-recovered accelerations.

    Accelerations a0 = (2/h^2)(q1 - q0 - h v0) and a1 = (2/h^2)(q0 - q1 + h v1)
    come from truncated expansions of the connecting trajectory.  With
    ``midpoint_averages`` the position and velocity arguments become the
    midpoint averages instead of the endpoint values.
    """

    def terms(h):
        r = 2.0 / h**2
        if midpoint_averages:
            pos0 = pos1 = [0.5, 0.0, 0.5, 0.0]
            vel0 = vel1 = [0.0, 0.5, 0.0, 0.5]
        else:
            pos0, vel0 = [1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]
            pos1, vel1 = [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]
        a0 = [-r, -r * h, r, 0.0]
        a1 = [r, 0.0, -r, r * h]
        yield h / 2.0, np.array([pos0, vel0, a0])
        yield h / 2.0, np.array([pos1, vel1, a1])

    name = "taylor-midpoint" if midpoint_averages else "taylor"
    return _AffineJetScheme(L, terms, name)


def midpoint_difference(L: LagrangianModel) -> DiscreteLagrangian:
    """h * L at the midpoint with difference-quotient velocity and acceleration."""

    def terms(h):
        yield h, np.array([[0.5, 0.0, 0.5, 0.0],
                           [-1.0 / h, 0.0, 1.0 / h, 0.0],
                           [0.0, -1.0 / h, 0.0, 1.0 / h]])

    return _AffineJetScheme(L, terms, "midpoint-difference")


def trapezoid_velocity(L: LagrangianModel, include_h_factor: bool = True) -> DiscreteLagrangian:
    """Equal-weight endpoint average with difference-quotient acceleration.

    The acceleration argument is (v1 - v0)/h at both evaluation points.  The
    plain 1/2, 1/2 weighting does not scale like a quadrature of the action,
    so a factor h is included by default; pass ``include_h_factor=False`` for
    the literal unscaled average.
    """

    def terms(h):
        w = h / 2.0 if include_h_factor else 0.5
        acc = [0.0, -1.0 / h, 0.0, 1.0 / h]
        yield w, np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], acc])
        yield w, np.array([[0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0], acc])

    return _AffineJetScheme(L, terms, "trapezoid-velocity")


class _SplineExact(DiscreteLagrangian):
    """Closed-form one-step action of L = 1/2 |qddot|^2 along the connecting cubic.

    Componentwise: 6/h^3 (q0-q1)^2 + 6/h^2 (q0-q1)(v0+v1) + 2/h (v0^2+v0 v1+v1^2),
    summed over dimensions.  Partials and second partials are hand-written.
    """

    def __init__(self, n=None):
        super().__init__(n, "spline-exact")

    def value(self, s: PairState) -> float:
        h = s.h
        d = s.left.q - s.right.q
        v0, v1 = s.left.deriv(1), s.right.deriv(1)
        return float(np.sum(6.0 / h**3 * d * d + 6.0 / h**2 * d * (v0 + v1)
                            + 2.0 / h * (v0 * v0 + v0 * v1 + v1 * v1)))

    def partials(self, s: PairState):
        h = s.h
        d = s.left.q - s.right.q
        v0, v1 = s.left.deriv(1), s.right.deriv(1)
        sv = v0 + v1
        D1 = 12.0 / h**3 * d + 6.0 / h**2 * sv
        D2 = 6.0 / h**2 * d + 2.0 / h * (2.0 * v0 + v1)
        D3 = -D1
        D4 = 6.0 / h**2 * d + 2.0 / h * (v0 + 2.0 * v1)
        return D1, D2, D3, D4

    def second_partials(self, s: PairState) -> np.ndarray:
        h, n = s.h, s.n
        I = np.eye(n)
        c = {"qq": 12.0 / h**3, "qv": 6.0 / h**2, "vv2": 4.0 / h, "vv1": 2.0 / h}
        blocks = [
            [c["qq"] * I, c["qv"] * I, -c["qq"] * I, c["qv"] * I],
            [c["qv"] * I, c["vv2"] * I, -c["qv"] * I, c["vv1"] * I],
            [-c["qq"] * I, -c["qv"] * I, c["qq"] * I, -c["qv"] * I],
            [c["qv"] * I, c["vv1"] * I, -c["qv"] * I, c["vv2"] * I],
        ]
        return np.block(blocks)

    def _fd_noise_scale(self, s: PairState) -> float:
        return 0.0


def spline_exact(n=None) -> DiscreteLagrangian:
    """Exact discrete action for the cubic-spline Lagrangian, any dimension."""
    return _SplineExact(n)


def block_partials(Ld: DiscreteLagrangian, s: PairState):
    """The four covector blocks (D1, D2, D3, D4) of Ld at the pair state."""
    return Ld.partials(s)


def make_scheme(name: str, L: LagrangianModel) -> DiscreteLagrangian:
    """Scheme registry used by the solvers and the CLI."""
    table = {
        "taylor": lambda: taylor_average(L),
        "taylor-midpoint": lambda: taylor_average(L, midpoint_averages=True),
        "midpoint-difference": lambda: midpoint_difference(L),
        "trapezoid-velocity": lambda: trapezoid_velocity(L),
        "spline-exact": lambda: spline_exact(L.n),
    }
    if name not in table:
        raise KeyError(f"unknown scheme {name!r}; known: {sorted(table)}")
    return table[name]()
