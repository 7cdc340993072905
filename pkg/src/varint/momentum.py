"""Momentum maps of discrete Lagrangians and structure diagnostics.

The two momentum maps send a pair state to the cotangent bundle over
velocity phase space: the minus map attaches (-D1, -D2) at the earlier
point, the plus map (D3, D4) at the later one, so that along the recursion
``fplus(s) == fminus(next pair)``.  Their composition F+ o (F-)^{-1} is the
momentum-space step map, implemented by Newton inversion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .discretization import DiscreteLagrangian
from .errors import NoConvergence, SingularWd
from .jets import JetPoint, PairState
from .lagrangian import LagrangianModel, legendre


@dataclass(frozen=True, eq=False)
class MomentaState:
    """A point (q, v, p, pt) of the momentum phase space."""

    q: np.ndarray
    v: np.ndarray
    p: np.ndarray
    pt: np.ndarray

    def __post_init__(self):
        for name in ("q", "v", "p", "pt"):
            object.__setattr__(self, name,
                               np.asarray(getattr(self, name), dtype=float).reshape(-1))
        if not (self.q.size == self.v.size == self.p.size == self.pt.size):
            raise ValueError("q, v, p, pt must share one dimension")

    @property
    def n(self) -> int:
        return self.q.size

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.q, self.v, self.p, self.pt])

    @staticmethod
    def from_array(arr, n: int) -> "MomentaState":
        arr = np.asarray(arr, dtype=float)
        return MomentaState(arr[:n], arr[n:2 * n], arr[2 * n:3 * n], arr[3 * n:])


def fplus(Ld: DiscreteLagrangian, s: PairState) -> MomentaState:
    """Momenta (D3, D4) attached at the later point of the pair."""
    _, _, D3, D4 = Ld.partials(s)
    return MomentaState(s.right.q, s.right.deriv(1), D3, D4)


def fminus(Ld: DiscreteLagrangian, s: PairState) -> MomentaState:
    """Momenta (-D1, -D2) attached at the earlier point of the pair."""
    D1, D2, _, _ = Ld.partials(s)
    return MomentaState(s.left.q, s.left.deriv(1), -D1, -D2)


def _newton_2n(residual, jacobian, z0, scale_fn, tol, max_iter, what):
    """Damped Newton on a momentum-matching residual.

    The residual differences cancelling partials, so the stop test allows for
    roundoff at the sensitivity scale reported by ``scale_fn`` at the initial
    guess: a tight floor for regular exit, a looser one when progress stops.
    """
    z = z0.copy()
    eps = np.finfo(float).eps
    scale0 = scale_fn(z)
    tight = max(tol, 2.0 * eps * scale0)
    loose = max(tol, 64.0 * eps * scale0)
    r = residual(z)
    rnorm = np.max(np.abs(r))
    for it in range(max_iter):
        if rnorm <= tight:
            return z
        try:
            delta = np.linalg.solve(jacobian(z), -r)
        except np.linalg.LinAlgError as exc:
            raise SingularWd(f"{what}: Jacobian is singular") from exc
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
                return z
            raise NoConvergence(f"{what} stalled", iterations=it, residual_norm=rnorm)
    if rnorm <= loose:
        return z
    raise NoConvergence(f"{what} did not converge", iterations=max_iter,
                        residual_norm=rnorm)


def fminus_inverse(Ld: DiscreteLagrangian, m: MomentaState, h: float,
                   guess: JetPoint = None, tol: float = 1e-12,
                   max_iter: int = 50) -> PairState:
    """Pair state whose minus map equals ``m`` (left point is fixed by m)."""
    n = m.n
    left = JetPoint(m.q, (m.v,))
    target = np.concatenate([m.p, m.pt])
    if guess is None:
        z0 = np.concatenate([m.q + h * m.v, m.v])
    else:
        z0 = np.concatenate([guess.q, guess.deriv(1)])

    def pair(z):
        return PairState(left, JetPoint(z[:n], (z[n:],)), h)

    def residual(z):
        D1, D2, _, _ = Ld.partials(pair(z))
        return np.concatenate([-D1, -D2]) - target

    def jacobian(z):
        DD = Ld.second_partials(pair(z))
        return -DD[:2 * n, 2 * n:]

    def scale_fn(z):
        return max(Ld.residual_scale(pair(z)), float(np.max(np.abs(target))))

    z = _newton_2n(residual, jacobian, z0, scale_fn, tol, max_iter,
                   "minus-map inversion")
    return pair(z)


def fplus_inverse(Ld: DiscreteLagrangian, m: MomentaState, h: float,
                  guess: JetPoint = None, tol: float = 1e-12,
                  max_iter: int = 50) -> PairState:
    """Pair state whose plus map equals ``m`` (right point is fixed by m)."""
    n = m.n
    right = JetPoint(m.q, (m.v,))
    target = np.concatenate([m.p, m.pt])
    if guess is None:
        z0 = np.concatenate([m.q - h * m.v, m.v])
    else:
        z0 = np.concatenate([guess.q, guess.deriv(1)])

    def pair(z):
        return PairState(JetPoint(z[:n], (z[n:],)), right, h)

    def residual(z):
        _, _, D3, D4 = Ld.partials(pair(z))
        return np.concatenate([D3, D4]) - target

    def jacobian(z):
        DD = Ld.second_partials(pair(z))
        return DD[2 * n:, :2 * n]

    def scale_fn(z):
        return max(Ld.residual_scale(pair(z)), float(np.max(np.abs(target))))

    z = _newton_2n(residual, jacobian, z0, scale_fn, tol, max_iter,
                   "plus-map inversion")
    return pair(z)


def hamiltonian_step(Ld: DiscreteLagrangian, m: MomentaState, h: float,
                     guess: JetPoint = None, tol: float = 1e-12,
                     max_iter: int = 50) -> MomentaState:
    """Momentum-space step: plus map after inverting the minus map.

    In coordinates this sends (q0, v0, -D1, -D2) of the solved pair to
    (q1, v1, D3, D4) of the same pair.
    """
    s = fminus_inverse(Ld, m, h, guess=guess, tol=tol, max_iter=max_iter)
    return fplus(Ld, s)


def symplectic_defect(Ld: DiscreteLagrangian, m: MomentaState, h: float,
                      fd_step: float = 1e-6) -> float:
    """Max-norm deviation of the step map's Jacobian from preserving the
    canonical two-form in (q, v | p, pt) coordinates.

    The Jacobian comes from central differences with per-coordinate steps
    ``fd_step * (1 + |coordinate|)``, warm-started from the base solve, so the
    value is limited by second-order difference noise.
    """
    n = m.n
    base_pair = fminus_inverse(Ld, m, h)
    x = m.as_array()
    J = np.empty((4 * n, 4 * n))
    for i in range(4 * n):
        d = fd_step * (1.0 + abs(x[i]))
        xp = x.copy(); xp[i] += d
        xm = x.copy(); xm[i] -= d
        outp = hamiltonian_step(Ld, MomentaState.from_array(xp, n), h,
                                guess=base_pair.right)
        outm = hamiltonian_step(Ld, MomentaState.from_array(xm, n), h,
                                guess=base_pair.right)
        J[:, i] = (outp.as_array() - outm.as_array()) / (2.0 * d)
    I = np.eye(2 * n)
    Z = np.zeros((2 * n, 2 * n))
    Omega = np.block([[Z, I], [-I, Z]])
    return float(np.max(np.abs(J.T @ Omega @ J - Omega)))


def legendre_match_errors(L: LagrangianModel, q1jet: JetPoint, q2jet: JetPoint,
                          h: float, fd_step: float = None):
    """Errors of the two momentum-map identities for the exact one-step action.

    The minus map of the exact action should equal the continuous momentum
    map at the initial jet of the connecting flow, and the plus map should
    equal it at the final jet.  This differentiates the shooting-computed
    action in its four endpoint arguments by central differences (substep
    count frozen at the base solve, warm-started) and compares both sides.
    Returns (left_err, right_err) in max norm.

    The default difference step (2e-5) sits well above the jitter of the
    inner solves, which are themselves driven to near machine accuracy.
    """
    from .bvp import integrate_el, shooting_bvp

    n = L.n
    step_factor = fd_step if fd_step is not None else 2e-5
    jet0, S = shooting_bvp(L, q1jet, q2jet, h, return_substeps=True)
    jeth = integrate_el(L, jet0, h, S)
    cont0 = legendre(L, jet0)
    conth = legendre(L, jeth)

    x0 = np.concatenate([jet0.q, jet0.deriv(1), jet0.deriv(2), jet0.deriv(3)])

    def action(args):
        q1 = JetPoint(args[:n], (args[n:2 * n],))
        q2 = JetPoint(args[2 * n:3 * n], (args[3 * n:],))
        return _shoot_action(L, q1, q2, h, S, x0[2 * n:])

    base = np.concatenate([q1jet.q, q1jet.deriv(1), q2jet.q, q2jet.deriv(1)])
    D = np.empty(4 * n)
    for i in range(4 * n):
        d = step_factor * (1.0 + abs(base[i]))
        xp = base.copy(); xp[i] += d
        xm = base.copy(); xm[i] -= d
        D[i] = (action(xp) - action(xm)) / (2.0 * d)
    D1, D2, D3, D4 = D[:n], D[n:2 * n], D[2 * n:3 * n], D[3 * n:]
    left_err = max(np.max(np.abs(-D1 - cont0.p)), np.max(np.abs(-D2 - cont0.pt)))
    right_err = max(np.max(np.abs(D3 - conth.p)), np.max(np.abs(D4 - conth.pt)))
    return float(left_err), float(right_err)


def _shoot_action(L, q1jet, q2jet, h, substeps, x_warm):
    """One fixed-resolution shooting solve returning the action.

    The Newton tolerance is near machine level so that the returned action is
    a smooth function of the endpoint data, fit for outer differencing.
    """
    from .bvp import _shoot_once, integrate_el

    x = _shoot_once(L, q1jet, q2jet, h, substeps, x_warm.copy(), 5e-14, 60)
    n = L.n
    jet = JetPoint(q1jet.q, (q1jet.deriv(1), x[:n], x[n:]))
    _, action = integrate_el(L, jet, h, substeps, with_action=True)
    return action
