"""State containers: jet points, state pairs, time grids, and discrete paths.

All types are immutable after construction (arrays are marked read-only), so
instances can be shared freely between concurrent workers.  Solvers operate on
flat vectors produced by :func:`pack` and go back via :func:`unpack`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def _frozen_vector(a, name: str) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a 1-d real vector, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class JetPoint:
    """A configuration together with its first ``order`` time derivatives.

    ``q`` holds chart coordinates; ``derivs[j]`` is the (j+1)-th derivative,
    in units of position/time**(j+1).  All vectors share the dimension ``n``.
    """

    q: np.ndarray
    derivs: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "q", _frozen_vector(self.q, "q"))
        ds = tuple(_frozen_vector(d, f"derivs[{i}]") for i, d in enumerate(self.derivs))
        for i, d in enumerate(ds):
            if d.shape != self.q.shape:
                raise ValueError(f"derivs[{i}] has dimension {d.size}, expected {self.q.size}")
        object.__setattr__(self, "derivs", ds)

    @property
    def order(self) -> int:
        return len(self.derivs)

    @property
    def dim(self) -> int:
        return self.q.size

    def deriv(self, j: int) -> np.ndarray:
        """j-th derivative; ``deriv(0)`` is the configuration itself."""
        return self.q if j == 0 else self.derivs[j - 1]

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.q, *self.derivs]) if self.derivs else self.q.copy()

    @staticmethod
    def from_array(arr, order: int, n: int) -> "JetPoint":
        arr = np.asarray(arr, dtype=float)
        if arr.size != (order + 1) * n:
            raise ValueError(f"expected length {(order + 1) * n}, got {arr.size}")
        parts = arr.reshape(order + 1, n)
        return JetPoint(parts[0], tuple(parts[1:]))

    def __repr__(self):  # keep reprs short in failures
        parts = ", ".join(np.array2string(self.deriv(j), precision=6) for j in range(self.order + 1))
        return f"JetPoint({parts})"


@dataclass(frozen=True, eq=False)
class PairState:
    """Two jet points of equal order plus the step ``h`` separating them.

    With jets of order k-1 this is the discrete state of a k-th order scheme;
    for k = 2 it carries (q0, v0, q1, v1).
    """

    left: JetPoint
    right: JetPoint
    h: float

    def __post_init__(self):
        if self.left.order != self.right.order:
            raise ValueError("left and right jets must have equal order")
        if self.left.dim != self.right.dim:
            raise ValueError("left and right jets must have equal dimension")
        if not self.h > 0.0:
            raise ValueError(f"h must be positive, got {self.h}")
        object.__setattr__(self, "h", float(self.h))

    @property
    def n(self) -> int:
        return self.left.dim

    @property
    def k(self) -> int:
        return self.left.order + 1


@dataclass(frozen=True)
class Grid:
    """Uniform time grid with nodes t0 + i*h for i = 0..N.

    Node times come from the closed formula, never from accumulation, so
    ``node(i)`` is bit-identical no matter how often it is evaluated.
    """

    t0: float
    h: float
    N: int

    def __post_init__(self):
        if not self.h > 0.0:
            raise ValueError(f"h must be positive, got {self.h}")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N}")
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "h", float(self.h))
        object.__setattr__(self, "N", int(self.N))

    def node(self, i: int) -> float:
        return self.t0 + i * self.h

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.h * np.arange(self.N + 1)

    @property
    def t_end(self) -> float:
        return self.node(self.N)


@dataclass(frozen=True, eq=False)
class DiscretePath:
    """A grid plus N+1 jet points and per-step diagnostic arrays."""

    grid: Grid
    states: tuple
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        states = tuple(self.states)
        if len(states) != self.grid.N + 1:
            raise ValueError(f"expected {self.grid.N + 1} states, got {len(states)}")
        order, dim = states[0].order, states[0].dim
        for s in states:
            if s.order != order or s.dim != dim:
                raise ValueError("all states must share order and dimension")
        object.__setattr__(self, "states", states)

    @property
    def n(self) -> int:
        return self.states[0].dim

    def deriv_array(self, j: int) -> np.ndarray:
        """(N+1, n) array of the j-th derivative along the path."""
        return np.array([s.deriv(j) for s in self.states])

    def positions(self) -> np.ndarray:
        return self.deriv_array(0)

    def velocities(self) -> np.ndarray:
        return self.deriv_array(1)


def uniform_grid(t0: float, T: float, N: int) -> Grid:
    """Grid over [t0, T] with N steps of size (T - t0)/N."""
    if not T > t0:
        raise ValueError(f"need T > t0, got t0={t0}, T={T}")
    if int(N) != N or N < 1:
        raise ValueError(f"N must be a positive integer, got {N}")
    return Grid(float(t0), (float(T) - float(t0)) / int(N), int(N))


def pack(state: PairState) -> np.ndarray:
    """Flatten a pair state to a 2kn vector: (left.q, left.derivs..., right...)."""
    return np.concatenate([state.left.as_array(), state.right.as_array()])


def unpack(v, k: int, n: int, h: float = 1.0) -> PairState:
    """Inverse of :func:`pack`.  The step is not part of the flat vector and
    defaults to 1; pass the original ``h`` to get a strict inverse."""
    v = np.asarray(v, dtype=float)
    if v.size != 2 * k * n:
        raise ValueError(f"expected length {2 * k * n}, got {v.size}")
    left = JetPoint.from_array(v[: k * n], k - 1, n)
    right = JetPoint.from_array(v[k * n:], k - 1, n)
    return PairState(left, right, h)
