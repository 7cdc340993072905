"""Independent reference computations shared by the test modules.

Everything here is assembled from first principles (hand-derived update
relations, generic quadrature) rather than through the library's own
evaluation paths, so agreement is meaningful.
"""

import numpy as np
import scipy.integrate


def hermite_action_oracle(q0, v0, q1, v1, h):
    """Quadrature of |qddot|^2/2 along the connecting cubic."""
    q0, v0, q1, v1 = (np.atleast_1d(np.asarray(x, float)) for x in (q0, v0, q1, v1))
    c2 = (3 * (q1 - q0) - h * (2 * v0 + v1)) / h**2
    c3 = (-2 * (q1 - q0) + h * (v0 + v1)) / h**3
    total = 0.0
    for a in range(q0.size):
        val, _ = scipy.integrate.quad(
            lambda t: 0.5 * (2 * c2[a] + 6 * c3[a] * t) ** 2, 0.0, h)
        total += val
    return total


def dense_taylor_bvp_oracle(x0, xN, grid):
    """Dense linear solve of the hand-derived endpoint-Taylor update
    relations q_{k+1} - q_{k-1} - 2 h v_k = 0 and
    v_{k+1} - v_{k-1} - 4 v_k + 4 (q_k - q_{k-1})/h = 0, with both boundary
    states pinned.  Returns the (N+1, 2n) node table."""
    n = x0.dim
    N = grid.N
    h = grid.h
    m = (N - 1) * 2 * n
    A = np.zeros((m, m))
    b = np.zeros(m)

    def q_idx(k, a):
        return (k - 1) * 2 * n + a

    def v_idx(k, a):
        return (k - 1) * 2 * n + n + a

    known_q = {0: x0.q, N: xN.q}
    known_v = {0: x0.deriv(1), N: xN.deriv(1)}

    row = 0
    for k in range(1, N):
        for a in range(n):
            for node, coef in ((k + 1, 1.0), (k - 1, -1.0)):
                if node in known_q:
                    b[row] -= coef * known_q[node][a]
                else:
                    A[row, q_idx(node, a)] += coef
            A[row, v_idx(k, a)] += -2.0 * h
            row += 1
        for a in range(n):
            for node, coef in ((k + 1, 1.0), (k - 1, -1.0)):
                if node in known_v:
                    b[row] -= coef * known_v[node][a]
                else:
                    A[row, v_idx(node, a)] += coef
            A[row, v_idx(k, a)] += -4.0
            for node, coef in ((k, 4.0 / h), (k - 1, -4.0 / h)):
                if node in known_q:
                    b[row] -= coef * known_q[node][a]
                else:
                    A[row, q_idx(node, a)] += coef
            row += 1

    sol = np.linalg.solve(A, b).reshape(N - 1, 2 * n)
    return np.vstack([np.concatenate([x0.q, x0.deriv(1)]), sol,
                      np.concatenate([xN.q, xN.deriv(1)])])
