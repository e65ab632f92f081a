"""Independent reference computations used by the tests.

Nothing here imports the package's integrators: the chain generator is
built by looping over states with bit strings, and solved with dense expm.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import expm


def bits_of(k: int, n: int) -> list[int]:
    # string reversal of a binary numeral, like fliplr(dec2bin(k, n))
    return [int(c) for c in format(k, f"0{n}b")[::-1]]


def marginal_matrix_oracle(n: int) -> np.ndarray:
    return np.array([bits_of(k, n) for k in range(2 ** n)], dtype=float)


def dense_generator(A, beta, delta) -> np.ndarray:
    """Row-oriented generator: Q[s, t] is the rate of jumping from state s to t."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    beta = np.broadcast_to(beta, (n,))
    delta = np.broadcast_to(delta, (n,))
    N = 2 ** n
    Q = np.zeros((N, N))
    for s in range(N):
        x = bits_of(s, n)
        for i in range(n):
            t = s ^ (1 << i)
            if x[i]:
                Q[s, t] = delta[i]
            else:
                Q[s, t] = beta[i] * sum(A[i, j] * x[j] for j in range(n))
        Q[s, s] = -Q[s].sum()
    return Q


def chain_expm(y0, A, beta, delta, times) -> np.ndarray:
    Q = dense_generator(A, beta, delta)
    return np.array([y0 @ expm(Q * t) for t in times])


def mf_reference(p0, A, beta, delta, times, rtol=1e-12, atol=1e-14):
    from scipy.integrate import solve_ivp
    A = np.asarray(A, dtype=float)

    def f(t, p):
        return (1 - p) * beta * (A @ p) - delta * p

    sol = solve_ivp(f, (0, times[-1]), p0, t_eval=times, rtol=rtol, atol=atol, method="DOP853")
    return sol.y.T
