import numpy as np
import pytest


def triple_loop_matmul(a, b):
    """Reference product computed with explicit loops, independent of BLAS."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    m, n = a.shape
    n2, l = b.shape
    assert n == n2
    out = np.zeros((m, l))
    for i in range(m):
        for j in range(l):
            acc = 0.0
            for k in range(n):
                acc += a[i, k] * b[k, j]
            out[i, j] = acc
    return out


def rel_frobenius(exact, approx):
    return np.linalg.norm(np.asarray(exact) - np.asarray(approx)) / np.linalg.norm(exact)


def finite_difference_gradient(problem, x, tau, h=1e-6):
    """Central-difference oracle for the barrier gradient."""
    from oversketch.lp import barrier_value

    g = np.zeros_like(x)
    for i in range(len(x)):
        step = np.zeros_like(x)
        step[i] = h
        g[i] = (
            barrier_value(problem, x + step, tau) - barrier_value(problem, x - step, tau)
        ) / (2 * h)
    return g


def direct_hessian_oracle(problem, x):
    """Row-by-row evaluation of sum_i a_i a_i^T / s_i^2."""
    s = problem.slacks(x)
    out = np.zeros((problem.n_variables, problem.n_variables))
    for i in range(problem.n_constraints):
        row = problem.a[i]
        out += np.outer(row, row) / s[i] ** 2
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
