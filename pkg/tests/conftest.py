import math

import numpy as np
import pytest

from compositeflow.operators import LinearMap
from compositeflow.problems import CompositeProblem, SmoothSum
from compositeflow.regularizers import Regularizer


def jacobi_eigenvalues(S, sweeps=50):
    """Cyclic Jacobi rotations on a symmetric matrix (test oracle)."""
    S = np.array(S, dtype=float)
    n = S.shape[0]
    for _ in range(sweeps):
        off = np.sqrt(np.sum(np.triu(S, 1) ** 2))
        if off < 1e-14 * max(1.0, np.abs(S).max()):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if S[p, q] == 0.0:
                    continue
                theta = 0.5 * math.atan2(2 * S[p, q], S[q, q] - S[p, p])
                c, s = math.cos(theta), math.sin(theta)
                J = np.eye(n)
                J[p, p] = J[q, q] = c
                J[p, q], J[q, p] = s, -s
                S = J.T @ S @ J
    return np.sort(np.diag(S))


def quadratic_1d(q=2.0, lam_weight=0.0, mu=1e-2):
    """``f(x) = q x^2 / 2`` on R with a zero-weight l1 term and A = 1."""
    f = SmoothSum(np.array([[math.sqrt(q)]]), np.array([0.0]))
    return CompositeProblem(f, Regularizer("l1", lam_weight, 1), LinearMap.identity(1), mu)


@pytest.fixture
def gen():
    return np.random.default_rng(20240611)


def prox_grad_reference(a, b, weight, mu=None, tol=1e-10, max_iter=200_000):
    """Minimizer of ``(1/2N)||a x - b||^2 + weight ||x||_1`` (or of its Huber
    smoothing when ``mu`` is given) by plain proximal gradient, written
    without any package code."""
    N = a.shape[0]
    L = np.linalg.eigvalsh(a.T @ a / N)[-1]
    x = np.zeros(a.shape[1])
    for _ in range(max_iter):
        v = x - (a.T @ (a @ x - b) / N) / L
        s = 1.0 / L
        soft = np.sign(v) * np.maximum(np.abs(v) - (s if mu is None else mu + s) * weight, 0.0)
        x_new = soft if mu is None else v + s / (mu + s) * (soft - v)
        if np.linalg.norm(x_new - x) <= tol * s:
            return x_new
        x = x_new
    raise RuntimeError("reference solver did not converge")


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
