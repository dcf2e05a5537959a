"""Dense linear operators ``A`` with the spectral quantities the solvers need."""

import numpy as np
import scipy.linalg

from . import rng
from .errors import NumericalError, SurjectivityError, UsageError

SURJECTIVITY_RTOL = 1e-10


class LinearMap:
    """Immutable dense ``m x n`` operator.

    ``apply`` and ``apply_adjoint`` act on the last axis, so a batch of
    vectors stacked along the first axis is mapped in one call.

    Args:
        matrix: array-like of shape ``(m, n)``.
        seed: seed of the power-iteration start vector.
    """

    def __init__(self, matrix, seed=0):
        mat = np.array(matrix, dtype=float, ndmin=2)
        if mat.ndim != 2:
            raise UsageError(f"operator must be a matrix, got shape {mat.shape}")
        mat.flags.writeable = False
        self._mat = mat
        self.seed = int(seed)
        self._cache = {}

    @property
    def matrix(self):
        return self._mat

    @property
    def rows(self):
        return self._mat.shape[0]

    @property
    def cols(self):
        return self._mat.shape[1]

    @property
    def shape(self):
        return self._mat.shape

    def __repr__(self):
        return f"LinearMap(rows={self.rows}, cols={self.cols})"

    @classmethod
    def identity(cls, n):
        return cls(np.eye(n))

    @classmethod
    def from_csv(cls, path, seed=0):
        """One row per line, comma separated, no header."""
        return cls(np.loadtxt(path, delimiter=",", ndmin=2), seed=seed)

    def to_csv(self, path):
        np.savetxt(path, self._mat, delimiter=",", fmt="%.17g")

    def apply(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.cols,):
            raise UsageError(f"apply expects last dimension {self.cols}, got {x.shape}")
        return x @ self._mat.T

    def apply_adjoint(self, y):
        y = np.asarray(y, dtype=float)
        if y.shape[-1:] != (self.rows,):
            raise UsageError(f"apply_adjoint expects last dimension {self.rows}, got {y.shape}")
        return y @ self._mat

    def gram_norm(self, tol=1e-12, max_iter=20000):
        """``||A^T A||`` by power iteration on ``A^T A``.

        The iteration stops once the Rayleigh quotient changes by less than
        ``tol`` (relative) and the eigen-residual is below ``sqrt(tol)``
        (relative), which bounds the eigenvalue error by roughly
        ``tol * ||A^T A|| / gap``.
        """
        if tol <= 0:
            raise UsageError("tol must be positive")
        key = ("gram_norm", tol, max_iter)
        if key not in self._cache:
            self._cache[key] = self._power_iteration(tol, max_iter)
        return self._cache[key]

    def _power_iteration(self, tol, max_iter):
        if not np.any(self._mat):
            return 0.0
        v = rng.standard_normal(self.seed, "power", 0, self.cols)
        v /= np.linalg.norm(v)
        est = 0.0
        for _ in range(max_iter):
            w = self.apply_adjoint(self.apply(v))
            new = float(v @ w)
            resid = np.linalg.norm(w - new * v)
            if abs(new - est) <= tol * new and resid <= np.sqrt(tol) * new:
                return new
            est = new
            nw = np.linalg.norm(w)
            if nw == 0.0:
                # start vector in the null space; reseed deterministically
                v = rng.standard_normal(self.seed + 1, "power", 0, self.cols)
                v /= np.linalg.norm(v)
                continue
            v = w / nw
        raise NumericalError(
            f"power iteration did not converge in {max_iter} iterations",
            estimate=est,
        )

    def norm(self):
        """Spectral norm ``||A|| = sqrt(||A^T A||)``."""
        return float(np.sqrt(self.gram_norm()))

    def min_eig_gram_adjoint(self):
        """Smallest eigenvalue of ``A A^T`` (dense symmetric eigensolve)."""
        if "lam_min" not in self._cache:
            gram = self._mat @ self._mat.T
            self._cache["lam_min"] = float(np.linalg.eigvalsh(gram)[0])
        return self._cache["lam_min"]

    def surjectivity_tol(self):
        return SURJECTIVITY_RTOL * self.gram_norm()

    @property
    def is_surjective(self):
        return self.min_eig_gram_adjoint() > self.surjectivity_tol()

    def _require_surjective(self):
        if not self.is_surjective:
            raise SurjectivityError(
                f"A A^T is singular: lambda_min={self.min_eig_gram_adjoint():.3e} "
                f"<= {self.surjectivity_tol():.3e}",
                estimate=self.min_eig_gram_adjoint(),
            )

    def _gram_factor(self):
        if "cho" not in self._cache:
            self._require_surjective()
            self._cache["cho"] = scipy.linalg.cho_factor(self._mat @ self._mat.T)
        return self._cache["cho"]

    def pinv_apply(self, r):
        """``A^T (A A^T)^{-1} r``: the minimum-norm solution of ``A v = r``."""
        r = np.asarray(r, dtype=float)
        if r.shape != (self.rows,):
            raise UsageError(f"pinv_apply expects shape ({self.rows},), got {r.shape}")
        return self.apply_adjoint(scipy.linalg.cho_solve(self._gram_factor(), r))

    def condition_number(self):
        """``||A^T (A A^T)^{-1}|| * ||A|| = sigma_max / sigma_min``."""
        self._require_surjective()
        return float(np.sqrt(self.gram_norm() / self.min_eig_gram_adjoint()))


def gram_norm(A, tol=1e-12, max_iter=20000):
    return A.gram_norm(tol, max_iter)


def min_eig_gram_adjoint(A):
    return A.min_eig_gram_adjoint()


def pinv_apply(A, r):
    return A.pinv_apply(r)


def condition_number(A):
    return A.condition_number()


def random_gaussian(m, n, lambda_min=1.0, seed=0):
    """Gaussian ``m x n`` operator (``m <= n``) whose ``A A^T`` has smallest
    eigenvalue exactly ``lambda_min``.

    The squared singular values of a Gaussian draw are shifted so the
    smallest equals ``lambda_min``; singular vectors are kept.
    """
    if m > n:
        raise UsageError("a surjective operator needs m <= n")
    g = rng.normals(rng.stream_keys(seed, "operator", 0), m * n)[0].reshape(m, n)
    u, s, vt = np.linalg.svd(g / np.sqrt(n), full_matrices=False)
    s2 = s**2 - s[-1] ** 2 + lambda_min
    return LinearMap((u * np.sqrt(s2)) @ vt, seed=seed)


def first_difference(n):
    """Forward differences ``x[i+1] - x[i]`` with ``x[0]`` appended as the last
    row, so the square operator is invertible."""
    d = np.zeros((n, n))
    idx = np.arange(n - 1)
    d[idx, idx] = -1.0
    d[idx, idx + 1] = 1.0
    d[n - 1, 0] = 1.0
    return LinearMap(d)
