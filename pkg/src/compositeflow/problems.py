"""Composite problems ``H(x) = f(x) + h(Ax)`` and their smoothed version
``H_mu(x) = f(x) + h_mu(Ax)``.

Functions of ``x`` accept a single vector or a batch with the ensemble on
the first axis, except the criticality tools (``subgrad_residual``,
``lift_point``), which take one point.
"""

from dataclasses import dataclass, field

import numpy as np

from . import rng
from .errors import ConfigError, UsageError
from .operators import LinearMap, first_difference, random_gaussian
from .regularizers import make_regularizer

NOISE_MODES = ("exact", "gaussian", "minibatch")


class SmoothSum:
    """Least-squares finite sum ``f(x) = (1/N) sum_i 0.5 (a_i^T x - b_i)^2``."""

    def __init__(self, a, b):
        a = np.array(a, dtype=float, ndmin=2)
        b = np.array(b, dtype=float, ndmin=1)
        if a.shape[0] != b.shape[0]:
            raise UsageError(f"{a.shape[0]} data rows but {b.shape[0]} targets")
        a.flags.writeable = False
        b.flags.writeable = False
        self.a, self.b = a, b
        self.lipschitz = float(np.linalg.eigvalsh(a.T @ a / a.shape[0])[-1])

    @property
    def N(self):
        return self.a.shape[0]

    @property
    def n(self):
        return self.a.shape[1]

    def residuals(self, x):
        return np.asarray(x, dtype=float) @ self.a.T - self.b

    def value(self, x):
        r = self.residuals(x)
        return 0.5 * np.mean(r * r, axis=-1)

    def grad(self, x):
        return self.residuals(x) @ self.a / self.N

    def grad_subset(self, x, idx):
        r = np.asarray(x, dtype=float) @ self.a[idx].T - self.b[idx]
        return r @ self.a[idx] / len(idx)


class QuarticSum:
    """``f(x) = (scale/4) sum_j x_j^4``, a smooth term with Lojasiewicz
    exponent 3/4 at its minimizer.

    Its gradient is only locally Lipschitz; ``lipschitz`` is the constant
    ``3 scale radius^2`` valid on the ball of the given radius.
    """

    N = 1

    def __init__(self, n, scale=1.0, radius=1.0):
        self.n = int(n)
        self.scale = float(scale)
        self.radius = float(radius)
        self.lipschitz = 3.0 * self.scale * self.radius**2

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return 0.25 * self.scale * np.sum(x**4, axis=-1)

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        return self.scale * x**3

    def grad_subset(self, x, idx):
        return self.grad(x)


@dataclass(frozen=True)
class NoiseSpec:
    """Gradient-noise model.

    ``exact`` returns the full gradient; ``gaussian`` adds ``scale`` times an
    isotropic standard normal vector; ``minibatch`` averages ``batch``
    component gradients drawn without replacement.
    """

    mode: str = "exact"
    scale: float = 1.0
    batch: int | None = None
    master_seed: int = 0

    def __post_init__(self):
        if self.mode not in NOISE_MODES:
            raise ConfigError(f"unknown noise mode {self.mode!r}", key="mode")
        if self.mode == "minibatch" and not (self.batch and self.batch > 0):
            raise ConfigError("minibatch noise needs a positive batch size", key="batch")
        if self.scale < 0:
            raise ConfigError("noise scale must be nonnegative", key="scale")


@dataclass(frozen=True)
class ResidualReport:
    """Outcome of ``subgrad_residual``.

    ``achieved`` is ``||grad f(x) + A^T g||`` at the best ``g`` found, an
    upper bound on ``dist(0, dH(x))``; ``lower_certified`` is a duality
    (Frank-Wolfe gap) lower bound on the same distance; ``certificate`` is
    the final projected-gradient norm.
    """

    achieved: float
    lower_certified: float
    certificate: float
    converged: bool
    iterations: int
    g: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class CompositeProblem:
    f: object
    h: object
    A: LinearMap
    mu: float

    def __post_init__(self):
        if self.f.n != self.A.cols:
            raise UsageError(f"f acts on R^{self.f.n} but A has {self.A.cols} columns")
        if self.h.dim != self.A.rows:
            raise UsageError(f"h acts on R^{self.h.dim} but A has {self.A.rows} rows")
        object.__setattr__(self, "envelope", self.h.envelope(self.mu))

    @property
    def n(self):
        return self.A.cols

    @property
    def m(self):
        return self.A.rows

    @property
    def L(self):
        """Lipschitz constant of ``grad H_mu``."""
        return self.f.lipschitz + self.envelope.smoothness * self.A.gram_norm()

    def grad_full(self, x):
        return self.f.grad(x)

    def grad_stochastic(self, x, noise, step_index, seed=None):
        """Noisy gradient for iteration ``step_index``.

        ``seed`` overrides ``noise.master_seed``; for a batch ``x`` of shape
        ``(M, n)`` it must be a sequence of ``M`` seeds, one per row.
        """
        x = np.asarray(x, dtype=float)
        if noise.mode == "exact":
            return self.f.grad(x)
        seed = noise.master_seed if seed is None else seed
        if noise.mode == "gaussian":
            if x.ndim == 1:
                zeta = rng.standard_normal(seed, "grad", step_index, self.n)
            else:
                zeta = rng.ensemble_normal(seed, "grad", step_index, self.n)
            return self.f.grad(x) + noise.scale * zeta
        if noise.batch > self.f.N:
            raise UsageError(f"minibatch size {noise.batch} exceeds N={self.f.N}")
        if x.ndim == 1:
            idx = rng.sample_without_replacement(seed, "grad", step_index, self.f.N, noise.batch)
            return self.f.grad_subset(x, idx)
        return np.stack(
            [
                self.f.grad_subset(xi, rng.sample_without_replacement(s, "grad", step_index, self.f.N, noise.batch))
                for xi, s in zip(x, seed)
            ]
        )

    def objective_H(self, x):
        return self.f.value(x) + self.h.value(self.A.apply(x))

    def objective_H_mu(self, x):
        return self.f.value(x) + self.envelope.value(self.A.apply(x))

    def grad_H_mu(self, x):
        return self.f.grad(x) + self.A.apply_adjoint(self.envelope.grad(self.A.apply(x)))

    def subgrad_residual(self, x, tol=1e-10, max_iter=10000, z=None):
        """``dist(0, grad f(x) + A^T dh(Ax))`` by projected gradient over the
        box of coordinate subgradients.

        ``z`` replaces ``Ax`` as the point where ``dh`` is evaluated, for
        callers that know ``Ax`` exactly while its floating-point evaluation
        would move exact zeros off the kinks of ``h``.
        """
        x = np.asarray(x, dtype=float)
        c = self.f.grad(x)
        lo, hi = self.h.subdiff_interval(self.A.apply(x) if z is None else np.asarray(z, dtype=float))
        step = 1.0 / max(self.A.gram_norm(), np.finfo(float).tiny)
        g = np.clip(0.0, lo, hi)
        pg = np.inf
        it = 0
        for it in range(1, max_iter + 1):
            d = self.A.apply(c + self.A.apply_adjoint(g))
            g_new = np.clip(g - step * d, lo, hi)
            pg = float(np.linalg.norm(g_new - g)) / step
            g = g_new
            if pg <= tol:
                break
        v = c + self.A.apply_adjoint(g)
        phi = 0.5 * float(v @ v)
        d = self.A.apply(v)
        fw_gap = float(np.sum(np.maximum(d * (g - lo), d * (g - hi))))
        lower = float(np.sqrt(max(0.0, 2.0 * (phi - fw_gap))))
        return ResidualReport(
            achieved=float(np.sqrt(2.0 * phi)),
            lower_certified=lower,
            certificate=pg,
            converged=pg <= tol,
            iterations=it,
            g=g,
        )

    def lift_point(self, x):
        """``x - A^T (A A^T)^{-1} (Ax - prox_{mu h}(Ax))``; maps ``x`` onto the
        affine set where ``A x_bar = prox_{mu h}(Ax)``."""
        x = np.asarray(x, dtype=float)
        ax = self.A.apply(x)
        return x - self.A.pinv_apply(ax - self.h.prox(self.mu, ax))

    def eps_criticality_bound(self, mu=None):
        """``L_f L_h mu / sqrt(lambda_min(A A^T))``."""
        mu = self.mu if mu is None else mu
        self.A._require_surjective()
        return self.f.lipschitz * self.h.lipschitz * mu / np.sqrt(self.A.min_eig_gram_adjoint())

    def max_mu_for_eps(self, eps):
        """Largest smoothing level whose criticality bound is ``eps``."""
        self.A._require_surjective()
        return eps * np.sqrt(self.A.min_eig_gram_adjoint()) / (self.f.lipschitz * self.h.lipschitz)

    def with_mu(self, mu):
        return CompositeProblem(self.f, self.h, self.A, mu)


# module-level spellings of the methods
def grad_full(p, x):
    return p.grad_full(x)


def grad_stochastic(p, x, noise, step_index):
    return p.grad_stochastic(x, noise, step_index)


def objective_H(p, x):
    return p.objective_H(x)


def objective_H_mu(p, x):
    return p.objective_H_mu(x)


def grad_H_mu(p, x):
    return p.grad_H_mu(x)


def subgrad_residual(p, x, tol=1e-10):
    return p.subgrad_residual(x, tol=tol)


def lift_point(p, x):
    return p.lift_point(x)


def eps_criticality_bound(p):
    return p.eps_criticality_bound()


def least_squares_data(n, N, seed=0, noise_level=0.1, sparsity=0.5):
    """Gaussian design ``a`` and targets ``b = a x* + noise`` with a sparse
    planted ``x*``."""
    keys = rng.stream_keys(seed, "data", 0)
    a = rng.normals(keys, N * n)[0].reshape(N, n)
    u = rng.uniforms(rng.stream_keys(seed, "data", 1), n)[0]
    x_star = rng.normals(rng.stream_keys(seed, "data", 2), n)[0] * (u >= sparsity)
    eps = rng.normals(rng.stream_keys(seed, "data", 3), N)[0]
    return a, a @ x_star + noise_level * eps, x_star


PROBLEM_KEYS = {
    "n", "m", "N", "operator", "lambda_min", "reg", "mu", "data_seed", "noise_level",
    "smooth", "quartic_scale", "quartic_radius", "data_csv", "target_csv", "operator_csv",
}


def from_config(spec):
    """Build a :class:`CompositeProblem` from a problem config mapping.

    ``operator`` is one of ``identity``, ``gaussian`` (needs ``m`` and uses
    ``lambda_min``), ``difference`` or ``csv`` (``operator_csv``).  Data come
    from ``data_csv``/``target_csv`` when given, otherwise they are generated
    from ``data_seed``.
    """
    extra = set(spec) - PROBLEM_KEYS
    if extra:
        raise ConfigError(f"unknown problem keys {sorted(extra)}", key=sorted(extra)[0])
    seed = int(spec.get("data_seed", 0))
    smooth = spec.get("smooth", "least_squares")
    if smooth == "quartic":
        n = int(spec.get("n", 1))
        f = QuarticSum(n, spec.get("quartic_scale", 1.0), spec.get("quartic_radius", 1.0))
    elif smooth == "least_squares":
        if "data_csv" in spec:
            a = np.loadtxt(spec["data_csv"], delimiter=",", ndmin=2)
            b = np.loadtxt(spec["target_csv"], delimiter=",", ndmin=1)
        else:
            a, b, _ = least_squares_data(
                int(spec.get("n", 10)), int(spec.get("N", 50)), seed, spec.get("noise_level", 0.1)
            )
        f = SmoothSum(a, b)
        n = f.n
    else:
        raise ConfigError(f"unknown smooth term {smooth!r}", key="smooth")

    kind = spec.get("operator", "identity")
    if kind == "identity":
        A = LinearMap.identity(n)
    elif kind == "gaussian":
        A = random_gaussian(int(spec.get("m", n)), n, float(spec.get("lambda_min", 1.0)), seed)
    elif kind == "difference":
        A = first_difference(n)
    elif kind == "csv":
        A = LinearMap.from_csv(spec["operator_csv"], seed=seed)
    else:
        raise ConfigError(f"unknown operator kind {kind!r}", key="operator")
    h = make_regularizer(spec.get("reg", {"kind": "l1", "weight": 0.1}), A.rows)
    return CompositeProblem(f, h, A, float(spec.get("mu", 1e-2)))
