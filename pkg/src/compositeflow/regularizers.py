"""Separable weakly convex penalties and their Moreau envelopes.

Three penalties are supported, each applied coordinatewise and summed:

* ``l1``:   ``w |t|``                                     (modulus 0)
* ``mcp``:  ``w|t| - t^2/(2g)`` for ``|t| <= g w``, else ``g w^2 / 2``
            (modulus ``1/g``)
* ``scad``: ``w|t|`` for ``|t| <= w``,
            ``(2 a w |t| - t^2 - w^2) / (2(a-1))`` for ``w < |t| <= a w``,
            ``(a+1) w^2 / 2`` beyond (modulus ``1/(a-1)``)

All three are ``w``-Lipschitz per coordinate, so the Euclidean Lipschitz
constant reported on ``R^m`` is ``w sqrt(m)``.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericalError, UsageError

KINDS = ("l1", "mcp", "scad")
_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class Regularizer:
    kind: str
    weight: float
    dim: int
    shape: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown regularizer kind {self.kind!r}", key="kind")
        if self.weight < 0:
            raise ConfigError("regularizer weight must be nonnegative", key="weight")
        if self.dim < 1:
            raise ConfigError("regularizer dimension must be positive", key="dim")
        if self.kind == "mcp" and not (self.shape is not None and self.shape > 0):
            raise ConfigError("mcp needs shape gamma > 0", key="shape")
        if self.kind == "scad" and not (self.shape is not None and self.shape > 1):
            raise ConfigError("scad needs shape a > 1", key="shape")

    @property
    def modulus(self):
        """Weak-convexity modulus: ``h + modulus/2 ||.||^2`` is convex."""
        if self.kind == "mcp":
            return 1.0 / self.shape
        if self.kind == "scad":
            return 1.0 / (self.shape - 1.0)
        return 0.0

    @property
    def lipschitz(self):
        return self.weight * np.sqrt(self.dim)

    def _check(self, y):
        y = np.asarray(y, dtype=float)
        if y.shape[-1:] != (self.dim,):
            raise UsageError(f"regularizer of dimension {self.dim} got shape {y.shape}")
        return y

    def penalty(self, t):
        """Scalar penalty applied elementwise."""
        a = np.abs(np.asarray(t, dtype=float))
        w = self.weight
        if self.kind == "l1":
            return w * a
        if self.kind == "mcp":
            g = self.shape
            return np.where(a <= g * w, w * a - a * a / (2 * g), 0.5 * g * w * w)
        s = self.shape
        return np.where(
            a <= w,
            w * a,
            np.where(a <= s * w, (2 * s * w * a - a * a - w * w) / (2 * (s - 1)), 0.5 * (s + 1) * w * w),
        )

    def value(self, y):
        return np.sum(self.penalty(self._check(y)), axis=-1)

    def slope(self, t):
        """Derivative of the penalty at ``|t| > 0`` as a function of ``|t|``."""
        a = np.abs(np.asarray(t, dtype=float))
        w = self.weight
        if self.kind == "l1":
            return np.full_like(a, w)
        if self.kind == "mcp":
            return np.maximum(w - a / self.shape, 0.0)
        s = self.shape
        return np.where(a <= w, w, np.maximum(s * w - a, 0.0) / (s - 1))

    def subdiff_interval(self, y):
        """Per-coordinate Clarke subdifferential ``[lo, hi]`` at ``y``."""
        y = np.asarray(y, dtype=float)
        d = np.sign(y) * self.slope(y)
        zero = y == 0
        lo = np.where(zero, -self.weight, d)
        hi = np.where(zero, self.weight, d)
        return lo, hi

    def prox(self, sigma, y):
        """Coordinatewise minimizer of ``h(z) + ||z - y||^2 / (2 sigma)``.

        When ``sigma * modulus >= 1`` the subproblem may have several global
        minimizers; the one of smallest magnitude is returned (nonnegative on
        exact symmetric ties).
        """
        if sigma <= 0:
            raise UsageError("prox step sigma must be positive")
        y = np.asarray(y, dtype=float)
        if sigma * self.modulus < 1.0:
            return self._prox_convex(sigma, y)
        return self._prox_candidates(sigma, y)

    def _prox_convex(self, sigma, y):
        a = np.abs(y)
        sg = np.sign(y)
        w = self.weight
        if self.kind == "l1":
            return sg * np.maximum(a - sigma * w, 0.0)
        if self.kind == "mcp":
            g = self.shape
            mid = sg * np.maximum(a - sigma * w, 0.0) / (1.0 - sigma / g)
            return np.where(a > g * w, y, mid)
        s = self.shape
        soft = sg * np.maximum(a - sigma * w, 0.0)
        mid = ((s - 1) * y - sg * sigma * s * w) / (s - 1 - sigma)
        return np.where(a <= (1 + sigma) * w, soft, np.where(a <= s * w, mid, y))

    def _prox_candidates(self, sigma, y):
        # Exact enumeration of the branch minimizers on z >= 0 for |y|;
        # every branch is either convex (interior stationary point) or
        # concave (endpoints), so the global minimizer is among these.
        a = np.abs(y)
        w = self.weight
        if self.kind == "mcp":
            g = self.shape
            cands = [np.zeros_like(a), np.full_like(a, g * w), np.maximum(a, g * w)]
        else:
            s = self.shape
            cands = [
                np.clip(a - sigma * w, 0.0, w),
                np.full_like(a, w),
                np.full_like(a, s * w),
                np.maximum(a, s * w),
            ]
        cands = np.stack(cands)
        obj = self.penalty(cands) + (cands - a) ** 2 / (2 * sigma)
        best = obj.min(axis=0)
        tied = obj <= best + 1e-14 * (1.0 + np.abs(best))
        mag = np.where(tied, cands, np.inf).min(axis=0)
        return np.sign(y) * mag

    def prox_slope(self, sigma, y):
        """Derivative of ``prox(sigma, .)`` at ``y`` (valid for ``sigma*modulus < 1``)."""
        a = np.abs(np.asarray(y, dtype=float))
        w = self.weight
        if self.kind == "l1":
            return (a > sigma * w).astype(float)
        if self.kind == "mcp":
            g = self.shape
            return np.where(a > g * w, 1.0, np.where(a > sigma * w, 1.0 / (1.0 - sigma / g), 0.0))
        s = self.shape
        return np.where(
            a > s * w,
            1.0,
            np.where(a > (1 + sigma) * w, (s - 1) / (s - 1 - sigma), (a > sigma * w).astype(float)),
        )

    def envelope(self, mu):
        return EnvelopeView(self, mu)


@dataclass(frozen=True)
class EnvelopeView:
    """Moreau envelope ``h_mu`` of a regularizer, for ``0 < mu < 1/modulus``.

    It exposes the same surface as :class:`Regularizer` (``value``, ``prox``,
    ``subdiff_interval``, ``envelope``...) so a smoothed problem can be handed
    to any solver that accepts a plain regularizer.
    """

    base: Regularizer
    mu: float

    def __post_init__(self):
        if not self.mu > 0:
            raise ConfigError("mu must be positive", key="mu")
        if self.mu * self.base.modulus >= 1.0:
            raise ConfigError(
                f"mu must satisfy 0 < mu < 1/rho_weak = {1.0 / self.base.modulus:g}", key="mu"
            )

    @property
    def kind(self):
        return f"{self.base.kind}_envelope"

    @property
    def dim(self):
        return self.base.dim

    @property
    def weight(self):
        return self.base.weight

    @property
    def modulus(self):
        return 0.0

    @property
    def lipschitz(self):
        return self.base.lipschitz

    @property
    def smoothness(self):
        """Lipschitz constant of the envelope gradient."""
        rw = self.base.modulus
        return max(1.0 / self.mu, rw / (1.0 - rw * self.mu))

    def value(self, y):
        y = self.base._check(y)
        p = self.base.prox(self.mu, y)
        return np.sum(self.base.penalty(p) + (p - y) ** 2 / (2 * self.mu), axis=-1)

    def grad(self, y):
        return self._grad(self.base._check(y))

    def _grad(self, y):
        return (y - self.base.prox(self.mu, y)) / self.mu

    def curvature(self, y):
        """Elementwise second derivative of the (separable) envelope."""
        return (1.0 - self.base.prox_slope(self.mu, y)) / self.mu

    def subdiff_interval(self, y):
        g = self._grad(np.asarray(y, dtype=float))
        return g, g

    def envelope(self, nu):
        # inf-convolution is associative and q_a # q_b = q_(a+b)
        return EnvelopeView(self.base, self.mu + nu)

    @property
    def weak_modulus(self):
        """``h_mu + c/2 ||.||^2`` is convex for ``c = rho_weak / (1 - rho_weak mu)``."""
        rw = self.base.modulus
        return rw / (1.0 - rw * self.mu)

    def prox(self, sigma, w, tol=1e-10, max_iter=200):
        """Minimizer of ``h_mu(z) + ||z - w||^2 / (2 sigma)``.

        When ``sigma * weak_modulus < 1`` the subproblem is strongly convex
        and is solved per coordinate by Newton's method on the stationarity
        equation ``grad h_mu(z) + (z - w)/sigma = 0`` inside the bracket
        ``[min(0, w), max(0, w)]``, falling back to bisection whenever a
        Newton step leaves the bracket.  Otherwise the global minimizer is
        taken from the joint problem in ``(p, z)``:
        ``z = w + sigma/(mu + sigma) (prox_{(mu+sigma) h}(w) - w)``, which
        inherits the tie-break of :meth:`Regularizer.prox`.
        """
        if sigma <= 0:
            raise UsageError("prox step sigma must be positive")
        w = np.asarray(w, dtype=float)
        if sigma * self.weak_modulus >= 1.0:
            p = self.base.prox(self.mu + sigma, w)
            return w + (sigma / (self.mu + sigma)) * (p - w)
        lo = np.minimum(w, 0.0)
        hi = np.maximum(w, 0.0)
        z = w * (self.mu / (self.mu + sigma))
        target = tol * (1.0 + np.abs(w))
        for _ in range(max_iter):
            phi = self._grad(z) + (z - w) / sigma
            done = (np.abs(phi) <= target) | (hi - lo <= 4 * _EPS * np.maximum(np.abs(hi), np.abs(lo)))
            if np.all(done):
                return z
            hi = np.where(phi > 0, np.minimum(hi, z), hi)
            lo = np.where(phi < 0, np.maximum(lo, z), lo)
            step = z - phi / (self.curvature(z) + 1.0 / sigma)
            inside = (step > lo) & (step < hi)
            z = np.where(done, z, np.where(inside, step, 0.5 * (lo + hi)))
        phi = self._grad(z) + (z - w) / sigma
        raise NumericalError("envelope prox did not converge", estimate=z, residual=float(np.max(np.abs(phi))))


def make_regularizer(spec, dim):
    """Build from a config mapping ``{"kind", "weight", "shape"}``."""
    extra = set(spec) - {"kind", "weight", "shape"}
    if extra:
        raise ConfigError(f"unknown regularizer keys {sorted(extra)}", key=sorted(extra)[0])
    return Regularizer(spec.get("kind", "l1"), float(spec.get("weight", 1.0)), dim, spec.get("shape"))


def value(h, y):
    return h.value(y)


def prox(h, sigma, y):
    return h.prox(sigma, y)


def moreau_value(e, y):
    return e.value(y)


def moreau_grad(e, y):
    return e.grad(y)


def prox_of_envelope(e, sigma, w):
    return e.prox(sigma, w)
