"""Empirical checks of the descent, energy and Lyapunov inequalities, rate
fits under the Lojasiewicz model, and epsilon-criticality certificates.

Statistical verdicts are one of ``"pass"``, ``"fail"`` or
``"inconclusive"``; standard errors come from a path bootstrap with a
seeded generator so reports are reproducible.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .dynamics import pairwise_mean
from .errors import InsufficientDataError, UsageError

N_BOOT = 1000
MIN_FIT_POINTS = 10


# ---------------------------------------------------------------- descent

@dataclass(frozen=True)
class DescentAudit:
    """Per-interval defects ``H(t2) + (1/lam) int r^2 - H(t1)``.

    ``max_violation`` is the largest signed defect (positive means the
    inequality is broken); ``max_defect`` the largest magnitude, which
    measures how far the discrete path is from the exact identity.
    """

    max_violation: float
    max_defect: float
    times: np.ndarray = field(repr=False)
    defects: np.ndarray = field(repr=False)


def descent_audit(path, objective="H_mu", residual=None, window=1):
    """Audit a deterministic path against the descent inequality.

    ``objective`` names the stored series (``H_mu`` or ``H``); ``residual``
    defaults to the stored ``||grad H_mu||``.  The integral over each block
    of ``window`` records is the trapezoid rule on the residual squared.
    """
    if path.ensemble:
        raise UsageError("descent_audit takes a single deterministic path")
    H = np.asarray(getattr(path, objective), dtype=float)
    r = np.asarray(path.grad_norm if residual is None else residual, dtype=float)
    t = path.times
    if len(t) < 2:
        return DescentAudit(0.0, 0.0, t[:0], np.zeros(0))
    trap = 0.5 * (r[1:] ** 2 + r[:-1] ** 2) * np.diff(t)
    idx = np.arange(0, len(t), window)
    if idx[-1] != len(t) - 1:
        idx = np.append(idx, len(t) - 1)
    cum = np.concatenate([[0.0], np.cumsum(trap)])
    defects = H[idx[1:]] + (cum[idx[1:]] - cum[idx[:-1]]) / path.lam - H[idx[:-1]]
    return DescentAudit(float(defects.max()), float(np.abs(defects).max()), t[idx[1:]], defects)


# ---------------------------------------------------------------- bootstrap

def bootstrap_counts(M, n_boot=N_BOOT, seed=0):
    """``(n_boot, M)`` multinomial resampling counts from the ``bootstrap``
    stream; averages over a resample are ``counts @ values / M``."""
    picks = rng.uniforms(rng.stream_keys(seed, "bootstrap", 0), n_boot * M)[0]
    picks = np.minimum((picks * M).astype(np.int64), M - 1).reshape(n_boot, M)
    counts = np.zeros((n_boot, M))
    np.add.at(counts, (np.repeat(np.arange(n_boot), M), picks.ravel()), 1.0)
    return counts


def _verdict(gap, se, tol):
    if se > gap:
        return "inconclusive"
    return "pass" if gap <= tol else "fail"


# ---------------------------------------------------------------- energy

@dataclass(frozen=True)
class EnergyGap:
    gap: float
    std_error: float
    lhs: float
    rhs: float
    verdict: str
    t1: float
    t2: float
    tol: float


def energy_identity_gap(path, t1=None, t2=None, tol=0.1, n_boot=N_BOOT, seed=0):
    """Relative gap in ``E H_mu(t2) + lam E int ||x'||^2 = E H_mu(t1)``.

    ``path`` is an ``sde1`` ensemble with stored noise increments; the
    velocity is the drift-only difference quotient.  The interval is
    snapped to recorded times.  Verdict: ``inconclusive`` whenever the
    bootstrap standard error exceeds the gap, else ``pass`` iff the gap is
    at most ``tol``.
    """
    if not path.ensemble or path.noise is None:
        raise UsageError("energy_identity_gap needs an sde1 ensemble with noise increments")
    M = path.x.shape[0]
    if M < 64:
        raise InsufficientDataError(f"energy identity needs at least 64 paths, got {M}")
    t = path.times
    i1 = 0 if t1 is None else int(np.argmin(np.abs(t - t1)))
    i2 = len(t) - 1 if t2 is None else int(np.argmin(np.abs(t - t2)))
    if i2 < i1:
        raise UsageError("t2 must not precede t1")
    if i1 == i2:
        h = float(pairwise_mean(path.H_mu[:, i1]))
        return EnergyGap(0.0, 0.0, h, h, "pass", float(t[i1]), float(t[i2]), tol)
    vel = path.drift_velocity()[:, i1:i2]  # (M, steps, n)
    h = np.diff(t)[i1:i2]
    kinetic = np.sum(np.sum(vel**2, axis=-1) * h, axis=1)  # left-point rule per path
    per_path = path.H_mu[:, i2] + path.lam * kinetic - path.H_mu[:, i1]
    start = path.H_mu[:, i1]

    def stat(weights):
        return np.abs(weights @ per_path / M) / (1.0 + np.abs(weights @ start / M))

    rhs = float(pairwise_mean(start))
    lhs = float(pairwise_mean(path.H_mu[:, i2] + path.lam * kinetic))
    gap = float(abs(pairwise_mean(per_path)) / (1.0 + abs(rhs)))
    se = float(np.std(stat(bootstrap_counts(M, n_boot, seed)), ddof=1))
    return EnergyGap(gap, se, lhs, rhs, _verdict(gap, se, tol), float(t[i1]), float(t[i2]), tol)


# ---------------------------------------------------------------- Lyapunov

def lyapunov_constants(lam, gamma, L, c):
    """``a = lam gamma - c L - c^2 L / 2`` and ``b = c lam - c^2 L / 2``."""
    return lam * gamma - c * L - 0.5 * c * c * L, c * lam - 0.5 * c * c * L


def choose_c(lam, gamma, L):
    """Half the admissible upper bound ``min{2 lam/L, (sqrt(L^2 + 2 lam gamma L) - L)/L}``."""
    if not (lam > 0 and gamma > 0 and L > 0):
        raise UsageError("choose_c needs positive lambda, gamma and L")
    c = 0.5 * min(2.0 * lam / L, (math.sqrt(L * L + 2.0 * lam * gamma * L) - L) / L)
    a, b = lyapunov_constants(lam, gamma, L, c)
    assert a > 0 and b > 0, (a, b)
    return c


@dataclass(frozen=True)
class LyapunovSeries:
    c: float
    a: float
    b: float
    times: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    increments: np.ndarray = field(repr=False)
    std_errors: np.ndarray = field(repr=False)
    xdot_sq: np.ndarray = field(repr=False)
    xddot_sq: np.ndarray = field(repr=False)
    k_se: float = 2.0

    @property
    def verdict(self):
        return lyapunov_verdict(self, self.k_se)

    @property
    def strictly_decreasing(self):
        return bool(np.all(self.increments < 0))


def lyapunov_verdict(series, k_se=2.0):
    """``pass`` iff every increment of the mean is at most ``k_se`` standard
    errors above zero.  Raising ``k_se`` can only turn fail into pass."""
    return "pass" if np.all(series.increments <= k_se * series.std_errors) else "fail"


def lyapunov_values(x, v, t, problem, lam, gamma, alpha, t_min, c):
    """``L_mu(p, q) = H_mu(p) + lam/2 ||p - q||^2`` with ``p = c v + x`` and
    ``q = (c + sqrt(1 + c gamma + c alpha / max(t, t_min))) v + x``."""
    tt = np.maximum(np.asarray(t, dtype=float), t_min)[..., None]
    p = c * v + x
    q = (c + np.sqrt(1.0 + c * gamma + c * alpha / tt)) * v + x
    return problem.objective_H_mu(p) + 0.5 * lam * np.sum((p - q) ** 2, axis=-1)


def lyapunov_audit(path, problem, c=None, every=1, k_se=2.0, n_boot=N_BOOT, seed=0):
    """Ensemble mean of ``L_mu(p(t), q(t))`` along ``sde2`` paths on the
    record grid thinned by ``every``, with bootstrap standard errors of its
    increments.  ``c`` defaults to :func:`choose_c`.
    """
    if path.kind != "sde2":
        raise UsageError("lyapunov_audit needs sde2 paths")
    lam, gamma, alpha, t_min = path.lam, path.meta["gamma"], path.meta["alpha"], path.meta["t_min"]
    c = choose_c(lam, gamma, problem.L) if c is None else c
    a, b = lyapunov_constants(lam, gamma, problem.L, c)
    x, v = path.x, path.v
    if not path.ensemble:
        x, v = x[None], v[None]
    idx = np.arange(0, len(path.times), every)
    if idx[-1] != len(path.times) - 1:
        idx = np.append(idx, len(path.times) - 1)
    t = path.times[idx]
    vals = lyapunov_values(x[:, idx], v[:, idx], t, problem, lam, gamma, alpha, t_min, c)  # (M, R)
    M = vals.shape[0]
    mean = pairwise_mean(vals, axis=0)
    inc = np.diff(mean)
    if M > 1:
        boot = bootstrap_counts(M, n_boot, seed) @ np.diff(vals, axis=1) / M
        se = np.std(boot, axis=0, ddof=1)
    else:
        se = np.zeros_like(inc)
    acc = np.diff(v, axis=1) / np.diff(path.times)[None, :, None]
    return LyapunovSeries(
        c=c, a=a, b=b, times=t, values=mean, increments=inc, std_errors=se,
        xdot_sq=pairwise_mean(np.sum(v[:, idx] ** 2, axis=-1), axis=0),
        xddot_sq=pairwise_mean(np.sum(acc**2, axis=-1), axis=0),
        k_se=k_se,
    )


# ---------------------------------------------------------------- rates

def theta_from_p(p):
    """Lojasiewicz exponent from the power-law exponent ``p = 1/(1 - 2 theta)``."""
    return 0.5 * (1.0 - 1.0 / p)


def p_from_theta(theta):
    return 1.0 / (1.0 - 2.0 * theta)


@dataclass(frozen=True)
class RateFit:
    """Selected model of ``gap(t)``.

    ``params`` is ``(amplitude, b1)`` for ``a exp(-b1 t)`` or
    ``(amplitude, p)`` for ``a t^p``.  For the exponential model
    ``theta_hat`` is the regime marker 0.5.
    """

    model: str
    params: tuple
    theta_hat: float
    r_squared: float
    window: tuple
    regime_mismatch: bool = False
    alternatives: dict = field(default_factory=dict)


def _linfit(u, y):
    A = np.column_stack([np.ones_like(u), u])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    ss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / ss if ss > 0 else 1.0
    return coef, min(max(r2, 0.0), 1.0)


def objective_gaps(times, values, drop_tail=0.05):
    """Gaps ``H(t) - H_bar`` with ``H_bar`` the trajectory minimum, after
    dropping the last ``drop_tail`` fraction of records."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    H_bar = float(values.min())
    keep = len(values) - int(math.floor(drop_tail * len(values)))
    return times[:keep], values[:keep] - H_bar, H_bar


def fit_window(gaps, H_bar=0.0):
    """Length of the leading run of gaps above ``1e3 eps (1 + |H_bar|)``."""
    floor = 1e3 * np.finfo(float).eps * (1.0 + abs(H_bar))
    bad = np.flatnonzero(~(np.asarray(gaps) > floor))
    return int(bad[0]) if bad.size else len(gaps)


def rate_fit(times, gaps, H_bar=0.0, window=None):
    """Fit ``log gap`` against ``t`` (exponential) and ``log t`` (power, on
    ``t > 0``) and keep the model with the larger ``r^2``.

    ``window`` is an optional ``(t_start, t_end)``; by default the fit uses
    the records before the gap first drops to the rounding floor.
    """
    t = np.asarray(times, dtype=float)
    g = np.asarray(gaps, dtype=float)
    if t.shape != g.shape:
        raise UsageError("times and gaps must have the same shape")
    n = fit_window(g, H_bar)
    t, g = t[:n], g[:n]
    if window is not None:
        sel = (t >= window[0]) & (t <= window[1])
        t, g = t[sel], g[sel]
    if len(t) < MIN_FIT_POINTS:
        raise InsufficientDataError(f"rate_fit needs {MIN_FIT_POINTS} usable points, got {len(t)}")
    (c0, c1), r2e = _linfit(t, np.log(g))
    expo = {"params": (math.exp(c0), -float(c1)), "r_squared": r2e}
    pos = t > 0
    alternatives = {"exponential": expo}
    if np.count_nonzero(pos) >= MIN_FIT_POINTS:
        (d0, d1), r2p = _linfit(np.log(t[pos]), np.log(g[pos]))
        alternatives["power"] = {"params": (math.exp(d0), float(d1)), "r_squared": r2p}
    win = (float(t[0]), float(t[-1]))
    if "power" in alternatives and alternatives["power"]["r_squared"] > r2e:
        p = alternatives["power"]["params"][1]
        mismatch = not p < -1
        theta = theta_from_p(p) if not mismatch else float("nan")
        return RateFit("power", alternatives["power"]["params"], theta,
                       alternatives["power"]["r_squared"], win, mismatch, alternatives)
    return RateFit("exponential", expo["params"], 0.5, r2e, win, False, alternatives)


# ---------------------------------------------------------------- criticality

@dataclass(frozen=True)
class CriticalityReport:
    resid_smoothed: float
    x_bar: np.ndarray = field(repr=False)
    resid_at_x_bar: float = 0.0
    lower_certified: float = 0.0
    bound: float = 0.0
    tol_stat: float = 0.0
    passed: bool = False

    def to_dict(self):
        return {
            "resid_smoothed": self.resid_smoothed,
            "x_bar": [float(v) for v in self.x_bar],
            "resid_at_x_bar": self.resid_at_x_bar,
            "lower_certified": self.lower_certified,
            "bound": self.bound,
            "tol_stat": self.tol_stat,
            "pass": self.passed,
        }


def criticality_report(problem, x_final, tol=1e-6):
    """Certify ``dist(0, dH(x_bar)) <= L_f L_h mu / sqrt(lambda_min(AA^T))``.

    A nonzero smoothed residual ``r = ||grad H_mu(x)||`` loosens the bound
    additively by ``r``, since ``grad f(x_bar) + A^T grad h_mu(Ax)`` lies in
    ``dH(x_bar)`` and ``||x_bar - x|| <= mu L_h / sqrt(lambda_min)``.
    """
    x = np.asarray(x_final, dtype=float)
    resid = float(np.linalg.norm(problem.grad_H_mu(x)))
    x_bar = problem.lift_point(x)
    ax = problem.A.apply(x)
    rep = problem.subgrad_residual(x_bar, z=problem.h.prox(problem.mu, ax))
    bound = float(problem.eps_criticality_bound())
    return CriticalityReport(
        resid_smoothed=resid,
        x_bar=x_bar,
        resid_at_x_bar=rep.achieved,
        lower_certified=rep.lower_certified,
        bound=bound,
        tol_stat=resid,
        passed=bool(rep.achieved <= bound + resid + tol),
    )
