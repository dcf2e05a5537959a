"""Continuous-time limits of the three algorithms and their integrators.

* ``flow``: ``lam x' = -grad H_mu(x)`` (or the minimal-norm element of
  ``dH(x)``), explicit Euler.
* ``sde1``: ``lam dx = -grad H_mu(x) dt - rho^(-1/2) dW``, Euler-Maruyama.
* ``sde2``: ``lam x'' + lam (gamma + alpha/t) x' + grad H_mu(x)
  + rho^(-1/4) W' = 0``, written as a first-order system in ``(x, v)`` and
  integrated with symplectic Euler-Maruyama (velocity first, damping taken
  implicitly at the end of the step, then ``x+ = x + dt v+``).

The drivers accept a batch of initial states and a list of seeds, so an
ensemble is integrated as one vectorized path; row ``i`` of the batch uses
the noise stream of ``seeds[i]``.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .errors import ConfigError, DivergenceError, UsageError

KINDS = ("flow", "sde1", "sde2")


@dataclass(frozen=True)
class FlowConfig:
    """Integrator settings.

    ``rho`` only sets the noise scale (``math.inf`` or ``noise=False`` gives
    the deterministic limit).  ``t_min`` clamps the ``alpha/t`` damping of
    the second-order system and defaults to ``dt``.
    """

    lam: float
    dt: float
    T: float
    rho: float = math.inf
    alpha: float = 3.0
    gamma: float = 1.0
    t_min: float | None = None
    v0: tuple | None = None
    seed: int = 0
    noise: bool = True

    @property
    def steps(self):
        return int(round(self.T / self.dt))

    @property
    def clamp(self):
        return self.dt if self.t_min is None else self.t_min

    @property
    def noisy(self):
        return self.noise and math.isfinite(self.rho)


def validate_flow(cfg, problem, smoothed=True):
    """Check ``lam > ||A^T A||``, positive ``dt`` and ``T``, and explicit-Euler
    stability ``dt <= lam / L`` for the smoothed fields."""
    if not cfg.dt > 0:
        raise ConfigError("dt must be positive", key="dt")
    if cfg.T < 0:
        raise ConfigError("T must be nonnegative", key="T")
    gram = problem.A.gram_norm()
    if not cfg.lam > gram:
        raise ConfigError(f"lambda must exceed ||A^T A|| = {gram:.12g}", key="lambda")
    if smoothed and cfg.dt > cfg.lam / problem.L:
        raise ConfigError(f"dt must not exceed lambda/L = {cfg.lam / problem.L:.6g}", key="dt")
    if cfg.t_min is not None and not cfg.t_min > 0:
        raise ConfigError("t_min must be positive", key="t_min")
    if not cfg.rho > 0:
        raise ConfigError("rho must be positive", key="rho")
    return cfg


def _finite(*arrays):
    return all(np.all(np.isfinite(a)) for a in arrays)


def _field(x, problem, mode):
    if mode == "smoothed":
        return problem.grad_H_mu(x)
    if mode == "minimal_norm":
        rep = problem.subgrad_residual(x)
        return problem.grad_full(x) + problem.A.apply_adjoint(rep.g)
    raise UsageError(f"unknown flow mode {mode!r}")


def flow_step(x, problem, cfg, mode="smoothed"):
    """Explicit Euler step ``x - (dt/lam) g``."""
    x_new = x - (cfg.dt / cfg.lam) * _field(x, problem, mode)
    if not _finite(x_new):
        raise DivergenceError("flow produced a non-finite state")
    return x_new


def _noise(seed, purpose, step_index, n, batched):
    if batched:
        return rng.ensemble_normal(seed, purpose, step_index, n)
    return rng.standard_normal(seed, purpose, step_index, n)


def sde1_increment(x, problem, cfg, step_index, seed=None):
    """Euler-Maruyama step split into ``(x_new, noise_part)``, where
    ``noise_part = -(1/lam) rho^(-1/2) sqrt(dt) zeta``."""
    x = np.asarray(x, dtype=float)
    drift = -(cfg.dt / cfg.lam) * problem.grad_H_mu(x)
    if cfg.noisy:
        zeta = _noise(cfg.seed if seed is None else seed, "sde1", step_index, problem.n, x.ndim == 2)
        noise = -(math.sqrt(cfg.dt / cfg.rho) / cfg.lam) * zeta
    else:
        noise = np.zeros_like(x)
    x_new = x + drift + noise
    if not _finite(x_new):
        raise DivergenceError("sde1 produced a non-finite state")
    return x_new, noise


def sde1_step(x, problem, cfg, step_index, seed=None):
    return sde1_increment(x, problem, cfg, step_index, seed)[0]


def damping(cfg, t):
    """``gamma + alpha / max(t, t_min)``."""
    return cfg.gamma + cfg.alpha / max(t, cfg.clamp)


def sde2_step(x, v, problem, cfg, step_index, t, seed=None):
    """One step of the second-order system from time ``t`` to ``t + dt``.

    ``v+ = (v - (dt/lam) grad H_mu(x) - (1/lam) rho^(-1/4) sqrt(dt) zeta)
    / (1 + dt * damping(t + dt))`` and ``x+ = x + dt v+``.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    kick = v - (cfg.dt / cfg.lam) * problem.grad_H_mu(x)
    if cfg.noisy:
        zeta = _noise(cfg.seed if seed is None else seed, "sde2", step_index, problem.n, x.ndim == 2)
        kick = kick - (cfg.rho ** -0.25 * math.sqrt(cfg.dt) / cfg.lam) * zeta
    v_new = kick / (1.0 + cfg.dt * damping(cfg, t + cfg.dt))
    x_new = x + cfg.dt * v_new
    if not _finite(x_new, v_new):
        raise DivergenceError("sde2 produced a non-finite state")
    return x_new, v_new


@dataclass
class SampledPath:
    """Recorded path on the grid ``times``.

    ``x`` has shape ``(records, n)``, or ``(M, records, n)`` for an ensemble;
    ``v`` likewise for ``sde2``.  ``noise[i]`` is the summed diffusion
    increment between records ``i`` and ``i+1`` (zero for ``flow``).
    """

    kind: str
    times: np.ndarray
    x: np.ndarray
    v: np.ndarray | None
    noise: np.ndarray | None
    H: np.ndarray
    H_mu: np.ndarray
    grad_norm: np.ndarray
    lam: float
    dt: float
    meta: dict = field(default_factory=dict)
    status: str = "ok"

    @property
    def ensemble(self):
        return self.x.ndim == 3

    def drift_velocity(self):
        """``(x[i+1] - x[i] - noise[i]) / (t[i+1] - t[i])``."""
        axis = 1 if self.ensemble else 0
        dx = np.diff(self.x, axis=axis)
        if self.noise is not None:
            dx = dx - self.noise
        h = np.diff(self.times)
        shape = (1, -1, 1) if self.ensemble else (-1, 1)
        return dx / h.reshape(shape)


def simulate(kind, problem, cfg, x0, seeds=None, mode="smoothed", stride=1):
    """Integrate ``kind`` to ``cfg.T`` from ``x0``.

    With ``seeds`` given, ``x0`` is broadcast to one row per seed and the
    result is an ensemble path.  Records are kept every ``stride`` steps.
    On divergence the finite prefix is attached to the raised
    :class:`DivergenceError`.
    """
    if kind not in KINDS:
        raise UsageError(f"unknown dynamics {kind!r}")
    validate_flow(cfg, problem, smoothed=(mode == "smoothed"))
    x = np.array(x0, dtype=float)
    if x.shape != (problem.n,):
        raise UsageError(f"x0 must have shape ({problem.n},), got {x.shape}")
    batched = seeds is not None
    if batched:
        if kind == "flow":
            raise UsageError("flow is deterministic; no ensemble needed")
        seeds = np.asarray(seeds)
        x = np.tile(x, (len(seeds), 1))
    seed_arg = seeds if batched else cfg.seed
    v = None
    if kind == "sde2":
        v = np.zeros_like(x) if cfg.v0 is None else np.broadcast_to(np.asarray(cfg.v0, float), x.shape).copy()

    xs, vs, noises, ts = [x.copy()], [None if v is None else v.copy()], [], [0.0]
    acc_noise = np.zeros_like(x)
    status = "ok"
    steps = cfg.steps
    try:
        for i in range(steps):
            t = i * cfg.dt
            if kind == "flow":
                x = flow_step(x, problem, cfg, mode)
            elif kind == "sde1":
                x, nz = sde1_increment(x, problem, cfg, i, seed_arg)
                acc_noise += nz
            else:
                x, v = sde2_step(x, v, problem, cfg, i, t, seed_arg)
            if (i + 1) % stride == 0 or i + 1 == steps:
                xs.append(x.copy())
                vs.append(None if v is None else v.copy())
                noises.append(acc_noise.copy())
                acc_noise[:] = 0.0
                ts.append((i + 1) * cfg.dt)
    except DivergenceError as err:
        status = "diverged"
        failure = err
    path = _assemble(kind, problem, cfg, xs, vs, noises, ts, batched, status)
    if status != "ok":
        failure.partial = path
        raise failure
    return path


def _assemble(kind, problem, cfg, xs, vs, noises, ts, batched, status):
    axis = 1 if batched else 0
    x = np.stack(xs, axis=axis)
    v = np.stack(vs, axis=axis) if kind == "sde2" else None
    if noises:
        noise = np.stack(noises, axis=axis)
    else:
        noise = np.zeros(x.shape[:axis] + (0,) + x.shape[axis + 1:])
    grads = problem.grad_H_mu(x)
    return SampledPath(
        kind=kind,
        times=np.asarray(ts),
        x=x,
        v=v,
        noise=noise if kind == "sde1" else None,
        H=problem.objective_H(x),
        H_mu=problem.objective_H_mu(x),
        grad_norm=np.linalg.norm(grads, axis=-1),
        lam=cfg.lam,
        dt=cfg.dt,
        meta={
            "rho": cfg.rho,
            "noisy": cfg.noisy,
            "alpha": cfg.alpha,
            "gamma": cfg.gamma,
            "t_min": cfg.clamp,
            "damping_clamped_at_t0": kind == "sde2",
            "seed": cfg.seed,
        },
        status=status,
    )


def pairwise_mean(values, axis=0):
    """Mean along ``axis`` using numpy's pairwise summation (the reduced axis
    is made contiguous first), so ensemble averages do not depend on the
    order members were produced in beyond rounding."""
    values = np.moveaxis(np.asarray(values, dtype=float), axis, -1)
    values = np.ascontiguousarray(values)
    return np.add.reduce(values, axis=-1) / values.shape[-1]


def _sadmm_ensemble(problem, lam, rho, K, x0, seeds, noise_scale, sample):
    """Vectorized LP-SADMM (gaussian gradient noise) over an ensemble; returns
    ``sample(x)`` at every iterate ``k = 0..K``."""
    from .solvers import _x_update, _zu_update

    gram = problem.A.gram_norm()
    tau = lam * rho
    if not tau > rho * gram:
        raise ConfigError("lambda must exceed ||A^T A||", key="lambda")
    x = np.tile(np.asarray(x0, float), (len(seeds), 1))
    z = problem.A.apply(x)
    u = np.zeros_like(z)
    out = [sample(x)]
    for k in range(K):
        g = problem.grad_full(x) + noise_scale * rng.ensemble_normal(seeds, "grad", k, problem.n)
        x = _x_update(x, z, u, g, problem.A, rho, tau)
        z, u = _zu_update(x, u, problem.envelope.prox, problem.A, rho)
        out.append(sample(x))
    return np.stack(out)


@dataclass
class WeakErrorTable:
    rho: list
    errors: dict
    std_errors: dict
    slopes: dict
    flags: dict
    meta: dict

    def to_dict(self):
        return {
            "rho_grid": list(self.rho),
            "errors": {k: list(v) for k, v in self.errors.items()},
            "std_errors": {k: list(v) for k, v in self.std_errors.items()},
            "slopes": dict(self.slopes),
            "flags": {k: list(v) for k, v in self.flags.items()},
            "meta": dict(self.meta),
        }


def weak_error(problem, test_fns, rho_grid, x0, T=1.0, M_seeds=1024, lam=None, master_seed=0, substeps=10):
    """Weak error between LP-SADMM iterates and the first-order SDE.

    For each ``rho``, ``M_seeds`` runs of the algorithm (``K = floor(rho T)``
    steps, unit Gaussian gradient noise, ``tau = lam rho``) and ``M_seeds``
    independent Euler-Maruyama paths of the SDE (step ``1/(substeps rho)``,
    sampled at ``t = k/rho``) are compared through
    ``max_k |mean g(x^k) - mean g(x(k/rho))|``.  The log-log slope of that
    error against ``rho`` is fitted by least squares.

    ``test_fns`` maps names to vectorized functions of a batch ``(M, n)``.
    An error whose standard error exceeds 25% of its value is flagged.
    """
    if M_seeds < 64:
        raise UsageError("weak_error needs at least 64 seeds")
    lam = problem.A.gram_norm() + 1.0 if lam is None else lam
    errors = {name: [] for name in test_fns}
    ses = {name: [] for name in test_fns}
    flags = {name: [] for name in test_fns}
    alg_seeds = np.array([rng.mix_seed(master_seed, i) for i in range(M_seeds)], dtype=np.uint64)
    sde_seeds = np.array([rng.mix_seed(master_seed ^ 0x5DE1, i) for i in range(M_seeds)], dtype=np.uint64)

    def sample(x):
        return {name: fn(x) for name, fn in test_fns.items()}

    for rho in rho_grid:
        K = int(math.floor(rho * T))
        disc = _sadmm_ensemble(problem, lam, rho, K, x0, alg_seeds, 1.0, sample)
        cfg = FlowConfig(lam=lam, dt=1.0 / (substeps * rho), T=K / rho, rho=rho)
        path = simulate("sde1", problem, cfg, x0, seeds=sde_seeds, stride=substeps)
        cont = [sample(path.x[:, j]) for j in range(K + 1)]
        for name in test_fns:
            a = np.stack([d[name] for d in disc])  # (K+1, M)
            b = np.stack([c[name] for c in cont])
            diff = pairwise_mean(a, axis=1) - pairwise_mean(b, axis=1)
            se = np.sqrt(a.var(axis=1, ddof=1) / M_seeds + b.var(axis=1, ddof=1) / M_seeds)
            j = int(np.argmax(np.abs(diff)))
            err = float(abs(diff[j]))
            errors[name].append(err)
            ses[name].append(float(se[j]))
            flags[name].append(bool(se[j] > 0.25 * err))
    slopes = {}
    for name in test_fns:
        e = np.asarray(errors[name])
        slopes[name] = float(np.polyfit(np.log(rho_grid), np.log(e), 1)[0]) if len(e) > 1 and np.all(e > 0) else float("nan")
    return WeakErrorTable(
        list(rho_grid), errors, ses, slopes, flags,
        {"T": T, "M_seeds": M_seeds, "lambda": lam, "substeps": substeps, "master_seed": master_seed},
    )
