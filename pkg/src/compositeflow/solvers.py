"""Linearized proximal ADMM and its stochastic and accelerated variants.

All three algorithms share one x-update,

    x+ = x - (g + rho A^T (A x - z + u/rho)) / tau,

with ``g`` the exact gradient (``lp_admm``), a noisy gradient
(``lp_sadmm``) or a noisy gradient at the extrapolated point
(``acc_lp_sadmm``).  The z-update is the prox of ``h`` (``lp_admm``) or of
its Moreau envelope ``h_mu`` with step ``1/rho``, and the multiplier update
is ``u+ = u + A x+ - z+``.  Routing every variant through the same helpers
keeps the degenerate cases bitwise identical: ``lp_sadmm`` with exact
gradients is ``lp_admm`` run on ``(f, h_mu, A)``, and ``acc_lp_sadmm`` with
zero momentum is ``lp_sadmm``.
"""

import csv
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, DivergenceError, UsageError
from .problems import NoiseSpec

KINDS = ("lp_admm", "lp_sadmm", "acc_lp_sadmm")
CSV_HEADER = ("k", "t", "H", "H_mu", "step_norm", "resid_zopt", "resid_grad")


@dataclass(frozen=True)
class SolverParams:
    """Hyperparameters.  ``tau=None`` selects ``1.01 (rho ||A^T A|| + 1/eta)``;
    ``mu=None`` keeps the problem's smoothing level; ``gamma`` is only needed
    by the accelerated method."""

    rho: float
    eta: float = 1.0
    tau: float | None = None
    mu: float | None = None
    alpha: float = 3.0
    gamma: float | None = None
    K: int = 1000
    seed: int = 0


@dataclass(frozen=True)
class CheckedParams:
    params: SolverParams
    tau: float
    gram_norm: float
    beta: float | None
    lam: float

    def __getattr__(self, name):
        if name.startswith("__") or name == "params":
            raise AttributeError(name)
        return getattr(self.params, name)

    def momentum(self, k):
        """``alpha_k = beta k / (k + alpha)``."""
        return self.beta * k / (k + self.params.alpha)


def validate(params, A, h):
    """Check the algorithm preconditions and cache derived constants.

    Raises :class:`ConfigError` naming the violated constraint.
    """
    if not params.rho > 0:
        raise ConfigError("rho must be positive", key="rho")
    if not params.eta > 0:
        raise ConfigError("eta must be positive", key="eta")
    if params.K < 0:
        raise ConfigError("K must be nonnegative", key="K")
    gram = A.gram_norm()
    threshold = params.rho * gram + 1.0 / params.eta
    tau = 1.01 * threshold if params.tau is None else float(params.tau)
    if not tau > threshold:
        raise ConfigError(
            f"tau must exceed rho*||A^T A|| + 1/eta = {threshold:.12g} (got {tau:.12g})", key="tau"
        )
    if params.mu is not None and not (0 < params.mu and params.mu * h.modulus < 1):
        raise ConfigError("mu must satisfy 0 < mu < 1/varrho", key="mu")
    beta = None
    if params.gamma is not None:
        if not (params.gamma > 0 and params.alpha > 0):
            raise ConfigError("alpha and gamma must be positive", key="gamma")
        beta = 1.0 - params.gamma / math.sqrt(params.rho)
        if not beta > 0:
            raise ConfigError(
                f"beta = 1 - gamma/sqrt(rho) must be positive (got {beta:.6g})", key="gamma"
            )
    return CheckedParams(params, tau, gram, beta, tau / params.rho)


@dataclass(frozen=True)
class IterateState:
    x: np.ndarray
    z: np.ndarray
    u: np.ndarray
    k: int = 0
    x_hat: np.ndarray | None = None
    z_hat: np.ndarray | None = None
    u_hat: np.ndarray | None = None


def initial_state(problem, x0=None, accelerated=False):
    """``x0`` (zero by default), ``z0 = A x0``, ``u0 = 0``; hatted copies for
    the accelerated method."""
    x = np.zeros(problem.n) if x0 is None else np.array(x0, dtype=float)
    if x.shape != (problem.n,):
        raise UsageError(f"x0 must have shape ({problem.n},), got {x.shape}")
    z = problem.A.apply(x)
    u = np.zeros(problem.m)
    if accelerated:
        return IterateState(x, z, u, 0, x.copy(), z.copy(), u.copy())
    return IterateState(x, z, u, 0)


def _x_update(x, z, u, g, A, rho, tau):
    return x - (g + rho * A.apply_adjoint(A.apply(x) - z + u / rho)) / tau


def _zu_update(x_new, u, zprox, A, rho):
    ax = A.apply(x_new)
    z_new = zprox(1.0 / rho, ax + u / rho)
    return z_new, u + ax - z_new


def lp_admm_step(state, problem, params):
    """One linearized proximal ADMM iteration with exact gradients and the
    prox of ``problem.h``."""
    rho = params.rho
    x = _x_update(state.x, state.z, state.u, problem.grad_full(state.x), problem.A, rho, params.tau)
    z, u = _zu_update(x, state.u, problem.h.prox, problem.A, rho)
    return IterateState(x, z, u, state.k + 1)


def lp_sadmm_step(state, problem, params, noise):
    """One stochastic iteration: noisy gradient, z-update through ``h_mu``."""
    rho = params.rho
    g = problem.grad_stochastic(state.x, noise, state.k)
    x = _x_update(state.x, state.z, state.u, g, problem.A, rho, params.tau)
    z, u = _zu_update(x, state.u, problem.envelope.prox, problem.A, rho)
    return IterateState(x, z, u, state.k + 1)


def acc_lp_sadmm_step(state, problem, params, noise, momentum=None):
    """One accelerated iteration.

    The linearized step starts from the extrapolated triple; afterwards all
    three variables are extrapolated with ``alpha_{k+1}``.  ``momentum``
    overrides the schedule ``k -> alpha_k``.
    """
    rho = params.rho
    xh, zh, uh = state.x_hat, state.z_hat, state.u_hat
    g = problem.grad_stochastic(xh, noise, state.k)
    x = _x_update(xh, zh, uh, g, problem.A, rho, params.tau)
    z, u = _zu_update(x, uh, problem.envelope.prox, problem.A, rho)
    k1 = state.k + 1
    a = params.momentum(k1) if momentum is None else momentum(k1)
    if a == 0:
        return IterateState(x, z, u, k1, x.copy(), z.copy(), u.copy())
    return IterateState(
        x, z, u, k1,
        x + a * (x - state.x),
        z + a * (z - state.z),
        u + a * (u - state.u),
    )


@dataclass
class Trajectory:
    """Per-record diagnostics of a run plus thinned state snapshots."""

    kind: str
    params: dict
    records: dict
    state_k: list = field(default_factory=list)
    states: list = field(default_factory=list)
    stride: int = 1
    state_stride: int = 100
    final: IterateState | None = None
    status: str = "ok"

    def __len__(self):
        return len(self.records["k"])

    def column(self, name):
        return np.asarray(self.records[name])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            for i in range(len(self)):
                row = [self.records[c][i] for c in CSV_HEADER]
                w.writerow([str(row[0])] + [repr(float(v)) for v in row[1:]])

    @staticmethod
    def read_csv(path):
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if tuple(rows[0]) != CSV_HEADER:
            raise UsageError(f"unexpected trajectory header {rows[0]}")
        cols = list(zip(*rows[1:])) if len(rows) > 1 else [()] * len(CSV_HEADER)
        out = {c: np.array(v, dtype=float) for c, v in zip(CSV_HEADER, cols)}
        out["k"] = out["k"].astype(int)
        return out


def _zopt_residual(problem_h, z_new, u_new, u_pre, rho):
    # stationarity of the z-subproblem: rho (A x+ - z+) + u_pre in dh(z+)
    s = rho * (u_new - u_pre) + u_pre
    lo, hi = problem_h.subdiff_interval(z_new)
    return float(np.linalg.norm(s - np.clip(s, lo, hi)))


def run(kind, problem, params, noise=None, x0=None, callbacks=(), stride=1, state_stride=100, momentum=None):
    """Run ``params.K`` iterations of ``kind`` and return a :class:`Trajectory`.

    Diagnostics are recorded every ``stride`` iterations (and always at the
    last one); full iterates every ``state_stride``.  Each callback is called
    as ``cb(state, record_dict)`` at recorded steps.  Raises
    :class:`DivergenceError` with the finite prefix attached when an iterate
    stops being finite.
    """
    if kind not in KINDS:
        raise UsageError(f"unknown algorithm {kind!r}")
    if isinstance(params, SolverParams):
        params = validate(params, problem.A, problem.h)
    if params.mu is not None:
        problem = problem.with_mu(params.mu)
    if kind == "acc_lp_sadmm" and params.beta is None:
        raise ConfigError("the accelerated method needs gamma", key="gamma")
    noise = noise or NoiseSpec(master_seed=params.seed)
    accelerated = kind == "acc_lp_sadmm"
    state = initial_state(problem, x0, accelerated)
    zh = problem.h if kind == "lp_admm" else problem.envelope
    time_scale = 1.0 / math.sqrt(params.rho) if accelerated else 1.0 / params.rho

    traj = Trajectory(
        kind,
        {**asdict(params.params), "tau": params.tau},
        {c: [] for c in CSV_HEADER + ("wall",)},
        stride=stride,
        state_stride=state_stride,
    )
    start = time.perf_counter()

    def record(st, step_norm, zres):
        rec = {
            "k": st.k,
            "t": st.k * time_scale,
            "H": float(problem.objective_H(st.x)),
            "H_mu": float(problem.objective_H_mu(st.x)),
            "step_norm": step_norm,
            "resid_zopt": zres,
            "resid_grad": float(np.linalg.norm(problem.grad_H_mu(st.x))),
            "wall": time.perf_counter() - start,
        }
        for key, v in rec.items():
            traj.records[key].append(v)
        for cb in callbacks:
            cb(st, rec)

    record(state, 0.0, 0.0)
    traj.state_k.append(0)
    traj.states.append(state.x.copy())

    for _ in range(params.K):
        if kind == "lp_admm":
            new = lp_admm_step(state, problem, params)
            u_pre = state.u
        elif kind == "lp_sadmm":
            new = lp_sadmm_step(state, problem, params, noise)
            u_pre = state.u
        else:
            new = acc_lp_sadmm_step(state, problem, params, noise, momentum)
            u_pre = state.u_hat
        if not (np.all(np.isfinite(new.x)) and np.all(np.isfinite(new.z)) and np.all(np.isfinite(new.u))):
            traj.final = state
            traj.status = "diverged"
            raise DivergenceError(f"non-finite iterate at k={new.k}", partial=traj)
        if new.k % stride == 0 or new.k == params.K:
            record(
                new,
                float(np.linalg.norm(new.x - state.x)),
                _zopt_residual(zh, new.z, new.u, u_pre, params.rho),
            )
        if new.k % state_stride == 0 or new.k == params.K:
            traj.state_k.append(new.k)
            traj.states.append(new.x.copy())
        state = new

    traj.final = state
    return traj
