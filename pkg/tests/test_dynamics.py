import math

import numpy as np
import pytest

from compositeflow import dynamics as D
from compositeflow import rng
from compositeflow.errors import ConfigError, DivergenceError, UsageError
from compositeflow.operators import LinearMap
from compositeflow.problems import CompositeProblem, NoiseSpec, SmoothSum, least_squares_data
from compositeflow.regularizers import Regularizer
from compositeflow.solvers import SolverParams, initial_state, lp_sadmm_step, validate

from conftest import quadratic_1d


def quadratic(diag=(1.0, 2.0, 3.0)):
    f = SmoothSum(np.diag(np.sqrt(np.asarray(diag) * len(diag))), np.zeros(len(diag)))
    return CompositeProblem(f, Regularizer("l1", 0.0, len(diag)), LinearMap.identity(len(diag)), 1e-2)


def drift_free():
    f = SmoothSum([[0.0]], [0.0])
    return CompositeProblem(f, Regularizer("l1", 0.0, 1), LinearMap.identity(1), 1e-2)


def test_config_validation():
    p = quadratic()
    with pytest.raises(ConfigError, match="lambda"):
        D.validate_flow(D.FlowConfig(lam=1.0, dt=0.01, T=1), p)
    with pytest.raises(ConfigError, match="dt"):
        D.validate_flow(D.FlowConfig(lam=2.0, dt=1.0, T=1), p)
    with pytest.raises(ConfigError):
        D.validate_flow(D.FlowConfig(lam=2.0, dt=0.01, T=1, t_min=0.0), p)


def test_flow_step_examples():
    p = quadratic_1d(q=1.0)
    cfg = D.FlowConfig(lam=2.0, dt=0.1, T=1.0)
    assert D.flow_step(np.array([1.0]), p, cfg)[0] == pytest.approx(0.95, abs=1e-15)
    assert D.flow_step(np.array([0.0]), p, cfg)[0] == 0.0


def test_flow_matches_matrix_exponential():
    q = np.array([1.0, 2.0, 3.0])
    p = quadratic(q)
    x0 = np.array([1.0, -1.0, 0.5])
    exact = np.exp(-q * 1.0 / 2.0) * x0
    errs = []
    for dt in (0.01, 0.005):
        path = D.simulate("flow", p, D.FlowConfig(lam=2.0, dt=dt, T=1.0), x0)
        errs.append(np.linalg.norm(path.x[-1] - exact))
    assert errs[0] <= 1.0 * 0.01
    assert errs[0] / errs[1] == pytest.approx(2.0, rel=0.05)


def test_minimal_norm_mode():
    a, b, _ = least_squares_data(4, 12, seed=1)
    p = CompositeProblem(SmoothSum(a, b), Regularizer("l1", 0.5, 4), LinearMap.identity(4), 0.1)
    x = np.array([0.0, 1.0, -2.0, 0.0])
    cfg = D.FlowConfig(lam=2.0, dt=0.01, T=1.0)
    g = p.grad_full(x)
    sub = np.where(x == 0, np.clip(-g, -0.5, 0.5), 0.5 * np.sign(x))
    expected = x - (0.01 / 2.0) * (g + sub)
    assert np.allclose(D.flow_step(x, p, cfg, "minimal_norm"), expected, atol=1e-12)
    with pytest.raises(UsageError):
        D.flow_step(x, p, cfg, "other")


def test_sde1_zero_noise_is_flow_bitwise():
    p = quadratic()
    x = np.array([0.3, -1.2, 2.0])
    cfg = D.FlowConfig(lam=2.0, dt=0.01, T=1.0)
    assert np.array_equal(D.sde1_step(x, p, cfg, 0), D.flow_step(x, p, cfg))
    loud = D.FlowConfig(lam=2.0, dt=0.01, T=1.0, rho=50.0, noise=False)
    assert np.array_equal(D.sde1_step(x, p, loud, 0), D.flow_step(x, p, cfg))


def test_sde1_brownian_variance():
    cfg = D.FlowConfig(lam=2.0, dt=0.01, T=1.0, rho=10.0)
    path = D.simulate("sde1", drift_free(), cfg, [0.0], seeds=np.arange(10_000), stride=100)
    assert path.x[:, -1, 0].var() == pytest.approx(1.0 / (4.0 * 10.0), rel=0.05)


def test_sde1_step_of_one_over_rho_matches_algorithm_scale():
    rho, lam = 40.0, 2.0
    p = quadratic_1d(q=2.0)
    x = np.array([1.5])
    cfg = D.FlowConfig(lam=lam, dt=1 / rho, T=1.0, rho=rho)
    x_new, noise = D.sde1_increment(x, p, cfg, 7)
    zeta = rng.standard_normal(cfg.seed, "sde1", 7, 1)
    assert noise[0] == pytest.approx(-zeta[0] / (lam * rho), rel=1e-14)
    assert (x_new - noise)[0] == pytest.approx(x[0] - p.grad_H_mu(x)[0] / (lam * rho), rel=1e-14)
    # one LP-SADMM step with tau = lam rho has the same drift and noise scale
    params = validate(SolverParams(rho=rho, eta=1.0, tau=lam * rho), p.A, p.h)
    step = lp_sadmm_step(initial_state(p, x), p, params, NoiseSpec("gaussian"))
    xi = rng.standard_normal(0, "grad", 0, 1)
    assert step.x[0] == pytest.approx(x[0] - (p.grad_full(x)[0] + xi[0]) / (lam * rho), rel=1e-13)


def test_sde2_equilibrium_and_clamp():
    p = quadratic_1d()
    cfg = D.FlowConfig(lam=2.0, dt=0.01, T=1.0, rho=100.0, noise=False)
    x, v = D.sde2_step(np.array([0.0]), np.array([0.0]), p, cfg, 0, 0.0)
    assert x[0] == 0.0 and v[0] == 0.0
    assert D.damping(cfg, 0.0) == cfg.gamma + cfg.alpha / cfg.dt
    assert math.isfinite(D.damping(D.FlowConfig(lam=2.0, dt=0.01, T=1.0, t_min=0.5), 0.0))


def test_sde2_zero_noise_energy_nonincreasing():
    p = quadratic_1d(q=2.0)
    cfg = D.FlowConfig(lam=2.0, dt=1e-3, T=20.0, noise=False)
    path = D.simulate("sde2", p, cfg, [3.0])
    energy = 0.5 * cfg.lam * path.v[:, 0] ** 2 + path.H_mu
    assert np.all(np.diff(energy) <= 1e-8)
    assert path.meta["damping_clamped_at_t0"] and path.meta["t_min"] == cfg.dt


def test_sde2_noise_is_live_and_reproducible():
    p = quadratic_1d()
    cfg = D.FlowConfig(lam=2.0, dt=0.01, T=1.0, rho=100.0)
    a = D.simulate("sde2", p, cfg, [1.0], seeds=[1, 2])
    b = D.simulate("sde2", p, cfg, [1.0], seeds=[1, 2])
    assert np.array_equal(a.x, b.x)
    assert not np.array_equal(a.x[0], a.x[1])
    single = D.simulate("sde2", p, D.FlowConfig(lam=2.0, dt=0.01, T=1.0, rho=100.0, seed=2), [1.0])
    assert np.allclose(single.x, a.x[1], rtol=1e-13, atol=1e-15)


def test_simulate_examples():
    p = quadratic()
    path = D.simulate("flow", p, D.FlowConfig(lam=2.0, dt=0.01, T=0.0), np.ones(3))
    assert path.x.shape == (1, 3) and path.times.tolist() == [0.0]
    path = D.simulate("flow", p, D.FlowConfig(lam=2.0, dt=0.01, T=50.0), np.ones(3), stride=100)
    assert path.grad_norm[-1] <= 1e-6
    assert np.allclose(np.diff(path.times), 1.0)
    a = D.simulate("sde1", p, D.FlowConfig(lam=2.0, dt=0.01, T=1.0, rho=10.0, seed=1), np.ones(3))
    b = D.simulate("sde1", p, D.FlowConfig(lam=2.0, dt=0.01, T=1.0, rho=10.0, seed=2), np.ones(3))
    assert not np.array_equal(a.x, b.x)
    with pytest.raises(UsageError):
        D.simulate("flow", p, D.FlowConfig(lam=2.0, dt=0.01, T=1.0), np.ones(3), seeds=[1])


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_keeps_finite_prefix():
    p = quadratic()
    with pytest.raises(DivergenceError) as info:
        D.simulate("flow", p, D.FlowConfig(lam=2.0, dt=0.01, T=1.0), [1e308, 1e308, 1e308])
    assert info.value.partial.x.shape[0] == 1 and info.value.partial.status == "diverged"


def test_finite_path_energy():
    p = quadratic((0.5, 1.0))
    totals = []
    for T in (10.0, 20.0, 40.0):
        path = D.simulate("flow", p, D.FlowConfig(lam=2.0, dt=0.01, T=T), [2.0, -1.0])
        totals.append(np.sum(np.diff(path.x, axis=0) ** 2) / 0.01)
    assert totals[2] - totals[1] < 0.1 * (totals[1] - totals[0])


def test_stored_increments_look_brownian():
    cfg = D.FlowConfig(lam=2.0, dt=0.01, T=2.0, rho=25.0)
    path = D.simulate("sde1", quadratic_1d(), cfg, [0.5], seeds=np.arange(500))
    z = path.noise[..., 0] / (math.sqrt(cfg.dt / cfg.rho) / cfg.lam)
    assert abs(z.mean()) < 4 / math.sqrt(z.size)
    assert z.var() == pytest.approx(1.0, rel=0.02)
    lag = np.mean(z[:, 1:] * z[:, :-1])
    assert abs(lag) < 4 / math.sqrt(z[:, 1:].size)
    # drift-only velocity removes the diffusion exactly
    v = path.drift_velocity()
    assert np.allclose(v, -path_grad(path) / cfg.lam, atol=1e-10)


def path_grad(path):
    return quadratic_1d().grad_H_mu(path.x[:, :-1])


def test_pairwise_mean():
    vals = np.arange(12.0).reshape(4, 3)
    assert np.array_equal(D.pairwise_mean(vals, axis=0), vals.mean(axis=0))
    perm = np.random.default_rng(0).permutation(1000)
    x = np.random.default_rng(1).standard_normal(1000)
    assert D.pairwise_mean(x[perm]) == pytest.approx(D.pairwise_mean(x), abs=1e-15)


def test_weak_error_drift_free_within_noise():
    tab = D.weak_error(drift_free(), {"x2": lambda x: x[..., 0] ** 2}, [10, 20], x0=[0.0], T=1.0, M_seeds=256, lam=2.0)
    for err, se in zip(tab.errors["x2"], tab.std_errors["x2"]):
        assert err <= 5 * se


def test_weak_error_standard_error_scaling():
    fn = {"x2": lambda x: x[..., 0] ** 2}
    p = quadratic_1d(q=2.0)
    small = D.weak_error(p, fn, [20], x0=[10.0], M_seeds=512, lam=2.0, master_seed=3)
    large = D.weak_error(p, fn, [20], x0=[10.0], M_seeds=2048, lam=2.0, master_seed=3)
    assert small.std_errors["x2"][0] / large.std_errors["x2"][0] == pytest.approx(2.0, rel=0.15)
    with pytest.raises(UsageError):
        D.weak_error(p, fn, [20], x0=[1.0], M_seeds=10)


def test_weak_error_flags_noisy_estimates():
    tab = D.weak_error(drift_free(), {"x2": lambda x: x[..., 0] ** 2}, [10], x0=[0.0], M_seeds=64, lam=2.0)
    assert tab.flags["x2"] == [True]
    assert set(tab.to_dict()) == {"rho_grid", "errors", "std_errors", "slopes", "flags", "meta"}
