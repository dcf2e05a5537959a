import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from compositeflow import regularizers as R
from compositeflow.errors import ConfigError
from compositeflow.regularizers import Regularizer

L1 = Regularizer("l1", 1.0, 1)
MCP = Regularizer("mcp", 1.0, 1, 2.0)
SCAD = Regularizer("scad", 1.0, 1, 3.7)
ALL = [L1, MCP, SCAD]
IDS = ["l1", "mcp", "scad"]


def prox_objective(h, sigma, y, z):
    return h.penalty(z) + (z - y) ** 2 / (2 * sigma)


def grid_min(h, sigma, y, points=10_001):
    grid = np.linspace(-abs(y) - 1, abs(y) + 1, points)
    return prox_objective(h, sigma, y, grid).min()


def golden_section(fn, lo, hi, tol=1e-12):
    g = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    while b - a > tol:
        c, d = b - g * (b - a), a + g * (b - a)
        if fn(c) < fn(d):
            b = d
        else:
            a = c
    return 0.5 * (a + b)


def test_value_examples():
    assert Regularizer("l1", 2.0, 2).value([1.0, -3.0]) == 8.0
    for h in ALL:
        assert h.value([0.0]) == 0.0
    assert MCP.value([10.0]) == 1.0
    # the MCP saturation level is the maximum of the penalty on a fine grid
    assert MCP.penalty(np.linspace(0, 20, 200_001)).max() == pytest.approx(1.0, abs=1e-12)


def test_scad_branches():
    s = SCAD.shape
    assert SCAD.value([0.5]) == 0.5
    assert SCAD.value([2.0]) == pytest.approx((2 * s * 2 - 4 - 1) / (2 * (s - 1)))
    assert SCAD.value([10.0]) == pytest.approx((s + 1) / 2)


def test_constants():
    assert L1.modulus == 0 and MCP.modulus == 0.5 and SCAD.modulus == pytest.approx(1 / 2.7)
    assert Regularizer("mcp", 0.3, 16, 2.0).lipschitz == pytest.approx(1.2)


def test_invalid_specs():
    with pytest.raises(ConfigError):
        Regularizer("l0", 1.0, 1)
    with pytest.raises(ConfigError):
        Regularizer("scad", 1.0, 1, 1.0)
    with pytest.raises(ConfigError):
        R.make_regularizer({"kind": "l1", "lambda": 1}, 3)
    with pytest.raises(ConfigError):
        MCP.envelope(2.0)


def test_prox_examples():
    assert L1.prox(1.0, [2.0])[0] == 1.0
    ref = golden_section(lambda z: float(prox_objective(L1, 1.0, 2.0, z)), -3, 3)
    assert abs(ref - 1.0) < 1e-6  # golden section resolves a smooth minimum to ~sqrt(eps)
    for h in ALL:
        assert h.prox(0.7, [0.0])[0] == 0.0
    assert MCP.prox(0.5, [3.0])[0] == 3.0
    grid = np.round(np.arange(-4, 4, 1e-4), 10)
    assert grid[np.argmin(prox_objective(MCP, 0.5, 3.0, grid))] == pytest.approx(3.0, abs=1e-4)


def test_prox_tie_break_prefers_smallest_magnitude():
    h = Regularizer("mcp", 1.0, 1, 1.0)  # sigma = 2 >= 1/modulus: two global minimizers at sqrt(2)
    y = math.sqrt(2.0)
    assert prox_objective(h, 2.0, y, 0.0) == pytest.approx(prox_objective(h, 2.0, y, y))
    assert h.prox(2.0, [y, -y]).tolist() == [0.0, 0.0]


@pytest.mark.parametrize("h", ALL, ids=IDS)
@settings(max_examples=100, deadline=None)
@given(y=st.floats(-6, 6), sigma=st.sampled_from([0.1, 0.5, 0.9, 1.5, 3.0]))
def test_prox_beats_grid(h, y, sigma):
    z = h.prox(sigma, [y])[0]
    assert prox_objective(h, sigma, y, z) <= grid_min(h, sigma, y, 1001) + 1e-12


@pytest.mark.parametrize("h", ALL, ids=IDS)
@settings(max_examples=100, deadline=None)
@given(x=st.floats(-5, 5), y=st.floats(-5, 5), mu=st.sampled_from([0.05, 0.3, 0.9]))
def test_prox_lipschitz(h, x, y, mu):
    px, py = h.prox(mu, [x])[0], h.prox(mu, [y])[0]
    assert abs(px - py) <= abs(x - y) / (1 - mu * h.modulus) + 1e-10


@pytest.mark.parametrize("h", ALL, ids=IDS)
@settings(max_examples=100)
@given(x=st.floats(-5, 5), y=st.floats(-5, 5))
def test_weak_convexity_midpoint(h, x, y):
    def g(t):
        return h.value([t]) + 0.5 * h.modulus * t * t
    assert g(0.5 * (x + y)) <= 0.5 * (g(x) + g(y)) + 1e-12


@pytest.mark.parametrize("h", ALL, ids=IDS)
@settings(max_examples=100)
@given(x=st.lists(st.floats(-5, 5), min_size=3, max_size=3), y=st.lists(st.floats(-5, 5), min_size=3, max_size=3))
def test_lipschitz_and_lower_bound(h, x, y):
    h3 = Regularizer(h.kind, h.weight, 3, h.shape)
    assert abs(h3.value(x) - h3.value(y)) <= h3.lipschitz * np.linalg.norm(np.subtract(x, y)) + 1e-12
    assert h3.value(x) >= 0


def test_moreau_value_examples():
    e = L1.envelope(1.0)
    assert R.moreau_value(e, [0.0]) == 0.0
    assert R.moreau_value(e, [2.0]) == 1.5
    grid = np.linspace(-3, 3, 60_001)
    assert grid_min(L1, 1.0, 2.0, 60_001) == pytest.approx(1.5, abs=1e-8)
    assert (L1.penalty(grid) + (grid - 2) ** 2 / 2).min() == pytest.approx(1.5, abs=1e-8)


@pytest.mark.parametrize("h", ALL, ids=IDS)
def test_envelope_sandwich_and_monotone(h, gen):
    ys = gen.uniform(-5, 5, (50, 1))
    mus = [0.05, 0.2, 0.6]
    vals = [h.envelope(mu).value(ys) for mu in mus]
    assert np.all(vals[0] <= h.value(ys) + 1e-12)
    assert np.all(vals[1] <= vals[0] + 1e-12) and np.all(vals[2] <= vals[1] + 1e-12)


def test_moreau_grad_examples():
    e = L1.envelope(1.0)
    assert R.moreau_grad(e, [0.0])[0] == 0.0
    assert R.moreau_grad(e, [2.0])[0] == 1.0
    fd = (e.value([2.0 + 1e-5]) - e.value([2.0 - 1e-5])) / 2e-5
    assert fd == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("h", ALL, ids=IDS)
def test_moreau_grad_matches_finite_differences(h, gen):
    e = h.envelope(0.4)
    for y in gen.uniform(-5, 5, 100):
        fd = (e.value([y + 1e-6]) - e.value([y - 1e-6])) / 2e-6
        assert e.grad([y])[0] == pytest.approx(fd, abs=1e-5)


@pytest.mark.parametrize("h", ALL, ids=IDS)
def test_envelope_smoothness(h, gen):
    e = h.envelope(0.4)
    Ls = e.smoothness
    assert Ls == pytest.approx(max(1 / 0.4, h.modulus / (1 - 0.4 * h.modulus)))
    a, b = gen.uniform(-5, 5, (2, 200, 1))
    ratio = np.abs(e.grad(a) - e.grad(b))[:, 0] / np.abs(a - b)[:, 0]
    assert ratio.max() <= Ls * (1 + 1e-10)


def test_prox_of_envelope_examples():
    e = L1.envelope(1.0)
    assert R.prox_of_envelope(e, 0.8, [0.0])[0] == 0.0
    z = R.prox_of_envelope(e, 1.0, [3.0])[0]
    assert abs(e.grad([z])[0] + (z - 3.0)) <= 1e-8 * 4
    # Huber with unit threshold: z + 1 = 3 on the linear branch
    assert z == pytest.approx(2.0, abs=1e-10)
    grid = np.linspace(0, 3, 300_001)
    obj = e.value(grid[:, None]) + (grid - 3.0) ** 2 / 2
    assert grid[np.argmin(obj)] == pytest.approx(z, abs=1e-5)
    w = np.array([0.3, -2.0, 5.0])
    assert np.allclose(Regularizer("l1", 1.0, 3).envelope(1.0).prox(1e-8, w), w, atol=1e-6)


@pytest.mark.parametrize("h", ALL, ids=IDS)
@settings(max_examples=100, deadline=None)
@given(w=st.floats(-8, 8), sigma=st.sampled_from([1e-3, 0.1, 1.0, 10.0]), mu=st.sampled_from([0.01, 0.5, 1.0]))
def test_prox_of_envelope_stationarity(h, w, sigma, mu):
    assume(mu * h.modulus < 1)
    e = h.envelope(mu)
    z = e.prox(sigma, np.array([w]))
    assert abs(e.grad(z)[0] + (z[0] - w) / sigma) <= 1e-8 * (1 + abs(w))


def test_envelope_of_envelope_adds_smoothing():
    e = MCP.envelope(0.3).envelope(0.2)
    assert e.mu == pytest.approx(0.5)
    y = np.linspace(-4, 4, 9)[:, None]
    # h_{a+b} = (h_a)_b, evaluated by brute force on a grid
    grid = np.linspace(-8, 8, 160_001)
    inner = MCP.envelope(0.3).value(grid[:, None])
    brute = np.array([(inner + (grid - v) ** 2 / 0.4).min() for v in y[:, 0]])
    assert np.allclose(e.value(y), brute, atol=1e-6)


@pytest.mark.parametrize("h", [MCP, SCAD], ids=["mcp", "scad"])
@pytest.mark.parametrize("sigma", [0.3, 3.0, 10.0])
def test_prox_of_envelope_is_global_in_both_regimes(h, sigma):
    # sigma = 3 and 10 make the envelope subproblem nonconvex for mu = 0.5
    e = h.envelope(0.5)
    w = np.linspace(-8, 8, 81)
    z = e.prox(sigma, w)
    grid = np.linspace(-9, 9, 36_001)
    ev = e.value(grid[:, None])
    best = np.array([(ev + (grid - wi) ** 2 / (2 * sigma)).min() for wi in w])
    assert np.all(e.value(z[:, None]) + (z - w) ** 2 / (2 * sigma) <= best + 1e-12)
