import io
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pshsym.errors import DivergentEnergyError, NonconvexInputError, ParseError
from pshsym.model_measure import ModelGeometry
from pshsym.profile import (RadialProfile, biconjugate_error, conjugate_back, convexity_report, energy,
                            exp_profile, fiber_integral, legendre, moser_functional, read_profile_csv,
                            softmax_truncated_log, standard_grid, truncated_log_profile, write_profile_csv)


@pytest.mark.parametrize("n", [1, 2, 3])
@pytest.mark.parametrize("a", [0.3, 1.0, 5.0])
def test_truncated_log_energy_is_a(n, a):
    geom = ModelGeometry(n, 1.0)
    res = energy(truncated_log_profile(a), geom)
    assert res.value == pytest.approx(a, rel=1e-12)
    assert res.ibp_value == pytest.approx(a, rel=1e-12)


@pytest.mark.parametrize("n", [1, 2])
def test_exp_profile_energy(n):
    geom = ModelGeometry(n, 1.0)
    p = exp_profile().on_grid(standard_grid(points=20001))
    assert energy(p, geom, check_tail=False).value == pytest.approx(1 / (n + 2), rel=1e-6)


def test_integration_by_parts_form_matches():
    geom = ModelGeometry(1, 1.0)
    p = exp_profile().on_grid(standard_grid(points=20001))
    res = energy(p, geom, check_tail=False)
    # int -f d((f')^{n+1}) = int (f')^{n+2} dt when f(0) = 0 and the tail vanishes
    assert res.ibp_value == pytest.approx(res.value, rel=1e-6)


def test_divergent_energy_without_tail():
    geom = ModelGeometry(1, 1.0)
    grid = standard_grid()
    p = RadialProfile(grid, grid.copy(), None)
    with pytest.raises(DivergentEnergyError):
        energy(p, geom)


@given(st.floats(0.1, 10.0), st.floats(0.2, 3.0), st.sampled_from([1, 2]))
def test_energy_homogeneity(a, c, n):
    geom = ModelGeometry(n, 1.0)
    p = truncated_log_profile(a)
    assert energy(p.scaled(c), geom).value == pytest.approx(c ** (n + 2) * a, rel=1e-10)


def _random_convex(seed):
    rng = np.random.default_rng(seed)
    grid = standard_grid(points=401)
    slopes = np.sort(rng.exponential(1.0, grid.size - 1))
    vals = np.concatenate([[0.0], np.cumsum(slopes * np.diff(grid))])
    vals -= vals[-1]
    return RadialProfile(grid, vals, float(vals[0]))


@given(st.integers(0, 10_000))
def test_biconjugate_recovers_convex_profile(seed):
    p = _random_convex(seed)
    assert biconjugate_error(p) <= 1e-9 * max(1.0, p.scale)
    back = conjugate_back(legendre(p), p.grid)
    assert np.allclose(back(p.grid), p.values, atol=1e-9 * max(1.0, p.scale))


def test_legendre_rejects_nonconvex():
    grid = np.linspace(-2, 0, 5)
    p = RadialProfile(grid, np.array([-1.0, -0.2, -0.1, -0.05, 0.0]), -1.0)
    assert not convexity_report(p)["passed"]
    with pytest.raises(NonconvexInputError):
        legendre(p)


@pytest.mark.parametrize("l", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("a", [0.5, 3.0])
def test_fiber_integral_of_truncated_log(l, a):
    # vol int e^{-max(t,-a)} e^{l t} dt, closed form
    geom = ModelGeometry(1, l)
    val = fiber_integral(truncated_log_profile(a), lambda y: np.exp(-y), geom)
    exact = math.exp((1 - l) * a) / l + ((1 - math.exp((1 - l) * a)) / (l - 1) if l != 1 else a)
    assert val == pytest.approx(exact, rel=1e-10)


def test_moser_functional_zero_profile_and_tail():
    geom = ModelGeometry(1, 1.0)
    # w = c max(t, -a) with c chosen so the Dirichlet norm is one
    a = 2.0
    c = a ** (-1 / 3)
    w = truncated_log_profile(a, c)
    pw = 1.5
    from scipy import integrate
    exact = integrate.quad(lambda t: math.exp((-c * t) ** pw + t), -a, 0)[0] + math.exp((c * a) ** pw - a)
    assert moser_functional(w, 1.0, geom) == pytest.approx(exact, rel=1e-8)


def test_softmax_profile_is_convex_and_vanishes():
    sp = softmax_truncated_log(1.0, 0.05)
    p = sp.on_grid()
    assert p.values[-1] == 0.0
    assert convexity_report(p)["passed"]
    assert np.all(np.diff(p.values) >= 0)


def test_profile_csv_round_trip():
    p = truncated_log_profile(1.5)
    buf = io.StringIO()
    write_profile_csv(p, buf)
    q = read_profile_csv(io.StringIO(buf.getvalue()))
    assert np.array_equal(p.grid, q.grid) and np.array_equal(p.values, q.values)
    assert q.left_value == p.left_value


def test_profile_csv_rejects_garbage():
    with pytest.raises(ParseError):
        read_profile_csv(io.StringIO("t,f\n1,2\n"))
    with pytest.raises(ParseError):
        read_profile_csv(io.StringIO("# left_value=none\nt,f\n0,x\n"))
