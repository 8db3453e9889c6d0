import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pshsym.inequalities import (SCALES, calibrate_moser, digest, elementary_inequality_check, moser_check,
                                 moser_functional, mt_coefficient, mt_radial, mt_toric, normalize,
                                 random_normalized_profiles, scaled_moser_check, scaled_profile,
                                 strong_mt_check, truncated_linear_family, truncated_log_mt_closed_form)
from pshsym.model_measure import MCConfig, ModelGeometry
from pshsym.profile import dirichlet_norm, standard_grid, truncated_log_profile
from pshsym.toric import ToricTestFunction

GEOM = ModelGeometry(1, 1.0)


@pytest.fixture(scope="module")
def calibration():
    return calibrate_moser(GEOM)


@given(st.floats(1e-3, 1e3), st.floats(1e-3, 1e3), st.integers(1, 4))
def test_elementary_inequality(x, y, n):
    r = elementary_inequality_check(x, y, n)
    assert r.passed


@pytest.mark.parametrize("n", [1, 2, 3])
def test_elementary_equality_case(n):
    x = 1.3
    y = x ** (n + 1)  # x^{n+2} = y^{(n+2)/(n+1)}
    r = elementary_inequality_check(x, y, n)
    assert r.extra["equality"]
    assert abs(r.margin) <= 1e-12 * r.rhs


def test_mt_coefficient_n1_l1():
    assert mt_coefficient(GEOM) == pytest.approx(4 / 27)


@pytest.mark.parametrize("l", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("a", [0.1, 1.0, 10.0, 50.0])
def test_closed_form_matches_fiber_integral(a, l):
    geom = ModelGeometry(1, l)
    cf = truncated_log_mt_closed_form(a, geom, 6.0)
    fib = mt_radial(truncated_log_profile(a, 1.0, standard_grid(min(-20.0, -1.5 * a))), geom, 6.0)
    assert fib.lhs == pytest.approx(cf.lhs, rel=1e-9, abs=1e-12)
    if l == 1.0:
        assert cf.lhs == pytest.approx(math.log1p(a), rel=1e-12)


def test_calibration_values(calibration):
    assert calibration.C == pytest.approx(1.05 * calibration.C_est)
    assert calibration.C_est > 1.0  # w -> 0 gives int e^t dt = 1
    assert calibration.family_size == 200 * len(SCALES) + 61
    assert calibration.D(1.0) == pytest.approx(math.log(calibration.C))


def test_random_profiles_are_normalized():
    for w in random_normalized_profiles(20, GEOM, seed=3):
        assert dirichlet_norm(w, GEOM) == pytest.approx(1.0, rel=1e-10)


def test_truncated_linear_family_normalized():
    for w in truncated_linear_family(GEOM, [0.1, 1.0, 10.0]):
        assert dirichlet_norm(w, GEOM) == pytest.approx(1.0, rel=1e-10)


def test_moser_checks_pass_on_fresh_family(calibration):
    for w in random_normalized_profiles(50, GEOM, seed=99):
        assert moser_check(w, GEOM, calibration.C).passed


@given(st.integers(0, 500), st.sampled_from(SCALES))
def test_scaling_identity(seed, k):
    (w,) = random_normalized_profiles(1, GEOM, seed=seed)
    wk = scaled_profile(w, k, GEOM)
    assert dirichlet_norm(wk, GEOM) == pytest.approx(1.0, rel=1e-9)
    assert k * moser_functional(w, k, GEOM) == pytest.approx(moser_functional(wk, 1.0, GEOM), rel=1e-8)


def test_scaled_checks(calibration):
    w = truncated_log_profile(1.0)
    for k in SCALES:
        r = scaled_moser_check(w, k, GEOM, calibration.C)
        assert r.passed and r.extra["k_times_lhs"] <= calibration.C


def test_strong_mt_on_truncated_log(calibration):
    for l in (0.5, 1.0, 2.0):
        assert strong_mt_check(truncated_log_profile(2.0), ModelGeometry(1, l), calibration.C).passed


def test_mt_toric_matches_closed_form(calibration):
    a = 1.0
    u = ToricTestFunction(dim=2, aff_a=[[0.0, 0.0]], aff_b=[-a], log_A=[1.0], log_b=[0.0])
    r = mt_toric(u, GEOM, calibration.C, a, MCConfig(200_000, seed=2))
    assert abs(r.extra["integral"] - (1 + a)) <= 4 * r.extra["integral_stderr"]
    assert r.passed


def test_normalize_rejects_zero_profile():
    from pshsym.profile import zero_profile
    with pytest.raises(ValueError):
        normalize(zero_profile(), GEOM)


def test_digest_is_stable():
    p = truncated_log_profile(1.0)
    assert digest("x", p, 1) == digest("x", truncated_log_profile(1.0), 1)
    assert digest("x", p, 1) != digest("x", p, 2)
    assert len(digest("x")) == 16


def test_result_serializes():
    r = elementary_inequality_check(1.0, 2.0, 1)
    d = r.to_dict()
    assert set(d) >= {"name", "lhs", "rhs", "margin", "passed", "inputs_digest"}
