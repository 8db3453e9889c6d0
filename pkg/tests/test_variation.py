import numpy as np
import pytest
from hypothesis import given, strategies as st

from pshsym.errors import ConfigError, NonmonotoneInTError
from pshsym.inequalities import random_normalized_profiles
from pshsym.model_measure import MCConfig, ModelGeometry
from pshsym.profile import energy, exp_profile, standard_grid, truncated_log_profile
from pshsym.toric import random_corpus
from pshsym.variation import (BivariateSample, affine_deviation, concavity_defect, energy_along, geodesic,
                              geodesic_family, inverse_in_t, joint_convexity_check, profile_max,
                              random_concave_sample, subgeodesic_max, symmetrized_subgeodesic_check,
                              toric_subgeodesic)

GEOM = ModelGeometry(1, 1.0)
S11 = np.linspace(0, 1, 11)


@given(st.floats(0.2, 6.0), st.floats(0.2, 6.0))
def test_truncated_log_geodesic_energy_is_affine(a0, a1):
    f0, f1 = truncated_log_profile(a0), truncated_log_profile(a1)
    E = energy_along(geodesic_family(f0, f1, S11), GEOM)
    assert affine_deviation(S11, E) <= 1e-9 * max(a0, a1)
    assert E[0] == pytest.approx(a0) and E[-1] == pytest.approx(a1)


def test_geodesic_endpoints_recover_profiles():
    f0, f1 = truncated_log_profile(1.0), exp_profile().on_grid()
    g0, g1 = geodesic(f0, f1, 0.0), geodesic(f0, f1, 1.0)
    t = standard_grid()
    assert np.allclose(g0(t), f0(t), atol=1e-9)
    assert np.allclose(g1(t), f1(t), atol=1e-9)


@given(st.integers(0, 1000))
def test_random_profile_geodesics_affine(seed):
    f0, f1 = random_normalized_profiles(2, GEOM, seed=seed)
    E = energy_along(geodesic_family(f0, f1, S11), GEOM)
    assert affine_deviation(S11, E) <= 1e-6 * max(E[0], E[-1])


def test_geodesic_rejects_bad_s():
    with pytest.raises(ValueError):
        geodesic(truncated_log_profile(1.0), truncated_log_profile(2.0), 1.5)


def test_subgeodesic_jointly_convex_and_energy_concave():
    f0, f1 = truncated_log_profile(1.0), truncated_log_profile(3.0)
    assert joint_convexity_check(f0, f1)["passed"]
    E = np.array([energy(subgeodesic_max(f0, f1, s), GEOM, check_tail=False).value for s in S11])
    assert concavity_defect(S11, E) >= -1e-9
    # ends are the endpoint profiles shifted down, max with the envelope
    assert subgeodesic_max(f0, f1, 0.0).values[-1] == 0.0


def test_subgeodesic_rejects_negative_shift():
    with pytest.raises(ConfigError):
        subgeodesic_max(truncated_log_profile(1.0), truncated_log_profile(2.0), 0.5, c=-1.0)


def test_profile_max_includes_crossings():
    grid = np.array([-2.0, -1.0, 0.0])
    from pshsym.profile import RadialProfile
    a = RadialProfile(grid, np.array([-2.0, -1.0, 0.0]), -2.0)
    b = RadialProfile(grid, np.array([-1.5, -1.5, 0.0]), -1.5)
    m = profile_max([(a, 0.0), (b, 0.0)])
    assert -1.5 in m.grid
    assert np.allclose(m(np.array([-2.0, -1.5, -1.0, -0.5, 0.0])), [-1.5, -1.5, -1.0, -0.5, 0.0])


def test_concavity_defect_sign():
    s = np.linspace(0, 1, 5)
    assert concavity_defect(s, -s**2) > 0
    assert concavity_defect(s, s**2) < 0


@pytest.mark.parametrize("a,k", [
    (lambda S, T: T + S, lambda S, X: X - S),
    (lambda S, T: T - S**2, lambda S, X: X + S**2),
])
def test_inverse_closed_forms_exact(a, k):
    s, t = np.linspace(0, 1, 21), np.linspace(-2, 2, 201)
    inv = inverse_in_t(BivariateSample.from_function(a, s, t))
    S, X = np.meshgrid(inv.s_grid, inv.x_grid, indexing="ij")
    assert np.max(np.abs(inv.values - k(S, X))) <= 1e-12
    assert inv.report["passed"]


@given(st.integers(0, 2**32))
def test_inverse_of_concave_increasing_is_convex(seed):
    rng = np.random.default_rng(seed)
    rep = inverse_in_t(random_concave_sample(rng)).report
    assert rep["min_defect"] >= -1e-6 - rep["interpolation_bound"]


def test_nonmonotone_in_t_rejected():
    s, t = np.linspace(0, 1, 5), np.linspace(-1, 1, 11)
    with pytest.raises(NonmonotoneInTError):
        inverse_in_t(BivariateSample.from_function(lambda S, T: -T + S, s, t))


def test_toric_subgeodesic_vanishes_on_boundary_and_is_psh():
    from pshsym.toric import boundary_residual, psh_check
    u0, u1 = random_corpus(2, GEOM, seed=0)
    us = toric_subgeodesic(u0, u1, 0.5)
    assert boundary_residual(us) <= 1e-12
    assert psh_check(us)["passed"]


def test_symmetrized_subgeodesic_check_small():
    u0, u1 = random_corpus(2, GEOM, seed=0)
    rep = symmetrized_subgeodesic_check(u0, u1, GEOM, mc=MCConfig(100_000, seed=1))
    assert rep["log_area_tests"] == 202
    assert rep["passed"]
