import io
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pshsym.errors import NonmonotoneSigmaError
from pshsym.model_measure import MCConfig, ModelGeometry, sample_cloud
from pshsym.profile import convexity_report, energy, exp_profile, standard_grid, truncated_log_profile
from pshsym.symmetrization import (DistributionFunction, default_levels, distribution, energy_stderr,
                                   familywise_z, log_concavity_check, profile_sublevel_volume,
                                   strict_monotonicity_check, symmetrize, verify_equidistribution,
                                   write_distribution_csv)
from pshsym.toric import ToricTestFunction, random_corpus


@pytest.fixture(scope="module")
def setup():
    geom = ModelGeometry(1, 1.0)
    cloud = sample_cloud(geom, MCConfig(200_000, seed=11))
    u = random_corpus(1, geom, seed=3)[0]
    d = distribution(u, geom, cloud=cloud)
    return geom, cloud, u, d, symmetrize(d, geom)


def test_sigma_matches_closed_form_for_radial_function():
    geom = ModelGeometry(1, 0.5)
    cloud = sample_cloud(geom, MCConfig(100_000, seed=2))
    p = truncated_log_profile(2.0)
    d = distribution(ToricTestFunction.radial(p, 2), geom, levels=[-1.5, -1.0, -0.2], cloud=cloud)
    exact = np.exp(0.5 * d.levels) / 0.5
    assert np.all(np.abs(d.sigma - exact) <= 4 * d.stderr)


def test_sigma_is_monotone_and_bounded(setup):
    geom, _, _, d, _ = setup
    assert np.all(np.diff(d.sigma) >= 0)
    assert d.sigma[-1] <= geom.vol / geom.l


def test_default_levels_geometric_towards_zero():
    lv = default_levels(-2.0)
    assert lv.size == 64 and np.all(lv < 0) and np.all(lv > -2.0)
    assert np.all(np.diff(lv) > 0)


def test_symmetrized_profile_properties(setup):
    geom, _, u, d, f = setup
    assert f.values[-1] == 0.0
    assert f.values[0] == pytest.approx(d.min_u)
    assert convexity_report(f, f.meta["convexity_eps"])["passed"]
    assert np.all(np.diff(f.values) >= 0)


def test_equidistribution_and_negative_control(setup):
    geom, _, u, d, f = setup
    assert verify_equidistribution(u, f, geom, dist=d)["passed"]
    shifted = verify_equidistribution(u, f, geom, dist=d, value_shift=0.1)
    assert not shifted["passed"]


def test_energy_does_not_increase(setup):
    from pshsym.ma_oracle import energy_pl_2d
    geom, _, u, _, f = setup
    E_u = energy_pl_2d(u, geom, compare=False).value
    assert energy(f, geom).value <= E_u * 1.02
    assert energy_stderr(f, geom) > 0


@pytest.mark.parametrize("a", [0.5, 2.0])
def test_radial_fixed_point(a):
    geom = ModelGeometry(1, 1.0)
    cloud = sample_cloud(geom, MCConfig(300_000, seed=4))
    p = truncated_log_profile(a)
    f = symmetrize(distribution(ToricTestFunction.radial(p, 2), geom, cloud=cloud), geom)
    grid = standard_grid()
    assert np.max(np.abs(f(grid) - p(grid))) < 0.03 * max(1.0, a)
    assert energy(f, geom).value == pytest.approx(a, rel=0.02)


def test_exp_fixed_point_energy():
    geom = ModelGeometry(1, 1.0)
    cloud = sample_cloud(geom, MCConfig(300_000, seed=4))
    f = symmetrize(distribution(ToricTestFunction.radial(exp_profile(), 2), geom, cloud=cloud), geom)
    assert energy(f, geom).value == pytest.approx(1 / 3, rel=0.02)


@given(st.floats(0.2, 5.0), st.floats(0.3, 2.0), st.floats(-4.9, -0.01))
def test_profile_sublevel_volume_closed_form(a, l, s):
    geom = ModelGeometry(1, l)
    p = truncated_log_profile(5.0)
    # {max(t,-5) < s} = {t < s} for s > -5
    assert profile_sublevel_volume(p, np.array([s]), geom)[0] == pytest.approx(math.exp(l * s) / l, rel=1e-9)


def test_nonmonotone_sigma_rejected():
    d = DistributionFunction(np.array([-2.0, -1.0, -0.5]), np.array([0.5, 0.2, 0.6]),
                             np.array([1e-3, 1e-3, 1e-3]), -3.0, 1000, 0)
    with pytest.raises(NonmonotoneSigmaError):
        symmetrize(d, ModelGeometry(1, 1.0))


def test_familywise_z():
    assert familywise_z(3.0, 1) == pytest.approx(3.0)
    assert familywise_z(3.0, 64) > 3.0
    assert familywise_z(3.0, 64) < familywise_z(3.0, 1000)


def test_log_concavity_and_monotonicity(setup):
    _, _, _, d, _ = setup
    lc = log_concavity_check(d)
    assert lc["triples"] == 62 and lc["passed"]
    mono = strict_monotonicity_check(d)
    assert mono["passed"] and mono["total_increase"] > 0


def test_monotonicity_not_applicable_for_nonnegative():
    d = DistributionFunction(np.array([]), np.array([]), np.array([]), 0.0, 1000, 0)
    assert strict_monotonicity_check(d)["status"] == "NOT_APPLICABLE"


def test_distribution_csv_schema(setup):
    _, _, _, d, _ = setup
    buf = io.StringIO()
    write_distribution_csv(d, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "t,sigma,stderr"
    assert len(lines) == d.levels.size + 1
    assert all(len(line.split(",")) == 3 for line in lines)


def test_common_random_numbers_give_same_distribution(setup):
    geom, cloud, u, d, _ = setup
    d2 = distribution(u, geom, cloud=cloud)
    assert np.array_equal(d.sigma, d2.sigma)
