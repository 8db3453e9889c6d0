import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from pshsym.errors import ConfigError
from pshsym.model_measure import (MCConfig, ModelGeometry, ball_volume, log_omega_density, log_phi,
                                  sample_cloud, sublevel_volume)
from pshsym.toric import ToricTestFunction


def _radial_mass(geom, tmax):
    # mass of {log Phi < tmax}: integrate the density over the simplex fibres numerically (n = 1)
    def inner(t):
        # x = (t + log q0, t + log q1), q0 = s, q1 = 1 - s; dx = dt ds / (s (1 - s))
        f = lambda s: math.exp(log_omega_density(np.array([[t + math.log(s), t + math.log1p(-s)]]), geom)[0]) / (
            s * (1 - s))
        return integrate.quad(f, 0, 1)[0]
    return integrate.quad(inner, -60, tmax, limit=200)[0]


@pytest.mark.parametrize("l", [0.5, 1.0, 2.0])
def test_density_integrates_to_ball_mass(l):
    geom = ModelGeometry(1, l, vol=1.7)
    assert _radial_mass(geom, 0.0) == pytest.approx(geom.vol / l, rel=1e-6)
    assert ball_volume(geom) == pytest.approx(1.7 / l)


def test_sublevel_mass_is_exponential_in_level():
    geom = ModelGeometry(1, 1.5)
    assert _radial_mass(geom, -2.0) == pytest.approx(math.exp(-3.0) / 1.5, rel=1e-6)


@pytest.mark.parametrize("n,l", [(1, 1.0), (1, 2.0), (2, 0.5), (2, 3.0)])
def test_mc_ball_volume_within_three_stderr(n, l):
    geom = ModelGeometry(n, l)
    mc = MCConfig(samples=100_000, seed=5)
    u = ToricTestFunction(dim=n + 1, log_A=[1.0], log_b=[0.0])
    est = sublevel_volume(u, -1e-12, geom, mc, proposal_l=0.5 * l)
    assert abs(est.value - geom.vol / l) <= 3 * est.stderr
    assert est.stderr > 0


def test_sublevel_of_radial_function_matches_closed_form():
    geom = ModelGeometry(1, 1.0)
    mc = MCConfig(samples=200_000, seed=1)
    u = ToricTestFunction(dim=2, log_A=[1.0], log_b=[0.0])
    est = sublevel_volume(u, -1.0, geom, mc, proposal_l=0.5)
    assert abs(est.value - math.exp(-1.0)) <= 4 * est.stderr


def test_empty_sublevel_flagged():
    geom = ModelGeometry(1, 1.0)
    u = ToricTestFunction(dim=2, log_A=[1.0], log_b=[0.0]).maximum(
        ToricTestFunction(dim=2, aff_a=[[0.0, 0.0]], aff_b=[-0.5]))
    est = sublevel_volume(u, -0.6, geom, MCConfig(samples=2000))
    assert est.empty and est.value == 0.0


def test_positive_level_rejected():
    geom = ModelGeometry(1, 1.0)
    with pytest.raises(ValueError):
        sublevel_volume(lambda x: log_phi(x), 0.5, geom, MCConfig(samples=2000))


@pytest.mark.parametrize("kw", [dict(n=0, l=1.0), dict(n=1, l=0.0), dict(n=1, l=2.5), dict(n=1, l=1.0, vol=-1.0)])
def test_geometry_validation(kw):
    with pytest.raises(ConfigError):
        ModelGeometry(**kw)


def test_mc_config_validation():
    with pytest.raises(ConfigError):
        MCConfig(samples=10)
    with pytest.raises(ConfigError):
        MCConfig(shards=0)


def test_cloud_is_reproducible_and_seed_sensitive():
    geom = ModelGeometry(2, 1.0)
    a = sample_cloud(geom, MCConfig(5000, seed=9, shards=3))
    b = sample_cloud(geom, MCConfig(5000, seed=9, shards=3))
    c = sample_cloud(geom, MCConfig(5000, seed=10, shards=3))
    assert np.array_equal(a.t, b.t) and np.array_equal(a.logq, b.logq)
    assert not np.array_equal(a.t, c.t)


@given(st.integers(0, 2**32), st.sampled_from([(1, 0.5), (1, 2.0), (2, 1.0)]))
def test_cloud_lies_in_ball_and_on_simplex(seed, nl):
    geom = ModelGeometry(*nl)
    c = sample_cloud(geom, MCConfig(1000, seed=seed))
    assert np.all(c.t < 0)
    assert np.allclose(np.exp(c.logq).sum(axis=1), 1.0)
    assert np.allclose(log_phi(c.x), c.t)
    assert np.allclose(c.weights, geom.vol / geom.l)
