import math

import numpy as np
import pytest

from pshsym.errors import InconsistentOraclesError
from pshsym.ma_oracle import (QuadratureConfig, active_vertices, energy_pl_2d, energy_quadrature,
                              ma_mass_quadrature, pl_atoms_2d)
from pshsym.model_measure import ModelGeometry
from pshsym.profile import exp_profile
from pshsym.toric import ToricTestFunction, random_corpus


@pytest.fixture(scope="module")
def geom():
    return ModelGeometry(1, 1.0)


def quarter_example(envelope=None):
    return ToricTestFunction.pl([[1.0, 0.0], [0.0, 1.0], [0.25, 0.25]], [0.0, 0.0, -1.0], envelope_A=envelope)


def test_quarter_atom(geom):
    atoms = pl_atoms_2d(quarter_example(), geom)
    assert len(atoms) == 1
    a = atoms[0]
    assert np.allclose(a.location, [-2.0, -2.0], atol=1e-9)
    assert a.mass == pytest.approx(0.25, abs=1e-12)
    assert a.value == pytest.approx(-2.0, abs=1e-12)


def test_active_vertex_is_triple_point():
    (v,) = active_vertices(quarter_example())
    u = quarter_example()
    vals = [v[0], v[1], 0.25 * v[0] + 0.25 * v[1] - 1]
    assert np.allclose(vals, -2.0)
    assert u.evaluate_logpolar(np.array([np.logaddexp(*v)]), np.array([v - np.logaddexp(*v)]))[0] == pytest.approx(-2.0)


@pytest.mark.parametrize("n", [1])
def test_exp_energy_quadrature(n):
    geom = ModelGeometry(n, 1.0)
    r = energy_quadrature(ToricTestFunction.radial(exp_profile(), n + 1), geom)
    assert r.value == pytest.approx(1 / (n + 2), rel=1e-6)


@pytest.mark.parametrize("a", [0.5, 2.0])
def test_truncated_log_exact_and_mollified(geom, a):
    u = ToricTestFunction(dim=2, aff_a=[[0.0, 0.0]], aff_b=[-a], log_A=[1.0], log_b=[0.0])
    pe = energy_pl_2d(u, geom)
    assert pe.value == pytest.approx(a, rel=1e-8)
    assert pe.quadrature.value == pytest.approx(a, rel=1e-4)
    # the swept gradient image covers the triangle 0 <= p, sum p <= A
    assert pe.total_area == pytest.approx(0.5, rel=1e-8)


def test_total_ma_mass_is_envelope_area(geom):
    u = random_corpus(1, geom, seed=4)[0]
    pe = energy_pl_2d(u, geom, compare=False)
    assert pe.total_area == pytest.approx(u.envelope_A**2 / 2, rel=1e-7)
    q = ma_mass_quadrature(u, geom)
    # (n+1)! times the Lebesgue area of the gradient image
    assert q.value == pytest.approx(math.factorial(2) * u.envelope_A**2 / 2, rel=1e-3)


def test_corpus_oracles_agree(geom):
    for u in random_corpus(3, geom, seed=2):
        pe = energy_pl_2d(u, geom, tol=0.05)
        assert pe.relative_gap < 1e-3
        assert pe.value > 0


def test_inconsistent_oracles_raise(geom):
    u = random_corpus(1, geom, seed=2)[0]
    with pytest.raises(InconsistentOraclesError):
        energy_pl_2d(u, geom, tol=0.0, cfg=QuadratureConfig(eps=(0.2,), refine=4.0))


def test_energy_independent_of_l():
    u = random_corpus(1, ModelGeometry(1, 1.0), seed=6)[0]
    e1 = energy_pl_2d(u, ModelGeometry(1, 1.0), compare=False).value
    e2 = energy_pl_2d(u, ModelGeometry(1, 0.5), compare=False).value
    assert e1 == e2


def test_energy_scales_with_volume():
    u = random_corpus(1, ModelGeometry(1, 1.0), seed=6)[0]
    e1 = energy_pl_2d(u, ModelGeometry(1, 1.0), compare=False).value
    e2 = energy_pl_2d(u, ModelGeometry(1, 1.0, vol=2.0), compare=False).value
    assert e2 == pytest.approx(e1 / 2)


def test_energy_is_homogeneous_of_degree_n_plus_2(geom):
    u = random_corpus(1, geom, seed=8)[0]
    c = 1.7
    v = ToricTestFunction(dim=2, aff_a=c * u.aff_a, aff_b=c * u.aff_b, log_A=c * u.log_A, log_b=c * u.log_b)
    e1 = energy_pl_2d(u, geom, compare=False).value
    e2 = energy_pl_2d(v, geom, compare=False).value
    assert e2 == pytest.approx(c**3 * e1, rel=1e-8)
