import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pshsym.errors import InvalidCountError, OutOfDomainError, ParseError
from pshsym.model_measure import ModelGeometry
from pshsym.profile import truncated_log_profile
from pshsym.toric import (ToricTestFunction, boundary_residual, dump_corpus, load_corpus, psh_check,
                          random_corpus)


@pytest.fixture(scope="module")
def corpus():
    return random_corpus(4, ModelGeometry(1, 1.0), seed=0)


def test_evaluate_matches_max_of_pieces():
    u = ToricTestFunction.pl([[0.0, 0.0], [1.0, 0.5]], [-1.0, -0.2], envelope_A=1.5)
    x = np.array([[-1.0, -2.0], [-0.1, -3.0], [-5.0, -6.0]])
    lse = np.logaddexp(x[:, 0], x[:, 1])
    expect = np.maximum.reduce([np.full(3, -1.0), x[:, 0] + 0.5 * x[:, 1] - 0.2, 1.5 * lse])
    assert np.allclose(u(x), expect)


def test_radial_function_evaluates_profile():
    p = truncated_log_profile(1.0)
    u = ToricTestFunction.radial(p, 2)
    x = np.array([[-1.0, -2.0], [-4.0, -5.0]])
    assert np.allclose(u(x), p(np.logaddexp(x[:, 0], x[:, 1])))


def test_outside_ball_rejected():
    u = ToricTestFunction.pl([[0.0, 0.0]], [-1.0], envelope_A=1.0)
    with pytest.raises(OutOfDomainError):
        u(np.array([[0.5, 0.5]]))


def test_negative_slope_rejected():
    with pytest.raises(ValueError):
        ToricTestFunction.pl([[-1.0, 0.0]], [0.0])


def test_corpus_is_psh_and_vanishes_on_boundary(corpus):
    for u in corpus:
        assert psh_check(u)["passed"]
        assert boundary_residual(u) <= 1e-12


def test_corpus_reproducible(corpus):
    again = random_corpus(4, ModelGeometry(1, 1.0), seed=0)
    assert dump_corpus(corpus) == dump_corpus(again)
    other = random_corpus(4, ModelGeometry(1, 1.0), seed=1)
    assert dump_corpus(corpus) != dump_corpus(other)


def test_corpus_count_validated():
    with pytest.raises(InvalidCountError):
        random_corpus(0, ModelGeometry(1, 1.0), seed=0)


def test_psh_check_detects_nonconvex():
    u = ToricTestFunction.pl([[0.0, 0.0]], [-1.0], envelope_A=1.0)
    bad = lambda x: -u(x)
    bad_u = type("F", (), {"evaluate": staticmethod(bad), "dim": 2})()
    rep = psh_check(bad_u)
    assert not rep["passed"] and "certificate" in rep


@given(st.integers(1, 5), st.integers(0, 2**31))
def test_json_round_trip(k, seed):
    rng = np.random.default_rng(seed)
    a = rng.uniform(0, 2, (k, 2))
    b = rng.uniform(-3, 0, k)
    u = ToricTestFunction.pl(a, b, envelope_A=float(rng.uniform(0.5, 2)), seed=seed)
    v = load_corpus(json.dumps(u.to_json()))[0]
    x = np.log(rng.dirichlet([1.0, 1.0], 50)) - rng.exponential(1.0, (50, 1))
    assert np.array_equal(u(x), v(x))


def test_corrupt_json_rejected():
    with pytest.raises(ParseError):
        load_corpus("{not json")
    with pytest.raises(ParseError):
        load_corpus(json.dumps([{"pieces": [{"a": [1.0]}]}]))


def test_shift_and_maximum():
    u = ToricTestFunction.pl([[0.0, 0.0]], [-1.0], envelope_A=1.0)
    v = ToricTestFunction.pl([[0.5, 0.5]], [-0.5], envelope_A=2.0)
    x = np.array([[-1.0, -1.5], [-3.0, -0.2]])
    assert np.allclose(u.shifted(0.3)(x), u(x) - 0.3)
    assert np.allclose(u.maximum(v)(x), np.maximum(u(x), v(x)))
