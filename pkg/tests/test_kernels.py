import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pshsym import kernels

compiled = pytest.mark.skipif(kernels._compiled is None, reason="compiled kernels not built")


def _inputs(seed, d, m_aff, m_log, size=300):
    rng = np.random.default_rng(seed)
    q = rng.dirichlet(np.ones(d), size)
    t = -rng.exponential(2.0, size)
    x = t[:, None] + np.log(q)
    a = rng.uniform(0, 2, (m_aff, d))
    b = rng.uniform(-3, 0, m_aff)
    A = rng.uniform(0.5, 2, m_log)
    lb = np.zeros(m_log)
    return x, t, q, a, b, A, lb


@compiled
@given(st.integers(0, 2**32), st.sampled_from([2, 3]), st.integers(1, 6), st.integers(1, 2))
def test_toric_max_backends_agree(seed, d, m_aff, m_log):
    x, t, q, a, b, A, lb = _inputs(seed, d, m_aff, m_log)
    py = kernels.toric_max(x, t, a, b, A, lb, backend="python")
    cy = kernels.toric_max(x, t, a, b, A, lb, backend="compiled")
    assert np.allclose(py, cy, rtol=1e-13, atol=1e-13)


@compiled
@given(st.integers(0, 2**32), st.sampled_from([2, 3]), st.integers(1, 6), st.floats(0.01, 0.2))
def test_softmax_density_backends_agree(seed, d, m_aff, eps):
    x, t, q, a, b, A, lb = _inputs(seed, d, m_aff, 1)
    g1, det1 = kernels.softmax_ma_density(x, t, q, a, b, A, lb, eps, backend="python")
    g2, det2 = kernels.softmax_ma_density(x, t, q, a, b, A, lb, eps, backend="compiled")
    assert np.allclose(g1, g2, rtol=1e-12, atol=1e-12)
    # determinants of near-singular Hessians cancel; compare on the scale of the entries
    scale = (1.0 / eps + A.max()) ** d
    assert np.allclose(det1, det2, rtol=1e-9, atol=1e-12 * scale)


def test_toric_max_python_definition():
    x, t, q, a, b, A, lb = _inputs(1, 2, 3, 1, size=50)
    expect = np.maximum((x @ a.T + b).max(axis=1), A[0] * t)
    assert np.allclose(kernels.toric_max(x, t, a, b, A, lb, backend="python"), expect)


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels._pick("fortran")


def test_pure_python_switch():
    env = dict(os.environ, PSHSYM_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import pshsym; print(pshsym.BACKEND)"], env=env,
                         capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
