"""Pure numpy implementations of the hot kernels.

These are the reference versions; ``_kernels.pyx`` mirrors them loop by loop.
Piece convention shared by both: ``aff_a`` (K, d) and ``aff_b`` (K,) describe
affine pieces ``a.x + b``; ``log_A`` (J,) and ``log_b`` (J,) describe
log-homogeneous pieces ``A * LSE(x) + b`` where ``LSE(x) = log sum exp(x)``.
"""

import numpy as np


def toric_max(x, t, aff_a, aff_b, log_A, log_b):
    """max over affine and log pieces at points ``x`` with ``t = LSE(x)``."""
    x = np.asarray(x, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    out = np.full(t.shape[0], -np.inf)
    if len(aff_b):
        np.maximum(out, (x @ np.asarray(aff_a).T + aff_b).max(axis=1), out=out)
    for A, b in zip(log_A, log_b):
        np.maximum(out, A * t + b, out=out)
    return out


def softmax_ma_density(x, t, q, aff_a, aff_b, log_A, log_b, eps):
    """Mollified value and Hessian determinant of the toric max.

    ``g = eps * log sum_i exp(h_i / eps)``. Returns ``(g, det D^2 g)``.
    """
    x = np.asarray(x, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    n_pts, d = x.shape
    aff_a = np.asarray(aff_a, dtype=np.float64).reshape(-1, d)
    vals = []
    grads = []
    for a, b in zip(aff_a, aff_b):
        vals.append(x @ a + b)
        grads.append(np.broadcast_to(a, (n_pts, d)))
    for A, b in zip(log_A, log_b):
        vals.append(A * t + b)
        grads.append(A * q)
    if not vals:
        return np.zeros(n_pts), np.zeros(n_pts)
    h = np.stack(vals, axis=1)
    hmax = h.max(axis=1)
    e = np.exp((h - hmax[:, None]) / eps)
    z = e.sum(axis=1)
    p = e / z[:, None]
    g = hmax + eps * np.log(z)
    G = np.stack(grads, axis=1)  # (N, K, d)
    m = np.einsum("nk,nkd->nd", p, G)
    C = G - m[:, None, :]
    cov = np.einsum("nk,nki,nkj->nij", p, C, C)
    n_aff = len(aff_b)
    c_log = np.zeros(n_pts)
    for j, A in enumerate(log_A):
        c_log += p[:, n_aff + j] * A
    H = cov / eps
    H += c_log[:, None, None] * (np.einsum("ni,ij->nij", q, np.eye(d)) - q[:, :, None] * q[:, None, :])
    return g, np.linalg.det(H)
