"""Shared oracles and helpers for the test suite."""

from __future__ import annotations

import numpy as np
import pytest


def play_vi_oracle(values, a, b, c, w0=0.0, substeps=10_000):
    """Reference play output: projected variational-inequality update on a
    fine sub-division of every affine input segment.

    Works on scalar parameters or per-case arrays broadcast against the
    leading axis of ``values`` (shape (n_cases, n_points)).
    """
    values = np.atleast_2d(np.asarray(values, dtype=float))
    w = np.broadcast_to(np.asarray(w0, dtype=float), values[:, 0].shape).copy()
    w = np.maximum(c * (values[:, 0] - b), np.minimum(c * (values[:, 0] - a), w))
    for s in range(values.shape[1] - 1):
        u0, u1 = values[:, s], values[:, s + 1]
        for m in range(1, substeps + 1):
            u = u0 + (u1 - u0) * (m / substeps)
            w = np.maximum(c * (u - b), np.minimum(c * (u - a), w))
    return w


def preisach_vi_oracle(values, r, w0=None, substeps=10_000):
    """Per-play fine-substep oracle for the Preisach memory (unit plays).

    ``values`` may be (n_points,) for one input or (n_cases, n_points) for a
    batch advanced in lockstep; the play states then have shape
    (n_cases, n_r).
    """
    values = np.asarray(values, dtype=float)
    single = values.ndim == 1
    values = np.atleast_2d(values)
    shape = (values.shape[0], r.size)
    w = np.zeros(shape) if w0 is None else np.broadcast_to(
        np.asarray(w0, dtype=float), shape).copy()
    u = values[:, 0][:, None]
    w = np.maximum(u - r, np.minimum(u + r, w))
    for s in range(values.shape[1] - 1):
        u0, u1 = values[:, s][:, None], values[:, s + 1][:, None]
        for m in range(1, substeps + 1):
            u = u0 + (u1 - u0) * (m / substeps)
            w = np.maximum(u - r, np.minimum(u + r, w))
    return w[0] if single else w


def lambda_min_estimate(A, iters=200, seed=0):
    """Smallest eigenvalue of an SPD sparse matrix by inverse power iteration."""
    import scipy.sparse as sp
    import scipy.sparse.linalg as spla

    lu = spla.splu(sp.csc_matrix(A))
    rng = np.random.default_rng(seed)
    v = rng.normal(size=A.shape[0])
    v /= np.linalg.norm(v)
    lam = None
    for _ in range(iters):
        v = lu.solve(v)
        nv = np.linalg.norm(v)
        v /= nv
        lam = float(v @ (A @ v))
    return lam


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
