import cvxpy as cp
import numpy as np
import pytest
from hypothesis import given, strategies as st

from hfbandit import kernels

BACKENDS = sorted(kernels.BACKENDS)
TIGHT = {"solver": cp.CLARABEL, "tol_gap_abs": 1e-12, "tol_gap_rel": 1e-12, "tol_feas": 1e-12}


def projection_oracle(v, R):
    x = cp.Variable(v.size)
    cp.Problem(cp.Minimize(cp.sum_squares(x - v)), [cp.sum(x) == 0, cp.abs(x) <= R]).solve(**TIGHT)
    return x.value


def box_qp_oracle(w, c, sigma, lam, R):
    x = cp.Variable(w.size)
    sym = 0.5 * (sigma + sigma.T)
    obj = w @ x + lam * cp.quad_form(x - c, cp.psd_wrap(sym))
    cp.Problem(cp.Minimize(obj), [cp.sum(x) == 0, cp.abs(x) <= R]).solve(**TIGHT)
    return x.value


def comparisons(seed, dim, n):
    rng = np.random.default_rng(seed)
    truth = rng.uniform(-1, 1, dim)
    truth -= truth.mean()
    i0 = rng.integers(0, dim, n)
    i1 = (i0 + rng.integers(1, dim, n)) % dim
    y = rng.random(n) < 1 / (1 + np.exp(-(truth[i1] - truth[i0])))
    keys, inv = np.unique(np.stack([i0, i1], 1), axis=0, return_inverse=True)
    inv = inv.ravel()
    wins = np.bincount(inv, weights=y, minlength=len(keys))
    totals = np.bincount(inv, minlength=len(keys)).astype(float)
    return keys[:, 0].astype(np.int64), keys[:, 1].astype(np.int64), wins, totals


def test_backend_selected():
    assert kernels.BACKEND in kernels.BACKENDS
    assert "python" in kernels.BACKENDS


@pytest.mark.parametrize("backend", BACKENDS)
class TestProjection:
    def test_matches_qp_oracle(self, backend):
        rng = np.random.default_rng(1)
        proj = kernels.BACKENDS[backend].project_sum_zero_box
        for _ in range(20):
            dim = int(rng.integers(2, 8))
            v = rng.normal(0, 2, dim)
            R = float(rng.uniform(0.1, 2))
            np.testing.assert_allclose(proj(v, R), projection_oracle(v, R), atol=1e-6)

    def test_feasible_point_fixed(self, backend):
        v = np.array([0.3, -0.5, 0.2])
        np.testing.assert_allclose(kernels.BACKENDS[backend].project_sum_zero_box(v, 1.0), v, atol=1e-14)

    @given(st.lists(st.floats(-50, 50), min_size=2, max_size=12), st.floats(0.01, 5.0))
    def test_feasible_and_idempotent(self, backend, vals, R):
        proj = kernels.BACKENDS[backend].project_sum_zero_box
        x = proj(np.array(vals), R)
        assert abs(x.sum()) <= 1e-9 * max(1.0, R * len(vals))
        assert np.all(np.abs(x) <= R + 1e-12)
        np.testing.assert_allclose(proj(x, R), x, atol=1e-9)


@given(st.lists(st.floats(-50, 50), min_size=2, max_size=12), st.floats(0.01, 5.0))
def test_projection_backends_agree(vals, R):
    outs = [kernels.BACKENDS[b].project_sum_zero_box(np.array(vals), R) for b in BACKENDS]
    for o in outs[1:]:
        np.testing.assert_allclose(o, outs[0], atol=1e-12)


@pytest.mark.parametrize("backend", BACKENDS)
def test_mle_monotone_ascent(backend):
    i0, i1, wins, totals = comparisons(4, 6, 400)
    _, iters, gnorm, trace = kernels.BACKENDS[backend].mle_pga(i0, i1, wins, totals, 6, 1.0, 4.0 / 2.0,
                                                               5000, 1e-10, True)
    diffs = np.diff(trace)
    assert np.all(diffs >= -1e-12)
    assert gnorm < 1e-10


def test_mle_backends_agree():
    i0, i1, wins, totals = comparisons(5, 5, 300)
    outs = [kernels.BACKENDS[b].mle_pga(i0, i1, wins, totals, 5, 1.0, 1.0, 3000, 1e-9, False) for b in BACKENDS]
    for f, it, _, _ in outs[1:]:
        np.testing.assert_allclose(f, outs[0][0], atol=1e-10)
        assert abs(it - outs[0][1]) <= 1


@pytest.mark.parametrize("backend", BACKENDS)
def test_box_qp_matches_oracle(backend):
    rng = np.random.default_rng(9)
    for _ in range(10):
        dim = int(rng.integers(2, 6))
        M = rng.normal(size=(dim, dim))
        sigma = M @ M.T / dim
        w = rng.normal(size=dim)
        c = kernels.project_sum_zero_box(rng.normal(size=dim), 1.0)
        lam = float(rng.uniform(0.1, 5))
        L = 2 * lam * float(np.linalg.eigvalsh(sigma)[-1])
        x, _, gnorm = kernels.BACKENDS[backend].box_qp(w, c, sigma, lam, 1.0, c, L, 100000, 1e-10)
        ref = box_qp_oracle(w, c, sigma, lam, 1.0)

        def obj(z):
            return w @ z + lam * (z - c) @ sigma @ (z - c)

        assert obj(x) <= obj(ref) + 1e-6
        assert gnorm < 1e-8


def test_env_forces_python_backend():
    import os
    import subprocess
    import sys

    env = dict(os.environ, HFBANDIT_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from hfbandit import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
