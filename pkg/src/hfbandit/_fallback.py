"""Pure numpy versions of the compiled kernels in ``_core.pyx``.

Both backends implement the same iterations step for step so their outputs
agree to rounding error.
"""
from __future__ import annotations

import numpy as np

PROJ_BISECT_ITERS = 100


def _clip_sum(v: np.ndarray, theta: float, R: float) -> float:
    return float(np.clip(v - theta, -R, R).sum())


def project_sum_zero_box(v, R: float) -> np.ndarray:
    """Euclidean projection onto {x : sum(x) = 0, |x_i| <= R}."""
    v = np.asarray(v, dtype=float)
    lo, hi = float(v.min()) - R, float(v.max()) + R
    for _ in range(PROJ_BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        if _clip_sum(v, mid, R) > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 0.0:
            break
    theta = 0.5 * (lo + hi)
    shifted = v - theta
    free = np.abs(shifted) < R
    n_free = int(free.sum())
    if n_free:
        n_up = int((shifted >= R).sum())
        n_low = int((shifted <= -R).sum())
        cand = (float(v[free].sum()) + R * (n_up - n_low)) / n_free
        if abs(_clip_sum(v, cand, R)) <= abs(_clip_sum(v, theta, R)):
            theta = cand
    return np.clip(v - theta, -R, R)


def _mean_loglik(f, i0, i1, wins, totals, n):
    d = f[i1] - f[i0]
    # log sigmoid(d) = -logaddexp(0, -d)
    return float(-(wins * np.logaddexp(0.0, -d) + (totals - wins) * np.logaddexp(0.0, d)).sum() / n)


def _mle_grad(f, i0, i1, wins, totals, n, dim):
    d = f[i1] - f[i0]
    p = 0.5 * (1.0 + np.tanh(0.5 * d))
    g = (wins - totals * p) / n
    grad = np.zeros(dim)
    np.add.at(grad, i1, g)
    np.add.at(grad, i0, -g)
    return grad


def mle_pga(i0, i1, wins, totals, dim: int, R: float, step: float, max_iters: int,
            tol: float, record: bool = False):
    """Projected gradient ascent on the mean BTL log-likelihood.

    Works on comparison counts aggregated by ordered pair ``(i0, i1)`` of flat
    indices; ``wins`` counts label-1 outcomes.  Returns ``(f, iters,
    grad_map_norm, trace)`` where ``trace`` lists the objective after every
    step when ``record`` is set.
    """
    i0 = np.asarray(i0, dtype=np.int64)
    i1 = np.asarray(i1, dtype=np.int64)
    wins = np.asarray(wins, dtype=float)
    totals = np.asarray(totals, dtype=float)
    n = float(totals.sum())
    f = np.zeros(dim)
    trace = [_mean_loglik(f, i0, i1, wins, totals, n)] if record else None
    gnorm = np.inf
    it = 0
    for it in range(1, max_iters + 1):
        grad = _mle_grad(f, i0, i1, wins, totals, n, dim)
        nxt = project_sum_zero_box(f + step * grad, R)
        gnorm = float(np.linalg.norm(nxt - f)) / step
        f = nxt
        if record:
            trace.append(_mean_loglik(f, i0, i1, wins, totals, n))
        if gnorm < tol:
            break
    return f, it, gnorm, trace


def box_qp(w, c, sigma, lam: float, R: float, x0, lipschitz: float, max_iters: int, tol: float):
    """FISTA with adaptive restart for

        min_x  w.x + lam (x - c)^T sigma (x - c)   s.t. sum(x) = 0, |x_i| <= R.

    Returns ``(x, iters, grad_map_norm)``.
    """
    w = np.asarray(w, dtype=float)
    c = np.asarray(c, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    L = max(lipschitz, 1e-300)
    x = project_sum_zero_box(np.asarray(x0, dtype=float), R)
    y = x.copy()
    t = 1.0
    gnorm = np.inf
    it = 0
    for it in range(1, max_iters + 1):
        grad = w + 2.0 * lam * (sigma @ (y - c))
        nxt = project_sum_zero_box(y - grad / L, R)
        # gradient restart: drop momentum when it points uphill
        if np.dot(y - nxt, nxt - x) > 0.0:
            t = 1.0
            t_next = 1.0
        else:
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = nxt + ((t - 1.0) / t_next) * (nxt - x)
        x, t = nxt, t_next
        if it % 10 == 0 or it == max_iters:
            g = w + 2.0 * lam * (sigma @ (x - c))
            gnorm = float(np.linalg.norm(x - project_sum_zero_box(x - g / L, R))) * L
            if gnorm < tol:
                break
    return x, it, gnorm
