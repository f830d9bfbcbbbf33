"""Convex quadratic programs over the probability simplex.

Solves ``min 1/2 w^T H w - c^T w  s.t.  sum(w) = 1, w >= 0`` with a primal
active-set method. The working set holds the bounds ``w_i = 0``; every
iterate stays feasible, so the objective never increases from the start
point.
"""
from __future__ import annotations

import numpy as np

from .exceptions import NumericalError


def project_to_simplex(v) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-based)."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, len(v) + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def simplex_objective(H, c, w) -> float:
    return float(0.5 * w @ H @ w - c @ w)


def _solve_free(H_ff: np.ndarray, c_f: np.ndarray) -> tuple[np.ndarray, float, bool]:
    """Minimize over the free block subject to sum(w_f) = 1.

    Returns (w_f, lam, bounded). ``bounded`` is False when H_ff is singular and
    the objective decreases without limit along a zero-curvature direction.
    """
    k = len(c_f)
    kkt = np.zeros((k + 1, k + 1))
    kkt[:k, :k] = H_ff
    kkt[:k, k] = 1.0
    kkt[k, :k] = 1.0
    rhs = np.concatenate([c_f, [1.0]])
    try:
        sol = np.linalg.solve(kkt, rhs)
        if not np.all(np.isfinite(sol)):
            raise np.linalg.LinAlgError
        return sol[:k], sol[k], True
    except np.linalg.LinAlgError:
        pass
    sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    resid = np.max(np.abs(kkt @ sol - rhs))
    return sol[:k], sol[k], resid <= 1e-10 * max(1.0, np.max(np.abs(rhs)))


def _zero_curvature_descent(H_ff: np.ndarray, g_f: np.ndarray) -> np.ndarray:
    """Steepest descent direction within null(H_ff) and sum(d) = 0."""
    k = len(g_f)
    A = np.vstack([H_ff, np.ones((1, k))])
    _, sv, vt = np.linalg.svd(A)
    rank = int(np.sum(sv > 1e-12 * max(1.0, sv[0])))
    Z = vt[rank:].T
    return -Z @ (Z.T @ g_f)


def solve_simplex_qp(H, c, w0=None, tol: float = 1e-12, max_iter: int | None = None) -> np.ndarray:
    H = np.asarray(H, dtype=float)
    c = np.asarray(c, dtype=float).reshape(-1)
    n = len(c)
    if H.shape != (n, n):
        raise ValueError("H and c dimensions differ")
    if n == 1:
        return np.ones(1)
    H = 0.5 * (H + H.T)
    scale = max(np.max(np.abs(H)), np.max(np.abs(c)), 1.0)
    H_s, c_s = H / scale, c / scale

    if w0 is None:
        w = np.full(n, 1.0 / n)
    else:
        w = np.asarray(w0, dtype=float).reshape(-1)
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            w = project_to_simplex(w)
        else:
            w = w / w.sum()
    active = w <= 0.0
    w[active] = 0.0
    if active.all():
        w = np.full(n, 1.0 / n)
        active[:] = False

    max_iter = max_iter or 50 * n + 50
    for _ in range(max_iter):
        free = ~active
        idx = np.nonzero(free)[0]
        H_ff = H_s[np.ix_(idx, idx)]
        w_f, lam, bounded = _solve_free(H_ff, c_s[idx])
        step = np.zeros(n)
        if bounded:
            step[idx] = w_f - w[idx]
        else:
            # move along the descent ray until a bound blocks it
            step[idx] = _zero_curvature_descent(H_ff, (H_s @ w - c_s)[idx])
            step *= 1.0 / max(np.max(np.abs(step)), 1e-300)
        if bounded and np.max(np.abs(step)) <= 1e-14:
            grad = H_s @ w - c_s
            mult = grad + lam
            mult[free] = np.inf
            j = int(np.argmin(mult))
            if mult[j] >= -tol:
                break
            active[j] = False
            continue
        # ratio test against the bounds of the free variables
        t = 1.0 if bounded else np.inf
        blocking = -1
        for i in idx:
            if step[i] < 0.0:
                ti = -w[i] / step[i]
                if ti < t:
                    t, blocking = ti, i
        if not np.isfinite(t):
            raise NumericalError("unbounded simplex QP step")
        w = w + t * step
        if blocking >= 0:
            w[blocking] = 0.0
            active[blocking] = True
    else:
        raise NumericalError("simplex QP did not converge")

    w = np.where(w < 0.0, 0.0, w)
    return w / w.sum()


def projected_gradient_norm(H, c, w, tol: float = 1e-12) -> float:
    """Norm of the objective gradient projected on the feasible directions at w.

    Zero exactly at a KKT point of the simplex QP.
    """
    H = np.asarray(H, dtype=float)
    w = np.asarray(w, dtype=float)
    g = H @ w - np.asarray(c, dtype=float)
    free = w > tol
    lam = -np.mean(g[free])
    r = g + lam
    # on active bounds only negative components (descent into the interior) count
    r_active = np.minimum(r[~free], 0.0)
    return float(np.sqrt(np.sum(r[free] ** 2) + np.sum(r_active ** 2)))
