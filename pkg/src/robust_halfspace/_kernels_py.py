"""Pure NumPy versions of the compiled kernels in ``_kernels.pyx``."""
import math

import numpy as np


def _project_ball(z, c, r):
    diff = z - c
    n2 = diff @ diff
    if n2 <= r * r:
        return z.copy()
    return c + (r / math.sqrt(n2)) * diff


def project_two_balls(z, u, r, tol=1e-10, max_iter=100000):
    z = np.asarray(z, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    zero = np.zeros_like(z)
    in_a = (z - u) @ (z - u) <= r * r
    in_b = z @ z <= 1.0
    if in_a and in_b:
        return z.copy()
    pb = _project_ball(z, zero, 1.0)
    if (pb - u) @ (pb - u) <= r * r * (1.0 + 1e-15):
        return pb
    pa = _project_ball(z, u, r)
    if pa @ pa <= 1.0 + 1e-15:
        return pa
    x = z.copy()
    p = np.zeros_like(z)
    q = np.zeros_like(z)
    for _ in range(max_iter):
        y = _project_ball(x + p, u, r)
        p = x + p - y
        x_new = _project_ball(y + q, zero, 1.0)
        q = y + q - x_new
        change = (x_new - x) @ (x_new - x)
        x = x_new
        if change <= tol * tol and (x - u) @ (x - u) <= r * r * (1.0 + 1e-9):
            break
    return x


def hinge_objective_grad(X, y, p, tau, w):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    marg = y * (X @ w) / tau
    active = marg < 1.0
    obj = float(np.sum(p[active] * (1.0 - marg[active])))
    grad = -((p[active] * y[active]) @ X[active]) / tau
    if not active.any():
        grad = np.zeros(X.shape[1])
    return obj, grad


def hinge_descent(X, y, p, tau, u, r, w_start, step_scale, max_iter, tol,
                  check_every=250, min_iter=1000, dykstra_tol=1e-10):
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    w = np.array(w_start, dtype=np.float64)
    best_w = w.copy()
    best = math.inf
    hist = np.empty(max_iter + 1)
    certified = False
    t = 0
    for t in range(1, max_iter + 1):
        obj, grad = hinge_objective_grad(X, y, p, tau, w)
        if obj < best:
            best = obj
            best_w = w.copy()
        hist[t] = best
        if best <= tol:
            certified = True
            break
        if not grad.any():
            certified = True
            break
        if t >= min_iter and t % check_every == 0:
            if hist[int(math.floor(0.75 * t))] - best <= 0.25 * tol:
                certified = True
                break
        w = project_two_balls(w - (step_scale / math.sqrt(t)) * grad, u, r, dykstra_tol)
    return best_w, best, t, certified


def quad_ascent(M, u, r, starts, n_steps, step, dykstra_tol=1e-10):
    M = np.asarray(M, dtype=np.float64)
    W = np.array(starts, dtype=np.float64)
    vals = np.empty(W.shape[0])
    for s in range(W.shape[0]):
        w = W[s]
        prev = -1.0
        val = 0.0
        for it in range(n_steps + 1):
            mw = M @ w
            val = float(mw @ w)
            if it == n_steps or val - prev <= 1e-12 * max(val, 1e-300):
                break
            prev = val
            w = project_two_balls(w + 2.0 * step * mw, u, r, dykstra_tol)
        W[s] = w
        vals[s] = val
    return W, vals
