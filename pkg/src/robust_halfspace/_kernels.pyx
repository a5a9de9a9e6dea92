# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops.

Every public function here has a NumPy twin in ``_kernels_py`` with the same
signature and semantics; ``robust_halfspace._backend`` picks one at import.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, floor

cnp.import_array()


cdef inline double _dot(const double* a, const double* b, Py_ssize_t d) noexcept nogil:
    cdef double s = 0.0
    cdef Py_ssize_t j
    for j in range(d):
        s += a[j] * b[j]
    return s


cdef inline double _dist2(const double* a, const double* b, Py_ssize_t d) noexcept nogil:
    cdef double s = 0.0, t
    cdef Py_ssize_t j
    for j in range(d):
        t = a[j] - b[j]
        s += t * t
    return s


cdef inline void _project_ball(const double* z, const double* c, double r,
                               double* out, Py_ssize_t d) noexcept nogil:
    # out may alias z
    cdef double n2 = _dist2(z, c, d)
    cdef double scale
    cdef Py_ssize_t j
    if n2 <= r * r:
        for j in range(d):
            out[j] = z[j]
        return
    scale = r / sqrt(n2)
    for j in range(d):
        out[j] = c[j] + scale * (z[j] - c[j])


cdef int _two_balls(const double* z, const double* u, double r, double tol,
                    int max_iter, double* out, double* work, Py_ssize_t d) noexcept nogil:
    """Projection onto B(u, r) ∩ B(0, 1). Returns Dykstra sweeps used (0 if exact)."""
    cdef double* zero = work
    cdef double* x = work + d
    cdef double* yv = work + 2 * d
    cdef double* p = work + 3 * d
    cdef double* q = work + 4 * d
    cdef double* tmp = work + 5 * d
    cdef Py_ssize_t j
    cdef int it
    cdef double change
    for j in range(d):
        zero[j] = 0.0
    cdef bint in_a = _dist2(z, u, d) <= r * r
    cdef bint in_b = _dot(z, z, d) <= 1.0
    if in_a and in_b:
        for j in range(d):
            out[j] = z[j]
        return 0
    _project_ball(z, zero, 1.0, tmp, d)
    if _dist2(tmp, u, d) <= r * r * (1.0 + 1e-15):
        for j in range(d):
            out[j] = tmp[j]
        return 0
    _project_ball(z, u, r, tmp, d)
    if _dot(tmp, tmp, d) <= 1.0 + 1e-15:
        for j in range(d):
            out[j] = tmp[j]
        return 0
    for j in range(d):
        x[j] = z[j]
        p[j] = 0.0
        q[j] = 0.0
    for it in range(1, max_iter + 1):
        for j in range(d):
            tmp[j] = x[j] + p[j]
        _project_ball(tmp, u, r, yv, d)
        for j in range(d):
            p[j] = tmp[j] - yv[j]
            tmp[j] = yv[j] + q[j]
        _project_ball(tmp, zero, 1.0, out, d)
        change = 0.0
        for j in range(d):
            q[j] = tmp[j] - out[j]
            change += (out[j] - x[j]) * (out[j] - x[j])
            x[j] = out[j]
        if change <= tol * tol and _dist2(x, u, d) <= r * r * (1.0 + 1e-9):
            return it
    return max_iter


def project_two_balls(z, u, double r, double tol=1e-10, int max_iter=100000):
    cdef cnp.ndarray[double, ndim=1, mode="c"] zz = np.ascontiguousarray(z, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] uu = np.ascontiguousarray(u, dtype=np.float64)
    cdef Py_ssize_t d = zz.shape[0]
    cdef cnp.ndarray[double, ndim=1, mode="c"] out = np.empty(d)
    cdef cnp.ndarray[double, ndim=1, mode="c"] work = np.empty(6 * d)
    _two_balls(&zz[0], &uu[0], r, tol, max_iter, &out[0], &work[0], d)
    return out


cdef double _hinge_grad(const double* X, const double* y, const double* p, double tau,
                        const double* w, Py_ssize_t m, Py_ssize_t d,
                        double* grad) noexcept nogil:
    cdef double obj = 0.0, marg, coef
    cdef Py_ssize_t i, j
    for j in range(d):
        grad[j] = 0.0
    for i in range(m):
        marg = y[i] * _dot(X + i * d, w, d) / tau
        if marg < 1.0:
            obj += p[i] * (1.0 - marg)
            coef = p[i] * y[i] / tau
            for j in range(d):
                grad[j] -= coef * X[i * d + j]
    return obj


def hinge_objective_grad(X, y, p, double tau, w):
    """p-weighted τ-hinge and one subgradient at ``w``."""
    cdef cnp.ndarray[double, ndim=2, mode="c"] XX = np.ascontiguousarray(X, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] yy = np.ascontiguousarray(y, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] pp = np.ascontiguousarray(p, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] ww = np.ascontiguousarray(w, dtype=np.float64)
    cdef Py_ssize_t m = XX.shape[0], d = XX.shape[1]
    cdef cnp.ndarray[double, ndim=1, mode="c"] grad = np.empty(d)
    cdef double obj = _hinge_grad(&XX[0, 0], &yy[0], &pp[0], tau, &ww[0], m, d, &grad[0])
    return obj, grad


def hinge_descent(X, y, p, double tau, u, double r, w_start, double step_scale,
                  int max_iter, double tol, int check_every=250, int min_iter=1000,
                  double dykstra_tol=1e-10):
    """Projected subgradient descent with step ``step_scale / sqrt(t)``.

    Returns ``(best_w, best_obj, iterations, certified)``.
    """
    cdef cnp.ndarray[double, ndim=2, mode="c"] XX = np.ascontiguousarray(X, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] yy = np.ascontiguousarray(y, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] pp = np.ascontiguousarray(p, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] uu = np.ascontiguousarray(u, dtype=np.float64)
    cdef Py_ssize_t m = XX.shape[0], d = XX.shape[1]
    cdef cnp.ndarray[double, ndim=1, mode="c"] w = np.array(w_start, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] best_w = w.copy()
    cdef cnp.ndarray[double, ndim=1, mode="c"] grad = np.empty(d)
    cdef cnp.ndarray[double, ndim=1, mode="c"] z = np.empty(d)
    cdef cnp.ndarray[double, ndim=1, mode="c"] work = np.empty(6 * d)
    cdef cnp.ndarray[double, ndim=1, mode="c"] hist = np.empty(max_iter + 1)
    cdef double best = 1e300, obj, step, gn
    cdef int t, ref
    cdef bint certified = False
    cdef Py_ssize_t j
    with nogil:
        t = 0
        for t in range(1, max_iter + 1):
            obj = _hinge_grad(&XX[0, 0], &yy[0], &pp[0], tau, &w[0], m, d, &grad[0])
            if obj < best:
                best = obj
                for j in range(d):
                    best_w[j] = w[j]
            hist[t] = best
            if best <= tol:
                certified = True
                break
            gn = _dot(&grad[0], &grad[0], d)
            if gn == 0.0:
                certified = True
                break
            if t >= min_iter and t % check_every == 0:
                ref = <int>floor(0.75 * t)
                if hist[ref] - best <= 0.25 * tol:
                    certified = True
                    break
            step = step_scale / sqrt(<double>t)
            for j in range(d):
                z[j] = w[j] - step * grad[j]
            _two_balls(&z[0], &uu[0], r, dykstra_tol, 100000, &w[0], &work[0], d)
    return best_w, best, t, bool(certified)


def quad_ascent(M, u, double r, starts, int n_steps, double step, double dykstra_tol=1e-10):
    """Projected gradient ascent of w'Mw over B(u, r) ∩ B(0, 1) from each row of ``starts``."""
    cdef cnp.ndarray[double, ndim=2, mode="c"] MM = np.ascontiguousarray(M, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] uu = np.ascontiguousarray(u, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] W = np.array(starts, dtype=np.float64, order="C")
    cdef Py_ssize_t k = W.shape[0], d = W.shape[1]
    cdef cnp.ndarray[double, ndim=1, mode="c"] vals = np.empty(k)
    cdef cnp.ndarray[double, ndim=1, mode="c"] mw = np.empty(d)
    cdef cnp.ndarray[double, ndim=1, mode="c"] z = np.empty(d)
    cdef cnp.ndarray[double, ndim=1, mode="c"] work = np.empty(6 * d)
    cdef Py_ssize_t s, i, j
    cdef int it
    cdef double val, prev
    with nogil:
        for s in range(k):
            prev = -1.0
            val = 0.0
            for it in range(n_steps + 1):
                for i in range(d):
                    mw[i] = _dot(&MM[i, 0], &W[s, 0], d)
                val = _dot(&mw[0], &W[s, 0], d)
                if it == n_steps or val - prev <= 1e-12 * (val if val > 1e-300 else 1e-300):
                    break
                prev = val
                for j in range(d):
                    z[j] = W[s, j] + 2.0 * step * mw[j]
                _two_balls(&z[0], &uu[0], r, dykstra_tol, 100000, &W[s, 0], &work[0], d)
            vals[s] = val
    return W, vals
