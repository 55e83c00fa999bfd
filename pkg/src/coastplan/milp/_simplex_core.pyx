# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled simplex hot-loop kernels.

Arithmetic twin of ``_simplex_core_py``: identical float operations and
tie-breaking so compiled and fallback builds pivot identically.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()

COMPILED = True


def price_dantzig(cnp.float64_t[::1] dj, cnp.uint8_t[::1] eligible):
    cdef Py_ssize_t n = dj.shape[0]
    cdef Py_ssize_t j, best = -1
    cdef double mag, best_mag = -1.0
    for j in range(n):
        if eligible[j]:
            mag = dj[j] if dj[j] >= 0 else -dj[j]
            if mag > best_mag:
                best_mag = mag
                best = j
    return best


def price_bland(cnp.uint8_t[::1] eligible):
    cdef Py_ssize_t n = eligible.shape[0]
    cdef Py_ssize_t j
    for j in range(n):
        if eligible[j]:
            return j
    return -1


def ratio_test(cnp.float64_t[::1] dvec, cnp.float64_t[::1] x_basic,
               cnp.float64_t[::1] lb_basic, cnp.float64_t[::1] ub_basic,
               cnp.int64_t[::1] basis_vars, double piv_tol):
    cdef Py_ssize_t m = dvec.shape[0]
    cdef Py_ssize_t i, pos = -1
    cdef double t = np.inf
    cdef double lim
    cdef long long best_var = 0
    for i in range(m):
        if dvec[i] > piv_tol:
            lim = (x_basic[i] - lb_basic[i]) / dvec[i]
        elif dvec[i] < -piv_tol:
            lim = (x_basic[i] - ub_basic[i]) / dvec[i]
        else:
            continue
        if lim < 0.0:
            lim = 0.0
        if lim < t or (lim == t and pos >= 0 and basis_vars[i] < best_var):
            t = lim
            pos = i
            best_var = basis_vars[i]
    if pos == -1:
        return np.inf, -1
    return t, pos


def update_inverse(cnp.float64_t[:, ::1] binv, cnp.float64_t[::1] w, Py_ssize_t r):
    cdef Py_ssize_t m = binv.shape[0]
    cdef Py_ssize_t i, j
    cdef double piv = w[r]
    cdef double wi
    for j in range(m):
        binv[r, j] /= piv
    for i in range(m):
        if i == r:
            continue
        wi = w[i]
        if wi != 0.0:
            for j in range(m):
                binv[i, j] -= wi * binv[r, j]
