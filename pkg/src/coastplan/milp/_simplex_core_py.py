"""Pure-NumPy simplex hot-loop kernels.

Import-time fallback for the compiled extension. Every function here must be
arithmetically identical to its twin in ``_simplex_core.pyx`` (same float
operations, same tie-breaking) so that both builds pivot identically.
"""

import numpy as np

COMPILED = False


def price_dantzig(dj, eligible):
    """Index of the eligible column with the largest |reduced cost|.

    Ties resolve to the lowest index. Returns -1 when nothing is eligible.
    """
    if not eligible.any():
        return -1
    mag = np.where(eligible, np.abs(dj), -1.0)
    return int(np.argmax(mag))


def price_bland(eligible):
    """Lowest eligible index (Bland's rule); -1 when none."""
    idx = np.nonzero(eligible)[0]
    return int(idx[0]) if idx.size else -1


def ratio_test(dvec, x_basic, lb_basic, ub_basic, basis_vars, piv_tol):
    """Step limit for the move ``x_basic - t * dvec`` staying within bounds.

    Returns ``(t_limit, position)`` where position is -1 if no basic variable
    blocks. Ties on the limit resolve to the smallest entering *variable*
    index (Bland-compatible leaving rule).
    """
    m = dvec.shape[0]
    pos_mask = dvec > piv_tol
    neg_mask = dvec < -piv_tol
    limits = np.full(m, np.inf)
    limits[pos_mask] = (x_basic[pos_mask] - lb_basic[pos_mask]) / dvec[pos_mask]
    limits[neg_mask] = (x_basic[neg_mask] - ub_basic[neg_mask]) / dvec[neg_mask]
    np.maximum(limits, 0.0, out=limits)
    t = limits.min() if m else np.inf
    if not np.isfinite(t):
        return np.inf, -1
    ties = np.nonzero(limits == t)[0]
    pos = int(ties[np.argmin(basis_vars[ties])])
    return float(t), pos


def update_inverse(binv, w, r):
    """Product-form basis-inverse update after pivoting row ``r`` on ``w``."""
    piv = w[r]
    binv[r, :] /= piv
    wcol = w.copy()
    wcol[r] = 0.0
    binv -= np.outer(wcol, binv[r, :])
