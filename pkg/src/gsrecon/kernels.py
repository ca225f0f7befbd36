"""Hot numeric kernels with a numba fast path and a numpy/scipy fallback.

The fast path is compiled with ``numba.njit`` at import time.  Setting the
environment variable ``GSRECON_NO_NUMBA=1`` (or running without numba
installed) selects the pure numpy/scipy implementations instead.  Both paths
produce the same values up to floating-point summation order; the benchmark
in ``benchmarks/bench_kernels.py`` compares their throughput.
"""

import os

import numpy as np

_DISABLED = os.environ.get("GSRECON_NO_NUMBA", "0") not in ("", "0")

if not _DISABLED:
    try:
        import numba
    except ImportError:  # pragma: no cover
        numba = None
else:
    numba = None

NUMBA_ENABLED = numba is not None


# ---------------------------------------------------------------------------
# B-spline evaluation (Cox-de Boor), all basis functions at many points
# ---------------------------------------------------------------------------

def _find_span(knots, degree, nbasis, x):
    # clamped open knot vector: valid spans are [degree, nbasis-1]
    if x >= knots[nbasis]:
        return nbasis - 1
    if x <= knots[degree]:
        return degree
    lo = degree
    hi = nbasis
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if x < knots[mid]:
            hi = mid
        else:
            lo = mid
    return lo


def _bspline_batch_impl(knots, degree, nbasis, xs, out):
    left = np.empty(degree + 1)
    right = np.empty(degree + 1)
    vals = np.empty(degree + 1)
    for p in range(xs.shape[0]):
        x = xs[p]
        if x < 0.0:
            x = 0.0
        elif x > 1.0:
            x = 1.0
        span = _find_span(knots, degree, nbasis, x)
        vals[0] = 1.0
        for j in range(1, degree + 1):
            left[j] = x - knots[span + 1 - j]
            right[j] = knots[span + j] - x
            saved = 0.0
            for r in range(j):
                temp = vals[r] / (right[r + 1] + left[j - r])
                vals[r] = saved + right[r + 1] * temp
                saved = left[j - r] * temp
            vals[j] = saved
        for j in range(degree + 1):
            out[p, span - degree + j] = vals[j]


def _assemble_y_impl(qp_nodes, qp_bary, qp_w, qp_r, qp_psibar,
                     knots, degree, nbasis, r0, out_y):
    phi = np.empty(nbasis)
    left = np.empty(degree + 1)
    right = np.empty(degree + 1)
    vals = np.empty(degree + 1)
    for q in range(qp_psibar.shape[0]):
        pb = qp_psibar[q]
        if pb > 1.0:
            continue
        x = pb if pb > 0.0 else 0.0
        span = _find_span(knots, degree, nbasis, x)
        vals[0] = 1.0
        for j in range(1, degree + 1):
            left[j] = x - knots[span + 1 - j]
            right[j] = knots[span + j] - x
            saved = 0.0
            for r in range(j):
                temp = vals[r] / (right[r + 1] + left[j - r])
                vals[r] = saved + right[r + 1] * temp
                saved = left[j - r] * temp
            vals[j] = saved
        for j in range(nbasis):
            phi[j] = 0.0
        for j in range(degree + 1):
            phi[span - degree + j] = vals[j]
        ca = qp_w[q] * qp_r[q] / r0
        cb = qp_w[q] * r0 / qp_r[q]
        for a in range(3):
            node = qp_nodes[q, a]
            ba = qp_bary[q, a]
            for j in range(nbasis):
                out_y[node, j] += ba * ca * phi[j]
                out_y[node, nbasis + j] += ba * cb * phi[j]


if NUMBA_ENABLED:
    _find_span = numba.njit(cache=True)(_find_span)
    _bspline_batch_numba = numba.njit(cache=True)(_bspline_batch_impl)
    _assemble_y_numba = numba.njit(cache=True)(_assemble_y_impl)


def _bspline_batch_numpy(knots, degree, nbasis, xs, out):
    from scipy.interpolate import BSpline

    xc = np.clip(xs, 0.0, 1.0)
    dm = BSpline.design_matrix(xc, knots, degree)
    out[:] = dm.toarray()


def bspline_batch(knots, degree, nbasis, xs):
    """Values of all basis functions at each point of ``xs`` (clamped to [0,1]).

    Returns an array of shape ``(len(xs), nbasis)``.
    """
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    out = np.zeros((xs.shape[0], nbasis))
    if NUMBA_ENABLED:
        _bspline_batch_numba(knots, degree, nbasis, xs, out)
    else:
        _bspline_batch_numpy(knots, degree, nbasis, xs, out)
    return out


def _assemble_y_numpy(qp_nodes, qp_bary, qp_w, qp_r, qp_psibar,
                      knots, degree, nbasis, r0, out_y):
    inside = qp_psibar <= 1.0
    if not np.any(inside):
        return
    nodes = qp_nodes[inside]
    bary = qp_bary[inside]
    w = qp_w[inside]
    r = qp_r[inside]
    phi = bspline_batch(knots, degree, nbasis, qp_psibar[inside])
    ca = (w * r / r0)[:, None] * phi           # (Q, m)
    cb = (w * r0 / r)[:, None] * phi
    for a in range(3):
        np.add.at(out_y, (nodes[:, a], slice(0, nbasis)),
                  bary[:, a][:, None] * ca)
        np.add.at(out_y, (nodes[:, a], slice(nbasis, 2 * nbasis)),
                  bary[:, a][:, None] * cb)


def assemble_source_matrix_kernel(qp_nodes, qp_bary, qp_w, qp_r, qp_psibar,
                                  knots, degree, nbasis, r0, n_nodes):
    """Unscaled source matrix: row i, column j holds the quadrature sum of
    (r/r0) phi_j(psibar) v_i over the plasma region (and (r0/r) for the
    second block of columns).  The caller applies the current scale."""
    out = np.zeros((n_nodes, 2 * nbasis))
    args = (np.ascontiguousarray(qp_nodes, dtype=np.int64),
            np.ascontiguousarray(qp_bary, dtype=np.float64),
            np.ascontiguousarray(qp_w, dtype=np.float64),
            np.ascontiguousarray(qp_r, dtype=np.float64),
            np.ascontiguousarray(qp_psibar, dtype=np.float64),
            knots, degree, nbasis, r0, out)
    if NUMBA_ENABLED:
        _assemble_y_numba(*args)
    else:
        _assemble_y_numpy(*args)
    return out
