"""Timing comparison of the compiled kernels against the numpy/scipy
fallbacks.

Run directly:  python benchmarks/bench_kernels.py
The fallback path is the same code the package uses when the environment
variable GSRECON_NO_NUMBA=1 is set.
"""

import time

import numpy as np

from gsrecon import build_rect_mesh
from gsrecon.basis import SplineBasis
from gsrecon.forward import SourceQuadrature
from gsrecon import kernels


def timeit(fn, *args, repeat=5):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    print(f"numba enabled: {kernels.NUMBA_ENABLED}")
    mesh = build_rect_mesh(1.5, 3.5, -1.25, 1.25, 80, 80)
    squad = SourceQuadrature(mesh)
    basis = SplineBasis(end_constraint=True)
    rng = np.random.default_rng(0)
    xs = rng.uniform(0.0, 1.0, len(squad.qp_r))
    print(f"quadrature points: {len(xs)}")

    args = (basis.knots, basis.degree, basis.m, xs)

    def bspline_ref(*a):
        out = np.zeros((len(xs), basis.m))
        kernels._bspline_batch_numpy(*a, out)
        return out

    if kernels.NUMBA_ENABLED:
        kernels.bspline_batch(*args)  # trigger compilation before timing
    t_fast, out_fast = timeit(kernels.bspline_batch, *args)
    t_ref, out_ref = timeit(bspline_ref, *args)
    err = np.abs(out_fast - out_ref).max()
    print(f"bspline_batch     active {t_fast * 1e3:8.2f} ms   "
          f"fallback {t_ref * 1e3:8.2f} ms   speedup {t_ref / t_fast:6.2f}x  "
          f"max diff {err:.2e}")

    psibar = xs.copy()
    yargs = (np.ascontiguousarray(squad.qp_nodes, dtype=np.int64),
             squad.qp_bary, squad.qp_w, squad.qp_r, psibar,
             basis.knots, basis.degree, basis.m, 2.5)

    def assemble_fast(*a):
        out = np.zeros((mesh.n_nodes, 2 * basis.m))
        (kernels._assemble_y_numba if kernels.NUMBA_ENABLED
         else kernels._assemble_y_numpy)(*a, out)
        return out

    def assemble_ref(*a):
        out = np.zeros((mesh.n_nodes, 2 * basis.m))
        kernels._assemble_y_numpy(*a, out)
        return out

    if kernels.NUMBA_ENABLED:
        assemble_fast(*yargs)
    t_fast, out_fast = timeit(assemble_fast, *yargs)
    t_ref, out_ref = timeit(assemble_ref, *yargs)
    err = np.abs(out_fast - out_ref).max()
    print(f"assemble_source   active {t_fast * 1e3:8.2f} ms   "
          f"fallback {t_ref * 1e3:8.2f} ms   speedup {t_ref / t_fast:6.2f}x  "
          f"max diff {err:.2e}")


if __name__ == "__main__":
    main()
