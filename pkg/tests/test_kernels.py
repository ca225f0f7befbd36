import subprocess
import sys

import numpy as np
import pytest
from scipy.interpolate import BSpline

from gsrecon import kernels
from gsrecon.basis import SplineBasis

BASIS = SplineBasis(end_constraint=True)


def test_bspline_batch_matches_scipy():
    xs = np.linspace(0.0, 1.0, 257)
    ours = kernels.bspline_batch(BASIS.knots, BASIS.degree, BASIS.m, xs)
    ref = BSpline.design_matrix(xs, BASIS.knots, BASIS.degree).toarray()
    np.testing.assert_allclose(ours, ref, atol=1e-13)


def test_bspline_batch_clamps():
    inside = kernels.bspline_batch(BASIS.knots, BASIS.degree, BASIS.m,
                                   np.array([0.0, 1.0]))
    outside = kernels.bspline_batch(BASIS.knots, BASIS.degree, BASIS.m,
                                    np.array([-3.0, 7.0]))
    np.testing.assert_allclose(outside, inside, atol=1e-14)


def test_active_kernel_matches_fallback(small_mesh):
    from gsrecon.forward import SourceQuadrature
    squad = SourceQuadrature(small_mesh)
    rng = np.random.default_rng(11)
    psibar = rng.uniform(0.0, 1.5, len(squad.qp_w))
    active = kernels.assemble_source_matrix_kernel(
        squad.qp_nodes, squad.qp_bary, squad.qp_w, squad.qp_r, psibar,
        BASIS.knots, BASIS.degree, BASIS.m, 2.5, small_mesh.n_nodes)
    fallback = np.zeros_like(active)
    kernels._assemble_y_numpy(
        np.ascontiguousarray(squad.qp_nodes, dtype=np.int64), squad.qp_bary,
        squad.qp_w, squad.qp_r, psibar, BASIS.knots, BASIS.degree, BASIS.m,
        2.5, fallback)
    np.testing.assert_allclose(active, fallback, rtol=1e-12,
                               atol=1e-14 * np.abs(fallback).max())


def test_source_kernel_ignores_vacuum_points(small_mesh):
    from gsrecon.forward import SourceQuadrature
    squad = SourceQuadrature(small_mesh)
    psibar = np.full(len(squad.qp_w), 2.0)
    psibar[0] = 0.5
    Y = kernels.assemble_source_matrix_kernel(
        squad.qp_nodes, squad.qp_bary, squad.qp_w, squad.qp_r, psibar,
        BASIS.knots, BASIS.degree, BASIS.m, 2.5, small_mesh.n_nodes)
    touched = np.nonzero(np.abs(Y).sum(axis=1))[0]
    assert set(touched) <= set(squad.qp_nodes[0])


def test_fallback_env_flag_disables_numba():
    code = (
        "import os; os.environ['GSRECON_NO_NUMBA'] = '1';\n"
        "from gsrecon import kernels\n"
        "assert not kernels.NUMBA_ENABLED\n"
        "import numpy as np\n"
        "from gsrecon.basis import SplineBasis\n"
        "b = SplineBasis(end_constraint=True)\n"
        "v = kernels.bspline_batch(b.knots, b.degree, b.m,"
        " np.array([0.3, 0.7]))\n"
        "np.testing.assert_allclose(v.sum(axis=1), 1.0, atol=1e-12)\n"
    )
    subprocess.run([sys.executable, "-c", code], check=True)
