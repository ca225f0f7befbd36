"""Twin-experiment orchestration: synthetic measurements, noise
replication statistics and L-curve selection of the regularization
parameter."""

import csv
from dataclasses import dataclass

import numpy as np

from .basis import ProfileExpansion
from .diagnostics import profile_table
from .errors import GsReconError
from .inverse import identify_ab, identify_ne, reconstruct
from .observation import (MeasurementSet, build_interferometry_matrix,
                          build_polarimetry_observer, default_weights,
                          perturb_measurements)

PROFILE_KEYS = ("lambdaA", "lambdaB_weighted", "j_mean", "q", "ne")


def synthesize_measurements(setup, eq, ne_coeffs=None):
    """Exact synthetic measurements from a converged reference equilibrium."""
    mesh = setup.mesh
    psibar = eq.domain.normalize(eq.psi)
    g_d = eq.psi[mesh.boundary]
    g_n = setup.c0 @ eq.psi
    n_c = len(setup.chord_geoms)
    if ne_coeffs is not None and n_c > 0:
        b_int = build_interferometry_matrix(setup.chord_geoms, setup.basis,
                                            psibar)
        gamma = b_int @ ne_coeffs
        ne_exp = ProfileExpansion(setup.basis, np.zeros(setup.basis.m),
                                  np.zeros(setup.basis.m), ne_coeffs)
        c1 = build_polarimetry_observer(setup.chord_geoms, ne_exp, psibar,
                                        mesh)
        alpha = c1 @ eq.psi
    else:
        gamma = np.zeros(n_c)
        alpha = np.zeros(n_c)
    return MeasurementSet(g_d, g_n, gamma, alpha, eq.machine.ip,
                          eq.machine.b0, gn_points=setup.gn_points)


def perturb(ms, rate=0.01, seed=0):
    """Measurement set with independent 1%-style Gaussian noise (zero mean,
    std = rate * |value|); deterministic under a fixed seed."""
    rng = np.random.default_rng(seed)
    return perturb_measurements(ms, rate, rng)


@dataclass
class ReplicateStats:
    eps: float
    grid: np.ndarray
    mean: dict
    median: dict
    std: dict
    n_requested: int
    n_converged: int
    n_failed: int
    seed: int


def replicate_stats(setup, ms_clean, reg, eps_values, n_replicates=50,
                    rate=0.01, seed=12345, use_internal=True, tol=1e-6,
                    max_iter=25, n_grid=101):
    """Reconstruction statistics over randomly perturbed measurement sets.

    Runs n_replicates reconstructions per regularization value; replicates
    that fail to converge are excluded from the statistics and counted.
    """
    results = []
    ss = np.random.SeedSequence(seed)
    child_seeds = ss.spawn(len(eps_values) * n_replicates)
    for ei, eps in enumerate(eps_values):
        cfg = type(reg)(eps=eps, eps_ne=reg.eps_ne,
                        alpha_scale=reg.alpha_scale)
        samples = {k: [] for k in PROFILE_KEYS}
        n_ok = 0
        n_fail = 0
        grid = None
        for rep in range(n_replicates):
            rng = np.random.default_rng(child_seeds[ei * n_replicates + rep])
            ms = perturb_measurements(ms_clean, rate, rng)
            try:
                res = reconstruct(setup, ms, cfg, use_internal=use_internal,
                                  tol=tol, max_iter=max_iter)
            except GsReconError:
                n_fail += 1
                continue
            if not res.converged:
                n_fail += 1
                continue
            try:
                table = profile_table(setup.mesh, res.psi, res.domain,
                                      res.profiles, res.lam, setup.machine,
                                      n_grid=n_grid)
            except GsReconError:
                n_fail += 1
                continue
            grid = table["psibar"]
            for k in PROFILE_KEYS:
                samples[k].append(table[k])
            n_ok += 1
        if n_ok == 0:
            raise GsReconError(
                f"all {n_replicates} replicates failed at eps={eps:g}")
        stats = ReplicateStats(
            eps, grid,
            {k: np.mean(samples[k], axis=0) for k in PROFILE_KEYS},
            {k: np.median(samples[k], axis=0) for k in PROFILE_KEYS},
            {k: np.std(samples[k], axis=0) for k in PROFILE_KEYS},
            n_replicates, n_ok, n_fail, seed)
        results.append(stats)
    return results


def write_stats_csv(path, stats):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["psibar"]
        for k in PROFILE_KEYS:
            header += [f"mean_{k}", f"median_{k}", f"std_{k}"]
        writer.writerow(header)
        for i in range(len(stats.grid)):
            row = [repr(float(stats.grid[i]))]
            for k in PROFILE_KEYS:
                for d in (stats.mean, stats.median, stats.std):
                    v = d[k][i]
                    row.append("" if not np.isfinite(v) else repr(float(v)))
            writer.writerow(row)


# ---------------------------------------------------------------------------
# L-curve
# ---------------------------------------------------------------------------

@dataclass
class LCurveResult:
    eps: np.ndarray
    x: np.ndarray            # log misfit
    y: np.ndarray            # log penalty
    corner_eps: float
    corner_index: int
    flat: bool               # corner location unreliable (near-vertical L)


def l_curve(solver, eps_grid, flat_span=0.3):
    """Parametric L-curve over a log-spaced grid of regularization values.

    ``solver(eps)`` must return (misfit, penalty).  The corner is the point
    of maximum curvature of (log misfit, log penalty) parametrized by
    log eps (Hansen's criterion).  The flat flag is raised when the misfit
    barely varies over the whole scan (log span below ``flat_span``): the
    curve is then a near-vertical line and its corner is uninformative.
    """
    eps_grid = np.asarray(eps_grid, dtype=np.float64)
    if len(eps_grid) < 3:
        raise ValueError("need at least 3 regularization values")
    pts = np.array([solver(e) for e in eps_grid])
    x = np.log(np.maximum(pts[:, 0], 1e-300))
    y = np.log(np.maximum(pts[:, 1], 1e-300))
    t = np.log(eps_grid)
    dx = np.gradient(x, t)
    dy = np.gradient(y, t)
    ddx = np.gradient(dx, t)
    ddy = np.gradient(dy, t)
    speed = dx ** 2 + dy ** 2
    denom = speed ** 1.5
    with np.errstate(divide="ignore", invalid="ignore"):
        kappa = (dx * ddy - dy * ddx) / denom
    kappa = np.where(np.isfinite(kappa), kappa, 0.0)
    # stagnant stretches (both arms locally flat) carry no corner
    # information and their near-0/0 curvature is numerically unstable
    kappa = np.where(speed > 1e-3 * speed.max(), kappa, 0.0)
    idx = int(np.argmax(kappa))
    flat = bool(x.max() - x.min() < flat_span)
    return LCurveResult(eps_grid, x, y, float(eps_grid[idx]), idx, flat)


def l_curve_ne(setup, ms, psibar_nodal, eps_grid, alpha_scale=1e19,
               weights=None):
    """L-curve of the density identification at a fixed flux iterate."""
    if weights is None:
        weights = default_weights(ms.ip, setup.mesh.boundary_length(),
                                  len(ms.g_n), len(ms.gamma),
                                  alpha=ms.alpha, gamma=ms.gamma)
    b_int = build_interferometry_matrix(setup.chord_geoms, setup.basis,
                                        psibar_nodal)

    def solver(eps):
        v = identify_ne(b_int, ms.gamma, weights.w_inter, eps, alpha_scale,
                        setup.lam_block)
        misfit = 0.5 * float(np.sum(
            (weights.w_inter * (b_int @ v - ms.gamma)) ** 2))
        v_hat = v / alpha_scale   # penalty acts on the adimensional dofs
        penalty = 0.5 * float(v_hat @ setup.lam_block @ v_hat)
        return misfit, penalty

    return l_curve(solver, eps_grid)


def l_curve_ab(setup, ms, E, f, eps_grid, weights=None):
    """L-curve of the A/B identification at a fixed observation state."""
    if weights is None:
        weights = default_weights(ms.ip, setup.mesh.boundary_length(),
                                  len(ms.g_n), len(ms.gamma),
                                  alpha=ms.alpha, gamma=ms.gamma)
    w_vec = np.full(E.shape[0], weights.w_mag)

    def solver(eps):
        u = identify_ab(E, f, w_vec, eps, setup.lam_full, setup.free_idx)
        misfit = 0.5 * float(np.sum((w_vec * (E @ u - f)) ** 2))
        penalty = 0.5 * float(u @ setup.lam_full @ u)
        return misfit, penalty

    return l_curve(solver, eps_grid)


def write_lcurve_csv(path, result):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["eps", "log_misfit", "log_penalty", "is_corner"])
        for i in range(len(result.eps)):
            writer.writerow([repr(float(result.eps[i])),
                             repr(float(result.x[i])),
                             repr(float(result.y[i])),
                             int(i == result.corner_index)])
