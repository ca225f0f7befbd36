"""Derived physics quantities: flux-surface contours and averages, mean
current density, diamagnetic-function integration and the safety factor."""

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DegeneratePlasmaError, NonPhysicalProfileError, OpenContourError
from .mesh import _point_in_polygon


@dataclass
class FluxContour:
    level: float
    points: np.ndarray      # (P+1, 2), closed: first point repeated last
    seg_mid: np.ndarray     # (P, 2)
    seg_len: np.ndarray     # (P,)
    bp: np.ndarray          # (P,) poloidal field |grad psi|/r per segment

    @property
    def length(self):
        return float(self.seg_len.sum())


def extract_contour(mesh, psibar, level, axis, psi=None, scale=None):
    """Closed level-set polyline of the normalized flux enclosing the axis.

    B_p along the contour needs the physical flux gradient: pass either the
    nodal ``psi`` or the factor ``scale`` = psi_b - psi_a multiplying the
    normalized-flux gradient.
    """
    if not (0 < level < 1):
        raise ValueError("contour level must lie strictly inside (0, 1)")
    psibar = np.asarray(psibar, dtype=np.float64)
    v = psibar[mesh.triangles] - level
    if np.any(np.abs(v) < 1e-14):
        level = level + 1e-11
        v = psibar[mesh.triangles] - level

    neg = v < 0
    crossing = neg.sum(axis=1) % 3 != 0      # exactly 1 or 2 vertices below
    tri_ids = np.nonzero(crossing)[0]
    if len(tri_ids) == 0:
        raise OpenContourError(f"no crossings for level {level:g}")

    edge_pts = {}
    segments = []
    for t in tri_ids:
        tri = mesh.triangles[t]
        keys = []
        for a, b in ((0, 1), (1, 2), (2, 0)):
            if neg[t, a] != neg[t, b]:
                na, nb = int(tri[a]), int(tri[b])
                key = (na, nb) if na < nb else (nb, na)
                if key not in edge_pts:
                    s = v[t, a] / (v[t, a] - v[t, b])
                    edge_pts[key] = mesh.nodes[tri[a]] + s * (
                        mesh.nodes[tri[b]] - mesh.nodes[tri[a]])
                keys.append(key)
        if len(keys) == 2:
            segments.append((keys[0], keys[1], int(t)))

    adj = {}
    for si, (ka, kb, _) in enumerate(segments):
        adj.setdefault(ka, []).append(si)
        adj.setdefault(kb, []).append(si)

    used = [False] * len(segments)
    loops = []
    for start in range(len(segments)):
        if used[start]:
            continue
        chain_keys = [segments[start][0], segments[start][1]]
        chain_tris = [segments[start][2]]
        used[start] = True
        closed = False
        while True:
            tail = chain_keys[-1]
            nxt = [s for s in adj.get(tail, []) if not used[s]]
            if not nxt:
                break
            si = nxt[0]
            ka, kb, tt = segments[si]
            used[si] = True
            chain_keys.append(kb if ka == tail else ka)
            chain_tris.append(tt)
            if chain_keys[-1] == chain_keys[0]:
                closed = True
                break
        if closed:
            loops.append((chain_keys[:-1], chain_tris))

    axis_pt = np.asarray(axis, dtype=np.float64)
    chosen = None
    for keys, tris in loops:
        poly = np.array([edge_pts[k] for k in keys])
        if _point_in_polygon(axis_pt, poly):
            chosen = (poly, tris)
            break
    if chosen is None:
        raise OpenContourError(
            f"level {level:g} has no closed contour around the axis")

    poly, tris = chosen
    pts = np.vstack([poly, poly[:1]])
    d = np.diff(pts, axis=0)
    seg_len = np.hypot(d[:, 0], d[:, 1])
    seg_mid = 0.5 * (pts[:-1] + pts[1:])

    grads = mesh.grads()
    if psi is not None:
        field = np.asarray(psi, dtype=np.float64)
        factor = 1.0
    elif scale is not None:
        field = psibar
        factor = abs(scale)
    else:
        raise ValueError("pass psi or scale for the poloidal field")
    # segment i joins crossing points of consecutive segments; its interior
    # lies in the triangle shared by the two edges, recorded during chaining
    bp = np.empty(len(seg_len))
    for i, t in enumerate(tris):
        gvec = grads[t] @ field[mesh.triangles[t]]
        bp[i] = factor * np.hypot(gvec[0], gvec[1]) / seg_mid[i, 0]
    # rotate: tris[i] is the triangle of the segment between keys[i]
    # and keys[i+1], which is seg index i of the closed polyline
    return FluxContour(level, pts, seg_mid, seg_len, bp)


def flux_surface_average(contour, quantity):
    """dl/B_p weighted contour average of a pointwise quantity.

    ``quantity`` is either a callable of (r, z) or an array of per-segment
    values at the segment midpoints.
    """
    if callable(quantity):
        vals = np.array([quantity(r, z) for r, z in contour.seg_mid])
    else:
        vals = np.asarray(quantity, dtype=np.float64)
    wd = contour.seg_len / contour.bp
    denom = wd.sum()
    if denom <= 0 or not np.isfinite(denom):
        raise DegeneratePlasmaError("degenerate flux surface (vanishing dl/Bp)")
    return float((wd * vals).sum() / denom)


def integrate_f(b_vals, lam, psi_a, psi_b, b0, r0, mu0, grid):
    """Diamagnetic function on the normalized-flux grid.

    (f^2)' = 2 lambda mu0 r0 B as a function of flux; integration runs from
    the plasma boundary (where f = b0*r0 exactly) inward.
    """
    grid = np.asarray(grid, dtype=np.float64)
    b_vals = np.asarray(b_vals, dtype=np.float64)
    dpsi = psi_b - psi_a
    integrand = 2.0 * lam * mu0 * r0 * b_vals * dpsi
    # cumulative trapezoid of integrand over s from 1 down to each grid point
    rev = np.concatenate([[0.0], np.cumsum(
        0.5 * (integrand[::-1][1:] + integrand[::-1][:-1])
        * np.diff(grid[::-1]))])
    f2 = (b0 * r0) ** 2 + rev[::-1]
    f2[-1] = (b0 * r0) ** 2
    if np.any(f2 < 0):
        raise NonPhysicalProfileError("f^2 became negative")
    sign = -1.0 if b0 * r0 < 0 else 1.0
    f = sign * np.sqrt(f2)
    f[-1] = b0 * r0
    return f


def mean_current_density(lam, a_vals, b_vals, inv_r2, r0):
    """r0 <j/r> = lambda A + lambda r0^2 <1/r^2> B per flux level."""
    return lam * np.asarray(a_vals) + lam * r0 ** 2 * np.asarray(inv_r2) \
        * np.asarray(b_vals)


def safety_factor(contours, f_vals):
    """q = (1/2pi) closed integral of f/(r^2 B_p) dl per flux surface."""
    q = np.full(len(contours), np.nan)
    for i, c in enumerate(contours):
        if c is None:
            continue
        geom = float((c.seg_len / (c.seg_mid[:, 0] ** 2 * c.bp)).sum())
        q[i] = f_vals[i] * geom / (2.0 * np.pi)
    return q


def _fill_ends(grid, vals, valid):
    """Linear extrapolation of missing end entries from the two nearest
    computed levels; interior gaps are interpolated."""
    out = np.array(vals, dtype=np.float64)
    good = np.nonzero(valid)[0]
    if len(good) < 2:
        return out
    out[~valid] = np.interp(grid[~valid], grid[good], out[good])
    lo, hi = good[0], good[-1]
    if lo > 0:
        s = (out[good[1]] - out[lo]) / (grid[good[1]] - grid[lo])
        out[:lo] = out[lo] + s * (grid[:lo] - grid[lo])
    if hi < len(grid) - 1:
        s = (out[hi] - out[good[-2]]) / (grid[hi] - grid[good[-2]])
        out[hi + 1:] = out[hi] + s * (grid[hi + 1:] - grid[hi])
    return out


def profile_table(mesh, psi, domain, profiles, lam, machine, n_grid=101,
                  margin=0.02):
    """Uniform psibar table of the identified and derived profiles.

    Levels outside [margin, 1-margin] are linearly extrapolated (degenerate
    axis contour, X-point singularity).  Returns a dict of equal-length
    arrays; entries are NaN where no closed contour exists.
    """
    grid = np.linspace(0.0, 1.0, n_grid)
    psibar = domain.normalize(psi)
    inv_r2 = np.full(n_grid, np.nan)
    qgeom = np.full(n_grid, np.nan)
    valid = np.zeros(n_grid, dtype=bool)
    for i, lev in enumerate(grid):
        if not (margin <= lev <= 1.0 - margin):
            continue
        try:
            c = extract_contour(mesh, psibar, lev, domain.axis, psi=psi)
        except OpenContourError:
            continue
        inv_r2[i] = flux_surface_average(c, lambda r, z: 1.0 / r ** 2)
        qgeom[i] = float((c.seg_len / (c.seg_mid[:, 0] ** 2 * c.bp)).sum())
        valid[i] = True
    inv_r2 = _fill_ends(grid, inv_r2, valid)
    qgeom = _fill_ends(grid, qgeom, valid)

    a_vals = profiles.eval("A", grid)
    b_vals = profiles.eval("B", grid)
    f_vals = integrate_f(b_vals, lam, domain.psi_a, domain.psi_b,
                         machine.b0, machine.r0, machine.mu0, grid)
    table = {
        "psibar": grid,
        "lambdaA": lam * a_vals,
        "lambdaB_weighted": lam * machine.r0 ** 2 * inv_r2 * b_vals,
        "j_mean": mean_current_density(lam, a_vals, b_vals, inv_r2,
                                       machine.r0),
        "q": f_vals * qgeom / (2.0 * np.pi),
        "f": f_vals,
    }
    if profiles.c is not None:
        table["ne"] = profiles.eval("ne", grid)
    else:
        table["ne"] = np.full(n_grid, np.nan)
    return table


def write_profile_csv(path, table):
    cols = ["psibar", "lambdaA", "lambdaB_weighted", "j_mean", "q", "f", "ne"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for i in range(len(table["psibar"])):
            row = []
            for c in cols:
                v = table[c][i]
                row.append("" if not np.isfinite(v) else repr(float(v)))
            writer.writerow(row)
