"""Measurement definitions and observation operators: boundary Neumann
rows, interferometry chord integrals and polarimetry rows, plus the
statistical weights of the misfit terms."""

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .errors import MeshParseError, StateError
from .fem import MU0
from .mesh import PointLocator


@dataclass
class MeasurementSet:
    g_d: np.ndarray          # Dirichlet flux per boundary node, Wb/rad
    g_n: np.ndarray          # (1/r) dpsi/dn at the points M_k, T
    gamma: np.ndarray        # interferometry chord integrals
    alpha: np.ndarray        # polarimetry chord integrals
    ip: float
    b0: float
    gn_points: np.ndarray = None   # (N, 2) locations of the M_k

    def __post_init__(self):
        self.g_d = np.asarray(self.g_d, dtype=np.float64)
        self.g_n = np.asarray(self.g_n, dtype=np.float64)
        self.gamma = np.asarray(self.gamma, dtype=np.float64)
        self.alpha = np.asarray(self.alpha, dtype=np.float64)
        if len(self.g_n) < 1:
            raise ValueError("at least one Neumann point is required")
        if len(self.gamma) != len(self.alpha):
            raise ValueError("gamma and alpha must have one entry per chord")
        for arr in (self.g_d, self.g_n, self.gamma, self.alpha):
            if not np.all(np.isfinite(arr)):
                raise ValueError("non-finite measurement value")


@dataclass
class Chord:
    p0: np.ndarray
    p1: np.ndarray
    qpoints: np.ndarray       # (Q, 2)
    weights: np.ndarray       # (Q,), sums to segment length
    normal: np.ndarray        # unit normal to the chord direction

    @property
    def length(self):
        return float(self.weights.sum())


def make_chord(p0, p1, step):
    """Composite-midpoint quadrature along the segment with spacing <= step."""
    p0 = np.asarray(p0, dtype=np.float64)
    p1 = np.asarray(p1, dtype=np.float64)
    length = float(np.linalg.norm(p1 - p0))
    if length == 0:
        raise ValueError("degenerate chord")
    nseg = max(1, int(np.ceil(length / step)))
    s = (np.arange(nseg) + 0.5) / nseg
    qpoints = p0 + s[:, None] * (p1 - p0)
    weights = np.full(nseg, length / nseg)
    direction = (p1 - p0) / length
    normal = np.array([-direction[1], direction[0]])
    return Chord(p0, p1, qpoints, weights, normal)


class ChordGeometry:
    """Chord quadrature pinned to the mesh: triangle, barycentric weights
    and radius per quadrature point.  Points outside the domain are dropped
    from the quadrature (zero contribution)."""

    def __init__(self, mesh, chord, locator=None):
        self.chord = chord
        if locator is None:
            locator = PointLocator(mesh)
        tri = []
        bary = []
        keep = []
        for k, p in enumerate(chord.qpoints):
            hit = locator.try_locate(p)
            if hit is None:
                continue
            keep.append(k)
            tri.append(hit[0])
            bary.append(hit[1])
        self.inside = np.array(keep, dtype=np.int64)
        self.tri = np.array(tri, dtype=np.int64)
        self.bary = np.array(bary, dtype=np.float64).reshape(-1, 3)
        self.nodes = mesh.triangles[self.tri] if len(self.tri) else \
            np.empty((0, 3), dtype=np.int64)
        self.w = chord.weights[self.inside]
        self.r = chord.qpoints[self.inside, 0]
        if len(self.inside) == 0:
            warnings.warn("chord lies entirely outside the domain")

    def values_at_points(self, nodal):
        if len(self.inside) == 0:
            return np.empty(0)
        return np.einsum("qa,qa->q", self.bary, nodal[self.nodes])


def build_chord_geometries(mesh, chords, step=None, locator=None):
    if step is None:
        # half the typical edge length resolves the plasma cutoff
        step = 0.5 * np.sqrt(2.0 * mesh.area() / len(mesh.triangles))
    if locator is None:
        locator = PointLocator(mesh)
    geoms = []
    for c in chords:
        if isinstance(c, Chord):
            chord = c
        elif len(c) == 4 and np.isscalar(c[0]):
            chord = make_chord((c[0], c[1]), (c[2], c[3]), step)
        else:
            chord = make_chord(c[0], c[1], step)
        geoms.append(ChordGeometry(mesh, chord, locator))
    return geoms


# ---------------------------------------------------------------------------
# Observers
# ---------------------------------------------------------------------------

def build_neumann_observer(mesh, mk_indices=None):
    """Sparse N x n matrix whose row k maps nodal psi to the outward normal
    derivative (1/r) dpsi/dn at the boundary node M_k.

    The gradient at a boundary node is the area-weighted mean of the P1
    gradients of its incident triangles; the normal is the mean of the two
    adjacent boundary-edge normals.
    """
    if mk_indices is None:
        mk_indices = np.arange(len(mesh.boundary))
    mk_indices = np.asarray(mk_indices, dtype=np.int64)
    normals = mesh.boundary_normals()[mk_indices]
    node_tris = mesh.node_triangles()
    grads = mesh.grads()
    areas = mesh.areas()
    rows, cols, vals = [], [], []
    for k, bidx in enumerate(mk_indices):
        node = int(mesh.boundary[bidx])
        tris = node_tris[node]
        if len(tris) == 0:
            raise ValueError(f"boundary node {node} has no incident triangle")
        wsum = areas[tris].sum()
        r_k = mesh.nodes[node, 0]
        acc = {}
        for t in tris:
            row = (normals[k] @ grads[t]) * (areas[t] / wsum) / r_k  # (3,)
            for a, nid in enumerate(mesh.triangles[t]):
                acc[nid] = acc.get(nid, 0.0) + row[a]
        for nid, v in acc.items():
            rows.append(k)
            cols.append(nid)
            vals.append(v)
    C0 = sp.coo_matrix((vals, (rows, cols)),
                       shape=(len(mk_indices), mesh.n_nodes)).tocsr()
    points = mesh.nodes[mesh.boundary[mk_indices]]
    return C0, points


def build_interferometry_matrix(geoms, basis, psibar_nodal):
    """N_c x m matrix: row i gives the chord integral of each basis function
    of the normalized flux, restricted to the plasma region."""
    psibar_nodal = np.asarray(psibar_nodal, dtype=np.float64)
    out = np.zeros((len(geoms), basis.m))
    for i, geom in enumerate(geoms):
        if len(geom.inside) == 0:
            continue
        pb = geom.values_at_points(psibar_nodal)
        mask = pb <= 1.0
        if not np.any(mask):
            continue
        phi = basis.eval_many(pb[mask])
        out[i] = (geom.w[mask][:, None] * phi).sum(axis=0)
    return out


def build_polarimetry_observer(geoms, ne_expansion, psibar_nodal, mesh):
    """Sparse N_c x n matrix: row k maps nodal psi to the chord integral of
    n_e(psibar)/r times the chord-normal derivative of psi."""
    if ne_expansion is None:
        raise StateError("polarimetry requires identified n_e coefficients")
    psibar_nodal = np.asarray(psibar_nodal, dtype=np.float64)
    grads = mesh.grads()
    rows, cols, vals = [], [], []
    for k, geom in enumerate(geoms):
        if len(geom.inside) == 0:
            continue
        pb = geom.values_at_points(psibar_nodal)
        mask = pb <= 1.0
        if not np.any(mask):
            continue
        ne_vals = ne_expansion.basis.eval_many(pb[mask]) @ ne_expansion.coeffs("ne")
        normal = geom.chord.normal
        coef = geom.w[mask] * ne_vals / geom.r[mask]
        acc = {}
        for q, t in enumerate(geom.tri[mask]):
            row = coef[q] * (normal @ grads[t])
            for a, nid in enumerate(geom.nodes[mask][q]):
                acc[nid] = acc.get(nid, 0.0) + row[a]
        for nid, v in acc.items():
            rows.append(k)
            cols.append(nid)
            vals.append(v)
    return sp.coo_matrix((vals, (rows, cols)),
                         shape=(len(geoms), mesh.n_nodes)).tocsr()


# ---------------------------------------------------------------------------
# Weights
# ---------------------------------------------------------------------------

@dataclass
class WeightConfig:
    sigma_mag: float
    sigma_polar: float
    sigma_inter: float
    n_mag: int
    n_chords: int

    def __post_init__(self):
        if min(self.sigma_mag, self.sigma_polar, self.sigma_inter) <= 0:
            raise ValueError("all sigmas must be positive")

    @property
    def w_mag(self):
        return 1.0 / (np.sqrt(self.n_mag) * self.sigma_mag)

    @property
    def w_polar(self):
        return 1.0 / (np.sqrt(self.n_chords) * self.sigma_polar)

    @property
    def w_inter(self):
        return 1.0 / (np.sqrt(self.n_chords) * self.sigma_inter)


def default_weights(ip, boundary_length, n_mag, n_chords,
                    sigma_polar=1e-1, sigma_inter=1e18, mu0=MU0,
                    alpha=None, gamma=None):
    """Weights from the mean poloidal field: sigma_mag is 1% of
    mu0*Ip/|Gamma| (Ampere), with stated defaults for the internal chords.

    The chord sigmas correspond to ~1% of a typical measurement in the
    instrument's own units; when the actual measurement vectors are passed,
    the sigmas are rescaled to 1% of their mean magnitude (the rotation-
    physics constants are folded into the line integrals here, so fixed
    radian-scale defaults would misweight them).
    """
    if boundary_length <= 0:
        raise ValueError("boundary length must be positive")
    b_m = mu0 * abs(ip) / boundary_length
    if alpha is not None and len(alpha) and np.mean(np.abs(alpha)) > 0:
        sigma_polar = 0.01 * float(np.mean(np.abs(alpha)))
    if gamma is not None and len(gamma) and np.mean(np.abs(gamma)) > 0:
        sigma_inter = 0.01 * float(np.mean(np.abs(gamma)))
    return WeightConfig(0.01 * b_m, sigma_polar, sigma_inter,
                        n_mag, max(n_chords, 1))


# ---------------------------------------------------------------------------
# Measurement file IO
# ---------------------------------------------------------------------------

def save_measurements(ms, chords, path):
    r_ = lambda v: repr(float(v))
    with open(path, "w") as fh:
        fh.write(f"Ip {r_(ms.ip)}\nB0 {r_(ms.b0)}\n")
        fh.write(f"gD {len(ms.g_d)}\n")
        for v in ms.g_d:
            fh.write(f"{r_(v)}\n")
        fh.write(f"gN {len(ms.g_n)}\n")
        pts = ms.gn_points if ms.gn_points is not None \
            else np.zeros((len(ms.g_n), 2))
        for (r, z), v in zip(pts, ms.g_n):
            fh.write(f"{r_(r)} {r_(z)} {r_(v)}\n")
        fh.write(f"chords {len(ms.gamma)}\n")
        for c, gam, al in zip(chords, ms.gamma, ms.alpha):
            p0, p1 = (c.p0, c.p1) if isinstance(c, Chord) else c
            fh.write(f"{r_(p0[0])} {r_(p0[1])} {r_(p1[0])} {r_(p1[1])} "
                     f"{r_(gam)} {r_(al)}\n")


def load_measurements(path):
    """Returns (MeasurementSet, chord endpoint pairs)."""
    with open(path) as fh:
        lines = fh.read().splitlines()

    def fail(msg, ln):
        raise MeshParseError(msg, line=ln + 1)

    idx = 0
    scalars = {}
    for _ in range(2):
        parts = lines[idx].split()
        if len(parts) != 2:
            fail(f"expected scalar line, got {lines[idx]!r}", idx)
        scalars[parts[0]] = float(parts[1])
        idx += 1

    def section(name, nfields):
        nonlocal idx
        parts = lines[idx].split()
        if parts[0] != name:
            fail(f"expected section {name!r}", idx)
        count = int(parts[1])
        idx += 1
        rows = []
        for _ in range(count):
            p = lines[idx].split()
            if len(p) != nfields:
                fail(f"expected {nfields} fields in {name}", idx)
            try:
                rows.append([float(v) for v in p])
            except ValueError:
                fail(f"bad value in {name}: {lines[idx]!r}", idx)
            idx += 1
        return np.array(rows).reshape(count, nfields)

    g_d = section("gD", 1).ravel()
    gn_rows = section("gN", 3)
    chord_rows = section("chords", 6)
    chords = [(row[0:2], row[2:4]) for row in chord_rows]
    ms = MeasurementSet(g_d, gn_rows[:, 2], chord_rows[:, 4], chord_rows[:, 5],
                        scalars["Ip"], scalars["B0"],
                        gn_points=gn_rows[:, 0:2])
    return ms, chords


def perturb_measurements(ms, rate, rng):
    """Each scalar m becomes m + eta with eta ~ N(0, (rate*|m|)^2)."""
    if rate < 0:
        raise ValueError("noise rate must be nonnegative")
    if rate == 0:
        return replace(ms)

    def noisy(arr):
        return arr + rng.standard_normal(arr.shape) * rate * np.abs(arr)

    return replace(ms, g_d=noisy(ms.g_d), g_n=noisy(ms.g_n),
                   gamma=noisy(ms.gamma), alpha=noisy(ms.alpha))
