"""Command-line front end.

Subcommands: mesh-gen, forward, reconstruct, twin, stats, lcurve.
Configuration is a plain-text ``key = value`` file with command-line
overrides (``--set key=value``).  Exit codes: 0 success, 1 input error,
2 numerical non-convergence.
"""

import argparse
import os
import sys

import numpy as np
from scipy.interpolate import PchipInterpolator

from . import forward, mesh as meshmod, twin as twinmod
from .basis import SplineBasis
from .diagnostics import profile_table, write_profile_csv
from .errors import ConvergenceError, DivergentLambdaError, GsReconError
from .forward import MachineParams, forward_fixed_point
from .inverse import (ReconstructionSetup, RegularizationConfig, reconstruct)
from .observation import load_measurements, save_measurements
from .twin import (l_curve_ab, l_curve_ne, replicate_stats, synthesize_measurements,
                   write_lcurve_csv, write_stats_csv)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NOCONV = 2

DEFAULTS = {
    "r_min": 2.0, "r_max": 3.0, "z_min": -1.2, "z_max": 1.2,
    "nr": 20, "nz": 20,
    "limiter_rect": "2.1 2.9 1.05",   # r_in r_out z_half; "none" disables
    "r0": 2.5, "b0": 2.0, "ip": 1.0e6,
    "degree": 3, "m": 8,
    "eps": 5e-2, "eps_ne": 1e-2, "alpha_scale": 1e19,
    "tol": 1e-6, "max_iter": 30, "realtime_iters": 2,
    "noise_rate": 0.01, "seed": 12345, "replicates": 50,
    "eps_list": "1e-2,1e-1,1",
    "lcurve_eps_min": 1e-5, "lcurve_eps_max": 1.0, "lcurve_points": 13,
    "out_dir": ".",
}


class ConfigError(GsReconError):
    pass


def parse_config(path=None, overrides=()):
    cfg = dict(DEFAULTS)
    cfg["chords"] = []
    lines = []
    if path is not None:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        with open(path) as fh:
            lines = fh.read().splitlines()
    for ov in overrides:
        lines.append(ov)
    for ln, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {ln}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key == "chord":
            parts = val.split()
            if len(parts) != 4:
                raise ConfigError(f"config line {ln}: chord needs r1 z1 r2 z2")
            cfg["chords"].append(tuple(float(p) for p in parts))
        else:
            cfg[key] = val
    return cfg


def _get(cfg, key, conv=float):
    try:
        return conv(cfg[key])
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad config value for {key!r}: {exc}")


def _profile_func(cfg, key, default=None):
    if key not in cfg:
        if default is None:
            raise ConfigError(f"missing profile samples: {key}")
        return default
    vals = np.array([float(v) for v in str(cfg[key]).split(",")])
    xs = np.linspace(0.0, 1.0, len(vals))
    return PchipInterpolator(xs, vals)


def _limiter(cfg):
    raw = str(cfg.get("limiter_rect", "none")).strip()
    if raw.lower() in ("none", ""):
        return None
    parts = raw.split()
    if len(parts) != 3:
        raise ConfigError("limiter_rect needs: r_in r_out z_half (or 'none')")
    r1, r2, zh = (float(p) for p in parts)
    return np.array([[r1, -zh], [r2, -zh], [r2, zh], [r1, zh]])


def _load_mesh(cfg):
    if "mesh_file" in cfg:
        return meshmod.load_mesh(str(cfg["mesh_file"]))
    return meshmod.build_rect_mesh(
        _get(cfg, "r_min"), _get(cfg, "r_max"), _get(cfg, "z_min"),
        _get(cfg, "z_max"), _get(cfg, "nr", int), _get(cfg, "nz", int),
        limiter=_limiter(cfg))


def _machine(cfg):
    return MachineParams(_get(cfg, "r0"), _get(cfg, "b0"), _get(cfg, "ip"))


def _reg(cfg):
    return RegularizationConfig(_get(cfg, "eps"), _get(cfg, "eps_ne"),
                                _get(cfg, "alpha_scale"))


def _basis(cfg):
    return SplineBasis(degree=_get(cfg, "degree", int), m=_get(cfg, "m", int),
                       end_constraint=True)


def _out(cfg, name):
    out_dir = str(cfg["out_dir"])
    os.makedirs(out_dir, exist_ok=True)
    return os.path.join(out_dir, name)


def _write_manifest(cfg, path, extra=None):
    with open(path, "w") as fh:
        for k in sorted(cfg):
            if k == "chords":
                for c in cfg["chords"]:
                    fh.write(f"chord = {c[0]} {c[1]} {c[2]} {c[3]}\n")
            else:
                fh.write(f"{k} = {cfg[k]}\n")
        for k, v in (extra or {}).items():
            fh.write(f"{k} = {v}\n")


def _reference_equilibrium(cfg, mesh, machine, basis):
    a_func = _profile_func(cfg, "profile_a",
                           lambda x: (1.0 - x) * (1.0 + 0.3 * x))
    b_func = _profile_func(cfg, "profile_b",
                           lambda x: (1.0 - x) * (1.0 - 0.2 * x))
    g_d = _boundary_data(cfg, mesh)
    return forward_fixed_point(mesh, machine, a_func, b_func, g_d,
                               tol=_get(cfg, "tol"),
                               max_iter=_get(cfg, "max_iter", int),
                               basis=basis)


def _boundary_data(cfg, mesh):
    if "g_d_const" in cfg:
        return np.full(len(mesh.boundary), _get(cfg, "g_d_const"))
    return np.zeros(len(mesh.boundary))


def _ne_reference(cfg, basis):
    if "profile_ne" not in cfg:
        return None
    f = _profile_func(cfg, "profile_ne")
    xs = np.linspace(0.0, 1.0, 201)
    return basis.fit(xs, f(xs))


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_mesh_gen(args):
    m = meshmod.build_rect_mesh(args.r_min, args.r_max, args.z_min,
                                args.z_max, args.nr, args.nz)
    meshmod.save_mesh(m, args.out)
    print(f"wrote {args.out}: {m.n_nodes} nodes, {len(m.triangles)} triangles")
    return EXIT_OK


def cmd_forward(args):
    cfg = parse_config(args.config, args.set or ())
    mesh = _load_mesh(cfg)
    machine = _machine(cfg)
    basis = _basis(cfg)
    try:
        eq = _reference_equilibrium(cfg, mesh, machine, basis)
    except (DivergentLambdaError, ConvergenceError) as exc:
        print(f"forward solve failed: {exc}", file=sys.stderr)
        return EXIT_NOCONV
    eq_path = _out(cfg, "equilibrium.txt")
    forward.save_equilibrium(eq, eq_path)
    table = profile_table(mesh, eq.psi, eq.domain, eq.profiles, eq.lam,
                          machine)
    csv_path = _out(cfg, "forward_profiles.csv")
    write_profile_csv(csv_path, table)
    print(f"converged in {eq.iterations} iterations "
          f"(residual {eq.residuals[-1]:.3e}); lambda = {eq.lam:.6g}")
    print(f"wrote {eq_path} and {csv_path}")
    return EXIT_OK


def cmd_reconstruct(args):
    cfg = parse_config(args.config, args.set or ())
    mesh = _load_mesh(cfg)
    machine = _machine(cfg)
    basis = _basis(cfg)
    ms, chords = load_measurements(args.measurements)
    setup = ReconstructionSetup(mesh, machine, chords, basis=basis)
    reg = _reg(cfg)
    use_internal = len(chords) > 0 and not args.magnetics_only
    if args.realtime:
        max_iter = _get(cfg, "realtime_iters", int)
        tol = 0.0
    else:
        max_iter = _get(cfg, "max_iter", int)
        tol = _get(cfg, "tol")
    res = reconstruct(setup, ms, reg, use_internal=use_internal, tol=tol,
                      max_iter=max_iter)
    if res.error is not None:
        print(f"reconstruction failed: {res.error}", file=sys.stderr)
        return EXIT_NOCONV
    table = profile_table(mesh, res.psi, res.domain, res.profiles, res.lam,
                          machine)
    csv_path = _out(cfg, "reconstruction.csv")
    write_profile_csv(csv_path, table)
    summary = _out(cfg, "reconstruction_summary.txt")
    with open(summary, "w") as fh:
        fh.write(f"converged {res.converged}\niterations {res.iterations}\n")
        fh.write(f"lambda {res.lam!r}\n")
        for k, v in res.costs.items():
            fh.write(f"{k} {v!r}\n")
        fh.write("residuals " + " ".join(f"{r:.6e}" for r in res.residuals)
                 + "\n")
    for i, r in enumerate(res.residuals, 1):
        print(f"iteration {i}: residual {r:.6e}")
    print(f"wrote {csv_path} and {summary}")
    if args.realtime or res.converged:
        return EXIT_OK
    return EXIT_NOCONV


def cmd_twin(args):
    cfg = parse_config(args.config, args.set or ())
    mesh = _load_mesh(cfg)
    machine = _machine(cfg)
    basis = _basis(cfg)
    try:
        eq = _reference_equilibrium(cfg, mesh, machine, basis)
    except (DivergentLambdaError, ConvergenceError) as exc:
        print(f"reference solve failed: {exc}", file=sys.stderr)
        return EXIT_NOCONV
    setup = ReconstructionSetup(mesh, machine, cfg["chords"], basis=basis)
    ne_coeffs = _ne_reference(cfg, basis)
    ms = synthesize_measurements(setup, eq, ne_coeffs)
    if args.noise:
        ms = twinmod.perturb(ms, _get(cfg, "noise_rate"),
                             _get(cfg, "seed", int))
    ms_path = _out(cfg, "measurements.txt")
    save_measurements(ms, [g.chord for g in setup.chord_geoms], ms_path)
    table = profile_table(mesh, eq.psi, eq.domain, eq.profiles, eq.lam,
                          machine)
    if ne_coeffs is not None:
        table["ne"] = basis.eval_many(table["psibar"]) @ ne_coeffs
    ref_path = _out(cfg, "reference_profiles.csv")
    write_profile_csv(ref_path, table)
    print(f"wrote {ms_path} and {ref_path}")
    return EXIT_OK


def cmd_stats(args):
    cfg = parse_config(args.config, args.set or ())
    mesh = _load_mesh(cfg)
    machine = _machine(cfg)
    basis = _basis(cfg)
    try:
        eq = _reference_equilibrium(cfg, mesh, machine, basis)
    except (DivergentLambdaError, ConvergenceError) as exc:
        print(f"reference solve failed: {exc}", file=sys.stderr)
        return EXIT_NOCONV
    setup = ReconstructionSetup(mesh, machine, cfg["chords"], basis=basis)
    ne_coeffs = _ne_reference(cfg, basis)
    ms = synthesize_measurements(setup, eq, ne_coeffs)
    eps_values = [float(v) for v in str(cfg["eps_list"]).split(",")]
    stats = replicate_stats(
        setup, ms, _reg(cfg), eps_values,
        n_replicates=_get(cfg, "replicates", int),
        rate=_get(cfg, "noise_rate"), seed=_get(cfg, "seed", int),
        use_internal=ne_coeffs is not None and len(cfg["chords"]) > 0)
    failures = {}
    for st in stats:
        path = _out(cfg, f"stats_eps_{st.eps:g}.csv")
        write_stats_csv(path, st)
        failures[f"failed_eps_{st.eps:g}"] = st.n_failed
        print(f"eps={st.eps:g}: {st.n_converged}/{st.n_requested} converged "
              f"-> {path}")
    _write_manifest(cfg, _out(cfg, "stats_manifest.txt"), failures)
    return EXIT_OK


def cmd_lcurve(args):
    cfg = parse_config(args.config, args.set or ())
    mesh = _load_mesh(cfg)
    machine = _machine(cfg)
    basis = _basis(cfg)
    try:
        eq = _reference_equilibrium(cfg, mesh, machine, basis)
    except (DivergentLambdaError, ConvergenceError) as exc:
        print(f"reference solve failed: {exc}", file=sys.stderr)
        return EXIT_NOCONV
    setup = ReconstructionSetup(mesh, machine, cfg["chords"], basis=basis)
    ne_coeffs = _ne_reference(cfg, basis)
    if ne_coeffs is None or not cfg["chords"]:
        print("lcurve requires profile_ne and at least one chord",
              file=sys.stderr)
        return EXIT_INPUT
    ms = twinmod.perturb(synthesize_measurements(setup, eq, ne_coeffs),
                         _get(cfg, "noise_rate"), _get(cfg, "seed", int))
    eps_grid = np.logspace(np.log10(_get(cfg, "lcurve_eps_min")),
                           np.log10(_get(cfg, "lcurve_eps_max")),
                           _get(cfg, "lcurve_points", int))
    psibar = eq.domain.normalize(eq.psi)
    res_ne = l_curve_ne(setup, ms, psibar, eps_grid,
                        alpha_scale=_get(cfg, "alpha_scale"))
    ne_path = _out(cfg, "lcurve_ne.csv")
    write_lcurve_csv(ne_path, res_ne)
    print(f"ne corner at eps={res_ne.corner_eps:g} (flat={res_ne.flat}) "
          f"-> {ne_path}")
    # A/B curve at the reference observation state
    from .forward import assemble_source_matrix, dirichlet_vector
    g = dirichlet_vector(mesh, ms.g_d)
    k_inv_g = setup.fact.solve(g)
    k_inv_g[mesh.boundary] = ms.g_d
    pq = setup.squad.psibar_qp(psibar)
    Y = assemble_source_matrix(setup.squad, pq, basis, eq.lam, machine.r0,
                               mesh.boundary)
    k_inv_y = setup.fact.solve_multi(Y)
    k_inv_y[mesh.boundary, :] = 0.0
    E = setup.c0 @ k_inv_y
    f = ms.g_n - setup.c0 @ k_inv_g
    res_ab = l_curve_ab(setup, ms, E, f, eps_grid)
    ab_path = _out(cfg, "lcurve_ab.csv")
    write_lcurve_csv(ab_path, res_ab)
    print(f"ab corner at eps={res_ab.corner_eps:g} (flat={res_ab.flat}) "
          f"-> {ab_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="gsrecon", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    pm = sub.add_parser("mesh-gen", help="generate a rectangular mesh file")
    pm.add_argument("--r-min", type=float, default=DEFAULTS["r_min"])
    pm.add_argument("--r-max", type=float, default=DEFAULTS["r_max"])
    pm.add_argument("--z-min", type=float, default=DEFAULTS["z_min"])
    pm.add_argument("--z-max", type=float, default=DEFAULTS["z_max"])
    pm.add_argument("--nr", type=int, default=DEFAULTS["nr"])
    pm.add_argument("--nz", type=int, default=DEFAULTS["nz"])
    pm.add_argument("--out", required=True)
    pm.set_defaults(func=cmd_mesh_gen)

    def common(sp):
        sp.add_argument("--config", default=None)
        sp.add_argument("--set", action="append", metavar="key=value",
                        help="config override")

    pf = sub.add_parser("forward", help="direct free-boundary solve")
    common(pf)
    pf.set_defaults(func=cmd_forward)

    pr = sub.add_parser("reconstruct", help="identify profiles from a "
                        "measurement file")
    common(pr)
    pr.add_argument("--measurements", required=True)
    pr.add_argument("--realtime", action="store_true",
                    help="fixed two-iteration warm regime")
    pr.add_argument("--magnetics-only", action="store_true")
    pr.set_defaults(func=cmd_reconstruct)

    pt = sub.add_parser("twin", help="generate synthetic measurements")
    common(pt)
    pt.add_argument("--noise", action="store_true")
    pt.set_defaults(func=cmd_twin)

    ps = sub.add_parser("stats", help="replicate statistics under noise")
    common(ps)
    ps.set_defaults(func=cmd_stats)

    pl = sub.add_parser("lcurve", help="L-curve parameter scan")
    common(pl)
    pl.set_defaults(func=cmd_lcurve)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, OSError, GsReconError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
