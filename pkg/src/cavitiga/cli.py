"""Command-line driver.

Subcommands: ``eigen``, ``detune``, ``convergence``, ``sample-axis``,
``export``.  All take ``--config`` (JSON run configuration) and ``--out``.
Exit codes: 0 success, 2 configuration error, 3 solver error,
4 mode-identification error.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .detuning import (
    EigenOptions,
    axis_field_samples,
    iterate_detuning,
    solve_cavity_mode,
)
from .eigensolver import identify_accelerating_mode
from .elasticity import Material, solve_displacement
from .errors import (
    CavitigaError,
    ConfigError,
    EigenSolveError,
    FactorizationError,
    IdentificationError,
    WellPosednessError,
)
from .geometry import refine_model
from .io import RunConfig, build_base_model, load_config, write_csv, write_report, write_vtk_structured
from .spaces import push_forward_h1, push_forward_hcurl

__all__ = ["main"]


def _worker_count():
    env = os.environ.get("CAVITIGA_THREADS", "")
    if env.strip():
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError("CAVITIGA_THREADS must be an integer")
    return os.cpu_count() or 1


def _material(config: RunConfig) -> Material:
    m = config.material
    if "E" in m:
        return Material.from_young_poisson(float(m["E"]), float(m["nu"]))
    return Material(eta=float(m["eta"]), lam=float(m["lambda"]))


def _eigen_options(config: RunConfig) -> EigenOptions:
    es = config.eigensolver
    return EigenOptions(
        n_ev=int(es.get("n_ev", 5)),
        sigma_hint_hz=es.get("sigma_hint_hz"),
        tol=float(es.get("tol", 1e-10)),
        max_iter=es.get("max_iter"),
    )


def _refined_model(config: RunConfig, levels=None):
    base = build_base_model(config)
    levels = config.refinement_levels() if levels is None else levels
    return refine_model(base, config.degrees, levels)


def _solve(config: RunConfig, levels=None):
    model = _refined_model(config, levels)
    space, result, M = solve_cavity_mode(model.cavity, _eigen_options(config),
                                         model)
    return model, space, result, M


def cmd_eigen(config: RunConfig, out: str) -> int:
    _, space, result, _ = _solve(config)
    rows = [(k, float(f), float(r)) for k, (f, r) in
            enumerate(zip(result.frequencies, result.residuals))]
    write_csv(out, ["mode", "f_hz", "residual"], rows)
    print("wrote %s (%d modes, %d free DOFs)" % (out, len(rows), space.free.size))
    return 0


def cmd_detune(config: RunConfig, out: str, k_max: int, tol_hz: float) -> int:
    model = _refined_model(config)
    report = iterate_detuning(model, _material(config), config.normalization,
                              k_max=k_max, tol_hz=tol_hz,
                              eigen=_eigen_options(config))
    write_report(report.as_dict(), out)
    print("f0      = %.10e Hz" % report.f0_hz)
    print("f0'     = %.10e Hz" % report.f0_prime_hz)
    print("delta_f = %.6e Hz (%d iteration%s)" %
          (report.delta_f_hz, report.iterations,
           "s" if report.iterations != 1 else ""))
    print("max |u| = %.6e m" % report.max_displacement_m)
    print("wrote %s" % out)
    return 0


def _count_elements(geometry):
    return sum(int(np.prod([kv.n_spans for kv in p.knot_vectors]))
               for p in geometry.patches)


def cmd_convergence(config: RunConfig, out: str, levels, with_shift: bool) -> int:
    material = _material(config)
    opts = _eigen_options(config)

    def run_level(level):
        model = _refined_model(config, level)
        from .geometry import PEC_WALL
        from .spaces import build_hcurl_space

        n_dof = build_hcurl_space(model.cavity, pec_tags=(PEC_WALL,)).free.size
        if with_shift:
            report = iterate_detuning(model, material, config.normalization,
                                      k_max=1, eigen=opts)
            f0 = report.f0_hz
            shift = report.delta_f_hz
        else:
            space, result, _ = solve_cavity_mode(model.cavity, opts, model)
            k = identify_accelerating_mode(result, space)
            f0 = float(result.frequencies[k])
            shift = None
        return (_count_elements(model.cavity), n_dof, f0, shift)

    with ThreadPoolExecutor(max_workers=min(_worker_count(), len(levels))) as pool:
        results = list(pool.map(run_level, levels))

    rows = []
    prev_metric = None
    for level, (n_el, n_dof, f0, shift) in zip(levels, results):
        metric = shift if with_shift else f0
        variation = "" if prev_metric is None else abs(metric - prev_metric)
        prev_metric = metric
        rows.append((level, n_el, n_dof, float(f0),
                     "" if shift is None else float(shift),
                     variation if variation == "" else float(variation)))
    write_csv(out, ["subdivisions", "n_elements", "n_dofs", "f0_hz",
                    "shift_hz", "variation_hz"], rows)
    print("wrote %s (%d levels)" % (out, len(levels)))
    return 0


def cmd_sample_axis(config: RunConfig, out: str, mode: int | None, n: int) -> int:
    model, space, result, _ = _solve(config)
    k = identify_accelerating_mode(result, space) if mode is None else int(mode)
    if not (0 <= k < result.eigenvalues.size):
        raise ConfigError("mode index %d out of range" % k)
    coeffs = result.eigenvectors[:, k]
    geom = space.geometry
    patch_idx = geom.axis_patch if geom.axis_patch is not None else 0
    u0, v0 = geom.axis_uv
    patch = geom.patches[patch_idx]

    # invert the (monotone) parametric-to-physical axis map so the samples
    # are uniform in physical z
    zhat_dense = np.linspace(0.0, 1.0, 2001)
    z_dense = np.array([patch.eval([u0, v0, zh], nders=0)[2] for zh in zhat_dense])
    z_targets = np.linspace(z_dense[0], z_dense[-1], n)
    zhats = np.interp(z_targets, z_dense, zhat_dense)

    rows = []
    for z, zh in zip(z_targets, zhats):
        e = push_forward_hcurl(space, patch_idx, [u0, v0, zh], coeffs)
        rows.append((float(z), float(e[0]), float(e[1]), float(e[2])))
    write_csv(out, ["z", "Ex", "Ey", "Ez"], rows)
    print("wrote %s (mode %d, %d samples)" % (out, k, n))
    return 0


def cmd_export(config: RunConfig, out: str, what: str, mode: int | None,
               resolution: int) -> int:
    if what == "efield":
        model, space, result, _ = _solve(config)
        k = identify_accelerating_mode(result, space) if mode is None else int(mode)
        coeffs = result.eigenvectors[:, k]
        paths = []
        for p, patch in enumerate(space.geometry.patches):
            def fn(params, p=p):
                return np.array([push_forward_hcurl(space, p, x, coeffs)
                                 for x in params])
            path = "%s_p%02d.vtk" % (out, p)
            write_vtk_structured(path, patch, fn, "E_real", resolution)
            paths.append(path)
        print("wrote %s" % " ".join(paths))
        return 0
    if what == "displacement":
        model, space, result, M = _solve(config)
        k = identify_accelerating_mode(result, space)
        from .detuning import _mode_from_result, _wall_pressure_fn, normalize_mode

        mode_field = normalize_mode(_mode_from_result(space, result, k),
                                    config.normalization, M)
        fieldd = solve_displacement(model, _material(config),
                                    _wall_pressure_fn(mode_field, model))
        wspace = fieldd.space
        paths = []
        for p, patch in enumerate(model.wall.patches):
            def fn(params, p=p):
                return np.array([push_forward_h1(wspace, p, x, fieldd.coefficients)
                                 for x in params])
            path = "%s_p%02d.vtk" % (out, p)
            write_vtk_structured(path, patch, fn, "displacement", resolution)
            paths.append(path)
        pos = wspace.dof_positions()
        rows = [(i, float(x), float(y), float(z), float(ux), float(uy), float(uz))
                for i, ((x, y, z), (ux, uy, uz))
                in enumerate(zip(pos, fieldd.coefficients))]
        csv_path = "%s_controls.csv" % out
        write_csv(csv_path, ["dof", "x", "y", "z", "ux", "uy", "uz"], rows)
        paths.append(csv_path)
        print("wrote %s" % " ".join(paths))
        return 0
    raise ConfigError("unknown export field %r" % what)


def _parse_levels(spec: str):
    if ".." in spec:
        a, b = spec.split("..", 1)
        lo, hi = int(a), int(b)
        if hi < lo:
            raise ConfigError("empty level range %r" % spec)
        return list(range(lo, hi + 1))
    return [int(s) for s in spec.split(",")]


def build_parser():
    ap = argparse.ArgumentParser(prog="cavitiga",
                                 description="Isogeometric cavity eigenmodes "
                                             "and Lorentz detuning")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, default_out):
        p.add_argument("--config", required=True, help="run config JSON")
        p.add_argument("--out", default=default_out, help="output path")

    p = sub.add_parser("eigen", help="solve the cavity eigenproblem")
    common(p, "spectrum.csv")

    p = sub.add_parser("detune", help="run the detuning pipeline")
    common(p, "detune.json")
    p.add_argument("--iterations", type=int, default=1,
                   help="max pressure-update passes")
    p.add_argument("--tol-hz", type=float, default=1.0,
                   help="stop when the shift changes less than this")

    p = sub.add_parser("convergence", help="frequency convergence study")
    common(p, "convergence.csv")
    p.add_argument("--levels", required=True,
                   help="refinement levels, e.g. 1..4 or 1,2,3")
    p.add_argument("--with-shift", action="store_true",
                   help="also run the detuning shift per level")

    p = sub.add_parser("sample-axis", help="sample E along the beam axis")
    common(p, "axis.csv")
    p.add_argument("--mode", type=int, default=None,
                   help="mode index (default: accelerating mode)")
    p.add_argument("--n", type=int, default=200, help="number of samples")

    p = sub.add_parser("export", help="write VTK field files")
    common(p, "field")
    p.add_argument("--what", choices=["efield", "displacement"],
                   default="efield")
    p.add_argument("--mode", type=int, default=None)
    p.add_argument("--resolution", type=int, default=4,
                   help="sample points per knot span")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        if args.command == "eigen":
            return cmd_eigen(config, args.out)
        if args.command == "detune":
            return cmd_detune(config, args.out, args.iterations, args.tol_hz)
        if args.command == "convergence":
            return cmd_convergence(config, args.out,
                                   _parse_levels(args.levels), args.with_shift)
        if args.command == "sample-axis":
            return cmd_sample_axis(config, args.out, args.mode, args.n)
        if args.command == "export":
            return cmd_export(config, args.out, args.what, args.mode,
                              args.resolution)
        raise ConfigError("unknown command %r" % args.command)
    except ConfigError as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return 2
    except (EigenSolveError, FactorizationError, WellPosednessError) as exc:
        print("solver error: %s" % exc, file=sys.stderr)
        return 3
    except IdentificationError as exc:
        print("identification error: %s" % exc, file=sys.stderr)
        return 4
    except CavitigaError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
