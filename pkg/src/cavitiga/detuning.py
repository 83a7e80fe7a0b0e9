"""Lorentz-detuning pipeline: eigenmode, radiation pressure, wall
deformation, re-solve, frequency shift.

Amplitude matters: the radiation pressure is quadratic in the fields, so
every run fixes the mode amplitude first, either by stored energy (joules)
or by peak on-axis accelerating field (V/m).  Reports echo the
normalization used.

The deformed cavity keeps its parametrization: coupled boundary control
points move exactly with the wall, interior ring control points fade the
same displacement linearly (in the radial Greville abscissa) to zero at the
central patch, whose net does not move.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .assembly import CONSTANTS, PhysicalConstants, assemble_maxwell
from .eigensolver import identify_accelerating_mode, shift_invert_lanczos
from .elasticity import (
    DisplacementField,
    Material,
    displacement_stats,
    solve_displacement,
    wall_space,
)
from .errors import ConfigError
from .geometry import (
    PEC_WALL,
    CavityModel,
    displace,
    face_axes,
    face_param_to_volume,
    orient_grid,
)
from .spaces import build_hcurl_space, push_forward_hcurl
from .splines import KnotVector

__all__ = [
    "ModeField",
    "DetuningReport",
    "EigenOptions",
    "solve_cavity_mode",
    "compute_h_field",
    "radiation_pressure",
    "normalize_mode",
    "run_detuning",
    "iterate_detuning",
]


@dataclass(frozen=True)
class EigenOptions:
    n_ev: int = 5
    sigma_hint_hz: float | None = None
    tol: float = 1e-10
    max_iter: int | None = None

    def sigma(self, model: CavityModel, constants: PhysicalConstants):
        if self.sigma_hint_hz is not None:
            return (2.0 * np.pi * self.sigma_hint_hz) ** 2
        # generic hint: TM010 of a pillbox with the model's largest radius
        r_max = max(np.hypot(p.control_points[:, 0],
                             p.control_points[:, 1]).max()
                    for p in model.cavity.patches)
        j01 = 2.404825557695773
        f_hint = 0.9 * constants.c * j01 / (2.0 * np.pi * r_max)
        return (2.0 * np.pi * f_hint) ** 2


@dataclass(frozen=True)
class ModeField:
    """One eigenmode with a fixed amplitude (peak phasor convention)."""

    space: object              # HcurlSpace
    coefficients: np.ndarray   # full-length coefficient vector (V/m scale)
    omega: float               # rad/s
    normalization: dict = field(default_factory=dict)


@dataclass(frozen=True)
class DetuningReport:
    f0_hz: float
    f0_prime_hz: float
    iterations: int
    max_displacement_m: float
    mean_displacement_m: float
    normalization: dict
    history: tuple = ()

    @property
    def delta_f_hz(self):
        return abs(self.f0_hz - self.f0_prime_hz)

    def as_dict(self):
        return {
            "f0_hz": self.f0_hz,
            "f0_prime_hz": self.f0_prime_hz,
            "delta_f_hz": self.delta_f_hz,
            "iterations": self.iterations,
            "max_displacement_m": self.max_displacement_m,
            "normalization": dict(self.normalization),
        }


def solve_cavity_mode(geometry, opts: EigenOptions, model_for_hint=None,
                      constants=CONSTANTS, quad_order=None):
    """Assemble and solve the cavity eigenproblem; returns (space, result)
    with full-length (constrained-zero-padded) eigenvectors."""
    space = build_hcurl_space(geometry, pec_tags=(PEC_WALL,))
    K, M = assemble_maxwell(space, constants, quad_order)
    free = space.free
    Kf = K[free][:, free].tocsr()
    Mf = M[free][:, free].tocsr()
    sigma = opts.sigma(model_for_hint, constants) if model_for_hint else (
        (2.0 * np.pi * opts.sigma_hint_hz) ** 2)
    result = shift_invert_lanczos(Kf, Mf, sigma, opts.n_ev, tol=opts.tol,
                                  max_iter=opts.max_iter)
    full = np.zeros((space.n_dofs, result.eigenvalues.size))
    full[free] = result.eigenvectors
    result = replace(result, eigenvectors=full)
    return space, result, M


def axis_field_samples(space, coeffs, n=200):
    """E sampled along the beam axis; returns (z_params, values (n, 3))."""
    geom = space.geometry
    patch_idx = geom.axis_patch if geom.axis_patch is not None else 0
    u0, v0 = geom.axis_uv
    zs = np.linspace(0.0, 1.0, n)
    vals = np.array([push_forward_hcurl(space, patch_idx, [u0, v0, z], coeffs)
                     for z in zs])
    return zs, vals


def stored_energy(mode: ModeField, mass_matrix) -> float:
    """Time-average stored EM energy U = 1/2 eps0 int |E|^2 (peak phasor)."""
    x = mode.coefficients
    return 0.5 * float(x @ (mass_matrix @ x))


def normalize_mode(mode: ModeField, target: dict, mass_matrix) -> ModeField:
    """Scale the mode to a stored energy (J) or peak axis field (V/m)."""
    if "stored_energy" in target:
        goal = float(target["stored_energy"])
        if goal < 0:
            raise ConfigError("stored energy target must be non-negative")
        have = stored_energy(mode, mass_matrix)
        if have <= 0:
            raise ConfigError("cannot normalize a zero mode")
        scale = np.sqrt(goal / have)
    elif "peak_axis_field" in target:
        goal = float(target["peak_axis_field"])
        _, vals = axis_field_samples(mode.space, mode.coefficients)
        have = np.abs(vals[:, 2]).max()
        if have <= 0:
            raise ConfigError("mode has no axis field to normalize against")
        scale = goal / have
    else:
        raise ConfigError("normalization needs stored_energy or peak_axis_field")
    return replace(mode, coefficients=mode.coefficients * scale,
                   normalization=dict(target))


def compute_h_field(mode: ModeField, constants=CONSTANTS):
    """Evaluator for the magnetic field amplitude of the mode.

    H = i/(omega mu0) curl E for the peak phasor; the returned values are the
    real amplitude vectors (the 90-degree phase is dropped, which is
    irrelevant for time-averaged quadratic quantities).
    """
    if mode.omega <= 0:
        raise ValueError("mode frequency must be positive")
    factor = 1.0 / (mode.omega * constants.mu0)

    def h_eval(patch_idx, xhat):
        _, curl = push_forward_hcurl(mode.space, patch_idx, xhat,
                                     mode.coefficients, want_curl=True)
        return factor * curl

    return h_eval


def radiation_pressure(e_value, h_value, normal, constants=CONSTANTS):
    """Time-constant radiation pressure from peak-value fields at a wall point.

    p = -1/4 eps0 |E.n|^2 + 1/4 mu0 |H x n|^2; positive where the magnetic
    term dominates (outward push), negative for dominant normal E (pull).
    """
    en = float(np.dot(e_value, normal))
    ht = np.cross(h_value, normal)
    return (-0.25 * constants.eps0 * en * en
            + 0.25 * constants.mu0 * float(np.dot(ht, ht)))


def _invert_face_param(orientation, s, t):
    """Inverse of geometry.map_face_param: wall-face params -> cavity-face."""
    if orientation & 4:
        s, t = t, s
    if orientation & 2:
        s = 1.0 - s
    if orientation & 1:
        t = 1.0 - t
    return s, t


def _wall_pressure_fn(mode: ModeField, model: CavityModel, constants=CONSTANTS):
    """Pressure evaluator on wall faces, fed by the cavity-side fields."""
    h_eval = compute_h_field(mode, constants)
    pair_for_wall = {(c[2], c[3]): (c[0], c[1], c[4]) for c in model.coupling}

    def pressure(points, patch, face_id, params):
        key = (patch, face_id)
        if key not in pair_for_wall:
            raise ValueError("face %s is not coupled to the cavity" % (key,))
        pc, fc, orientation = pair_for_wall[key]
        out = np.empty(params.shape[0])
        cav_patch = model.cavity.patches[pc]
        for i, (sw, tw) in enumerate(params):
            sc, tc = _invert_face_param(orientation, sw, tw)
            xh = face_param_to_volume(fc, sc, tc)
            evec = push_forward_hcurl(mode.space, pc, xh, mode.coefficients)
            hvec = h_eval(pc, xh)
            du, dv = face_axes(fc)
            _, jac = cav_patch.eval(xh)
            n = np.cross(jac[:, du], jac[:, dv])
            n /= np.linalg.norm(n)
            out[i] = radiation_pressure(evec, hvec, n, constants)
        return out

    return pressure


def _greville_fades(kv: KnotVector, side: int):
    g = kv.greville()
    return g if side == 1 else 1.0 - g


def deform_cavity(model: CavityModel, wall_disp: DisplacementField):
    """Step-4 geometry update: move Gamma_CW control points with the wall and
    fade the displacement radially into the cavity."""
    wall_per_patch = wall_disp.per_patch()
    cav_disp = [np.zeros((p.control_points.shape[0], 3))
                for p in model.cavity.patches]
    for (pc, fc, pw, fw, orientation) in model.coupling:
        wpatch = model.wall.patches[pw]
        n1, n2, n3 = wpatch.shape
        wgrid = wall_per_patch[pw].reshape(n3, n2, n1, 3).transpose(2, 1, 0, 3)
        axis_w, side_w = fw // 2, fw % 2
        idx = [slice(None)] * 3
        idx[axis_w] = 0 if side_w == 0 else wpatch.shape[axis_w] - 1
        face_disp = wgrid[tuple(idx)]                 # (nu_w, nv_w, 3)
        face_disp = orient_grid(face_disp, orientation)

        cpatch = model.cavity.patches[pc]
        c1, c2, c3 = cpatch.shape
        axis_c, side_c = fc // 2, fc % 2
        fades = _greville_fades(cpatch.knot_vectors[axis_c], side_c)
        du, dv = face_axes(fc)
        if face_disp.shape[:2] != (cpatch.shape[du], cpatch.shape[dv]):
            raise ValueError("coupled face lattices do not align")
        # slicing away axis_c leaves axes (du, dv), exactly the face layout
        dgrid = np.zeros((c1, c2, c3, 3))
        for j, fade in enumerate(fades):
            sl = [slice(None)] * 3
            sl[axis_c] = j
            dgrid[tuple(sl)] = face_disp * fade
        cav_disp[pc] += dgrid.transpose(2, 1, 0, 3).reshape(-1, 3)
    return displace(model.cavity, cav_disp)


def _mode_from_result(space, result, mode_index):
    lam = result.eigenvalues[mode_index]
    return ModeField(space, result.eigenvectors[:, mode_index],
                     float(np.sqrt(lam)))


def run_detuning(model: CavityModel, material: Material, normalization: dict,
                 eigen: EigenOptions = EigenOptions(), constants=CONSTANTS,
                 quad_order=None) -> DetuningReport:
    """One pass of the five-step detuning calculation."""
    report, _ = _detuning_pass(model, material, normalization, eigen,
                               constants, quad_order)
    return report


def _detuning_pass(model, material, normalization, eigen, constants,
                   quad_order, prior_mode=None, prior_model=None):
    space, result, M = solve_cavity_mode(model.cavity, eigen, model,
                                         constants, quad_order)
    k = identify_accelerating_mode(result, space)
    mode = _mode_from_result(space, result, k)
    f0 = mode.omega / (2.0 * np.pi)
    mode = normalize_mode(mode, normalization, M)

    source_mode = mode if prior_mode is None else prior_mode
    source_model = model if prior_model is None else prior_model
    pressure = _wall_pressure_fn(source_mode, source_model, constants)
    wspace = wall_space(model)
    disp = solve_displacement(model, material, pressure, quad_order,
                              space=wspace)
    stats = displacement_stats(disp, model, quad_order)

    cavity_prime = deform_cavity(model, disp)
    wall_prime = displace(model.wall, disp.per_patch())
    model_prime = replace(model, cavity=cavity_prime, wall=wall_prime)

    space_p, result_p, M_p = solve_cavity_mode(cavity_prime, eigen, model,
                                               constants, quad_order)
    k_p = identify_accelerating_mode(result_p, space_p)
    mode_p = _mode_from_result(space_p, result_p, k_p)
    f0p = mode_p.omega / (2.0 * np.pi)
    mode_p = normalize_mode(mode_p, normalization, M_p)

    report = DetuningReport(
        f0_hz=f0, f0_prime_hz=f0p, iterations=1,
        max_displacement_m=stats["max"], mean_displacement_m=stats["mean"],
        normalization=dict(normalization),
        history=((f0, f0p),))
    return report, (mode_p, model_prime)


def iterate_detuning(model: CavityModel, material: Material,
                     normalization: dict, k_max: int = 1, tol_hz: float = 1.0,
                     eigen: EigenOptions = EigenOptions(), constants=CONSTANTS,
                     quad_order=None) -> DetuningReport:
    """Repeat steps 2-5 with pressure from the latest deformed mode until the
    shift changes by less than tol_hz (or k_max passes)."""
    if k_max < 1:
        raise ValueError("k_max must be at least 1")
    report, carry = _detuning_pass(model, material, normalization, eigen,
                                   constants, quad_order)
    history = list(report.history)
    for it in range(2, k_max + 1):
        prev_delta = report.delta_f_hz
        mode_p, model_prime = carry
        new_report, carry = _detuning_pass(model, material, normalization,
                                           eigen, constants, quad_order,
                                           prior_mode=mode_p,
                                           prior_model=model_prime)
        history.append(new_report.history[0])
        report = replace(new_report, iterations=it, history=tuple(history))
        if abs(report.delta_f_hz - prev_delta) < tol_hz:
            break
    return report
