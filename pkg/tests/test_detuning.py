import numpy as np
import pytest
from scipy.special import j1, jn_zeros

from cavitiga.assembly import CONSTANTS, face_quadrature
from cavitiga.detuning import (
    EigenOptions,
    ModeField,
    _mode_from_result,
    _wall_pressure_fn,
    axis_field_samples,
    compute_h_field,
    deform_cavity,
    iterate_detuning,
    normalize_mode,
    radiation_pressure,
    run_detuning,
    solve_cavity_mode,
    stored_energy,
)
from cavitiga.eigensolver import identify_accelerating_mode
from cavitiga.elasticity import Material, solve_displacement
from cavitiga.geometry import (
    face_axes,
    face_param_to_volume,
    make_pillbox,
    map_face_param,
    refine_model,
)

RNG = np.random.default_rng(71)
R, L, T = 0.035, 0.1, 0.003
J01 = jn_zeros(0, 1)[0]


@pytest.fixture(scope="module")
def pillbox_mode():
    model = refine_model(make_pillbox(R, L, T), 2,
                         {"cross": 2, "radial": 2, "axial": 1})
    space, result, M = solve_cavity_mode(model.cavity,
                                         EigenOptions(n_ev=5, tol=1e-12), model)
    k = identify_accelerating_mode(result, space)
    mode = normalize_mode(_mode_from_result(space, result, k),
                          {"stored_energy": 1.0}, M)
    return model, space, mode, M


@pytest.fixture(scope="module")
def niobium():
    return Material.from_young_poisson(1.05e11, 0.38)


class TestNormalization:
    def test_energy_roundtrip(self, pillbox_mode):
        _, _, mode, M = pillbox_mode
        assert abs(stored_energy(mode, M) - 1.0) < 1e-12

    def test_doubling_target_scales_sqrt2(self, pillbox_mode):
        _, _, mode, M = pillbox_mode
        mode2 = normalize_mode(mode, {"stored_energy": 2.0}, M)
        ratio = np.abs(mode2.coefficients).max() / np.abs(mode.coefficients).max()
        assert abs(ratio - np.sqrt(2.0)) < 1e-12

    def test_peak_axis_field(self, pillbox_mode):
        _, space, mode, M = pillbox_mode
        target = 2.5e7
        mode2 = normalize_mode(mode, {"peak_axis_field": target}, M)
        _, vals = axis_field_samples(space, mode2.coefficients)
        assert abs(np.abs(vals[:, 2]).max() - target) < 1e-9 * target

    def test_zero_mode_rejected(self, pillbox_mode):
        from cavitiga.errors import ConfigError

        _, space, mode, M = pillbox_mode
        dead = ModeField(space, np.zeros_like(mode.coefficients), mode.omega)
        with pytest.raises(ConfigError):
            normalize_mode(dead, {"stored_energy": 1.0}, M)


class TestHField:
    def test_linearity(self, pillbox_mode):
        _, _, mode, _ = pillbox_mode
        from dataclasses import replace

        h1 = compute_h_field(mode)
        h2 = compute_h_field(replace(mode, coefficients=3.0 * mode.coefficients))
        x = [0.3, 0.6, 0.4]
        assert np.allclose(3.0 * h1(1, x), h2(1, x), rtol=1e-12)

    def test_pillbox_wall_h_matches_bessel(self, niobium):
        # |H_t| at the wall approaches E0 sqrt(eps0/mu0) J1(j01) once the
        # radial direction resolves the Bessel profile (p=3 mesh)
        model = refine_model(make_pillbox(R, L, T), 3,
                             {"cross": 3, "radial": 4, "axial": 0})
        space, result, M = solve_cavity_mode(
            model.cavity, EigenOptions(n_ev=4, tol=1e-12), model)
        k = identify_accelerating_mode(result, space)
        mode = normalize_mode(_mode_from_result(space, result, k),
                              {"stored_energy": 1.0}, M)
        E0 = np.sqrt(2.0 / (CONSTANTS.eps0 * L * np.pi * R * R * j1(J01) ** 2))
        h_analytic = E0 * np.sqrt(CONSTANTS.eps0 / CONSTANTS.mu0) * j1(J01)
        h_eval = compute_h_field(mode)
        for u in np.linspace(0.1, 0.9, 5):
            h = h_eval(1, [u, 1.0, 0.5])
            assert abs(np.linalg.norm(h) - h_analytic) < 1e-4 * h_analytic

    def test_divergence_free(self, pillbox_mode):
        # H is a scaled curl, so its physical divergence vanishes pointwise
        _, _, mode, _ = pillbox_mode
        h_eval = compute_h_field(mode)
        patch = mode.space.geometry.patches[1]
        x0 = np.array([0.4, 0.5, 0.5])
        _, jac = patch.eval(x0)
        h = 1e-6
        div = 0.0
        scale = 0.0
        for d in range(3):
            dxh = np.linalg.solve(jac, np.eye(3)[:, d]) * h
            hp = h_eval(1, x0 + dxh)
            hm = h_eval(1, x0 - dxh)
            div += (hp[d] - hm[d]) / (2 * h)
            scale = max(scale, np.abs(hp).max() / h)
        assert abs(div) < 1e-5 * scale


class TestRadiationPressure:
    def test_zero_fields(self):
        assert radiation_pressure(np.zeros(3), np.zeros(3),
                                  np.array([1.0, 0, 0])) == 0.0

    def test_pure_normal_e_pulls_inward(self):
        n = np.array([0.0, 0.0, 1.0])
        e = 5e6 * n
        p = radiation_pressure(e, np.zeros(3), n)
        assert p < 0
        assert np.isclose(p, -0.25 * CONSTANTS.eps0 * 25e12)

    def test_tangential_h_pushes_outward(self):
        n = np.array([1.0, 0.0, 0.0])
        h = np.array([0.0, 3e4, 0.0])
        p = radiation_pressure(np.zeros(3), h, n)
        assert p > 0
        assert np.isclose(p, 0.25 * CONSTANTS.mu0 * 9e8)

    def test_pillbox_wall_pressure_sign_and_magnitude(self, pillbox_mode):
        model, _, mode, _ = pillbox_mode
        pfn = _wall_pressure_fn(mode, model)
        (pc, fc, pw, fw, o) = model.coupling[0]
        patch = model.wall.patches[pw]
        params, points, normals, dS, qw = face_quadrature(patch, fw)
        pv = pfn(points, pw, fw, params)
        assert np.all(pv > 0)          # magnetic pressure dominates at r = R
        p_exact = 1.0 / (2 * np.pi * R * R * L)
        mean = float(np.sum(pv * dS * qw) / np.sum(dS * qw))
        assert abs(mean - p_exact) < 0.05 * p_exact


class TestDeformation:
    def test_deformed_interface_consistency(self, pillbox_mode, niobium):
        from cavitiga.geometry import displace

        model, _, mode, _ = pillbox_mode
        disp = solve_displacement(model, niobium, _wall_pressure_fn(mode, model))
        cavity_prime = deform_cavity(model, disp)
        wall_prime = displace(model.wall, disp.per_patch())
        for (pc, fc, pw, fw, o) in model.coupling:
            for (s, t) in RNG.uniform(0.02, 0.98, (6, 2)):
                xc = face_param_to_volume(fc, s, t)
                sw, tw = map_face_param(o, s, t)
                xw = face_param_to_volume(fw, sw, tw)
                a = cavity_prime.patches[pc].eval(xc, nders=0)
                b = wall_prime.patches[pw].eval(xw, nders=0)
                assert np.abs(a - b).max() < 1e-10

    def test_interior_jacobians_stay_positive(self, pillbox_mode, niobium):
        model, _, mode, _ = pillbox_mode
        disp = solve_displacement(model, niobium, _wall_pressure_fn(mode, model))
        deform_cavity(model, disp).check_jacobians()

    def test_central_patch_untouched(self, pillbox_mode, niobium):
        model, _, mode, _ = pillbox_mode
        disp = solve_displacement(model, niobium, _wall_pressure_fn(mode, model))
        cavity_prime = deform_cavity(model, disp)
        assert np.array_equal(cavity_prime.patches[0].control_points,
                              model.cavity.patches[0].control_points)


class TestPipeline:
    def test_zero_energy_zero_shift(self, niobium):
        model = refine_model(make_pillbox(R, L, T), 2,
                             {"cross": 1, "radial": 1, "axial": 0})
        rep = run_detuning(model, niobium, {"stored_energy": 0.0},
                           EigenOptions(n_ev=4, tol=1e-11))
        assert rep.delta_f_hz == 0.0
        assert rep.max_displacement_m == 0.0

    def test_outward_motion_lowers_frequency(self, niobium):
        model = refine_model(make_pillbox(R, L, T), 2,
                             {"cross": 2, "radial": 2, "axial": 1})
        rep = run_detuning(model, niobium, {"stored_energy": 1.0},
                           EigenOptions(n_ev=5, tol=1e-12))
        assert rep.f0_prime_hz < rep.f0_hz
        assert rep.max_displacement_m > 0

    def test_axis_purity_after_deformation(self, pillbox_mode, niobium):
        from cavitiga.geometry import displace
        from dataclasses import replace as dreplace

        model, _, mode, _ = pillbox_mode
        disp = solve_displacement(model, niobium, _wall_pressure_fn(mode, model))
        cavity_prime = deform_cavity(model, disp)
        space, result, M = solve_cavity_mode(
            cavity_prime, EigenOptions(n_ev=5, tol=1e-12), model)
        k = identify_accelerating_mode(result, space)
        _, vals = axis_field_samples(space, result.eigenvectors[:, k], n=200)
        ratio = max(np.abs(vals[:, 0]).max(), np.abs(vals[:, 1]).max()) / \
            np.abs(vals[:, 2]).max()
        assert ratio < 1e-6

    def test_iterate_matches_single_pass(self, niobium):
        model = refine_model(make_pillbox(R, L, T), 2,
                             {"cross": 1, "radial": 2, "axial": 0})
        opts = EigenOptions(n_ev=4, tol=1e-12)
        one = run_detuning(model, niobium, {"stored_energy": 1.0}, opts)
        it = iterate_detuning(model, niobium, {"stored_energy": 1.0},
                              k_max=1, eigen=opts)
        assert it.delta_f_hz == one.delta_f_hz
        assert it.iterations == 1

    def test_iteration_converges_fast(self, niobium):
        model = refine_model(make_pillbox(R, L, T), 2,
                             {"cross": 1, "radial": 2, "axial": 0})
        opts = EigenOptions(n_ev=4, tol=1e-12)
        rep = iterate_detuning(model, niobium, {"stored_energy": 1.0},
                               k_max=4, tol_hz=1e-3, eigen=opts)
        assert rep.iterations <= 2
        deltas = [abs(f0 - f0p) for (f0, f0p) in rep.history]
        assert abs(deltas[-1] - deltas[0]) < 1e-2   # tiny correction at 1 J
