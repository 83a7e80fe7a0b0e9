import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from cavitiga.assembly import assemble_elasticity
from cavitiga.elasticity import (
    Material,
    displacement_stats,
    solve_displacement,
    wall_space,
)
from cavitiga.errors import WellPosednessError
from cavitiga.geometry import make_pillbox, refine_model
from cavitiga.spaces import push_forward_h1

RNG = np.random.default_rng(57)
R, L, T = 0.035, 0.1, 0.003


def lame_radial_oracle(a, b, p, eta, lam, n=10000):
    """Plane-strain thick-cylinder radial displacement by finite differences.

    Internal pressure p on r = a, traction-free r = b; returns (r, u).
    The interior equation reduces to u'' + u'/r - u/r^2 = 0; the material
    enters through the stress boundary conditions.
    """
    r = np.linspace(a, b, n)
    h = r[1] - r[0]
    c1 = lam + 2 * eta
    rows, cols, vals = [], [], []
    rhs = np.zeros(n)
    for i in range(1, n - 1):
        rows += [i, i, i]
        cols += [i - 1, i, i + 1]
        vals += [1 / h ** 2 - 1 / (2 * h * r[i]),
                 -2 / h ** 2 - 1 / r[i] ** 2,
                 1 / h ** 2 + 1 / (2 * h * r[i])]
    rows += [0, 0, 0]
    cols += [0, 1, 2]
    vals += [c1 * (-1.5 / h) + lam / a, c1 * (2.0 / h), c1 * (-0.5 / h)]
    rhs[0] = -p
    rows += [n - 1] * 3
    cols += [n - 1, n - 2, n - 3]
    vals += [c1 * (1.5 / h) + lam / b, c1 * (-2.0 / h), c1 * (0.5 / h)]
    A = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    return r, spla.spsolve(A.tocsc(), rhs)


@pytest.fixture(scope="module")
def wall_model():
    return refine_model(make_pillbox(R, L, T), 2,
                        {"cross": 2, "radial": 2, "axial": 1})


@pytest.fixture(scope="module")
def niobium():
    return Material.from_young_poisson(1.05e11, 0.38)


class TestMaterial:
    def test_young_poisson_conversion(self):
        m = Material.from_young_poisson(1.05e11, 0.38)
        E, nu = 1.05e11, 0.38
        assert np.isclose(m.lam, E * nu / ((1 + nu) * (1 - 2 * nu)))
        assert np.isclose(m.eta, E / (2 * (1 + nu)))

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            Material.from_young_poisson(-1.0, 0.3)
        with pytest.raises(ValueError):
            Material.from_young_poisson(1e9, 0.6)
        with pytest.raises(ValueError):
            Material(eta=-1.0, lam=0.0)
        with pytest.raises(ValueError):
            Material(eta=1.0, lam=-1.0)


class TestSolveDisplacement:
    def test_zero_pressure_zero_displacement(self, wall_model, niobium):
        field = solve_displacement(wall_model, niobium,
                                   lambda pts, *m: np.zeros(pts.shape[0]))
        assert np.abs(field.coefficients).max() == 0.0

    def test_linearity(self, wall_model, niobium):
        space = wall_space(wall_model)
        K = assemble_elasticity(space, niobium.eta, niobium.lam)
        f1 = solve_displacement(wall_model, niobium,
                                lambda pts, *m: np.full(pts.shape[0], 500.0),
                                space=space, stiffness=K)
        f2 = solve_displacement(wall_model, niobium,
                                lambda pts, *m: np.full(pts.shape[0], 1000.0),
                                space=space, stiffness=K)
        scale = np.abs(f2.coefficients).max()
        assert np.abs(f2.coefficients - 2 * f1.coefficients).max() < 1e-12 * scale

    def test_lame_thick_cylinder(self, wall_model, niobium):
        p0 = 1299.0
        r_or, u_or = lame_radial_oracle(R, R + T, p0, niobium.eta, niobium.lam)
        field = solve_displacement(wall_model, niobium,
                                   lambda pts, *m: np.full(pts.shape[0], p0))
        for v in np.linspace(0.0, 1.0, 10):
            val = push_forward_h1(field.space, 1, [0.4, v, 0.5],
                                  field.coefficients)
            pt = wall_model.wall.patches[1].eval([0.4, v, 0.5], nders=0)
            rr = np.hypot(pt[0], pt[1])
            ur = (val[0] * pt[0] + val[1] * pt[1]) / rr
            u_ref = np.interp(rr, r_or, u_or)
            assert abs(ur - u_ref) < 0.005 * abs(u_ref)

    def test_outward_displacement_for_positive_pressure(self, wall_model,
                                                        niobium):
        # positive radiation pressure (magnetic) pushes the wall outward
        field = solve_displacement(wall_model, niobium,
                                   lambda pts, *m: np.full(pts.shape[0], 1000.0))
        val = push_forward_h1(field.space, 0, [0.5, 0.0, 0.5],
                              field.coefficients)
        pt = wall_model.wall.patches[0].eval([0.5, 0.0, 0.5], nders=0)
        assert val[0] * pt[0] + val[1] * pt[1] > 0.0

    def test_radial_only_deformation(self, wall_model, niobium):
        # the pillbox configuration constrains axial motion and pins the
        # rotation, so a uniform pressure yields a purely radial response
        field = solve_displacement(wall_model, niobium,
                                   lambda pts, *m: np.full(pts.shape[0], 1000.0))
        for (u, v, w) in RNG.uniform(0.05, 0.95, (10, 3)):
            val = push_forward_h1(field.space, 2, [u, v, w], field.coefficients)
            pt = wall_model.wall.patches[2].eval([u, v, w], nders=0)
            rr = np.hypot(pt[0], pt[1])
            ur = (val[0] * pt[0] + val[1] * pt[1]) / rr
            ut = (-val[0] * pt[1] + val[1] * pt[0]) / rr
            assert abs(ut) < 2e-3 * abs(ur)
            assert abs(val[2]) < 2e-3 * abs(ur)

    def test_deformed_radius_uniform_along_z(self, wall_model, niobium):
        from cavitiga.geometry import displace

        field = solve_displacement(wall_model, niobium,
                                   lambda pts, *m: np.full(pts.shape[0], 1299.0))
        moved = displace(wall_model.wall, field.per_patch())
        r_or, u_or = lame_radial_oracle(R, R + T, 1299.0, niobium.eta,
                                        niobium.lam)
        delta = u_or[0]
        radii = []
        for w in np.linspace(0.1, 0.9, 7):
            pt = moved.patches[0].eval([0.3, 0.0, w], nders=0)
            radii.append(np.hypot(pt[0], pt[1]))
        radii = np.array(radii)
        assert np.abs(radii - (R + delta)).max() < 0.01 * delta

    def test_well_posedness_guard(self, wall_model, niobium):
        space = wall_space(wall_model)
        object.__setattr__(space, "dirichlet", np.array([], dtype=np.int64))
        with pytest.raises(WellPosednessError):
            solve_displacement(wall_model, niobium,
                               lambda pts, *m: np.ones(pts.shape[0]),
                               space=space)


class TestEnergyIdentities:
    def test_energy_consistency(self, wall_model, niobium):
        # Galerkin identity: u^T K u = f^T u
        from cavitiga.assembly import assemble_pressure_load

        space = wall_space(wall_model)
        K = assemble_elasticity(space, niobium.eta, niobium.lam)
        field = solve_displacement(wall_model, niobium,
                                   lambda pts, *m: np.full(pts.shape[0], 800.0),
                                   space=space, stiffness=K)
        u = field.coefficients.ravel()
        f = assemble_pressure_load(
            space, wall_model.coupled_wall_faces(),
            lambda pts, *m: np.full(pts.shape[0], -800.0))
        lhs = float(u @ (K @ u))
        rhs = float(f @ u)
        assert abs(lhs - rhs) < 1e-10 * abs(lhs)

    def test_reciprocity(self, wall_model, niobium):
        space = wall_space(wall_model)
        K = assemble_elasticity(space, niobium.eta, niobium.lam)

        def pressure_a(pts, *meta):
            return np.full(pts.shape[0], 700.0)

        def pressure_b(pts, *meta):
            return 500.0 * (1.0 + 0.5 * np.sin(8 * np.arctan2(pts[:, 1],
                                                              pts[:, 0])))

        from cavitiga.assembly import assemble_pressure_load

        u1 = solve_displacement(wall_model, niobium, pressure_a, space=space,
                                stiffness=K).coefficients.ravel()
        u2 = solve_displacement(wall_model, niobium, pressure_b, space=space,
                                stiffness=K).coefficients.ravel()
        f1 = assemble_pressure_load(space, wall_model.coupled_wall_faces(),
                                    lambda *a: -pressure_a(*a))
        f2 = assemble_pressure_load(space, wall_model.coupled_wall_faces(),
                                    lambda *a: -pressure_b(*a))
        assert abs(float(f1 @ u2) - float(f2 @ u1)) < 1e-10 * abs(float(f1 @ u2))

    def test_h_refinement_convergence(self, niobium):
        # max radial displacement error on the Lame benchmark decreases at
        # least like h^(p+1)
        p0 = 1299.0
        r_or, u_or = lame_radial_oracle(R, R + T, p0, niobium.eta, niobium.lam,
                                        n=20000)
        errors = []
        for lvl in (0, 1, 2):
            model = refine_model(make_pillbox(R, L, T), 2,
                                 {"cross": lvl, "radial": lvl, "axial": 0})
            field = solve_displacement(model, niobium,
                                       lambda pts, *m: np.full(pts.shape[0], p0))
            err = 0.0
            for v in np.linspace(0, 1, 8):
                val = push_forward_h1(field.space, 0, [0.37, v, 0.5],
                                      field.coefficients)
                pt = model.wall.patches[0].eval([0.37, v, 0.5], nders=0)
                rr = np.hypot(pt[0], pt[1])
                ur = (val[0] * pt[0] + val[1] * pt[1]) / rr
                err = max(err, abs(ur - np.interp(rr, r_or, u_or)))
            errors.append(err)
        slopes = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
        assert slopes.mean() > 0.75 * 3.0    # rate ~ p+1, one-sided band


class TestDisplacementStats:
    def test_zero_field(self, wall_model, niobium):
        field = solve_displacement(wall_model, niobium,
                                   lambda pts, *m: np.zeros(pts.shape[0]))
        st = displacement_stats(field, wall_model)
        assert st["max"] == 0.0 and st["mean"] == 0.0

    def test_uniform_translation(self, wall_model):
        space = wall_space(wall_model)
        from cavitiga.elasticity import DisplacementField

        c = np.array([1e-9, -2e-9, 3e-9])
        coeffs = np.tile(c, (space.n_scalar, 1))
        st = displacement_stats(DisplacementField(space, coeffs), wall_model)
        assert abs(st["max"] - np.linalg.norm(c)) < 1e-12 * np.linalg.norm(c)
        assert abs(st["mean"] - np.linalg.norm(c)) < 1e-12 * np.linalg.norm(c)

    def test_pillbox_amplitude_matches_oracle(self, wall_model, niobium):
        p0 = 1299.0
        r_or, u_or = lame_radial_oracle(R, R + T, p0, niobium.eta, niobium.lam)
        field = solve_displacement(wall_model, niobium,
                                   lambda pts, *m: np.full(pts.shape[0], p0))
        st = displacement_stats(field, wall_model)
        assert abs(st["max"] - u_or[0]) < 0.005 * u_or[0]
