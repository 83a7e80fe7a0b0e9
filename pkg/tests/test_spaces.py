import numpy as np
import pytest

from cavitiga.geometry import (
    MultipatchGeometry,
    PEC_WALL,
    face_axes,
    face_param_to_volume,
    make_pillbox,
    map_face_param,
    refine_model,
)
from cavitiga.spaces import (
    build_discrete_gradient,
    build_h1_space,
    build_hcurl_space,
    push_forward_h1,
    push_forward_hcurl,
)

from helpers import affine_patch, identity_cube_patch

RNG = np.random.default_rng(23)


def cube_geometry(p=(2, 2, 2), spans=(1, 1, 1)):
    patch = identity_cube_patch(p, spans)
    return MultipatchGeometry((patch,),
                              boundary_tags={(0, f): PEC_WALL for f in range(6)})


@pytest.fixture(scope="module")
def pillbox_fine():
    return refine_model(make_pillbox(0.035, 0.1, 0.003), 2,
                        {"cross": 1, "radial": 1, "axial": 0})


class TestH1Space:
    def test_single_cube_quadratic_dof_count(self):
        space = build_h1_space(cube_geometry((2, 2, 2)), 1)
        assert space.n_scalar == 27

    def test_two_glued_cubes_share_face(self):
        c1 = identity_cube_patch((1, 1, 1))
        c2 = affine_patch(np.eye(3), [1, 0, 0], p=(1, 1, 1))
        geom = MultipatchGeometry(
            (c1, c2), boundary_tags={(p, f): PEC_WALL
                                     for p in range(2) for f in range(6)})
        space = build_h1_space(geom, 1)
        assert space.n_scalar == 12

    def test_dirichlet_layer(self):
        geom = cube_geometry((2, 2, 2), spans=(2, 2, 2))
        space = build_h1_space(geom, 1, dirichlet_tags=(PEC_WALL,))
        # all boundary control points of the 4x4x4 net are constrained
        assert space.dirichlet.size == 4 ** 3 - 2 ** 3

    def test_component_selective_dirichlet(self):
        geom = cube_geometry((1, 1, 1))
        space = build_h1_space(geom, 3, dirichlet_tags={PEC_WALL: (2,)})
        assert space.dirichlet.size == 8       # u_z at each corner
        assert np.all(space.dirichlet % 3 == 2)

    def test_value_continuity_across_interfaces(self, pillbox_fine):
        geom = pillbox_fine.cavity
        space = build_h1_space(geom, 1)
        phi = RNG.standard_normal(space.n_scalar)
        for itf in geom.interfaces:
            for (s, t) in RNG.uniform(0.05, 0.95, (6, 2)):
                xa = face_param_to_volume(itf.face_a, s, t)
                sb, tb = map_face_param(itf.orientation, s, t)
                xb = face_param_to_volume(itf.face_b, sb, tb)
                va = push_forward_h1(space, itf.patch_a, xa, phi)
                vb = push_forward_h1(space, itf.patch_b, xb, phi)
                assert abs(float(va[0]) - float(vb[0])) < 1e-10

    def test_push_forward_constant_and_linear(self):
        A = np.array([[1.5, 0.2, 0.0], [0.0, 1.1, 0.3], [0.1, 0.0, 0.9]])
        patch = affine_patch(A, [0.5, 0, 0], p=(2, 2, 2))
        geom = MultipatchGeometry(
            (patch,), boundary_tags={(0, f): PEC_WALL for f in range(6)})
        space = build_h1_space(geom, 1)
        ones = np.ones(space.n_scalar)
        pos = space.dof_positions()
        lin = 2.0 * pos[:, 0] - pos[:, 2] + 1.0
        for xh in RNG.uniform(0, 1, (10, 3)):
            assert abs(float(push_forward_h1(space, 0, xh, ones)[0]) - 1.0) < 1e-13
            val, grad = push_forward_h1(space, 0, xh, lin, want_grad=True)
            pt = patch.eval(xh, nders=0)
            assert abs(float(val[0]) - (2 * pt[0] - pt[2] + 1)) < 1e-12
            assert np.allclose(grad[0], [2.0, 0.0, -1.0], atol=1e-11)

    def test_push_forward_vs_naive_summation(self):
        from cavitiga.splines import eval_basis

        geom = cube_geometry((2, 1, 2), spans=(2, 2, 1))
        space = build_h1_space(geom, 1)
        patch = geom.patches[0]
        coeffs = RNG.standard_normal(space.n_scalar)
        for xh in RNG.uniform(0, 1, (5, 3)):
            total = 0.0
            bes = [eval_basis(kv, xh[d]) for d, kv in enumerate(patch.knot_vectors)]
            n1, n2, n3 = patch.shape
            for i1 in range(n1):
                for i2 in range(n2):
                    for i3 in range(n3):
                        b = 1.0
                        for d, (be, idx) in enumerate(zip(bes, (i1, i2, i3))):
                            lo = be.span_index - patch.degrees[d]
                            j = idx - lo
                            b *= be.values[j] if 0 <= j <= patch.degrees[d] else 0.0
                        g = space.gmaps[0][i1 + n1 * (i2 + n2 * i3)]
                        total += b * coeffs[g]
            assert abs(float(push_forward_h1(space, 0, xh, coeffs)[0]) - total) < 1e-12


class TestHcurlSpace:
    def test_lowest_order_cube_is_edge_element(self):
        space = build_hcurl_space(cube_geometry((1, 1, 1)))
        assert space.n_dofs == 12

    def test_component_degree_pattern(self):
        space = build_hcurl_space(cube_geometry((3, 2, 2), spans=(2, 1, 1)))
        kvs = space.component_kvs(0)
        assert [kv.degree for kv in kvs[0]] == [2, 2, 2]
        assert [kv.degree for kv in kvs[1]] == [3, 1, 2]
        assert [kv.degree for kv in kvs[2]] == [3, 2, 1]

    def test_pec_leaves_interior_only(self):
        space = build_hcurl_space(cube_geometry((1, 1, 1)), pec_tags=(PEC_WALL,))
        assert space.free.size == 0
        space2 = build_hcurl_space(cube_geometry((2, 2, 2), spans=(2, 2, 2)),
                                   pec_tags=(PEC_WALL,))
        # free tangential DOFs: per component the two tangential directions
        # lose their boundary layers
        assert space2.free.size == 3 * 3 * 2 * 2

    def test_two_glued_cubes_tangential_identification(self):
        c1 = identity_cube_patch((1, 1, 1))
        c2 = affine_patch(np.eye(3), [1, 0, 0], p=(1, 1, 1))
        geom = MultipatchGeometry(
            (c1, c2), boundary_tags={(p, f): PEC_WALL
                                     for p in range(2) for f in range(6)})
        space = build_hcurl_space(geom)
        assert space.n_dofs == 20      # 12 + 12 - 4 shared face edges

    def test_tangential_continuity(self, pillbox_fine):
        geom = pillbox_fine.cavity
        space = build_hcurl_space(geom)
        x = RNG.standard_normal(space.n_dofs)
        for itf in geom.interfaces:
            for (s, t) in RNG.uniform(0.05, 0.95, (5, 2)):
                xa = face_param_to_volume(itf.face_a, s, t)
                sb, tb = map_face_param(itf.orientation, s, t)
                xb = face_param_to_volume(itf.face_b, sb, tb)
                _, jac = geom.patches[itf.patch_a].eval(xa)
                du, dv = face_axes(itf.face_a)
                n = np.cross(jac[:, du], jac[:, dv])
                n /= np.linalg.norm(n)
                ea = push_forward_hcurl(space, itf.patch_a, xa, x)
                eb = push_forward_hcurl(space, itf.patch_b, xb, x)
                ta = ea - np.dot(ea, n) * n
                tb2 = eb - np.dot(eb, n) * n
                assert np.abs(ta - tb2).max() < 1e-10

    def test_pec_tangential_trace_vanishes(self, pillbox_fine):
        geom = pillbox_fine.cavity
        space = build_hcurl_space(geom, pec_tags=(PEC_WALL,))
        x = np.zeros(space.n_dofs)
        x[space.free] = RNG.standard_normal(space.free.size)
        scale = np.abs(x).max()
        for (p, f) in geom.exterior_faces(PEC_WALL)[:6]:
            for (s, t) in RNG.uniform(0.05, 0.95, (4, 2)):
                xh = face_param_to_volume(f, s, t)
                _, jac = geom.patches[p].eval(xh)
                du, dv = face_axes(f)
                n = np.cross(jac[:, du], jac[:, dv])
                n /= np.linalg.norm(n)
                e = push_forward_hcurl(space, p, xh, x)
                tang = e - np.dot(e, n) * n
                assert np.abs(tang).max() < 1e-10 * max(scale, 1.0)

    def test_identity_patch_value_passthrough(self):
        space = build_hcurl_space(cube_geometry((2, 2, 2)))
        x = RNG.standard_normal(space.n_dofs)
        # identity geometry: physical value equals the reference value, so a
        # constant-capable coefficient vector reproduces the constant
        x = np.zeros(space.n_dofs)
        x[space.gmaps[0][1]] = 1.0     # component 1 all ones
        for xh in RNG.uniform(0, 1, (10, 3)):
            v = push_forward_hcurl(space, 0, xh, x)
            assert np.allclose(v, [0, 1, 0], atol=1e-13)

    def test_rigid_rotation_patch_rotates_values(self):
        th = 0.7
        Q = np.array([[np.cos(th), -np.sin(th), 0],
                      [np.sin(th), np.cos(th), 0], [0, 0, 1.0]])
        geom_ref = cube_geometry((1, 1, 1))
        patch_rot = affine_patch(Q, [0, 0, 0], p=(1, 1, 1))
        geom_rot = MultipatchGeometry(
            (patch_rot,), boundary_tags={(0, f): PEC_WALL for f in range(6)})
        s_ref = build_hcurl_space(geom_ref)
        s_rot = build_hcurl_space(geom_rot)
        x = RNG.standard_normal(s_ref.n_dofs)
        for xh in RNG.uniform(0, 1, (8, 3)):
            v_ref = push_forward_hcurl(s_ref, 0, xh, x)
            v_rot = push_forward_hcurl(s_rot, 0, xh, x)
            assert np.allclose(Q @ v_ref, v_rot, atol=1e-12)


class TestDiscreteGradient:
    def test_constant_maps_to_zero(self):
        geom = cube_geometry((2, 2, 2), spans=(2, 2, 2))
        h1 = build_h1_space(geom, 1, rational=False)
        hc = build_hcurl_space(geom)
        G = build_discrete_gradient(h1, hc)
        z = G.matrix @ np.ones(h1.n_scalar)
        assert np.abs(z).max() < 1e-13

    def test_linear_in_x_gives_unit_field(self):
        geom = cube_geometry((2, 2, 2), spans=(2, 1, 1))
        h1 = build_h1_space(geom, 1, rational=False)
        hc = build_hcurl_space(geom)
        G = build_discrete_gradient(h1, hc)
        phi = h1.dof_positions()[:, 0]     # x-coordinates (Greville: exact)
        gphi = G.matrix @ phi
        for xh in RNG.uniform(0, 1, (10, 3)):
            v = push_forward_hcurl(hc, 0, xh, gphi)
            assert np.allclose(v, [1.0, 0.0, 0.0], atol=1e-12)

    def test_gradient_matches_pushforward_multipatch(self, pillbox_fine):
        geom = pillbox_fine.cavity
        h1 = build_h1_space(geom, 1, rational=False)
        hc = build_hcurl_space(geom)
        G = build_discrete_gradient(h1, hc)
        phi = RNG.standard_normal(h1.n_scalar)
        gphi = G.matrix @ phi
        worst = 0.0
        for p in range(geom.n_patches):
            for xh in RNG.uniform(0.01, 0.99, (40, 3)):
                _, grad = push_forward_h1(h1, p, xh, phi, want_grad=True)
                v = push_forward_hcurl(hc, p, xh, gphi)
                worst = max(worst, np.abs(grad[0] - v).max())
        assert worst < 1e-10

    def test_rational_scalar_space_rejected(self, pillbox_fine):
        from cavitiga.errors import GeometryError

        geom = pillbox_fine.cavity
        h1 = build_h1_space(geom, 1, rational=True)
        hc = build_hcurl_space(geom)
        with pytest.raises(GeometryError):
            build_discrete_gradient(h1, hc)
