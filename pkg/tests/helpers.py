"""Shared test fixtures: independent oracles and small reference geometries."""

import numpy as np

from cavitiga.splines import KnotVector, NurbsCurve, NurbsPatch


def cox_de_boor_recursive(knots, i, p, x):
    """Naive recursive evaluation of one B-spline basis function.

    Direct transcription of the two-term recursion with the 0/0-to-0
    convention; deliberately independent of the production evaluator.
    """
    if p == 0:
        if knots[i] <= x < knots[i + 1]:
            return 1.0
        # closed right end of the very last non-empty span
        if x == knots[-1] and knots[i] < knots[i + 1] and knots[i + 1] == knots[-1]:
            return 1.0
        return 0.0
    left = 0.0
    den = knots[i + p] - knots[i]
    if den > 0.0:
        left = (x - knots[i]) / den * cox_de_boor_recursive(knots, i, p - 1, x)
    right = 0.0
    den = knots[i + p + 1] - knots[i + 1]
    if den > 0.0:
        right = (knots[i + p + 1] - x) / den * cox_de_boor_recursive(knots, i + 1, p - 1, x)
    return left + right


def all_basis_recursive(kv, x):
    """All n basis values at x via the recursive oracle."""
    return np.array([cox_de_boor_recursive(kv.knots, i, kv.degree, x)
                     for i in range(kv.n_basis)])


def quarter_circle_curve(R=1.0):
    """Exact 90-degree arc from (R,0) to (0,R), degree 2."""
    kv = KnotVector([0, 0, 0, 1, 1, 1], 2)
    pts = np.array([[R, 0.0], [R, R], [0.0, R]])
    w = np.array([1.0, np.sqrt(0.5), 1.0])
    return NurbsCurve(kv, pts, w)


def linear_kv(n_spans=1):
    kn = [0.0] + list(np.linspace(0, 1, n_spans + 1)) + [1.0]
    return KnotVector(kn, 1)


def identity_cube_patch(p=(1, 1, 1), spans=(1, 1, 1)):
    """B-spline patch whose map is the identity on the unit cube."""
    kvs = []
    for d in range(3):
        kn = np.concatenate([np.zeros(p[d]), np.linspace(0, 1, spans[d] + 1), np.ones(p[d])])
        kvs.append(KnotVector(kn, p[d]))
    grids = [kv.greville() for kv in kvs]
    n1, n2, n3 = (g.size for g in grids)
    pts = np.zeros((n1, n2, n3, 3))
    pts[..., 0] = grids[0][:, None, None]
    pts[..., 1] = grids[1][None, :, None]
    pts[..., 2] = grids[2][None, None, :]
    flat = pts.transpose(2, 1, 0, 3).reshape(-1, 3)
    return NurbsPatch(tuple(p), tuple(kvs), flat, np.ones(flat.shape[0]))


def affine_patch(A, b, p=(1, 1, 1), spans=(1, 1, 1)):
    """Patch mapping the unit cube through x -> A x + b."""
    base = identity_cube_patch(p, spans)
    pts = base.control_points @ np.asarray(A, dtype=float).T + np.asarray(b, dtype=float)
    return NurbsPatch(base.degrees, base.knot_vectors, pts, base.weights)


def quarter_annulus_patch(r_in=0.5, r_out=1.0, height=1.0):
    """Revolved quarter annulus: exact arc in u (clockwise, so the Jacobian
    stays positive with outward v), radial in v, extruded in w."""
    arc = quarter_circle_curve(1.0)
    kv_u = arc.kv
    kv_v = KnotVector([0, 0, 1, 1], 1)
    kv_w = KnotVector([0, 0, 1, 1], 1)
    arc_pts = arc.control_points[::-1]
    arc_w = arc.weights[::-1]
    pts = np.zeros((3, 2, 2, 3))
    w = np.zeros((3, 2, 2))
    for i in range(3):
        for j, r in enumerate([r_in, r_out]):
            for k, z in enumerate([0.0, height]):
                pts[i, j, k, :2] = arc_pts[i] * r
                pts[i, j, k, 2] = z
                w[i, j, k] = arc_w[i]
    flat = pts.transpose(2, 1, 0, 3).reshape(-1, 3)
    wf = w.transpose(2, 1, 0).reshape(-1)
    return NurbsPatch((2, 1, 1), (kv_u, kv_v, kv_w), flat, wf)


def fd_jacobian(patch, xhat, h=1e-6):
    """Central finite-difference Jacobian of the geometry map."""
    xhat = np.asarray(xhat, dtype=float)
    jac = np.zeros((3, 3))
    for d in range(3):
        e = np.zeros(3)
        e[d] = h
        fp = patch.eval(np.clip(xhat + e, 0, 1), nders=0)
        fm = patch.eval(np.clip(xhat - e, 0, 1), nders=0)
        step = np.clip(xhat + e, 0, 1)[d] - np.clip(xhat - e, 0, 1)[d]
        jac[:, d] = (fp - fm) / step
    return jac
