"""Galerkin assembly on NURBS multipatch geometries.

Per-element Gauss quadrature with q = degree + 1 points per direction by
default; geometry quantities are tabulated patch-wise on the full quadrature
grid with tensor contractions, and the O(n_local^2) element-matrix work runs
in the selected kernel backend (compiled or numpy fallback).

Element matrices are exactly symmetric by construction and the scatter order
is deterministic, so assembled operators are reproducible bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from numpy.polynomial.legendre import leggauss

from . import _kernels
from .errors import EvaluationError
from .geometry import face_axes
from .spaces import H1Space, HcurlSpace
from .splines import KnotVector, basis_table

__all__ = [
    "PhysicalConstants",
    "CONSTANTS",
    "QuadratureRule",
    "assemble_curl_curl",
    "assemble_mass",
    "assemble_maxwell",
    "assemble_elasticity",
    "assemble_pressure_load",
    "export_matrix_market",
]

_CHUNK = 512


@dataclass(frozen=True)
class PhysicalConstants:
    """Vacuum permeability/permittivity; defaults follow the classical
    definition mu0 = 4 pi e-7 H/m."""

    mu0: float = 4.0e-7 * np.pi
    eps0: float = 8.8541878128e-12

    @property
    def c(self):
        return 1.0 / np.sqrt(self.mu0 * self.eps0)


CONSTANTS = PhysicalConstants()


@dataclass(frozen=True)
class QuadratureRule:
    """Per-direction Gauss points and weights on every knot span."""

    points: tuple    # per direction: (n_spans, q) parameter values
    weights: tuple   # per direction: (n_spans, q) quadrature weights

    @classmethod
    def for_kvs(cls, kvs, orders):
        pts, wts = [], []
        for kv, q in zip(kvs, orders):
            x, w = leggauss(int(q))
            bp = kv.breakpoints
            mid = 0.5 * (bp[:-1] + bp[1:])
            half = 0.5 * (bp[1:] - bp[:-1])
            pts.append(mid[:, None] + half[:, None] * x[None, :])
            wts.append(half[:, None] * w[None, :])
        return cls(tuple(pts), tuple(wts))

    @property
    def n_elements(self):
        return tuple(p.shape[0] for p in self.points)

    @property
    def n_points(self):
        return tuple(p.shape[1] for p in self.points)


def _tabulate_kv(kv: KnotVector, points2d, nders=1):
    """Basis table on a (n_spans, q) point grid.

    Returns (starts, tables) with ``starts[s]`` the first active function on
    span s and ``tables[k][s, g, j]`` the k-th derivative of function
    ``starts[s] + j``.
    """
    ns, q = points2d.shape
    spans, tab = basis_table(kv, points2d.ravel(), nders)
    spans = spans.reshape(ns, q)
    starts = spans[:, 0] - kv.degree
    if np.any(spans != spans[:, :1]):
        raise EvaluationError("quadrature points crossed a span boundary")
    tables = [tab[k].reshape(ns, q, kv.degree + 1) for k in range(nders + 1)]
    return starts, tables


def _grid_to_eq(arr, ne, nq):
    """(m1, m2, m3, ...) quad grid -> (E, Q, ...) with i1 fastest in both."""
    shape = (ne[0], nq[0], ne[1], nq[1], ne[2], nq[2]) + arr.shape[3:]
    a = arr.reshape(shape)
    a = np.moveaxis(a, (0, 2, 4, 1, 3, 5), (2, 1, 0, 5, 4, 3))
    E = ne[0] * ne[1] * ne[2]
    Q = nq[0] * nq[1] * nq[2]
    return np.ascontiguousarray(a.reshape((E, Q) + arr.shape[3:]))


class PatchGeometryData:
    """Geometry quantities of one patch on its full quadrature grid."""

    def __init__(self, patch, rule: QuadratureRule):
        self.rule = rule
        ne = rule.n_elements
        nq = rule.n_points
        tabs = [_tabulate_kv(kv, pts, 1)
                for kv, pts in zip(patch.knot_vectors, rule.points)]
        # dense collocation matrices (m_d, n_d) for value and derivative
        coll = []
        for d, (starts, tables) in enumerate(tabs):
            n = patch.knot_vectors[d].n_basis
            m = ne[d] * nq[d]
            C0 = np.zeros((m, n))
            C1 = np.zeros((m, n))
            p = patch.degrees[d]
            rows = np.arange(m).reshape(ne[d], nq[d])
            for s in range(ne[d]):
                C0[rows[s][:, None], starts[s] + np.arange(p + 1)[None, :]] = tables[0][s]
                C1[rows[s][:, None], starts[s] + np.arange(p + 1)[None, :]] = tables[1][s]
            coll.append((C0, C1))
        grid = patch.hom_grid()
        A = np.einsum("ai,bj,ck,ijkh->abch", coll[0][0], coll[1][0], coll[2][0], grid,
                      optimize=True)
        W = A[..., 3]
        P = A[..., :3] / W[..., None]
        jac = np.empty(A.shape[:3] + (3, 3))
        gradW = np.empty(A.shape[:3] + (3,))
        for d in range(3):
            sel = [0, 0, 0]
            sel[d] = 1
            Ad = np.einsum("ai,bj,ck,ijkh->abch", coll[0][sel[0]], coll[1][sel[1]],
                           coll[2][sel[2]], grid, optimize=True)
            gradW[..., d] = Ad[..., 3]
            jac[..., d] = (Ad[..., :3] - Ad[..., 3:] * P) / W[..., None]

        self.n_elements = ne
        self.n_qp = nq
        self.points = _grid_to_eq(P, ne, nq)
        self.jac = _grid_to_eq(jac, ne, nq)
        self.det = np.linalg.det(self.jac)
        if self.det.min() <= 0:
            raise EvaluationError("non-positive Jacobian determinant at a "
                                  "quadrature point")
        self.weight_fn = _grid_to_eq(W, ne, nq)
        self.grad_weight = _grid_to_eq(gradW, ne, nq)
        w1 = rule.weights[0].ravel()
        w2 = rule.weights[1].ravel()
        w3 = rule.weights[2].ravel()
        qw_full = w1[:, None, None] * w2[None, :, None] * w3[None, None, :]
        self.qweights = _grid_to_eq(qw_full, ne, nq)
        self.tabs = tabs

    def element_multi_index(self, chunk):
        """Decompose flat element ids into (e1, e2, e3)."""
        ne = self.n_elements
        e1 = chunk % ne[0]
        e2 = (chunk // ne[0]) % ne[1]
        e3 = chunk // (ne[0] * ne[1])
        return e1, e2, e3


def _expand_products(t1, t2, t3, e1, e2, e3):
    """Per-element tensor-product expansion of three 1D tables.

    ``t*`` are (n_spans, q, L) tables; returns (chunk, Q, L1*L2*L3) with
    local index i1 fastest and quad index g1 fastest.
    """
    a = t1[e1]
    b = t2[e2]
    c = t3[e3]
    out = np.einsum("eqi,erj,esk->esrqkji", a, b, c, optimize=True)
    ch = a.shape[0]
    Q = a.shape[1] * b.shape[1] * c.shape[1]
    L = a.shape[2] * b.shape[2] * c.shape[2]
    return np.ascontiguousarray(out.reshape(ch, Q, L))


def _scatter_coo(rows, cols, vals, gidx, data):
    rows.append(np.repeat(gidx, gidx.shape[1], axis=1).ravel())
    cols.append(np.tile(gidx, (1, gidx.shape[1])).ravel())
    vals.append(data.reshape(data.shape[0], -1).ravel())


def _finalize(rows, cols, vals, n):
    K = sp.coo_matrix((np.concatenate(vals),
                       (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n)).tocsr()
    K.sum_duplicates()
    return 0.5 * (K + K.T)


def _quad_orders(degrees, quad_order):
    if quad_order is None:
        return tuple(p + 1 for p in degrees)
    if np.isscalar(quad_order):
        return (int(quad_order),) * 3
    return tuple(int(q) for q in quad_order)


def assemble_maxwell(space: HcurlSpace, constants: PhysicalConstants = CONSTANTS,
                     quad_order=None):
    """Curl-curl stiffness and mass in one pass; returns (K, M)."""
    kernels = _kernels.active
    n = space.n_dofs
    rows_k, cols_k, vals_k = [], [], []
    rows_m, cols_m, vals_m = [], [], []
    for p, patch in enumerate(space.geometry.patches):
        orders = _quad_orders(patch.degrees, quad_order)
        rule = QuadratureRule.for_kvs(patch.knot_vectors, orders)
        geo = PatchGeometryData(patch, rule)
        comp_kvs = space.component_kvs(p)
        comp_tabs = [[_tabulate_kv(kv, rule.points[d], 1) for d, kv in enumerate(kvs)]
                     for kvs in comp_kvs]
        comp_shapes = space.component_shapes(p)
        sizes = [[kv.degree + 1 for kv in kvs] for kvs in comp_kvs]
        NL = sum(s[0] * s[1] * s[2] for s in sizes)

        E = geo.qweights.shape[0]
        for lo in range(0, E, _CHUNK):
            sel = np.arange(lo, min(lo + _CHUNK, E))
            e1, e2, e3 = geo.element_multi_index(sel)
            ch = sel.size
            Q = geo.qweights.shape[1]
            A_val = np.zeros((ch, Q, NL, 3))
            A_curl = np.zeros((ch, Q, NL, 3))
            gidx = np.empty((ch, NL), dtype=np.int64)
            gsign = np.empty((ch, NL))
            off = 0
            for c in range(3):
                tabs = comp_tabs[c]
                L = sizes[c][0] * sizes[c][1] * sizes[c][2]
                v = [tabs[d][1][0] for d in range(3)]    # value tables
                dv = [tabs[d][1][1] for d in range(3)]   # derivative tables
                val = _expand_products(v[0], v[1], v[2], e1, e2, e3)
                ca, cb = (c + 1) % 3, (c + 2) % 3
                tb_a = [dv[d] if d == cb else v[d] for d in range(3)]
                tb_b = [dv[d] if d == ca else v[d] for d in range(3)]
                der_cb = _expand_products(tb_a[0], tb_a[1], tb_a[2], e1, e2, e3)
                der_ca = _expand_products(tb_b[0], tb_b[1], tb_b[2], e1, e2, e3)
                A_val[:, :, off:off + L, c] = val
                A_curl[:, :, off:off + L, ca] = der_cb
                A_curl[:, :, off:off + L, cb] = -der_ca

                starts = [tabs[d][0] for d in range(3)]
                i1 = starts[0][e1][:, None, None, None] + np.arange(sizes[c][0])[None, :, None, None]
                i2 = starts[1][e2][:, None, None, None] + np.arange(sizes[c][1])[None, None, :, None]
                i3 = starts[2][e3][:, None, None, None] + np.arange(sizes[c][2])[None, None, None, :]
                n1, n2, _ = comp_shapes[c]
                flat = (i1 + n1 * (i2 + n2 * i3)).transpose(0, 3, 2, 1).reshape(ch, L)
                gidx[:, off:off + L] = space.gmaps[p][c][flat]
                gsign[:, off:off + L] = space.signs[p][c][flat]
                off += L

            jac = geo.jac[sel]
            det = geo.det[sel]
            qw = geo.qweights[sel]
            C = np.einsum("eqai,eqaj->eqij", jac, jac)
            Ginv = np.linalg.inv(C)
            sK = qw / det / constants.mu0
            sM = qw * det * constants.eps0
            Kel = kernels.sym_triple_products(A_curl, np.ascontiguousarray(C),
                                              np.ascontiguousarray(sK))
            Mel = kernels.sym_triple_products(A_val, np.ascontiguousarray(Ginv),
                                              np.ascontiguousarray(sM))
            ss = gsign[:, :, None] * gsign[:, None, :]
            _scatter_coo(rows_k, cols_k, vals_k, gidx, Kel * ss)
            _scatter_coo(rows_m, cols_m, vals_m, gidx, Mel * ss)
    K = _finalize(rows_k, cols_k, vals_k, n)
    M = _finalize(rows_m, cols_m, vals_m, n)
    return K, M


def assemble_curl_curl(space: HcurlSpace, constants: PhysicalConstants = CONSTANTS,
                       quad_order=None):
    """Stiffness of the 1/mu0-weighted curl-curl form (symmetric PSD)."""
    return assemble_maxwell(space, constants, quad_order)[0]


def assemble_mass(space: HcurlSpace, constants: PhysicalConstants = CONSTANTS,
                  quad_order=None):
    """eps0-weighted vector mass matrix (symmetric PD on free DOFs)."""
    return assemble_maxwell(space, constants, quad_order)[1]


def _h1_patch_data(space: H1Space, p, quad_order=None):
    patch = space.geometry.patches[p]
    orders = _quad_orders(patch.degrees, quad_order)
    rule = QuadratureRule.for_kvs(patch.knot_vectors, orders)
    geo = PatchGeometryData(patch, rule)
    tabs = [_tabulate_kv(kv, rule.points[d], 1)
            for d, kv in enumerate(patch.knot_vectors)]
    return patch, rule, geo, tabs


def _h1_basis_chunk(space, p, patch, geo, tabs, sel):
    """Rational (or B-spline) values, reference gradients and local->global
    scalar indices for one chunk of elements."""
    e1, e2, e3 = geo.element_multi_index(sel)
    sizes = [kv.degree + 1 for kv in patch.knot_vectors]
    v = [tabs[d][1][0] for d in range(3)]
    dv = [tabs[d][1][1] for d in range(3)]
    B = _expand_products(v[0], v[1], v[2], e1, e2, e3)
    dB = np.stack([
        _expand_products(dv[0], v[1], v[2], e1, e2, e3),
        _expand_products(v[0], dv[1], v[2], e1, e2, e3),
        _expand_products(v[0], v[1], dv[2], e1, e2, e3),
    ], axis=-1)                                      # (ch, Q, L, 3)

    starts = [tabs[d][0] for d in range(3)]
    i1 = starts[0][e1][:, None, None, None] + np.arange(sizes[0])[None, :, None, None]
    i2 = starts[1][e2][:, None, None, None] + np.arange(sizes[1])[None, None, :, None]
    i3 = starts[2][e3][:, None, None, None] + np.arange(sizes[2])[None, None, None, :]
    n1, n2, _ = patch.shape
    ch = sel.size
    L = sizes[0] * sizes[1] * sizes[2]
    flat = (i1 + n1 * (i2 + n2 * i3)).transpose(0, 3, 2, 1).reshape(ch, L)
    gidx = space.gmaps[p][flat]

    if space.rational:
        wloc = space.patch_weights(p)[flat]          # (ch, L)
        W = geo.weight_fn[sel]
        gradW = geo.grad_weight[sel]
        R = B * wloc[:, None, :] / W[:, :, None]
        dR = (dB * wloc[:, None, :, None]
              - R[..., None] * gradW[:, :, None, :]) / W[:, :, None, None]
    else:
        R = B
        dR = dB
    return R, dR, gidx


def assemble_elasticity(space: H1Space, eta: float, lam: float,
                        quad_order=None):
    """Linear isotropic elasticity stiffness on the vector H1 space.

    Vector DOFs are interleaved: dof = 3 * scalar_dof + component.
    """
    if space.n_components != 3:
        raise ValueError("elasticity needs a 3-component space")
    if eta <= 0 or lam < -2.0 / 3.0 * eta:
        raise ValueError("Lame parameters violate stability bounds")
    kernels = _kernels.active
    n = space.n_dofs
    rows, cols, vals = [], [], []
    for p in range(space.geometry.n_patches):
        patch, rule, geo, tabs = _h1_patch_data(space, p, quad_order)
        E = geo.qweights.shape[0]
        for lo in range(0, E, _CHUNK):
            sel = np.arange(lo, min(lo + _CHUNK, E))
            R, dR, gidx = _h1_basis_chunk(space, p, patch, geo, tabs, sel)
            jac_inv = np.linalg.inv(geo.jac[sel])
            grads = np.einsum("eqji,eqlj->eqli", jac_inv, dR)
            s = geo.qweights[sel] * geo.det[sel]
            Kel = kernels.elasticity_blocks(np.ascontiguousarray(grads),
                                            np.ascontiguousarray(s), eta, lam)
            gvec = (3 * gidx[:, :, None] + np.arange(3)[None, None, :]).reshape(
                gidx.shape[0], -1)
            _scatter_coo(rows, cols, vals, gvec, Kel)
    return _finalize(rows, cols, vals, n)


def face_quadrature(patch, face, quad_order=None):
    """Quadrature data on one patch face.

    Returns (params, points, normals, dS, qweights) where ``params`` are the
    (m, 2) face parameters, ``normals`` the unit outward normals and ``dS``
    the surface Jacobian.
    """
    du, dv = face_axes(face)
    axis, side = face // 2, face % 2
    orders3 = _quad_orders(patch.degrees, quad_order)
    kv_u, kv_v = patch.knot_vectors[du], patch.knot_vectors[dv]
    rule = QuadratureRule.for_kvs((kv_u, kv_v), (orders3[du], orders3[dv]))
    pu = rule.points[0].ravel()
    pv = rule.points[1].ravel()
    wu = rule.weights[0].ravel()
    wv = rule.weights[1].ravel()
    U, V = np.meshgrid(pu, pv, indexing="ij")
    Wq = np.outer(wu, wv)
    params = np.column_stack([U.ravel(), V.ravel()])
    m = params.shape[0]
    points = np.empty((m, 3))
    normals = np.empty((m, 3))
    dS = np.empty(m)
    for i, (s, t) in enumerate(params):
        xh = np.empty(3)
        xh[axis] = float(side)
        xh[du], xh[dv] = s, t
        pt, jac = patch.eval(xh)
        raw = np.cross(jac[:, du], jac[:, dv])
        nrm = np.linalg.norm(raw)
        sign = 1.0 if side == 1 else -1.0
        if np.dot(raw, jac[:, axis]) * sign < 0:
            raw = -raw
        points[i] = pt
        normals[i] = raw / nrm
        dS[i] = nrm
    return params, points, normals, dS, Wq.ravel()


def assemble_pressure_load(space: H1Space, faces, pressure_fn, quad_order=None):
    """Surface load f[(i, comp)] = int_face p (n . e_comp) N_i dS.

    ``n`` is the outward unit normal of the space's own geometry on each
    face.  ``pressure_fn(points, patch, face, params)`` returns the pressure
    at the face quadrature points.
    """
    if space.n_components != 3:
        raise ValueError("pressure loads act on a 3-component space")
    f = np.zeros(space.n_dofs)
    tagged = set(space.geometry.boundary_tags)
    for (p, face) in faces:
        if (p, face) not in tagged:
            raise ValueError("face (%d,%d) is not an exterior face of the "
                             "geometry" % (p, face))
        patch = space.geometry.patches[p]
        params, points, normals, dS, qw = face_quadrature(patch, face, quad_order)
        pvals = np.asarray(pressure_fn(points, p, face, params), dtype=float)

        du, dv = face_axes(face)
        kv_u, kv_v = patch.knot_vectors[du], patch.knot_vectors[dv]
        m = params.shape[0]
        su, tu = basis_table(kv_u, params[:, 0], 0)
        sv, tv = basis_table(kv_v, params[:, 1], 0)
        Lu, Lv = kv_u.degree + 1, kv_v.degree + 1
        face_idx = _face_scalar_indices(patch, face)
        wflat = space.patch_weights(p)
        Bu = tu[0].reshape(m, Lu)
        Bv = tv[0].reshape(m, Lv)
        lu = (su - kv_u.degree)[:, None] + np.arange(Lu)[None, :]
        lv = (sv - kv_v.degree)[:, None] + np.arange(Lv)[None, :]
        B2 = Bu[:, :, None] * Bv[:, None, :]                     # (m, Lu, Lv)
        lidx = face_idx[lu[:, :, None], lv[:, None, :]]          # (m, Lu, Lv)
        wloc = wflat[lidx]
        Wq = np.einsum("mij->m", B2 * wloc) if space.rational else np.ones(m)
        R = B2 * wloc / Wq[:, None, None] if space.rational else B2
        coef = (pvals * dS * qw)[:, None, None] * R              # (m, Lu, Lv)
        g = space.gmaps[p][lidx]
        for comp in range(3):
            np.add.at(f, 3 * g.ravel() + comp,
                      (coef * normals[:, comp][:, None, None]).ravel())
    return f


def _face_scalar_indices(patch, face):
    """(nu, nv) grid of patch-local flat indices on one face."""
    n1, n2, n3 = patch.shape
    idx = np.arange(n1 * n2 * n3).reshape(n3, n2, n1).transpose(2, 1, 0)
    axis, side = face // 2, face % 2
    sl = [slice(None)] * 3
    sl[axis] = 0 if side == 0 else patch.shape[axis] - 1
    return idx[tuple(sl)]


def export_matrix_market(matrix, path):
    """Write a sparse operator in Matrix Market coordinate format."""
    from scipy.io import mmwrite

    mmwrite(str(path), sp.coo_matrix(matrix))
