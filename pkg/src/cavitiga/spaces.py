"""Discrete spaces on multipatch geometries.

Two families are built here:

* ``H1Space`` — value-continuous scalar/vector spaces.  With ``rational=True``
  the basis is the geometry's own NURBS basis (isoparametric, used by the
  elasticity solve); with ``rational=False`` it is the underlying B-spline
  basis (used as the scalar head of the discrete de Rham sequence).
* ``HcurlSpace`` — tangentially continuous vector space whose component c
  lowers the degree (and regularity) in direction c, pushed forward through
  the covariant transform.

Multipatch coupling is by DOF identification: matched face DOFs share one
global index, with a sign for curl-conforming components whose reference
direction is reversed across the interface.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import EvaluationError, GeometryError
from .geometry import (
    MultipatchGeometry,
    face_axes,
    orientation_direction_map,
    orient_grid,
)
from .splines import KnotVector, eval_basis

__all__ = [
    "H1Space",
    "HcurlSpace",
    "DiscreteGradient",
    "build_h1_space",
    "build_hcurl_space",
    "build_discrete_gradient",
    "push_forward_h1",
    "push_forward_hcurl",
]


class _SignedUnionFind:
    """Union-find over integers where each node carries a +-1 sign to its
    parent (node value = sign * parent value)."""

    def __init__(self, n):
        self.parent = np.arange(n)
        self.sign = np.ones(n, dtype=np.int8)

    def find(self, i):
        path = []
        while self.parent[i] != i:
            path.append(i)
            i = self.parent[i]
        root = i
        # compress, nearest-to-root first, accumulating signs to the root
        for j in reversed(path):
            p = self.parent[j]
            if p != root:
                self.sign[j] = self.sign[j] * self.sign[p]
            self.parent[j] = root
        s = int(self.sign[path[0]]) if path else 1
        return root, s

    def union(self, a, b, rel_sign):
        # enforce x_a = rel_sign * x_b
        ra, sa = self.find(a)
        rb, sb = self.find(b)
        if ra == rb:
            if sa != rel_sign * sb:
                raise GeometryError("inconsistent interface orientation signs")
            return
        self.parent[rb] = ra
        self.sign[rb] = sa * rel_sign * sb


def _local_grid_indices(shape):
    """Flat local indices arranged as an (n1, n2, n3) grid (i1 fastest)."""
    n1, n2, n3 = shape
    idx = np.arange(n1 * n2 * n3).reshape(n3, n2, n1).transpose(2, 1, 0)
    return idx


def _face_index_grid(shape, face):
    """Local flat indices of the face lattice, axes (u, v)."""
    idx = _local_grid_indices(shape)
    axis, side = face // 2, face % 2
    sl = [slice(None)] * 3
    sl[axis] = 0 if side == 0 else shape[axis] - 1
    return idx[tuple(sl)]


def _boundary_layer_indices(shape, face):
    """All local flat indices whose basis function is supported on the face."""
    return _face_index_grid(shape, face).ravel()


def _component_kvs(geometry_kvs, component):
    """Knot vectors of one curl-conforming component (degree drop in its own
    direction, realized as the derivative-space knot vector)."""
    return tuple(kv.reduce_degree_vector() if d == component else kv
                 for d, kv in enumerate(geometry_kvs))


@dataclass(frozen=True)
class H1Space:
    """Value-continuous space; DOFs are glued control-point coefficients."""

    geometry: MultipatchGeometry
    n_components: int
    rational: bool
    gmaps: tuple                    # per patch: (n_local,) global scalar index
    n_scalar: int
    dirichlet: np.ndarray           # constrained vector DOFs (scalar*ncomp+comp)
    dirichlet_tags: tuple

    @property
    def n_dofs(self):
        return self.n_scalar * self.n_components

    @property
    def free(self):
        mask = np.ones(self.n_dofs, dtype=bool)
        mask[self.dirichlet] = False
        return np.nonzero(mask)[0]

    def patch_kvs(self, p):
        return self.geometry.patches[p].knot_vectors

    def patch_weights(self, p):
        patch = self.geometry.patches[p]
        return patch.weights if self.rational else np.ones(patch.weights.size)

    def dof_positions(self):
        """Representative control-point position of every scalar DOF."""
        pos = np.zeros((self.n_scalar, 3))
        for p, patch in enumerate(self.geometry.patches):
            pos[self.gmaps[p]] = patch.control_points
        return pos

    def per_patch_coefficients(self, coeffs):
        """Scatter glued (n_scalar, ncomp) coefficients to per-patch arrays."""
        coeffs = np.asarray(coeffs, dtype=float).reshape(self.n_scalar, -1)
        return [coeffs[g] for g in self.gmaps]


@dataclass(frozen=True)
class HcurlSpace:
    """Tangentially continuous space for the Maxwell eigenproblem."""

    geometry: MultipatchGeometry
    degrees: tuple
    gmaps: tuple                    # per patch, per component: global index
    signs: tuple                    # per patch, per component: +-1 float
    n_dofs: int
    pec: np.ndarray                 # tangential-trace-constrained global DOFs
    pec_tags: tuple

    @property
    def free(self):
        mask = np.ones(self.n_dofs, dtype=bool)
        mask[self.pec] = False
        return np.nonzero(mask)[0]

    def component_kvs(self, p):
        return [(_component_kvs(self.geometry.patches[p].knot_vectors, c))
                for c in range(3)]

    def component_shapes(self, p):
        return [tuple(kv.n_basis for kv in kvs) for kvs in self.component_kvs(p)]

    def patch_gidx(self, p):
        """Concatenated (global index, sign) arrays in kernel local ordering."""
        g = np.concatenate(self.gmaps[p])
        s = np.concatenate(self.signs[p])
        return g, s


def _resolve_dirichlet(tags):
    if tags is None:
        return {}
    if isinstance(tags, dict):
        return {t: tuple(c) for t, c in tags.items()}
    return {t: None for t in tags}


def build_h1_space(geometry: MultipatchGeometry, n_components=1,
                   dirichlet_tags=(), rational=True) -> H1Space:
    """Isoparametric (or B-spline) value-continuous space with C0 gluing."""
    shapes = [p.shape for p in geometry.patches]
    offsets = np.concatenate([[0], np.cumsum([int(np.prod(s)) for s in shapes])])
    uf = _SignedUnionFind(offsets[-1])

    for itf in geometry.interfaces:
        ga = _face_index_grid(shapes[itf.patch_a], itf.face_a) + offsets[itf.patch_a]
        gb = _face_index_grid(shapes[itf.patch_b], itf.face_b) + offsets[itf.patch_b]
        gb = orient_grid(gb, itf.orientation)
        if ga.shape != gb.shape:
            raise GeometryError("interface lattices do not align")
        for a, b in zip(ga.ravel(), gb.ravel()):
            uf.union(int(a), int(b), 1)

    gnum = -np.ones(offsets[-1], dtype=np.int64)
    n = 0
    for i in range(offsets[-1]):
        root, _ = uf.find(i)
        if gnum[root] < 0:
            gnum[root] = n
            n += 1
        gnum[i] = gnum[root]
    gmaps = tuple(gnum[offsets[p]:offsets[p + 1]] for p in range(len(shapes)))

    dtags = _resolve_dirichlet(dirichlet_tags)
    constrained = set()
    for (p, f), tag in geometry.boundary_tags.items():
        if tag not in dtags:
            continue
        comps = dtags[tag]
        comps = range(n_components) if comps is None else comps
        for l in _boundary_layer_indices(shapes[p], f):
            g = gmaps[p][l]
            for c in comps:
                constrained.add(int(g) * n_components + int(c))
    dirichlet = np.array(sorted(constrained), dtype=np.int64)
    return H1Space(geometry, n_components, rational, gmaps, n,
                   dirichlet, tuple(sorted(dtags)))


def build_hcurl_space(geometry: MultipatchGeometry, degrees=None,
                      pec_tags=()) -> HcurlSpace:
    """Curl-conforming space glued with orientation signs across interfaces.

    The space lives on the geometry's knot vectors; ``degrees`` (if given)
    must match them — refine the geometry first to change resolution.
    """
    geo_degrees = geometry.patches[0].degrees
    for patch in geometry.patches:
        if patch.degrees != geo_degrees:
            raise GeometryError("patches must share degrees for a glued space")
    if degrees is not None and tuple(degrees) != tuple(geo_degrees):
        raise GeometryError("requested degrees must match the geometry; "
                            "use refine_model to change them")
    if min(geo_degrees) < 1:
        raise ValueError("curl-conforming spaces need degree >= 1")

    comp_shapes = []
    for patch in geometry.patches:
        comp_shapes.append([tuple(kv.n_basis for kv in _component_kvs(patch.knot_vectors, c))
                            for c in range(3)])
    sizes = [[int(np.prod(s)) for s in cs] for cs in comp_shapes]
    offsets = []
    total = 0
    for p in range(len(comp_shapes)):
        offs = []
        for c in range(3):
            offs.append(total)
            total += sizes[p][c]
        offsets.append(offs)

    uf = _SignedUnionFind(total)
    for itf in geometry.interfaces:
        pa, fa, pb, fb = itf.patch_a, itf.face_a, itf.patch_b, itf.face_b
        axes_a = face_axes(fa)
        axes_b = face_axes(fb)
        dirmap = orientation_direction_map(itf.orientation)
        for k, ca in enumerate(axes_a):
            bdir, rev = dirmap[k]
            cb = axes_b[bdir]
            sign = -1 if rev else 1
            ia = _face_index_grid(comp_shapes[pa][ca], fa) + offsets[pa][ca]
            ib = _face_index_grid(comp_shapes[pb][cb], fb) + offsets[pb][cb]
            ib = orient_grid(ib, itf.orientation)
            if ia.shape != ib.shape:
                raise GeometryError("interface component lattices do not align")
            for a, b in zip(ia.ravel(), ib.ravel()):
                uf.union(int(a), int(b), sign)

    gnum = -np.ones(total, dtype=np.int64)
    gsign = np.zeros(total)
    n = 0
    for i in range(total):
        root, s = uf.find(i)
        if gnum[root] < 0:
            gnum[root] = n
            n += 1
        gnum[i] = gnum[root]
        gsign[i] = s

    gmaps, signs = [], []
    for p in range(len(comp_shapes)):
        gm, sg = [], []
        for c in range(3):
            lo = offsets[p][c]
            hi = lo + sizes[p][c]
            gm.append(gnum[lo:hi])
            sg.append(gsign[lo:hi])
        gmaps.append(tuple(gm))
        signs.append(tuple(sg))

    pec_tags = tuple(pec_tags)
    constrained = set()
    for (p, f), tag in geometry.boundary_tags.items():
        if tag not in pec_tags:
            continue
        axis = f // 2
        for c in range(3):
            if c == axis:
                continue
            for l in _boundary_layer_indices(comp_shapes[p][c], f):
                constrained.add(int(gmaps[p][c][l]))
    pec = np.array(sorted(constrained), dtype=np.int64)
    return HcurlSpace(geometry, geo_degrees, tuple(gmaps), tuple(signs),
                      n, pec, pec_tags)


# ---------------------------------------------------------------------------
# Point evaluation (push-forwards)
# ---------------------------------------------------------------------------


def _local_tensor_block(kvs, xhat, nders):
    """Per-direction basis evaluations and the local multi-index window."""
    bes = [eval_basis(kv, float(xhat[d]), nders) for d, kv in enumerate(kvs)]
    los = [be.span_index - kv.degree for be, kv in zip(bes, kvs)]
    return bes, los


def _gather_local(flat_array, shape, los, sizes):
    grid = flat_array.reshape(shape[2], shape[1], shape[0]).transpose(2, 1, 0)
    return grid[los[0]:los[0] + sizes[0], los[1]:los[1] + sizes[1],
                los[2]:los[2] + sizes[2]]


def push_forward_h1(space: H1Space, patch_idx: int, xhat, coeffs,
                    want_grad=False):
    """Evaluate the H1 field at one reference point of one patch.

    ``coeffs`` has shape (n_scalar,) or (n_scalar, n_components); the
    gradient (if requested) is the physical one.
    """
    patch = space.geometry.patches[patch_idx]
    kvs = patch.knot_vectors
    coeffs = np.asarray(coeffs, dtype=float).reshape(space.n_scalar, -1)
    bes, los = _local_tensor_block(kvs, xhat, 1)
    sizes = [kv.degree + 1 for kv in kvs]
    w = _gather_local(space.patch_weights(patch_idx), patch.shape, los, sizes)
    cl = _gather_local(space.gmaps[patch_idx], patch.shape, los, sizes)
    c = coeffs[cl]               # (s1, s2, s3, ncomp)

    def tensor(d1, d2, d3, values):
        return np.einsum("i,j,k,ijk...->...", bes[0].derivatives[d1],
                         bes[1].derivatives[d2], bes[2].derivatives[d3], values)

    W = tensor(0, 0, 0, w)
    val = tensor(0, 0, 0, w[..., None] * c) / W
    if not want_grad:
        return val
    _, jac = patch.eval(xhat)
    grad_ref = np.empty((3, c.shape[-1]))
    for d in range(3):
        sel = tuple(1 if e == d else 0 for e in range(3))
        dW = tensor(*sel, w)
        dA = tensor(*sel, w[..., None] * c)
        grad_ref[d] = (dA - dW * val) / W
    grad_phys = np.linalg.solve(jac.T, grad_ref)     # J^{-T} acting per column
    return val, grad_phys.T


def push_forward_hcurl(space: HcurlSpace, patch_idx: int, xhat, coeffs,
                       want_curl=False):
    """Covariant push-forward of the Hcurl field at one reference point.

    Returns the physical vector (and physical curl when requested).
    """
    patch = space.geometry.patches[patch_idx]
    comp_kvs = space.component_kvs(patch_idx)
    comp_shapes = space.component_shapes(patch_idx)
    coeffs = np.asarray(coeffs, dtype=float).ravel()

    ref_val = np.zeros(3)
    ref_der = np.zeros((3, 3))      # ref_der[d, c] = d_dir-derivative of comp c
    for c in range(3):
        kvs = comp_kvs[c]
        bes, los = _local_tensor_block(kvs, xhat, 1)
        sizes = [kv.degree + 1 for kv in kvs]
        gl = _gather_local(space.gmaps[patch_idx][c], comp_shapes[c], los, sizes)
        sl = _gather_local(space.signs[patch_idx][c], comp_shapes[c], los, sizes)
        cl = coeffs[gl] * sl
        ref_val[c] = np.einsum("i,j,k,ijk->", bes[0].derivatives[0],
                               bes[1].derivatives[0], bes[2].derivatives[0], cl)
        for d in range(3):
            sel = tuple(1 if e == d else 0 for e in range(3))
            ref_der[d, c] = np.einsum("i,j,k,ijk->", bes[0].derivatives[sel[0]],
                                      bes[1].derivatives[sel[1]],
                                      bes[2].derivatives[sel[2]], cl)

    _, jac = patch.eval(xhat)
    det = np.linalg.det(jac)
    if abs(det) < 1e-300:
        raise EvaluationError("singular geometry Jacobian at evaluation point")
    value = np.linalg.solve(jac.T, ref_val)
    if not want_curl:
        return value
    curl_ref = np.array([ref_der[1, 2] - ref_der[2, 1],
                         ref_der[2, 0] - ref_der[0, 2],
                         ref_der[0, 1] - ref_der[1, 0]])
    curl = jac @ curl_ref / det
    return value, curl


# ---------------------------------------------------------------------------
# Discrete gradient
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DiscreteGradient:
    """Sparse map G with grad(H1 field of phi) == Hcurl field of G phi."""

    matrix: sp.csr_matrix
    h1: H1Space
    hcurl: HcurlSpace


def _derivative_1d(kv: KnotVector) -> sp.csr_matrix:
    """1D spline differentiation: coefficients of d/dx in the reduced basis."""
    p = kv.degree
    n = kv.n_basis
    kn = kv.knots
    rows, cols, vals = [], [], []
    for j in range(n - 1):
        c = p / (kn[j + 1 + p] - kn[j + 1])
        rows += [j, j]
        cols += [j, j + 1]
        vals += [-c, c]
    return sp.csr_matrix((vals, (rows, cols)), shape=(n - 1, n))


def build_discrete_gradient(h1: H1Space, hcurl: HcurlSpace) -> DiscreteGradient:
    """Assemble G: scalar B-spline coefficients -> curl-conforming coefficients."""
    if h1.rational:
        raise GeometryError("discrete gradient needs the B-spline scalar space")
    if h1.n_components != 1:
        raise GeometryError("discrete gradient needs a scalar H1 space")
    if h1.geometry is not hcurl.geometry:
        for pa, pb in zip(h1.geometry.patches, hcurl.geometry.patches):
            if pa.degrees != pb.degrees or any(
                    a.n_basis != b.n_basis or np.abs(a.knots - b.knots).max() > 1e-14
                    for a, b in zip(pa.knot_vectors, pb.knot_vectors)):
                raise GeometryError("spaces live on different discretizations")

    written = np.zeros(hcurl.n_dofs, dtype=bool)
    rows, cols, vals = [], [], []
    for p, patch in enumerate(h1.geometry.patches):
        kvs = patch.knot_vectors
        n1, n2, n3 = patch.shape
        D = [_derivative_1d(kv) for kv in kvs]
        I = [sp.identity(n, format="csr") for n in (n1, n2, n3)]
        local = [sp.kron(I[2], sp.kron(I[1], D[0])).tocoo(),
                 sp.kron(I[2], sp.kron(D[1], I[0])).tocoo(),
                 sp.kron(D[2], sp.kron(I[1], I[0])).tocoo()]
        for c in range(3):
            g_rows = hcurl.gmaps[p][c]
            s_rows = hcurl.signs[p][c]
            g_cols = h1.gmaps[p]
            L = local[c]
            keep = ~written[g_rows[L.row]]
            rows.append(g_rows[L.row[keep]])
            cols.append(g_cols[L.col[keep]])
            vals.append(L.data[keep] * s_rows[L.row[keep]])
            written[g_rows[L.row]] = True
    G = sp.csr_matrix((np.concatenate(vals),
                       (np.concatenate(rows), np.concatenate(cols))),
                      shape=(hcurl.n_dofs, h1.n_scalar))
    G.sum_duplicates()
    return DiscreteGradient(G, h1, hcurl)
