"""Multipatch cavity/wall geometries, interface topology and boundary tags.

A cavity model bundles two multipatch volumes: the vacuum region (where the
eigenproblem lives) and the surrounding wall shell (where the elasticity
problem lives), plus the face coupling between them.

Face numbering: face = 2*axis + side with side 0 at parameter 0 and side 1
at parameter 1.  A face interface stores an orientation code 0..7 encoding
(swap, flip_u, flip_v) needed to align the second patch's face grid with the
first's.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import GeometryError, NonconformingGeometryError
from .splines import (
    KnotVector,
    NurbsCurve,
    NurbsPatch,
    elevate_patch_to,
    subdivide_patch,
)

__all__ = [
    "Interface",
    "MultipatchGeometry",
    "CavityModel",
    "PEC_WALL",
    "IRIS",
    "FIXED",
    "FREE",
    "detect_interfaces",
    "displace",
    "make_pillbox",
    "make_revolved_cell",
    "demo_cell_profile",
    "refine_model",
]

PEC_WALL = "pec_wall"   # electromagnetic wall, coupled to the shell where matched
IRIS = "iris"           # natural (Neumann) electromagnetic boundary
FIXED = "fixed"         # mechanically constrained wall boundary
FREE = "free"           # traction-free wall boundary

MATCH_TOL = 1e-10


def face_axes(face):
    axis = face // 2
    return tuple(d for d in range(3) if d != axis)


def face_hom_grid(patch: NurbsPatch, face: int):
    """Homogeneous control net of one face, axes (u, v, comp)."""
    grid = patch.hom_grid()
    axis, side = face // 2, face % 2
    idx = [slice(None)] * 3
    idx[axis] = 0 if side == 0 else grid.shape[axis] - 1
    return grid[tuple(idx)]


def face_knot_vectors(patch: NurbsPatch, face: int):
    du, dv = face_axes(face)
    return patch.knot_vectors[du], patch.knot_vectors[dv]


def _mirror_knots(kv: KnotVector) -> KnotVector:
    return KnotVector(1.0 - kv.knots[::-1], kv.degree)


def orient_grid(grid, orientation):
    """Apply an orientation code to a face grid (first two axes)."""
    g = grid
    if orientation & 4:
        g = np.swapaxes(g, 0, 1)
    if orientation & 2:
        g = g[::-1, :]
    if orientation & 1:
        g = g[:, ::-1]
    return g


def orientation_direction_map(orientation):
    """For each aligned face direction (u, v) of patch A, the matched face
    direction of patch B and whether it is reversed.

    Returns ((b_dir_for_u, rev_u), (b_dir_for_v, rev_v)) with directions 0/1
    meaning the B-face's own (u, v).
    """
    swap = bool(orientation & 4)
    rev_u = bool(orientation & 2)
    rev_v = bool(orientation & 1)
    if swap:
        return ((1, rev_u), (0, rev_v))
    return ((0, rev_u), (1, rev_v))


def map_face_param(orientation, s, t):
    """Map aligned face parameters (patch A convention) to B-face parameters."""
    if orientation & 2:
        s = 1.0 - s
    if orientation & 1:
        t = 1.0 - t
    if orientation & 4:
        return t, s
    return s, t


def face_param_to_volume(face, s, t):
    axis, side = face // 2, face % 2
    du, dv = face_axes(face)
    xh = np.empty(3)
    xh[axis] = float(side)
    xh[du] = s
    xh[dv] = t
    return xh


@dataclass(frozen=True)
class Interface:
    patch_a: int
    face_a: int
    patch_b: int
    face_b: int
    orientation: int


def _faces_match(patch_a, face_a, patch_b, face_b, tol):
    """Return the orientation code aligning the two faces, or None."""
    kva_u, kva_v = face_knot_vectors(patch_a, face_a)
    kvb_u, kvb_v = face_knot_vectors(patch_b, face_b)
    ga = face_hom_grid(patch_a, face_a)
    gb = face_hom_grid(patch_b, face_b)
    # compare physical points plus weights
    pa = np.concatenate([ga[..., :3] / ga[..., 3:], ga[..., 3:]], axis=-1)
    pb = np.concatenate([gb[..., :3] / gb[..., 3:], gb[..., 3:]], axis=-1)
    for orientation in range(8):
        swap = bool(orientation & 4)
        bu, bv = (kvb_v, kvb_u) if swap else (kvb_u, kvb_v)
        if orientation & 2:
            bu = _mirror_knots(bu)
        if orientation & 1:
            bv = _mirror_knots(bv)
        if bu.degree != kva_u.degree or bv.degree != kva_v.degree:
            continue
        if bu.n_basis != kva_u.n_basis or bv.n_basis != kva_v.n_basis:
            continue
        if (np.abs(bu.knots - kva_u.knots).max() > 1e-12
                or np.abs(bv.knots - kva_v.knots).max() > 1e-12):
            continue
        pb_al = orient_grid(pb, orientation)
        if pb_al.shape == pa.shape and np.abs(pb_al - pa).max() <= tol:
            return orientation
    return None


def _face_corners(patch, face):
    g = face_hom_grid(patch, face)
    pts = g[..., :3] / g[..., 3:]
    return pts[[0, 0, -1, -1], [0, -1, 0, -1]]


def detect_interfaces(patches, tol=MATCH_TOL):
    """Find all conforming full-face matches between distinct patches."""
    interfaces = []
    used = {}
    n = len(patches)
    for pa in range(n):
        for fa in range(6):
            for pb in range(pa + 1, n):
                for fb in range(6):
                    orientation = _faces_match(patches[pa], fa, patches[pb], fb, tol)
                    if orientation is None:
                        # diagnose partially matching faces: identical corner
                        # sets without a full control-net match
                        ca = _face_corners(patches[pa], fa)
                        cb = _face_corners(patches[pb], fb)
                        close = [np.min(np.linalg.norm(cb - c, axis=1)) < tol for c in ca]
                        if all(close) and ca.shape == cb.shape:
                            raise NonconformingGeometryError(
                                "faces (%d,%d) and (%d,%d) share corners but their "
                                "control nets do not match" % (pa, fa, pb, fb))
                        continue
                    for key in ((pa, fa), (pb, fb)):
                        if key in used:
                            raise NonconformingGeometryError(
                                "face %s matches more than one neighbour" % (key,))
                    used[(pa, fa)] = used[(pb, fb)] = True
                    interfaces.append(Interface(pa, fa, pb, fb, orientation))
    return interfaces


@dataclass(frozen=True)
class MultipatchGeometry:
    """Conforming multipatch volume with interface topology and face tags."""

    patches: tuple
    interfaces: tuple = None
    boundary_tags: dict = field(default_factory=dict)
    direction_classes: tuple = None   # per patch, 3 class labels for refinement
    axis_patch: int = None            # patch containing the beam axis, if any
    axis_uv: tuple = (0.5, 0.5)

    def __post_init__(self):
        patches = tuple(self.patches)
        object.__setattr__(self, "patches", patches)
        if self.interfaces is None:
            object.__setattr__(self, "interfaces", tuple(detect_interfaces(patches)))
        else:
            object.__setattr__(self, "interfaces", tuple(self.interfaces))
        if self.direction_classes is None:
            object.__setattr__(self, "direction_classes",
                               tuple(("u", "v", "w") for _ in patches))
        tags = dict(self.boundary_tags)
        interior = {(i.patch_a, i.face_a) for i in self.interfaces}
        interior |= {(i.patch_b, i.face_b) for i in self.interfaces}
        for key in interior:
            tags.pop(key, None)
        for p in range(len(patches)):
            for f in range(6):
                if (p, f) not in interior and (p, f) not in tags:
                    raise GeometryError("exterior face (%d,%d) carries no tag" % (p, f))
        object.__setattr__(self, "boundary_tags", tags)

    @property
    def n_patches(self):
        return len(self.patches)

    def exterior_faces(self, tag=None):
        if tag is None:
            return sorted(self.boundary_tags)
        return sorted(k for k, v in self.boundary_tags.items() if v == tag)

    def check_jacobians(self, samples=4):
        """Verify det DF > 0 on a sample lattice of every patch."""
        for idx, patch in enumerate(self.patches):
            dets = sample_jacobian_dets(patch, samples)
            if dets.min() <= 0:
                raise GeometryError("non-positive Jacobian in patch %d" % idx)
        return True


def sample_jacobian_dets(patch, samples=4):
    grids = [np.linspace(0.02, 0.98, samples) for _ in range(3)]
    dets = np.empty((samples,) * 3)
    for i, u in enumerate(grids[0]):
        for j, v in enumerate(grids[1]):
            for k, w in enumerate(grids[2]):
                _, jac = patch.eval([u, v, w])
                dets[i, j, k] = np.linalg.det(jac)
    return dets


def displace(geometry: MultipatchGeometry, per_patch_disp) -> MultipatchGeometry:
    """New geometry with control points moved by the given per-patch arrays.

    ``per_patch_disp[p]`` must have shape (n_control_points_of_patch, 3);
    weights are unchanged.  Displacements coming from a glued space are
    identical on matched faces, so interface matching is preserved exactly.
    """
    new_patches = []
    for patch, disp in zip(geometry.patches, per_patch_disp):
        disp = np.asarray(disp, dtype=float).reshape(-1, 3)
        if disp.shape[0] != patch.control_points.shape[0]:
            raise ValueError("displacement array does not match the control net")
        new_patches.append(NurbsPatch(patch.degrees, patch.knot_vectors,
                                      patch.control_points + disp, patch.weights))
    return replace(geometry, patches=tuple(new_patches),
                   interfaces=geometry.interfaces)


@dataclass(frozen=True)
class CavityModel:
    """Cavity vacuum + wall shell with the face coupling between them.

    ``coupling`` maps cavity PEC faces to coincident wall faces:
    (cavity_patch, cavity_face, wall_patch, wall_face, orientation).
    ``wall_fixed_components``: displacement components constrained to zero on
    FIXED wall faces.  ``wall_symmetry_pins``: if True, control points lying
    on the x=0 / y=0 planes get their normal in-plane component pinned, which
    removes the rigid rotation left by component-wise end constraints.
    """

    cavity: MultipatchGeometry
    wall: MultipatchGeometry
    coupling: tuple
    wall_fixed_components: tuple = (0, 1, 2)
    wall_symmetry_pins: bool = False
    name: str = "cavity"

    def coupled_cavity_faces(self):
        return [(c[0], c[1]) for c in self.coupling]

    def coupled_wall_faces(self):
        return [(c[2], c[3]) for c in self.coupling]


def detect_coupling(cavity: MultipatchGeometry, wall: MultipatchGeometry,
                    tol=MATCH_TOL):
    """Match cavity PEC faces with coincident wall faces."""
    pairs = []
    for (pc, fc) in cavity.exterior_faces(PEC_WALL):
        for (pw, fw) in wall.exterior_faces(PEC_WALL):
            orientation = _faces_match(cavity.patches[pc], fc,
                                       wall.patches[pw], fw, tol)
            if orientation is not None:
                pairs.append((pc, fc, pw, fw, orientation))
                break
    return tuple(pairs)


# ---------------------------------------------------------------------------
# Constructors: square-core disk cross-section revolved/extruded along z.
#
# The cross-section uses 5 patches: a central affine "diamond" (which keeps
# the beam axis interior to a single smooth patch) and 4 rational ring
# patches carrying exact quarter arcs between the coordinate axes.
# ---------------------------------------------------------------------------

_KV2 = KnotVector([0, 0, 0, 1, 1, 1], 2)
_KV1 = KnotVector([0, 0, 1, 1], 1)
_CORE_FRACTION = 0.5   # diamond half-diagonal as a fraction of the radius
_W_ARC = np.sqrt(0.5)


def _unit_disk_layout():
    """Homogeneous 2D nets of the 5-patch unit disk.

    Returns (central (3,3,3), rings [4 x (3,2,3)]) with hom coords (wx, wy, w).
    Ring u runs clockwise so that (u, outward radial) is right-handed with z.
    """
    a = _CORE_FRACTION
    corners = np.array([[a, 0.0], [0.0, a], [-a, 0.0], [0.0, -a]])

    # central diamond: affine map, degree (2,2) control points on the
    # Greville lattice images
    g = np.array([0.0, 0.5, 1.0])
    A = np.array([[a, -a], [a, a]])
    b = np.array([0.0, -a])
    central = np.empty((3, 3, 3))
    for i, u in enumerate(g):
        for j, v in enumerate(g):
            xy = A @ np.array([u, v]) + b
            central[i, j, :2] = xy
            central[i, j, 2] = 1.0

    rings = []
    for q in range(4):
        th1 = np.deg2rad(90.0 * (q + 1))   # u = 0 (start, clockwise)
        th0 = np.deg2rad(90.0 * q)         # u = 1 (end)
        thm = 0.5 * (th0 + th1)
        arc = np.array([
            [np.cos(th1), np.sin(th1), 1.0],
            [np.sqrt(2.0) * np.cos(thm), np.sqrt(2.0) * np.sin(thm), _W_ARC],
            [np.cos(th0), np.sin(th0), 1.0],
        ])
        arc[:, :2] *= arc[:, 2:]  # to homogeneous (wx, wy, w)
        c1 = corners[(q + 1) % 4]
        c0 = corners[q]
        inner = np.array([
            [c1[0], c1[1], 1.0],
            [0.5 * (c0[0] + c1[0]), 0.5 * (c0[1] + c1[1]), 1.0],
            [c0[0], c0[1], 1.0],
        ])
        net = np.empty((3, 2, 3))
        net[:, 0, :] = inner
        net[:, 1, :] = arc
        rings.append(net)
    return central, rings


def _cell_patch(net2d, kv_u, kv_v, profile: NurbsCurve, scale_rows=None):
    """Sweep a homogeneous 2D net along a (r, z) profile curve.

    Cross-section level k places the 2D net scaled by r_k at height z_k with
    weights multiplied by the profile weight; ``scale_rows`` optionally gives
    per-(level, v-row) replacement (radius, z) pairs for offset shells.
    """
    nu, nv, _ = net2d.shape
    nz = profile.kv.n_basis
    grid = np.empty((nu, nv, nz, 4))
    for k in range(nz):
        r_k, z_k = profile.control_points[k]
        w_k = profile.weights[k]
        for j in range(nv):
            if scale_rows is not None:
                r_k, z_k = scale_rows[k][j]
            grid[:, j, k, 0] = net2d[:, j, 0] * r_k * w_k
            grid[:, j, k, 1] = net2d[:, j, 1] * r_k * w_k
            grid[:, j, k, 2] = net2d[:, j, 2] * z_k * w_k
            grid[:, j, k, 3] = net2d[:, j, 2] * w_k
    degrees = (kv_u.degree, kv_v.degree, profile.kv.degree)
    return NurbsPatch.from_hom_grid(degrees, (kv_u, kv_v, profile.kv), grid)


def _profile_normals(profile: NurbsCurve):
    """Unit outward normals of the (r, z) profile at the Greville abscissae."""
    g = profile.kv.greville()
    normals = np.empty((g.size, 2))
    for k, t in enumerate(g):
        d = profile.eval(t, nders=1)[1]
        norm = np.hypot(d[0], d[1])
        if norm == 0:
            raise GeometryError("degenerate profile tangent")
        normals[k] = (d[1] / norm, -d[0] / norm)
    return normals


def _build_cell(profile: NurbsCurve, t_wall: float, end_tag: str,
                name: str) -> CavityModel:
    pts = profile.control_points
    if pts.shape[1] != 2:
        raise ValueError("profile must be a planar (r, z) curve")
    if np.any(pts[:, 0] <= 0):
        raise GeometryError("profile radius must stay positive")
    if np.any(np.diff(pts[:, 1]) <= 0):
        raise GeometryError("profile z must be strictly increasing")
    if t_wall <= 0:
        raise ValueError("wall thickness must be positive")

    central2d, rings2d = _unit_disk_layout()
    cav_patches = [_cell_patch(central2d, _KV2, _KV2, profile)]
    for net in rings2d:
        cav_patches.append(_cell_patch(net, _KV2, _KV1, profile))

    normals = _profile_normals(profile)
    outer = pts + t_wall * normals
    if np.any(outer[:, 0] <= 0) or np.any(np.diff(outer[:, 1]) <= 0):
        raise GeometryError("offset shell self-intersects (wall too thick)")
    wall_patches = []
    for net in rings2d:
        arc_only = net[:, 1:2, :]
        shell = np.concatenate([arc_only, arc_only], axis=1)
        rows = [((pts[k, 0], pts[k, 1]), (outer[k, 0], outer[k, 1]))
                for k in range(pts.shape[0])]
        wall_patches.append(_cell_patch(shell, _KV2, _KV1, profile, scale_rows=rows))

    cav_tags = {}
    for q in range(4):
        cav_tags[(1 + q, 3)] = PEC_WALL            # ring outer arc face (v = 1)
    for p in range(5):
        cav_tags[(p, 4)] = end_tag
        cav_tags[(p, 5)] = end_tag
    wall_tags = {}
    for q in range(4):
        wall_tags[(q, 2)] = PEC_WALL               # inner face (v = 0)
        wall_tags[(q, 3)] = FREE                   # outer face (v = 1)
        wall_tags[(q, 4)] = FIXED
        wall_tags[(q, 5)] = FIXED

    cav_classes = tuple([("cross", "cross", "axial")]
                        + [("cross", "radial", "axial")] * 4)
    wall_classes = tuple([("cross", "radial", "axial")] * 4)

    cavity = MultipatchGeometry(tuple(cav_patches), boundary_tags=cav_tags,
                                direction_classes=cav_classes, axis_patch=0)
    wall = MultipatchGeometry(tuple(wall_patches), boundary_tags=wall_tags,
                              direction_classes=wall_classes)
    cavity.check_jacobians()
    wall.check_jacobians()
    coupling = detect_coupling(cavity, wall)
    if len(coupling) != 4:
        raise GeometryError("expected 4 coupled wall faces, found %d" % len(coupling))
    return CavityModel(cavity, wall, coupling, name=name)


def make_pillbox(R: float, L: float, t_wall: float = 0.003) -> CavityModel:
    """Cylindrical pillbox cavity with a shell around the curved surface.

    All cavity boundary faces are PEC; only the curved surface is coupled to
    the mechanical shell (the flat ends are excluded from the mechanical
    domain).  The shell end rings constrain axial displacement only, with
    symmetry pins on the coordinate planes, so the static response is the
    plane-strain radial one.
    """
    if R <= 0 or L <= 0 or t_wall <= 0:
        raise ValueError("pillbox dimensions must be positive")
    profile = NurbsCurve(_KV1, np.array([[R, 0.0], [R, L]]), np.ones(2))
    model = _build_cell(profile, t_wall, PEC_WALL, "pillbox")
    return replace(model, wall_fixed_components=(2,), wall_symmetry_pins=True)


def make_revolved_cell(profile: NurbsCurve, t_wall: float = 0.003,
                       name: str = "cell") -> CavityModel:
    """Generic revolved single cell: iris (Neumann) ends, clamped shell rims."""
    return _build_cell(profile, t_wall, IRIS, name)


def demo_cell_profile(r_iris=0.035, r_equator=0.103, length=0.1146) -> NurbsCurve:
    """Smooth bump profile for a TESLA-like demonstration cell.

    This is *not* the published TESLA cell geometry, only a generic
    elliptical-arc-like profile with comparable proportions (fundamental
    mode near 1.3 GHz).
    """
    kv = KnotVector([0, 0, 0, 0.2, 0.4, 0.6, 0.8, 1, 1, 1], 2)
    z = np.array([0.0, 0.12, 0.34, 0.5, 0.66, 0.88, 1.0]) * length
    r = np.array([r_iris, 0.45 * r_iris + 0.55 * r_equator, 1.035 * r_equator,
                  1.035 * r_equator, 1.035 * r_equator,
                  0.45 * r_iris + 0.55 * r_equator, r_iris])
    return NurbsCurve(kv, np.column_stack([r, z]), np.ones(7))


def refine_model(model: CavityModel, degrees: int,
                 levels) -> CavityModel:
    """Degree elevate to the target degree and uniformly subdivide.

    ``levels`` is either an int (all direction classes) or a mapping from
    direction class ('cross', 'radial', 'axial') to subdivision count.
    Geometry is exact at every level (pure knot insertion / elevation).
    """
    if isinstance(levels, int):
        levels = {"cross": levels, "radial": levels, "axial": levels}

    def refine_geom(geom):
        new_patches = []
        for patch, classes in zip(geom.patches, geom.direction_classes):
            p = elevate_patch_to(patch, (degrees, degrees, degrees))
            p = subdivide_patch(p, tuple(levels.get(c, 0) for c in classes))
            new_patches.append(p)
        return replace(geom, patches=tuple(new_patches),
                       interfaces=tuple(detect_interfaces(new_patches)))

    cavity = refine_geom(model.cavity)
    wall = refine_geom(model.wall)
    coupling = detect_coupling(cavity, wall)
    if len(coupling) != len(model.coupling):
        raise GeometryError("coupling changed under refinement")
    return replace(model, cavity=cavity, wall=wall, coupling=coupling)
