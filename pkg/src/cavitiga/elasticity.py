"""Wall linear-elasticity solve under the radiation-pressure load.

The displacement space is isoparametric: the same rational basis as the wall
geometry, so the deformed wall is obtained by adding the solution directly to
the control net.

Sign convention: the pressure argument follows the radiation-pressure
formula (positive where the magnetic term dominates).  The traction applied
to the wall surface is p * m with m the unit normal pointing from the cavity
into the wall, i.e. positive pressure pushes the wall outward, away from the
cavity.  Since the load assembler uses the wall's own outward normal (which
points into the cavity on the coupled faces), the pressure enters negated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assembly import assemble_elasticity, assemble_pressure_load, face_quadrature
from .eigensolver import factorize
from .errors import WellPosednessError
from .geometry import FIXED, CavityModel
from .spaces import H1Space, build_h1_space

__all__ = [
    "Material",
    "DisplacementField",
    "wall_space",
    "solve_displacement",
    "displacement_stats",
]


@dataclass(frozen=True)
class Material:
    """Isotropic material via Lame parameters (Pa)."""

    eta: float
    lam: float

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError("shear modulus must be positive")
        if self.lam < -2.0 / 3.0 * self.eta:
            raise ValueError("first Lame parameter violates stability")

    @classmethod
    def from_young_poisson(cls, E, nu):
        if E <= 0 or not (-1.0 < nu < 0.5):
            raise ValueError("need E > 0 and -1 < nu < 0.5")
        lam = E * nu / ((1 + nu) * (1 - 2 * nu))
        eta = E / (2 * (1 + nu))
        return cls(eta=eta, lam=lam)


@dataclass(frozen=True)
class DisplacementField:
    """Wall displacement: one 3-vector of meters per glued control point."""

    space: H1Space
    coefficients: np.ndarray       # (n_scalar, 3)

    def per_patch(self):
        return self.space.per_patch_coefficients(self.coefficients)


def _symmetry_pin_dofs(space: H1Space, tol=1e-9):
    """Pin the azimuthal component where control points sit on the x=0 or
    y=0 planes.  For the quadrant-symmetric shell this removes the rigid
    rotation about z without disturbing a radial solution."""
    pos = space.dof_positions()
    scale = max(np.abs(pos).max(), 1.0)
    pins = []
    on_y0 = np.abs(pos[:, 1]) < tol * scale
    on_x0 = np.abs(pos[:, 0]) < tol * scale
    pins.extend(3 * np.nonzero(on_y0)[0] + 1)      # u_y = 0 on the y=0 plane
    pins.extend(3 * np.nonzero(on_x0)[0] + 0)      # u_x = 0 on the x=0 plane
    return np.array(sorted(set(int(p) for p in pins)), dtype=np.int64)


def wall_space(model: CavityModel) -> H1Space:
    """Vector isoparametric space on the wall with the model's constraints."""
    comps = tuple(model.wall_fixed_components)
    space = build_h1_space(model.wall, n_components=3,
                           dirichlet_tags={FIXED: comps}, rational=True)
    if model.wall_symmetry_pins:
        pins = _symmetry_pin_dofs(space)
        merged = np.union1d(space.dirichlet, pins)
        space = H1Space(space.geometry, 3, True, space.gmaps, space.n_scalar,
                        merged, space.dirichlet_tags)
    return space


def solve_displacement(model: CavityModel, material: Material, pressure_fn,
                       quad_order=None, space: H1Space | None = None,
                       stiffness=None) -> DisplacementField:
    """Solve the constrained wall problem for the given surface pressure.

    ``pressure_fn(points, patch, face, params)`` is evaluated on the coupled
    wall faces.  Pass ``space``/``stiffness`` to reuse a previous assembly.
    """
    if space is None:
        space = wall_space(model)
    if space.dirichlet.size == 0:
        raise WellPosednessError("wall has no kinematic constraints")
    K = assemble_elasticity(space, material.eta, material.lam,
                            quad_order) if stiffness is None else stiffness

    def negated(points, patch, face, params):
        return -np.asarray(pressure_fn(points, patch, face, params))

    f = assemble_pressure_load(space, model.coupled_wall_faces(), negated,
                               quad_order)
    free = space.free
    Kf = K[free][:, free].tocsc()
    try:
        sol_f = factorize(Kf).solve(f[free])
    except Exception as exc:
        raise WellPosednessError("singular elasticity system: %s" % exc) from exc
    if not np.all(np.isfinite(sol_f)):
        raise WellPosednessError("elasticity solve produced non-finite values")
    u = np.zeros(space.n_dofs)
    u[free] = sol_f
    return DisplacementField(space, u.reshape(space.n_scalar, 3))


def displacement_stats(field: DisplacementField, model: CavityModel,
                       quad_order=None):
    """Max and mean |u| over quadrature samples of the coupled wall faces."""
    space = field.space
    per_patch = field.per_patch()
    mx = 0.0
    total = 0.0
    weight = 0.0
    from .spaces import push_forward_h1

    for (p, face) in model.coupled_wall_faces():
        patch = space.geometry.patches[p]
        params, points, normals, dS, qw = face_quadrature(patch, face, quad_order)
        axis, side = face // 2, face % 2
        from .geometry import face_axes

        du, dv = face_axes(face)
        for (s, t), w, ds in zip(params, qw, dS):
            xh = np.empty(3)
            xh[axis] = float(side)
            xh[du], xh[dv] = s, t
            val = push_forward_h1(space, p, xh, field.coefficients)
            mag = float(np.linalg.norm(val))
            mx = max(mx, mag)
            total += mag * w * ds
            weight += w * ds
    return {"max": mx, "mean": total / weight if weight else 0.0}
