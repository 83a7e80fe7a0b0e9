"""Run configuration, geometry files and result export.

File formats (all SI units, frequencies in Hz):

* run config — JSON, validated field by field;
* geometry — JSON with per-patch ``{degrees, knots, points}`` where points
  are ``[x, y, z, w]`` in lexicographic order, first index fastest;
* tabular results — CSV with a header row and 17-significant-digit floats;
* fields — legacy ASCII VTK structured grids, one file per patch.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .geometry import (
    CavityModel,
    Interface,
    MultipatchGeometry,
    detect_coupling,
    make_pillbox,
    make_revolved_cell,
    demo_cell_profile,
)
from .splines import KnotVector, NurbsCurve, NurbsPatch

__all__ = [
    "RunConfig",
    "load_config",
    "load_model",
    "write_model",
    "write_csv",
    "write_report",
    "write_vtk_structured",
    "format_float",
]


def format_float(x):
    """Full-precision decimal text (17 significant digits)."""
    return "%.16e" % float(x)


@dataclass(frozen=True)
class RunConfig:
    geometry: dict
    t_wall: float = 0.003
    material: dict = field(default_factory=lambda: {"E": 1.05e11, "nu": 0.38})
    normalization: dict = field(default_factory=lambda: {"stored_energy": 1.0})
    degrees: int = 2
    refinement: object = 1
    eigensolver: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, raw):
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(raw) - {"geometry", "t_wall", "material", "normalization",
                              "degrees", "refinement", "eigensolver", "outputs"}
        if unknown:
            raise ConfigError("unknown config keys: %s" % ", ".join(sorted(unknown)))
        if "geometry" not in raw:
            raise ConfigError("config needs a geometry section")
        cfg = cls(
            geometry=dict(raw["geometry"]),
            t_wall=float(raw.get("t_wall", 0.003)),
            material=dict(raw.get("material", {"E": 1.05e11, "nu": 0.38})),
            normalization=dict(raw.get("normalization", {"stored_energy": 1.0})),
            degrees=int(raw.get("degrees", 2)),
            refinement=raw.get("refinement", 1),
            eigensolver=dict(raw.get("eigensolver", {})),
            outputs=dict(raw.get("outputs", {})),
        )
        cfg.validate()
        return cfg

    def validate(self):
        geo = self.geometry
        kinds = [k for k in ("pillbox", "revolved", "file", "demo_cell") if k in geo]
        if len(kinds) != 1:
            raise ConfigError("geometry must contain exactly one of "
                              "pillbox/revolved/file/demo_cell")
        if "pillbox" in geo:
            pb = geo["pillbox"]
            for key in ("R", "L"):
                if key not in pb or float(pb[key]) <= 0:
                    raise ConfigError("pillbox needs positive R and L")
        if self.t_wall <= 0:
            raise ConfigError("t_wall must be positive")
        m = self.material
        if not ({"E", "nu"} <= set(m) or {"eta", "lambda"} <= set(m)):
            raise ConfigError("material needs (E, nu) or (eta, lambda)")
        if "E" in m and float(m["E"]) <= 0:
            raise ConfigError("Young modulus must be positive")
        norm = self.normalization
        if not ({"stored_energy"} <= set(norm) or {"peak_axis_field"} <= set(norm)):
            raise ConfigError("normalization needs stored_energy or peak_axis_field")
        if "stored_energy" in norm and float(norm["stored_energy"]) < 0:
            raise ConfigError("stored_energy must be non-negative")
        if self.degrees < 1:
            raise ConfigError("degrees must be at least 1")
        if isinstance(self.refinement, dict):
            extra = set(self.refinement) - {"cross", "radial", "axial"}
            if extra:
                raise ConfigError("unknown refinement keys: %s" % sorted(extra))
            if any(int(v) < 0 for v in self.refinement.values()):
                raise ConfigError("refinement counts must be non-negative")
        elif int(self.refinement) < 0:
            raise ConfigError("refinement must be non-negative")
        es = self.eigensolver
        if "n_ev" in es and int(es["n_ev"]) < 1:
            raise ConfigError("n_ev must be at least 1")
        if "tol" in es and float(es["tol"]) <= 0:
            raise ConfigError("eigensolver tol must be positive")

    def refinement_levels(self):
        if isinstance(self.refinement, dict):
            return {k: int(v) for k, v in self.refinement.items()}
        return int(self.refinement)


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError("cannot read config: %s" % exc) from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("config is not valid JSON: %s" % exc) from exc
    return RunConfig.from_dict(raw)


def _curve_from_dict(raw) -> NurbsCurve:
    try:
        kv = KnotVector(np.asarray(raw["knots"], dtype=float), int(raw["degree"]))
        pts = np.asarray(raw["points"], dtype=float)
        weights = np.asarray(raw.get("weights", np.ones(pts.shape[0])), dtype=float)
        return NurbsCurve(kv, pts, weights)
    except (KeyError, ValueError) as exc:
        raise ConfigError("bad profile curve: %s" % exc) from exc


def build_base_model(config: RunConfig) -> CavityModel:
    """Unrefined cavity model from the config's geometry section."""
    geo = config.geometry
    if "pillbox" in geo:
        pb = geo["pillbox"]
        return make_pillbox(float(pb["R"]), float(pb["L"]), config.t_wall)
    if "demo_cell" in geo:
        opts = geo["demo_cell"] if isinstance(geo["demo_cell"], dict) else {}
        return make_revolved_cell(demo_cell_profile(**opts), config.t_wall,
                                  name="demo-cell")
    if "revolved" in geo:
        rv = geo["revolved"]
        if isinstance(rv, dict) and "profile" in rv and isinstance(rv["profile"], str):
            try:
                with open(rv["profile"]) as fh:
                    raw = json.load(fh)
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError("cannot read profile: %s" % exc) from exc
        elif isinstance(rv, dict) and "profile" in rv:
            raw = rv["profile"]
        else:
            raise ConfigError("revolved geometry needs a profile")
        return make_revolved_cell(_curve_from_dict(raw), config.t_wall)
    return load_model(geo["file"])


# ---------------------------------------------------------------------------
# Geometry files
# ---------------------------------------------------------------------------


def _patch_to_dict(patch: NurbsPatch):
    pts = np.column_stack([patch.control_points, patch.weights])
    return {
        "degrees": list(patch.degrees),
        "knots": [kv.knots.tolist() for kv in patch.knot_vectors],
        "points": pts.tolist(),
    }


def _patch_from_dict(raw) -> NurbsPatch:
    try:
        degrees = tuple(int(p) for p in raw["degrees"])
        kvs = tuple(KnotVector(np.asarray(k, dtype=float), p)
                    for k, p in zip(raw["knots"], degrees))
        pts = np.asarray(raw["points"], dtype=float)
        return NurbsPatch(degrees, kvs, pts[:, :3], pts[:, 3])
    except (KeyError, IndexError, ValueError) as exc:
        raise ConfigError("bad patch record: %s" % exc) from exc


def _geometry_to_dict(geom: MultipatchGeometry):
    return {
        "patches": [_patch_to_dict(p) for p in geom.patches],
        "boundary_tags": [{"patch": p, "face": f, "tag": t}
                          for (p, f), t in sorted(geom.boundary_tags.items())],
        "interfaces": [asdict(i) for i in geom.interfaces],
        "direction_classes": [list(c) for c in geom.direction_classes],
        "axis_patch": geom.axis_patch,
        "axis_uv": list(geom.axis_uv),
    }


def _geometry_from_dict(raw) -> MultipatchGeometry:
    patches = tuple(_patch_from_dict(p) for p in raw["patches"])
    tags = {(int(t["patch"]), int(t["face"])): str(t["tag"])
            for t in raw.get("boundary_tags", [])}
    interfaces = None
    if "interfaces" in raw and raw["interfaces"] is not None:
        interfaces = tuple(Interface(**i) for i in raw["interfaces"])
    classes = raw.get("direction_classes")
    if classes is not None:
        classes = tuple(tuple(c) for c in classes)
    axis_uv = tuple(raw.get("axis_uv", (0.5, 0.5)))
    return MultipatchGeometry(patches, interfaces=interfaces, boundary_tags=tags,
                              direction_classes=classes,
                              axis_patch=raw.get("axis_patch"), axis_uv=axis_uv)


def write_model(model: CavityModel, path):
    doc = {
        "name": model.name,
        "cavity": _geometry_to_dict(model.cavity),
        "wall": _geometry_to_dict(model.wall),
        "wall_fixed_components": list(model.wall_fixed_components),
        "wall_symmetry_pins": model.wall_symmetry_pins,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_model(path) -> CavityModel:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError("cannot read geometry: %s" % exc) from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("geometry is not valid JSON: %s" % exc) from exc
    try:
        cavity = _geometry_from_dict(raw["cavity"])
        wall = _geometry_from_dict(raw["wall"])
    except KeyError as exc:
        raise ConfigError("geometry file misses section %s" % exc) from exc
    coupling = detect_coupling(cavity, wall)
    return CavityModel(
        cavity, wall, coupling,
        wall_fixed_components=tuple(raw.get("wall_fixed_components", (0, 1, 2))),
        wall_symmetry_pins=bool(raw.get("wall_symmetry_pins", False)),
        name=raw.get("name", "cavity"))


# ---------------------------------------------------------------------------
# Result writers
# ---------------------------------------------------------------------------


def write_csv(path, header, rows):
    """CSV with one header row; floats get 17 significant digits."""
    lines = [",".join(header)]
    for row in rows:
        cells = [format_float(c) if isinstance(c, float) else str(c) for c in row]
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n")


def write_report(report_dict, path):
    with open(path, "w") as fh:
        json.dump(report_dict, fh, indent=1, sort_keys=True)
        fh.write("\n")


def write_vtk_structured(path, patch: NurbsPatch, vector_fn, field_name,
                         resolution=8):
    """Legacy ASCII VTK structured grid of one patch with a point vector field.

    ``vector_fn(params (m, 3)) -> (m, 3)`` supplies the field values.
    """
    dims = []
    axes = []
    for kv in patch.knot_vectors:
        m = max(2, int(resolution) * max(1, kv.n_spans) + 1)
        axes.append(np.linspace(0.0, 1.0, m))
        dims.append(m)
    P3, P2, P1 = np.meshgrid(axes[2], axes[1], axes[0], indexing="ij")
    params = np.column_stack([P1.ravel(), P2.ravel(), P3.ravel()])
    points = np.array([patch.eval(x, nders=0) for x in params])
    vectors = np.asarray(vector_fn(params), dtype=float)

    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write("cavitiga field export\n")
        fh.write("ASCII\n")
        fh.write("DATASET STRUCTURED_GRID\n")
        fh.write("DIMENSIONS %d %d %d\n" % tuple(dims))
        fh.write("POINTS %d double\n" % points.shape[0])
        for p in points:
            fh.write("%.12e %.12e %.12e\n" % tuple(p))
        fh.write("POINT_DATA %d\n" % points.shape[0])
        fh.write("VECTORS %s double\n" % field_name)
        for v in vectors:
            fh.write("%.12e %.12e %.12e\n" % tuple(v))
