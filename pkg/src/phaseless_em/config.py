"""Scene configuration files (JSON) and their canonical digest.

Example::

    {
      "wavenumber": 1.0,
      "obstacles": [{"center": [0.5, 0, 0.2], "radius": 0.6, "bc": {"kind": "pec"}}],
      "reference_ball": {"center": [6, 0, 0], "radius": 1.0},
      "containment_ball": {"center": [0, 0, 0], "radius": 2.0},
      "incidents": {"generate": "superposition", "n_pairs": 6},
      "grid": {"n_theta": 16, "n_phi": 32},
      "solver": {"kind": "efie", "subdivisions": 3},
      "seed": 0
    }

``incidents`` is either a generator spec or an explicit list of
``{"d1", "d2", "p1", "p2"}`` objects.  Optional sections: ``compare_obstacles``
(a second obstacle list for the distinguishability check) and ``inverse``
(initial guess and inversion mesh for ``reconstruct``).
"""
from __future__ import annotations

import copy
import hashlib
import json
import re
from dataclasses import dataclass
from pathlib import Path

import jsonschema

from .core import Incident, MeasurementGrid, WaveContext, default_incidents
from .errors import ConfigError
from .inverse import SphereParams, single_wave_incidents
from .mie import PEC, Dielectric, Impedance, SphereObstacle
from .scene import Ball, Scene, SolverSpec

_VEC3 = {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}
_BALL = {
    "type": "object",
    "properties": {"center": _VEC3, "radius": {"type": "number", "exclusiveMinimum": 0}},
    "required": ["center", "radius"],
    "additionalProperties": False,
}
_BC = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["pec", "impedance", "dielectric"]},
        "lambda": {"type": "number", "minimum": 0},
        "n": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
    },
    "required": ["kind"],
    "additionalProperties": False,
}
_SPHERE = {
    "type": "object",
    "properties": {
        "type": {"const": "sphere"},
        "center": _VEC3,
        "radius": {"type": "number", "exclusiveMinimum": 0},
        "bc": _BC,
    },
    "required": ["center", "radius"],
    "additionalProperties": False,
}
_INCIDENT = {
    "type": "object",
    "properties": {"d1": _VEC3, "d2": _VEC3, "p1": _VEC3, "p2": _VEC3},
    "required": ["d1", "d2", "p1", "p2"],
    "additionalProperties": False,
}
SCHEMA = {
    "type": "object",
    "properties": {
        "wavenumber": {"type": "number", "exclusiveMinimum": 0},
        "obstacles": {"type": "array", "items": _SPHERE, "minItems": 1},
        "compare_obstacles": {"type": "array", "items": _SPHERE, "minItems": 1},
        "reference_ball": {"oneOf": [_BALL, {"type": "null"}]},
        "containment_ball": _BALL,
        "incidents": {
            "oneOf": [
                {"type": "array", "items": _INCIDENT, "minItems": 1},
                {
                    "type": "object",
                    "properties": {
                        "generate": {"enum": ["superposition", "single"]},
                        "n_pairs": {"type": "integer", "minimum": 1},
                    },
                    "required": ["generate"],
                    "additionalProperties": False,
                },
            ]
        },
        "grid": {
            "type": "object",
            "properties": {
                "n_theta": {"type": "integer", "minimum": 1},
                "n_phi": {"type": "integer", "minimum": 1},
                "pole_band": {"type": "number", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
        "solver": {
            "type": "object",
            "properties": {
                "kind": {"enum": ["mie", "efie"]},
                "subdivisions": {"type": "integer", "minimum": 0, "maximum": 6},
                "test_order": {"enum": [1, 3, 4, 7]},
                "source_order": {"enum": [1, 3, 4, 7]},
                "volume_match": {"type": "boolean"},
            },
            "additionalProperties": False,
        },
        "inverse": {
            "type": "object",
            "properties": {
                "init": _BALL,
                "subdivisions": {"type": "integer", "minimum": 0, "maximum": 6},
                "max_evals": {"type": "integer", "minimum": 5},
                "step": {"type": "number", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
        "seed": {"type": "integer", "minimum": 0},
    },
    "required": ["wavenumber", "obstacles", "incidents"],
    "additionalProperties": False,
}


def _locate(text: str, path) -> int | None:
    """Best-effort line number of a JSON path: follows the object keys in order."""
    pos = 0
    found = None
    for key in path:
        if not isinstance(key, str):
            continue
        m = re.compile(r'"' + re.escape(key) + r'"\s*:').search(text, pos)
        if m is None:
            break
        pos = m.end()
        found = text.count("\n", 0, m.start()) + 1
    return found


def parse_config(text: str, source: str = "<config>") -> dict:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from None
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        e = errors[0]
        path = list(e.absolute_path)
        line = _locate(text, path)
        where = f"{source}:{line}" if line else source
        dotted = "/".join(map(str, path)) or "<root>"
        raise ConfigError(f"{where}: {dotted}: {e.message}")
    return raw


def load_config(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text, str(path))


def canonical_json(cfg: dict) -> str:
    return json.dumps(cfg, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(cfg: dict) -> str:
    """SHA-256 of the canonical JSON text; whitespace and key order do not matter."""
    return hashlib.sha256(canonical_json(cfg).encode()).hexdigest()


def with_overrides(cfg: dict, subdivisions: int | None = None, grid: tuple[int, int] | None = None,
                   seed: int | None = None) -> dict:
    """Apply command-line overrides; the result is what gets hashed."""
    cfg = copy.deepcopy(cfg)
    if subdivisions is not None:
        cfg.setdefault("solver", {})["subdivisions"] = subdivisions
    if grid is not None:
        g = cfg.setdefault("grid", {})
        g["n_theta"], g["n_phi"] = grid
    if seed is not None:
        cfg["seed"] = seed
    return cfg


def _bc(spec: dict | None):
    if spec is None or spec["kind"] == "pec":
        return PEC()
    if spec["kind"] == "impedance":
        if "lambda" not in spec:
            raise ConfigError("impedance boundary condition needs 'lambda'")
        return Impedance(float(spec["lambda"]))
    if "n" not in spec:
        raise ConfigError("dielectric boundary condition needs 'n' as [re, im]")
    return Dielectric(complex(*spec["n"]))


def _sphere(spec: dict) -> SphereObstacle:
    try:
        return SphereObstacle(tuple(spec["center"]), float(spec["radius"]), _bc(spec.get("bc")))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


@dataclass(frozen=True)
class SceneConfig:
    raw: dict
    scene: Scene
    compare_scene: Scene | None
    incidents: tuple[Incident, ...]
    grid: MeasurementGrid
    solver: SolverSpec
    seed: int

    @property
    def digest(self) -> str:
        return config_hash(self.raw)

    @property
    def translation_ambiguous(self) -> bool:
        """Only single plane waves and no reference ball."""
        return self.scene.reference_ball is None and all(i.is_single_wave for i in self.incidents)

    @property
    def truth(self) -> SphereParams:
        o = self.scene.obstacles[0]
        return SphereParams(o.center, o.radius)

    def inverse_settings(self) -> dict:
        inv = self.raw.get("inverse", {})
        out = {
            "subdivisions": inv.get("subdivisions", max(self.solver.subdivisions - 1, 0)),
            "max_evals": inv.get("max_evals", 300),
            "step": inv.get("step", 0.1),
            "init": None,
        }
        if "init" in inv:
            out["init"] = SphereParams(tuple(inv["init"]["center"]), inv["init"]["radius"])
        return out


def build(cfg: dict, threads: int = 1) -> SceneConfig:
    """Turn a validated config dict into domain objects and check the geometry."""
    try:
        ctx = WaveContext(float(cfg["wavenumber"]))
        seed = int(cfg.get("seed", 0))
        B = cfg.get("reference_ball")
        ref = SphereObstacle(tuple(B["center"]), float(B["radius"])) if B else None
        R = cfg.get("containment_ball")
        contain = Ball(tuple(R["center"]), float(R["radius"])) if R else None
        scene = Scene(ctx, tuple(_sphere(o) for o in cfg["obstacles"]), ref, contain)
        compare = None
        if "compare_obstacles" in cfg:
            compare = scene.with_obstacles(_sphere(o) for o in cfg["compare_obstacles"])
        inc = cfg["incidents"]
        if isinstance(inc, list):
            incidents = tuple(Incident(tuple(i["d1"]), tuple(i["d2"]), tuple(i["p1"]),
                                       tuple(i["p2"])) for i in inc)
        else:
            gen = default_incidents(inc.get("n_pairs", 6), seed)
            incidents = tuple(gen if inc["generate"] == "superposition"
                              else single_wave_incidents(gen))
        g = cfg.get("grid", {})
        grid = MeasurementGrid(g.get("n_theta", 16), g.get("n_phi", 32), g.get("pole_band", 1e-3))
        s = cfg.get("solver", {})
        solver = SolverSpec(
            kind=s.get("kind", "efie"),
            subdivisions=s.get("subdivisions", 3),
            test_order=s.get("test_order", 3),
            source_order=s.get("source_order", 4),
            volume_match=s.get("volume_match", True),
            threads=threads,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    scene.check_geometry()
    if compare is not None:
        compare.check_geometry()
    return SceneConfig(cfg, scene, compare, incidents, grid, solver, seed)
