"""Immutable world model: wall panels, furniture boxes, floor, ceiling, lights.

All queries are pure; a ``Scene`` may be shared freely between workers.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Mapping, NamedTuple, Optional, Sequence

import numpy as np

from . import _kernels as K
from .errors import ContractError, OutOfBoundsError

SCENE_FORMAT = "simflight-scene"
SCENE_VERSION = 1

FAMILIES = ("solid", "stripes", "checker", "value-noise")


def _vec(v, n):
    t = tuple(float(x) for x in v)
    if len(t) != n:
        raise ContractError(f"expected {n} components, got {len(t)}")
    return t


@dataclass(frozen=True)
class MaterialSpec:
    """Procedural surface appearance, evaluated at 3D hit coordinates."""

    family: str
    base_color: tuple
    accent_color: tuple
    spatial_scale: float
    pattern_seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ContractError(f"unknown material family {self.family!r}")
        object.__setattr__(self, "base_color", _vec(self.base_color, 3))
        object.__setattr__(self, "accent_color", _vec(self.accent_color, 3))
        for c in self.base_color + self.accent_color:
            if not 0.0 <= c <= 1.0:
                raise ContractError("material colours must lie in [0, 1]")
        if not (self.spatial_scale > 0 and math.isfinite(self.spatial_scale)):
            raise ContractError("spatial_scale must be positive")

    @property
    def stripe_axis(self):
        axes = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0),
                (0.7071067811865476, 0.7071067811865476, 0.0))
        return axes[self.pattern_seed % 4]


@dataclass(frozen=True)
class Light:
    position: tuple
    intensity: float
    color: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "position", _vec(self.position, 3))
        object.__setattr__(self, "color", _vec(self.color, 3))
        if not (self.intensity >= 0 and math.isfinite(self.intensity)):
            raise ContractError("light intensity must be finite and >= 0")


@dataclass(frozen=True)
class Wall:
    """Vertical rectangular panel above the 2D segment a-b, spanning z0..z1."""

    a: tuple
    b: tuple
    z0: float
    z1: float
    material: int
    kind: str = "wall"

    def __post_init__(self):
        object.__setattr__(self, "a", _vec(self.a, 2))
        object.__setattr__(self, "b", _vec(self.b, 2))
        if self.a == self.b:
            raise ContractError("degenerate wall segment")
        if not self.z1 > self.z0:
            raise ContractError("wall needs z1 > z0")


@dataclass(frozen=True)
class Box:
    lo: tuple
    hi: tuple
    material: int
    kind: str = "box"

    def __post_init__(self):
        object.__setattr__(self, "lo", _vec(self.lo, 3))
        object.__setattr__(self, "hi", _vec(self.hi, 3))
        if not all(h > l for l, h in zip(self.lo, self.hi)):
            raise ContractError("box needs hi > lo on every axis")


class RayHit(NamedTuple):
    distance: float
    surface: int  # material id
    normal: tuple
    kind: str


_KIND_NAMES = {K.KIND_WALL: "wall", K.KIND_BOX: "box", K.KIND_FLOOR: "floor",
               K.KIND_CEILING: "ceiling"}


class _Packed(NamedTuple):
    walls: np.ndarray
    boxes: np.ndarray
    floor_z: float
    ceil_z: float
    bounds: np.ndarray
    surf_mat: np.ndarray
    mat_family: np.ndarray
    mat_base: np.ndarray
    mat_accent: np.ndarray
    mat_scale: np.ndarray
    mat_axis: np.ndarray
    mat_seed: np.ndarray
    lights: np.ndarray


@dataclass(frozen=True, eq=False)
class Scene:
    walls: tuple
    obstacles: tuple
    floor_height: float
    ceiling_height: float
    materials: tuple
    floor_material: int
    ceiling_material: int
    lights: tuple = ()
    ambient: float = 0.2
    # xy rectangles (xmin, ymin, xmax, ymax) covering navigable space
    regions: tuple = ()
    bounds: Optional[tuple] = None
    meta: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "walls", tuple(self.walls))
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        object.__setattr__(self, "materials", tuple(self.materials))
        object.__setattr__(self, "lights", tuple(self.lights))
        object.__setattr__(self, "regions", tuple(tuple(float(v) for v in r) for r in self.regions))
        if not (math.isfinite(self.floor_height) and math.isfinite(self.ceiling_height)):
            raise ContractError("floor/ceiling heights must be finite")
        if not self.ceiling_height > self.floor_height:
            raise ContractError("ceiling must be above floor")
        if not (self.ambient >= 0 and math.isfinite(self.ambient)):
            raise ContractError("ambient must be finite and >= 0")
        n_mat = len(self.materials)
        mats = [w.material for w in self.walls] + [b.material for b in self.obstacles]
        mats += [self.floor_material, self.ceiling_material]
        for m in mats:
            if not 0 <= m < n_mat:
                raise ContractError(f"material id {m} out of range")
        if self.bounds is None:
            object.__setattr__(self, "bounds", self._auto_bounds())
        else:
            object.__setattr__(self, "bounds", _vec(self.bounds, 4))
        if not self.regions:
            object.__setattr__(self, "regions", (self.bounds,))
        arr = self._packed
        if not (np.all(np.isfinite(arr.walls)) and np.all(np.isfinite(arr.boxes))
                and np.all(np.isfinite(arr.bounds))):
            raise ContractError("scene geometry must be finite")

    def _auto_bounds(self):
        xs, ys = [], []
        for w in self.walls:
            xs += [w.a[0], w.b[0]]
            ys += [w.a[1], w.b[1]]
        for b in self.obstacles:
            xs += [b.lo[0], b.hi[0]]
            ys += [b.lo[1], b.hi[1]]
        for r in self.regions:
            xs += [r[0], r[2]]
            ys += [r[1], r[3]]
        if not xs:
            raise ContractError("scene has no horizontal extent; pass bounds")
        return (min(xs), min(ys), max(xs), max(ys))

    @cached_property
    def _packed(self) -> _Packed:
        walls = np.array([[*w.a, *w.b, w.z0, w.z1] for w in self.walls],
                         dtype=np.float64).reshape(-1, 6)
        boxes = np.array([[*b.lo, *b.hi] for b in self.obstacles],
                         dtype=np.float64).reshape(-1, 6)
        bounds = np.array(self.bounds, dtype=np.float64)
        surf = [w.material for w in self.walls] + [b.material for b in self.obstacles]
        surf += [self.floor_material, self.ceiling_material]
        mats = self.materials
        lights = np.array([[*l.position, l.intensity, *l.color] for l in self.lights],
                          dtype=np.float64).reshape(-1, 7)
        packed = _Packed(
            walls=walls, boxes=boxes,
            floor_z=float(self.floor_height), ceil_z=float(self.ceiling_height),
            bounds=bounds,
            surf_mat=np.array(surf, dtype=np.int64),
            mat_family=np.array([FAMILIES.index(m.family) for m in mats], dtype=np.int64),
            mat_base=np.array([m.base_color for m in mats], dtype=np.float64).reshape(-1, 3),
            mat_accent=np.array([m.accent_color for m in mats], dtype=np.float64).reshape(-1, 3),
            mat_scale=np.array([m.spatial_scale for m in mats], dtype=np.float64),
            mat_axis=np.array([m.stripe_axis for m in mats], dtype=np.float64).reshape(-1, 3),
            mat_seed=np.array([m.pattern_seed for m in mats], dtype=np.int64),
            lights=lights,
        )
        for a in packed:
            if isinstance(a, np.ndarray):
                a.setflags(write=False)
        return packed

    def surface_material(self, kind: int, index: int) -> int:
        if kind == K.KIND_WALL:
            return self.walls[index].material
        if kind == K.KIND_BOX:
            return self.obstacles[index].material
        if kind == K.KIND_FLOOR:
            return self.floor_material
        return self.ceiling_material

    def contains(self, point) -> bool:
        x, y, z = point
        b = self.bounds
        return (b[0] <= x <= b[2] and b[1] <= y <= b[3]
                and self.floor_height <= z <= self.ceiling_height)

    def in_regions(self, x: float, y: float) -> bool:
        return any(r[0] <= x <= r[2] and r[1] <= y <= r[3] for r in self.regions)

    def with_appearance(self, materials=None, lights=None, ambient=None) -> "Scene":
        """Same geometry, different materials table / lights / ambient term."""
        return Scene(
            walls=self.walls, obstacles=self.obstacles,
            floor_height=self.floor_height, ceiling_height=self.ceiling_height,
            materials=self.materials if materials is None else materials,
            floor_material=self.floor_material, ceiling_material=self.ceiling_material,
            lights=self.lights if lights is None else lights,
            ambient=self.ambient if ambient is None else ambient,
            regions=self.regions, bounds=self.bounds, meta=self.meta,
        )


def _check_point(scene: Scene, point) -> np.ndarray:
    p = np.asarray(point, dtype=np.float64)
    if p.shape != (3,) or not np.all(np.isfinite(p)):
        raise ContractError("point must be a finite 3-vector")
    if not scene.contains(p):
        raise OutOfBoundsError(f"point {tuple(p)} outside scene bounds")
    return p


def raycast(scene: Scene, origin, direction, max_len: float) -> Optional[RayHit]:
    """Nearest surface hit within ``max_len`` of ``origin`` along ``direction``."""
    o = _check_point(scene, origin)
    d = np.asarray(direction, dtype=np.float64)
    if d.shape != (3,) or not np.all(np.isfinite(d)):
        raise ContractError("direction must be a finite 3-vector")
    if abs(np.linalg.norm(d) - 1.0) > 1e-6:
        raise ContractError("direction must be unit length")
    if not (max_len > 0 and math.isfinite(max_len)):
        raise ContractError("max_len must be positive and finite")
    pk = scene._packed
    t, kind, idx, nx, ny, nz = K.trace(o[0], o[1], o[2], d[0], d[1], d[2], float(max_len),
                                       pk.walls, pk.boxes, pk.floor_z, pk.ceil_z, pk.bounds)
    if kind < 0:
        return None
    return RayHit(float(t), scene.surface_material(kind, idx), (nx, ny, nz), _KIND_NAMES[kind])


def raycast_many(scene: Scene, origin, dirs, max_len: float):
    """Vectorised raycast from one origin. Returns (distances, materials);
    misses have distance +inf and material -1."""
    o = _check_point(scene, origin)
    d = np.ascontiguousarray(dirs, dtype=np.float64).reshape(-1, 3)
    pk = scene._packed
    dist, kinds, idxs, _ = K.trace_many(o, d, float(max_len), pk.walls, pk.boxes,
                                        pk.floor_z, pk.ceil_z, pk.bounds)
    n_w, n_b = len(scene.walls), len(scene.obstacles)
    base = np.select([kinds == K.KIND_BOX, kinds == K.KIND_FLOOR, kinds == K.KIND_CEILING],
                     [n_w, n_w + n_b, n_w + n_b + 1], default=0)
    mat = np.where(kinds >= 0, pk.surf_mat[base + np.maximum(idxs, 0)], -1)
    return dist, mat


def distance_to_nearest(scene: Scene, point) -> float:
    """Euclidean distance to the closest wall, box, floor or ceiling point.

    Boxes are solid: points inside a box report 0.
    """
    p = _check_point(scene, point)
    pk = scene._packed
    return float(K.point_distance(p[0], p[1], p[2], pk.walls, pk.boxes, pk.floor_z, pk.ceil_z))


def distance_many(scene: Scene, points) -> np.ndarray:
    pts = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
    for p in pts:
        if not scene.contains(p):
            raise OutOfBoundsError(f"point {tuple(p)} outside scene bounds")
    pk = scene._packed
    return K.point_distance_many(pts, pk.walls, pk.boxes, pk.floor_z, pk.ceil_z)


def segment_clearance(scene: Scene, p0, p1, stop_below: float = -1.0) -> float:
    """Minimum surface distance over the segment p0-p1 (swept-sphere query).

    With ``stop_below`` > 0 the search may return early with any value below
    it, which is enough to decide a collision.
    """
    a = np.ascontiguousarray(p0, dtype=np.float64)
    b = np.ascontiguousarray(p1, dtype=np.float64)
    pk = scene._packed
    return float(K.segment_min_distance(a, b, pk.walls, pk.boxes, pk.floor_z, pk.ceil_z,
                                        float(stop_below)))


# -- serialisation ---------------------------------------------------------

def scene_to_dict(scene: Scene) -> dict:
    return {
        "format": SCENE_FORMAT,
        "version": SCENE_VERSION,
        "floor_height": scene.floor_height,
        "ceiling_height": scene.ceiling_height,
        "floor_material": scene.floor_material,
        "ceiling_material": scene.ceiling_material,
        "ambient": scene.ambient,
        "bounds": list(scene.bounds),
        "regions": [list(r) for r in scene.regions],
        "materials": [
            {"family": m.family, "base_color": list(m.base_color),
             "accent_color": list(m.accent_color), "spatial_scale": m.spatial_scale,
             "pattern_seed": m.pattern_seed}
            for m in scene.materials
        ],
        "walls": [
            {"a": list(w.a), "b": list(w.b), "z0": w.z0, "z1": w.z1,
             "material": w.material, "kind": w.kind}
            for w in scene.walls
        ],
        "boxes": [
            {"lo": list(b.lo), "hi": list(b.hi), "material": b.material, "kind": b.kind}
            for b in scene.obstacles
        ],
        "lights": [
            {"position": list(l.position), "intensity": l.intensity, "color": list(l.color)}
            for l in scene.lights
        ],
        "meta": dict(scene.meta),
    }


def scene_from_dict(data: Mapping) -> Scene:
    if data.get("format") != SCENE_FORMAT:
        raise ContractError("not a scene file")
    if data.get("version") != SCENE_VERSION:
        raise ContractError(f"unsupported scene version {data.get('version')}")
    return Scene(
        walls=[Wall(w["a"], w["b"], w["z0"], w["z1"], w["material"], w.get("kind", "wall"))
               for w in data["walls"]],
        obstacles=[Box(b["lo"], b["hi"], b["material"], b.get("kind", "box"))
                   for b in data["boxes"]],
        floor_height=data["floor_height"],
        ceiling_height=data["ceiling_height"],
        materials=[MaterialSpec(m["family"], m["base_color"], m["accent_color"],
                                m["spatial_scale"], m.get("pattern_seed", 0))
                   for m in data["materials"]],
        floor_material=data["floor_material"],
        ceiling_material=data["ceiling_material"],
        lights=[Light(l["position"], l["intensity"], l["color"]) for l in data["lights"]],
        ambient=data["ambient"],
        regions=data["regions"],
        bounds=data["bounds"],
        meta=data.get("meta", {}),
    )


def dumps_scene(scene: Scene) -> str:
    return json.dumps(scene_to_dict(scene), sort_keys=True, indent=1) + "\n"


def save_scene(scene: Scene, path) -> None:
    Path(path).write_text(dumps_scene(scene))


def load_scene(path) -> Scene:
    return scene_from_dict(json.loads(Path(path).read_text()))


def corridor_scene(length: float = 20.0, width: float = 2.0, height: float = 4.0,
                   obstacles: Sequence[Box] = (), end_walls: bool = True,
                   lights: Sequence[Light] = (), ambient: float = 0.2,
                   materials: Optional[Sequence[MaterialSpec]] = None) -> Scene:
    """Straight corridor along +x from x=0 to x=length, centred on y=0."""
    hw = width / 2.0
    if materials is None:
        materials = [MaterialSpec("solid", (0.8, 0.8, 0.8), (0.8, 0.8, 0.8), 1.0)]
    walls = [Wall((0.0, -hw), (length, -hw), 0.0, height, 0),
             Wall((0.0, hw), (length, hw), 0.0, height, 0)]
    if end_walls:
        walls += [Wall((0.0, -hw), (0.0, hw), 0.0, height, 0),
                  Wall((length, -hw), (length, hw), 0.0, height, 0)]
    return Scene(walls=walls, obstacles=list(obstacles), floor_height=0.0,
                 ceiling_height=height, materials=materials, floor_material=0,
                 ceiling_material=0, lights=lights, ambient=ambient,
                 regions=[(0.0, -hw, length, hw)], bounds=(0.0, -hw, length, hw),
                 meta={"template": "corridor", "corridor_edges": [
                     {"a": [0.0, 0.0], "b": [length, 0.0], "width": width}]})
