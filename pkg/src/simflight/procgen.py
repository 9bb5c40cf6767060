"""Seeded procedural hallway worlds.

A world is a corridor graph (axis-aligned corridor segments of one width)
plus optional side rooms joined to corridors through door openings. Walls are
the boundary of the union of free rectangles, found on a compressed grid of
all rectangle and door coordinates. Appearance (procedural textures, point
lights, ambient level) is drawn from a seeded texture pool and can be
re-randomised independently of geometry.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, GenerationError
from .render import CameraPose
from .scene import FAMILIES, Box, Light, MaterialSpec, Scene, Wall, distance_to_nearest

CATEGORIES = ("straight", "L-turn", "U-shape", "loop", "T-junction", "dead-end", "side-rooms")

TRAIN_TEXTURE_SEED = 1000
TEST_TEXTURE_SEED = 2000
TEST_POOL_SIZE = 100

DOOR_HEIGHT = 2.1

# name, length along the wall, depth, height (m); height None = floor to ceiling
FURNITURE = (
    ("bench", 1.6, 0.45, 0.45),
    ("chair", 0.5, 0.5, 0.9),
    ("armchair", 0.8, 0.8, 0.9),
    ("sofa", 1.9, 0.85, 0.8),
    ("table", 1.2, 0.7, 0.75),
    ("desk", 1.4, 0.7, 0.75),
    ("coffee_table", 1.0, 0.5, 0.45),
    ("cabinet", 1.0, 0.5, 1.8),
    ("bookshelf", 0.9, 0.35, 1.9),
    ("locker", 0.9, 0.5, 1.9),
    ("filing_cabinet", 0.5, 0.6, 1.3),
    ("plant", 0.5, 0.5, 1.4),
    ("trash_bin", 0.4, 0.4, 0.7),
    ("water_cooler", 0.4, 0.4, 1.2),
    ("vending_machine", 0.9, 0.8, 1.85),
    ("printer", 0.6, 0.6, 1.1),
    ("whiteboard", 1.5, 0.5, 1.8),
    ("coat_rack", 0.5, 0.5, 1.8),
    ("pillar", 0.5, 0.5, None),
    ("stool", 0.4, 0.4, 0.65),
    ("cart", 0.9, 0.5, 1.0),
)


@dataclass(frozen=True)
class GenConfig:
    seed: int = 0
    furniture_density: float = 2.0  # items per 10 m of corridor
    n_textures_pool: int = 200
    furnish: bool = True
    light_count_range: tuple = (2, 8)
    light_intensity_range: tuple = (2.0, 12.0)
    width_range: tuple = (2.0, 3.5)
    ceiling_range: tuple = (2.6, 3.2)
    ambient_range: tuple = (0.05, 0.35)
    template_id: Optional[int] = None
    texture_pool: str = "train"
    randomize_appearance: bool = True
    vehicle_radius: float = 0.25

    def __post_init__(self):
        for name in ("light_count_range", "light_intensity_range", "width_range",
                     "ceiling_range", "ambient_range"):
            lo, hi = getattr(self, name)
            if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
                raise ConfigError(f"{name} must be a finite, non-inverted range")
            object.__setattr__(self, name, (lo, hi))
        if self.furniture_density < 0:
            raise ConfigError("furniture_density must be >= 0")
        if self.n_textures_pool < 1:
            raise ConfigError("n_textures_pool must be >= 1")
        if self.light_count_range[0] < 0 or self.light_intensity_range[0] < 0:
            raise ConfigError("light counts and intensities must be >= 0")
        if self.width_range[0] <= 1.2:
            raise ConfigError("corridor widths must exceed 1.2 m")
        if self.ceiling_range[0] <= 2.2:
            raise ConfigError("ceiling must be higher than 2.2 m")
        if self.texture_pool not in ("train", "test"):
            raise ConfigError("texture_pool must be 'train' or 'test'")
        if self.template_id is not None and not 0 <= self.template_id < len(TEMPLATES):
            raise ConfigError(f"template_id must be in [0, {len(TEMPLATES)})")


@dataclass(frozen=True)
class Room:
    rect: tuple  # xmin, ymin, xmax, ymax
    door: tuple  # orientation ('v' wall on x=c, 'h' wall on y=c), c, lo, hi
    door_open: bool


@dataclass(frozen=True)
class Floorplan:
    nodes: tuple
    edges: tuple  # (i, j)
    width: float
    side_rooms: tuple = ()
    template_id: int = 0

    @property
    def category(self) -> str:
        return TEMPLATES[self.template_id][1]

    def edge_rect(self, k: int) -> tuple:
        i, j = self.edges[k]
        (ax, ay), (bx, by) = self.nodes[i], self.nodes[j]
        h = self.width / 2.0
        return (_r(min(ax, bx) - h), _r(min(ay, by) - h), _r(max(ax, bx) + h), _r(max(ay, by) + h))

    def to_dict(self) -> dict:
        return {
            "nodes": [list(n) for n in self.nodes],
            "edges": [list(e) for e in self.edges],
            "width": self.width,
            "side_rooms": [{"rect": list(r.rect), "door": list(r.door), "door_open": r.door_open}
                           for r in self.side_rooms],
            "template_id": self.template_id,
        }

    @classmethod
    def from_dict(cls, d) -> "Floorplan":
        return cls(
            nodes=tuple(tuple(n) for n in d["nodes"]),
            edges=tuple(tuple(e) for e in d["edges"]),
            width=d["width"],
            side_rooms=tuple(Room(tuple(r["rect"]), tuple(r["door"]), r["door_open"])
                             for r in d["side_rooms"]),
            template_id=d["template_id"],
        )


def _r(v: float) -> float:
    return round(float(v), 2)


def _rng(*keys) -> np.random.Generator:
    return np.random.default_rng([int(k) & 0xFFFFFFFFFFFFFFFF for k in keys])


# -- templates -----------------------------------------------------------------

def _straight(rng, w):
    L = _r(rng.uniform(16, 26))
    return [(0.0, 0.0), (L, 0.0)], [(0, 1)], 1


def _lturn(rng, w):
    a, b = _r(rng.uniform(10, 18)), _r(rng.uniform(8, 16))
    return [(0.0, 0.0), (a, 0.0), (a, b)], [(0, 1), (1, 2)], 1


def _ushape(rng, w, rooms=0):
    a, s = _r(rng.uniform(10, 16)), _r(w + rng.uniform(2.5, 5.0))
    return [(0.0, 0.0), (a, 0.0), (a, s), (0.0, s)], [(0, 1), (1, 2), (2, 3)], rooms


def _loop(rng, w, rooms=0):
    a, b = _r(rng.uniform(12, 18)), _r(w + rng.uniform(4, 8))
    nodes = [(0.0, 0.0), (a, 0.0), (a, b), (0.0, b)]
    return nodes, [(0, 1), (1, 2), (2, 3), (3, 0)], rooms


def _tjunction(rng, w):
    a = _r(rng.uniform(14, 22))
    m = _r(a * rng.uniform(0.35, 0.65))
    b = _r(rng.uniform(6, 12))
    return [(0.0, 0.0), (a, 0.0), (m, 0.0), (m, b)], [(0, 2), (2, 1), (2, 3)], 0


def _deadend(rng, w):
    a = _r(rng.uniform(16, 24))
    x1, x2 = _r(a * rng.uniform(0.2, 0.4)), _r(a * rng.uniform(0.6, 0.8))
    l1, l2 = _r(w / 2 + rng.uniform(2.5, 4.5)), _r(w / 2 + rng.uniform(2.5, 4.5))
    nodes = [(0.0, 0.0), (x1, 0.0), (x2, 0.0), (a, 0.0), (x1, l1), (x2, -l2)]
    return nodes, [(0, 1), (1, 2), (2, 3), (1, 4), (2, 5)], 0


def _siderooms(rng, w):
    L = _r(rng.uniform(18, 26))
    return [(0.0, 0.0), (L, 0.0)], [(0, 1)], 4


def _zshape(rng, w):
    a, b, c = _r(rng.uniform(8, 14)), _r(rng.uniform(6, 12)), _r(rng.uniform(8, 14))
    return [(0.0, 0.0), (a, 0.0), (a, b), (a + c, b)], [(0, 1), (1, 2), (2, 3)], 1


def _cross(rng, w):
    a, b, c, d = (_r(rng.uniform(6, 11)) for _ in range(4))
    nodes = [(0.0, 0.0), (-a, 0.0), (b, 0.0), (0.0, -c), (0.0, d)]
    return nodes, [(1, 0), (0, 2), (3, 0), (0, 4)], 0


def _loop_rooms(rng, w):
    a, b = _r(rng.uniform(18, 24)), _r(w + rng.uniform(6, 10))
    nodes = [(0.0, 0.0), (a, 0.0), (a, b), (0.0, b)]
    return nodes, [(0, 1), (1, 2), (2, 3), (3, 0)], 4


def _comb(rng, w):
    a = _r(rng.uniform(22, 28))
    xs = [_r(a * f) for f in (0.15, 0.5, 0.85)]
    ls = [_r(rng.uniform(6, 10)) for _ in xs]
    nodes = [(0.0, 0.0)] + [(x, 0.0) for x in xs] + [(a, 0.0)] + [(x, l) for x, l in zip(xs, ls)]
    edges = [(0, 1), (1, 2), (2, 3), (3, 4), (1, 5), (2, 6), (3, 7)]
    return nodes, edges, 3


def _ushape_rooms(rng, w):
    a, s = _r(rng.uniform(16, 22)), _r(w + rng.uniform(5, 8))
    stub = _r(a * rng.uniform(0.4, 0.6))
    nodes = [(0.0, 0.0), (a, 0.0), (a, s), (0.0, s), (stub, 0.0), (stub, -_r(rng.uniform(3, 5)))]
    edges = [(0, 4), (4, 1), (1, 2), (2, 3), (4, 5)]
    return nodes, edges, 3


# (builder, category); the last three are the held-out evaluation floorplans
TEMPLATES = (
    (_straight, "straight"),
    (_lturn, "L-turn"),
    (_ushape, "U-shape"),
    (_loop, "loop"),
    (_tjunction, "T-junction"),
    (_deadend, "dead-end"),
    (_siderooms, "side-rooms"),
    (_zshape, "L-turn"),
    (_cross, "T-junction"),
    (_loop_rooms, "loop"),
    (_comb, "T-junction"),
    (_ushape_rooms, "U-shape"),
)
N_TRAIN_TEMPLATES = 9


def template_split(n_test: int = 3):
    """(train template ids, test template ids); test ids are the last ``n_test``."""
    if len(TEMPLATES) < 12:
        raise ConfigError("need at least 12 template variants")
    ids = list(range(len(TEMPLATES)))
    return ids[:-n_test], ids[-n_test:]


# -- textures and lights -----------------------------------------------------------

def texture_pool(seed: int, n: int) -> list:
    """``n`` procedural materials drawn deterministically from ``seed``."""
    pool = []
    for k in range(n):
        rng = _rng(seed, k)
        family = FAMILIES[int(rng.integers(len(FAMILIES)))]
        base = tuple(float(v) for v in np.round(rng.uniform(0.0, 1.0, 3), 4))
        accent = tuple(float(v) for v in np.round(rng.uniform(0.0, 1.0, 3), 4))
        scale = round(float(math.exp(rng.uniform(math.log(0.1), math.log(2.0)))), 4)
        pool.append(MaterialSpec(family, base, accent, scale, int(rng.integers(2 ** 31))))
    return pool


def pool_for(config: GenConfig) -> list:
    if config.texture_pool == "test":
        return texture_pool(TEST_TEXTURE_SEED, min(config.n_textures_pool, TEST_POOL_SIZE))
    return texture_pool(TRAIN_TEXTURE_SEED, config.n_textures_pool)


def _random_lights(rng, regions, ceiling, config: GenConfig):
    lo, hi = config.light_count_range
    n = int(rng.integers(int(lo), int(hi) + 1))
    areas = np.array([(r[2] - r[0]) * (r[3] - r[1]) for r in regions])
    lights = []
    for _ in range(n):
        r = regions[int(rng.choice(len(regions), p=areas / areas.sum()))]
        pos = (_r(rng.uniform(r[0], r[2])), _r(rng.uniform(r[1], r[3])),
               _r(ceiling - rng.uniform(0.15, 0.6)))
        inten = round(float(rng.uniform(*config.light_intensity_range)), 3)
        color = tuple(round(float(c), 3) for c in rng.uniform(0.45, 1.0, 3))
        lights.append(Light(pos, inten, color))
    return lights


def _fixed_lights(plan: Floorplan, ceiling):
    lights = []
    for i, j in plan.edges:
        (ax, ay), (bx, by) = plan.nodes[i], plan.nodes[j]
        L = math.hypot(bx - ax, by - ay)
        n = max(1, int(L // 6.0))
        for k in range(n):
            f = (k + 0.5) / n
            lights.append(Light((_r(ax + f * (bx - ax)), _r(ay + f * (by - ay)),
                                 _r(ceiling - 0.3)), 6.0))
    return lights


def _assign_appearance(rng, n_surfaces, pool):
    """Pick one pool entry per surface; returns (materials table, surface ids)."""
    picks = rng.integers(len(pool), size=n_surfaces)
    order = sorted(set(int(p) for p in picks))
    index = {p: k for k, p in enumerate(order)}
    return [pool[p] for p in order], [index[int(p)] for p in picks]


def randomize_appearance(scene: Scene, rng: np.random.Generator, pool: Sequence[MaterialSpec],
                         config: GenConfig = GenConfig()) -> Scene:
    """Same geometry with fresh textures, lights and ambient level."""
    n_w, n_b = len(scene.walls), len(scene.obstacles)
    mats, ids = _assign_appearance(rng, n_w + n_b + 2, pool)
    walls = [Wall(w.a, w.b, w.z0, w.z1, ids[k], w.kind) for k, w in enumerate(scene.walls)]
    boxes = [Box(b.lo, b.hi, ids[n_w + k], b.kind) for k, b in enumerate(scene.obstacles)]
    lights = _random_lights(rng, scene.regions, scene.ceiling_height, config)
    ambient = round(float(rng.uniform(*config.ambient_range)), 4)
    return Scene(walls=walls, obstacles=boxes, floor_height=scene.floor_height,
                 ceiling_height=scene.ceiling_height, materials=mats,
                 floor_material=ids[n_w + n_b], ceiling_material=ids[n_w + n_b + 1],
                 lights=lights, ambient=ambient, regions=scene.regions, bounds=scene.bounds,
                 meta=scene.meta)


# -- layout --------------------------------------------------------------------

def _overlaps(a, b) -> bool:
    return a[0] < b[2] and b[0] < a[2] and a[1] < b[3] and b[1] < a[3]


def _place_rooms(rng, plan_nodes, plan_edges, w, n_rooms, corridor_rects):
    rooms = []
    taken = list(corridor_rects)
    attempts = 0
    while len(rooms) < n_rooms and attempts < 60 * max(n_rooms, 1):
        attempts += 1
        k = int(rng.integers(len(plan_edges)))
        i, j = plan_edges[k]
        (ax, ay), (bx, by) = plan_nodes[i], plan_nodes[j]
        horizontal = ay == by
        lo_e, hi_e = (min(ax, bx), max(ax, bx)) if horizontal else (min(ay, by), max(ay, by))
        span = _r(rng.uniform(3.0, 5.0))
        depth = _r(rng.uniform(3.0, 4.5))
        s_lo, s_hi = lo_e + w / 2 + 0.5, hi_e - w / 2 - 0.5 - span
        if s_hi <= s_lo:
            continue
        s0 = _r(rng.uniform(s_lo, s_hi))
        side = 1 if rng.uniform() < 0.5 else -1
        dw = _r(rng.uniform(0.9, 1.2))
        d0 = _r(s0 + rng.uniform(0.4, span - dw - 0.4))
        if horizontal:
            line = _r(ay + side * w / 2)
            rect = (s0, line, _r(s0 + span), _r(line + depth)) if side > 0 else \
                (s0, _r(line - depth), _r(s0 + span), line)
            door = ("h", line, d0, _r(d0 + dw))
        else:
            line = _r(ax + side * w / 2)
            rect = (line, s0, _r(line + depth), _r(s0 + span)) if side > 0 else \
                (_r(line - depth), s0, line, _r(s0 + span))
            door = ("v", line, d0, _r(d0 + dw))
        m = 0.8
        probe = [rect[0] - m, rect[1] - m, rect[2] + m, rect[3] + m]
        # do not inflate toward the attached corridor
        if horizontal:
            probe[1 if side > 0 else 3] = rect[1] + 1e-6 if side > 0 else rect[3] - 1e-6
        else:
            probe[0 if side > 0 else 2] = rect[0] + 1e-6 if side > 0 else rect[2] - 1e-6
        if any(_overlaps(probe, t) for t in taken):
            continue
        taken.append(rect)
        rooms.append(Room(rect, door, bool(rng.uniform() < 0.5)))
    return rooms


def _boundary_panels(free, doors):
    """Boundary of labelled free rectangles on the compressed grid.

    ``free`` is a list of (rect, label); ``doors`` a list of
    (orientation, c, lo, hi, open). Returns (kind, a, b) tuples with kind in
    {'wall', 'door-open', 'door-closed'}.
    """
    xs = sorted({v for r, _ in free for v in (r[0], r[2])}
                | {v for d in doors if d[0] == "h" for v in (d[2], d[3])}
                | {d[1] for d in doors if d[0] == "v"})
    ys = sorted({v for r, _ in free for v in (r[1], r[3])}
                | {v for d in doors if d[0] == "v" for v in (d[2], d[3])}
                | {d[1] for d in doors if d[0] == "h"})
    nx, ny = len(xs) - 1, len(ys) - 1
    cx = (np.array(xs[:-1]) + np.array(xs[1:])) / 2
    cy = (np.array(ys[:-1]) + np.array(ys[1:])) / 2
    label = -np.ones((nx, ny), dtype=int)
    for rect, lab in free:
        inside = ((cx[:, None] > rect[0]) & (cx[:, None] < rect[2])
                  & (cy[None, :] > rect[1]) & (cy[None, :] < rect[3]))
        label[inside & (label < 0)] = lab

    def door_at(orient, c, lo, hi):
        for d in doors:
            if d[0] == orient and d[1] == c and d[2] <= lo and hi <= d[3]:
                return "door-open" if d[4] else "door-closed"
        return "wall"

    panels = []
    for orient in ("v", "h"):
        n_lines = nx + 1 if orient == "v" else ny + 1
        n_cells = ny if orient == "v" else nx
        coords_line = xs if orient == "v" else ys
        coords_run = ys if orient == "v" else xs
        for li in range(n_lines):
            run_kind, run_start = None, None
            for cj in range(n_cells + 1):
                kind = None
                if cj < n_cells:
                    if orient == "v":
                        a = label[li - 1, cj] if li > 0 else -1
                        b = label[li, cj] if li < nx else -1
                    else:
                        a = label[cj, li - 1] if li > 0 else -1
                        b = label[cj, li] if li < ny else -1
                    if a != b:
                        if a < 0 or b < 0:
                            kind = "wall"
                        else:
                            kind = door_at(orient, coords_line[li], coords_run[cj],
                                           coords_run[cj + 1])
                if kind != run_kind:
                    if run_kind is not None:
                        c = coords_line[li]
                        s0, s1 = coords_run[run_start], coords_run[cj]
                        pa, pb = ((c, s0), (c, s1)) if orient == "v" else ((s0, c), (s1, c))
                        panels.append((run_kind, pa, pb))
                    run_kind, run_start = kind, cj
    return panels


def _free_gap_ok(w, lat_lo, lat_hi, min_gap):
    return max(lat_lo + w / 2, w / 2 - lat_hi) >= min_gap


def _furnish(rng, plan: Floorplan, ceiling, config: GenConfig):
    """Boxes along corridor segments and inside rooms.

    Items on one corridor segment never overlap along its axis and keep at
    least ``min_gap`` between them, and each leaves a lateral gap of at least
    ``min_gap`` somewhere in its cross-section, so a passage wider than the
    vehicle exists along every segment.
    """
    w = plan.width
    min_gap = 2 * config.vehicle_radius + 0.4
    boxes = []
    door_spans = [r.door for r in plan.side_rooms]
    for (i, j) in plan.edges:
        (ax, ay), (bx, by) = plan.nodes[i], plan.nodes[j]
        horizontal = ay == by
        c_lat = ay if horizontal else ax
        lo_e = (min(ax, bx) if horizontal else min(ay, by)) + w / 2 + 0.3
        hi_e = (max(ax, bx) if horizontal else max(ay, by)) - w / 2 - 0.3
        if hi_e - lo_e < 1.0:
            continue
        n = int(rng.poisson(config.furniture_density * (hi_e - lo_e) / 10.0))
        spans = []
        for _ in range(n):
            for _attempt in range(20):
                name, length, depth, height = FURNITURE[int(rng.integers(len(FURNITURE)))]
                length *= rng.uniform(0.8, 1.2)
                depth *= rng.uniform(0.8, 1.2)
                top = ceiling if height is None else min(ceiling - 0.2, height * rng.uniform(0.8, 1.2))
                if hi_e - lo_e < length:
                    continue
                s0 = rng.uniform(lo_e, hi_e - length)
                s1 = s0 + length
                if any(s0 < b + min_gap and a - min_gap < s1 for a, b in spans):
                    continue
                if any(d[0] == ("h" if horizontal else "v") and abs(abs(d[1] - c_lat) - w / 2) < 1e-6
                       and s0 < d[3] + 0.6 and d[2] - 0.6 < s1 for d in door_spans):
                    continue
                if rng.uniform() < 0.7:
                    side = 1 if rng.uniform() < 0.5 else -1
                    lat_lo, lat_hi = (w / 2 - depth, w / 2) if side > 0 else (-w / 2, -w / 2 + depth)
                else:
                    c = rng.uniform(-w / 2 + depth / 2, w / 2 - depth / 2)
                    lat_lo, lat_hi = c - depth / 2, c + depth / 2
                if not _free_gap_ok(w, lat_lo, lat_hi, min_gap):
                    continue
                spans.append((s0, s1))
                if horizontal:
                    lo = (_r(s0), _r(c_lat + lat_lo), 0.0)
                    hi = (_r(s1), _r(c_lat + lat_hi), _r(top))
                else:
                    lo = (_r(c_lat + lat_lo), _r(s0), 0.0)
                    hi = (_r(c_lat + lat_hi), _r(s1), _r(top))
                if all(h > l for l, h in zip(lo, hi)):
                    boxes.append(Box(lo, hi, 0, name))
                break
    for room in plan.side_rooms:
        x0, y0, x1, y1 = room.rect
        orient, c, d0, d1 = room.door
        for _ in range(int(rng.integers(0, 3))):
            name, length, depth, height = FURNITURE[int(rng.integers(len(FURNITURE)))]
            top = ceiling if height is None else min(ceiling - 0.2, height)
            # against the wall opposite the door
            if orient == "h":
                far_y = y1 if abs(y0 - c) < 1e-6 else y0
                if x1 - x0 - 0.2 < length:
                    continue
                s = rng.uniform(x0 + 0.1, x1 - 0.1 - length)
                ylo, yhi = (far_y - depth, far_y) if far_y == y1 else (far_y, far_y + depth)
                lo, hi = (_r(s), _r(ylo), 0.0), (_r(s + length), _r(yhi), _r(top))
            else:
                far_x = x1 if abs(x0 - c) < 1e-6 else x0
                if y1 - y0 - 0.2 < length:
                    continue
                s = rng.uniform(y0 + 0.1, y1 - 0.1 - length)
                xlo, xhi = (far_x - depth, far_x) if far_x == x1 else (far_x, far_x + depth)
                lo, hi = (_r(xlo), _r(s), 0.0), (_r(xhi), _r(s + length), _r(top))
            if any(_overlaps((lo[0], lo[1], hi[0], hi[1]), (b.lo[0], b.lo[1], b.hi[0], b.hi[1]))
                   for b in boxes):
                continue
            boxes.append(Box(lo, hi, 0, name))
    return boxes


def build_floorplan(template_id: int, rng: np.random.Generator, width: float) -> Floorplan:
    builder, _ = TEMPLATES[template_id]
    nodes, edges, n_rooms = builder(rng, width)
    nodes = tuple((_r(x), _r(y)) for x, y in nodes)
    plan = Floorplan(nodes, tuple(tuple(e) for e in edges), width, (), template_id)
    rects = [plan.edge_rect(k) for k in range(len(edges))]
    rooms = _place_rooms(rng, nodes, edges, width, n_rooms, rects)
    return Floorplan(nodes, plan.edges, width, tuple(rooms), template_id)


def scene_from_floorplan(plan: Floorplan, rng: np.random.Generator, config: GenConfig,
                         ceiling: float, extra_meta: Optional[dict] = None) -> Scene:
    corridor = [(plan.edge_rect(k), 0) for k in range(len(plan.edges))]
    rooms = [(r.rect, k + 1) for k, r in enumerate(plan.side_rooms)]
    doors = [(*r.door, r.door_open) for r in plan.side_rooms]
    panels = _boundary_panels(rooms + corridor, doors)
    walls = []
    for kind, a, b in panels:
        if kind == "wall":
            walls.append(Wall(a, b, 0.0, ceiling, 0, "wall"))
        else:
            walls.append(Wall(a, b, DOOR_HEIGHT, ceiling, 0, "lintel"))
            if kind == "door-closed":
                walls.append(Wall(a, b, 0.0, DOOR_HEIGHT, 0, "door"))
    boxes = _furnish(rng, plan, ceiling, config) if config.furnish else []
    regions = [r for r, _ in corridor] + [r for r, _ in rooms]
    xs = [v for r in regions for v in (r[0], r[2])]
    ys = [v for r in regions for v in (r[1], r[3])]
    bounds = (min(xs), min(ys), max(xs), max(ys))
    meta = {"floorplan": plan.to_dict(), "template_id": plan.template_id,
            "category": plan.category}
    meta.update(extra_meta or {})
    skeleton = Scene(walls=walls, obstacles=boxes, floor_height=0.0, ceiling_height=ceiling,
                     materials=[MaterialSpec("solid", (0.5, 0.5, 0.5), (0.5, 0.5, 0.5), 1.0)],
                     floor_material=0, ceiling_material=0, lights=[], ambient=0.2,
                     regions=regions, bounds=bounds, meta=meta)
    return skeleton


def _fixed_appearance(scene: Scene, plan: Floorplan) -> Scene:
    pool = texture_pool(TRAIN_TEXTURE_SEED, 5)
    wall_m, floor_m, ceil_m, furn_m, door_m = range(5)
    walls = [Wall(w.a, w.b, w.z0, w.z1, door_m if w.kind == "door" else wall_m, w.kind)
             for w in scene.walls]
    boxes = [Box(b.lo, b.hi, furn_m, b.kind) for b in scene.obstacles]
    return Scene(walls=walls, obstacles=boxes, floor_height=scene.floor_height,
                 ceiling_height=scene.ceiling_height, materials=pool, floor_material=floor_m,
                 ceiling_material=ceil_m, lights=_fixed_lights(plan, scene.ceiling_height),
                 ambient=0.2, regions=scene.regions, bounds=scene.bounds, meta=scene.meta)


def generate_scene(config: GenConfig) -> Scene:
    """Deterministic function of ``config``; template drawn from the seed unless pinned."""
    rng = _rng(config.seed, 0x5CE7E)
    tid = config.template_id
    if tid is None:
        tid = int(rng.integers(len(TEMPLATES)))
    width = _r(rng.uniform(*config.width_range))
    ceiling = _r(rng.uniform(*config.ceiling_range))
    plan = build_floorplan(tid, rng, width)
    meta = {"seed": int(config.seed), "texture_pool": config.texture_pool,
            "furnished": bool(config.furnish)}
    scene = scene_from_floorplan(plan, rng, config, ceiling, meta)
    if config.randomize_appearance:
        return randomize_appearance(scene, rng, pool_for(config), config)
    return _fixed_appearance(scene, plan)


def floorplan_of(scene: Scene) -> Floorplan:
    if "floorplan" not in scene.meta:
        raise ConfigError("scene carries no corridor floorplan")
    return Floorplan.from_dict(scene.meta["floorplan"])


def corridor_axes(scene: Scene) -> list:
    """Corridor medial axes as ((ax, ay), (bx, by), width) triples."""
    if "floorplan" in scene.meta:
        plan = floorplan_of(scene)
        return [(tuple(plan.nodes[i]), tuple(plan.nodes[j]), plan.width) for i, j in plan.edges]
    if "corridor_edges" in scene.meta:
        return [(tuple(e["a"]), tuple(e["b"]), float(e["width"]))
                for e in scene.meta["corridor_edges"]]
    raise ConfigError("scene carries no corridor metadata")


# -- poses -------------------------------------------------------------------------

def sample_camera_pose(scene: Scene, seed, radius: float = 0.25,
                       height_band: tuple = (0.75, 2.0),
                       pitch_band: float = math.radians(10.0),
                       max_tries: int = 10000) -> CameraPose:
    """Uniform free-space position with clearance >= ``radius``, uniform yaw,
    uniform height within ``height_band`` and pitch within +-``pitch_band``."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    regions = scene.regions
    areas = np.array([(r[2] - r[0]) * (r[3] - r[1]) for r in regions], dtype=float)
    probs = areas / areas.sum()
    lo = max(height_band[0], scene.floor_height)
    hi = min(height_band[1], scene.ceiling_height)
    for _ in range(max_tries):
        r = regions[int(rng.choice(len(regions), p=probs))]
        p = (float(rng.uniform(r[0], r[2])), float(rng.uniform(r[1], r[3])),
             float(rng.uniform(lo, hi)))
        if scene.contains(p) and distance_to_nearest(scene, p) >= radius:
            yaw = float(rng.uniform(0.0, 2.0 * math.pi))
            pitch = float(rng.uniform(-pitch_band, pitch_band)) if pitch_band > 0 else 0.0
            return CameraPose(p, yaw, pitch)
    raise GenerationError(f"no free-space pose found in {max_tries} tries")


# -- train / test split ------------------------------------------------------------

@dataclass(frozen=True)
class Split:
    train: tuple
    test: tuple
    train_templates: tuple
    test_templates: tuple


def scene_seed(base_seed: int, template_id: int, k: int) -> int:
    return int(_rng(base_seed, template_id, k, 0x5EED).integers(2 ** 62))


def evaluation_split(config: GenConfig, scenes_per_template: int = 1,
                     test_furnish: Optional[bool] = None) -> Split:
    """Training scenes from the first nine templates with the training texture
    pool; evaluation scenes from the last three with the held-out pool."""
    train_ids, test_ids = template_split()
    train, test = [], []
    for tid in train_ids:
        for k in range(scenes_per_template):
            cfg = _replace(config, seed=scene_seed(config.seed, tid, k), template_id=tid,
                           texture_pool="train")
            train.append(generate_scene(cfg))
    for tid in test_ids:
        for k in range(scenes_per_template):
            cfg = _replace(config, seed=scene_seed(config.seed, tid, k), template_id=tid,
                           texture_pool="test",
                           furnish=config.furnish if test_furnish is None else test_furnish)
            test.append(generate_scene(cfg))
    return Split(tuple(train), tuple(test), tuple(train_ids), tuple(test_ids))


def _replace(cfg: GenConfig, **kw) -> GenConfig:
    d = asdict(cfg)
    d.update(kw)
    return GenConfig(**d)
