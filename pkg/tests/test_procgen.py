import math
from collections import Counter

import numpy as np
import pytest
from scipy import ndimage, stats

from simflight import procgen as P
from simflight.errors import ConfigError, GenerationError
from simflight.scene import (Scene, distance_many, distance_to_nearest, dumps_scene,
                             scene_from_dict, scene_to_dict)


@pytest.fixture(scope="module")
def fuzz_scenes():
    return [P.generate_scene(P.GenConfig(seed=s)) for s in range(1000)]


def test_same_seed_same_bytes():
    a = P.generate_scene(P.GenConfig(seed=123))
    b = P.generate_scene(P.GenConfig(seed=123))
    assert dumps_scene(a) == dumps_scene(b)


def test_unfurnished_has_no_obstacles():
    for s in range(20):
        assert P.generate_scene(P.GenConfig(seed=s, furnish=False)).obstacles == ()


def test_fixed_appearance_ignores_seed():
    a = P.generate_scene(P.GenConfig(seed=1, template_id=2, randomize_appearance=False))
    b = P.generate_scene(P.GenConfig(seed=2, template_id=2, randomize_appearance=False))
    assert a.materials == b.materials and a.ambient == b.ambient


def test_all_categories_within_100_seeds():
    seen = Counter(P.generate_scene(P.GenConfig(seed=s)).meta["category"] for s in range(100))
    assert set(seen) == set(P.CATEGORIES)


def test_side_rooms_have_open_and_closed_doors():
    doors = Counter()
    for s in range(30):
        plan = P.floorplan_of(P.generate_scene(P.GenConfig(seed=s, template_id=6)))
        doors.update(r.door_open for r in plan.side_rooms)
    assert doors[True] > 0 and doors[False] > 0


def _graph_connected(plan):
    adj = {i: set() for i in range(len(plan.nodes))}
    for i, j in plan.edges:
        adj[i].add(j)
        adj[j].add(i)
    seen, stack = {0}, [0]
    while stack:
        for k in adj[stack.pop()] - seen:
            seen.add(k)
            stack.append(k)
    return len(seen) == len(plan.nodes)


def _strict_overlap(a, b, eps=1e-9):
    return a[0] < b[2] - eps and b[0] < a[2] - eps and a[1] < b[3] - eps and b[1] < a[3] - eps


def test_fuzz_floorplan_and_scene_invariants(fuzz_scenes):
    for sc in fuzz_scenes:
        # rebuilding from the dict reruns every Scene check
        scene_from_dict(scene_to_dict(sc))
        plan = P.floorplan_of(sc)
        assert plan.width > 1.2
        assert _graph_connected(plan)
        for k, e in enumerate(plan.edges):
            for m in range(k + 1, len(plan.edges)):
                if set(e) & set(plan.edges[m]):
                    continue
                assert not _strict_overlap(plan.edge_rect(k), plan.edge_rect(m))
        for b in sc.obstacles:
            assert b.hi[2] <= sc.ceiling_height


def test_distinct_seeds_distinct_textures(fuzz_scenes):
    keys = {(tuple(sc.materials), sc.floor_material, sc.ceiling_material,
             tuple(w.material for w in sc.walls)) for sc in fuzz_scenes}
    assert len(keys) / len(fuzz_scenes) > 0.99


def _passage_exists(scene, axis, r=0.25, h=0.1, z=0.8):
    """Grid the corridor strip, keep cells with clearance >= r and check one
    8-connected component spans from one end of the axis to the other."""
    a, b, w = np.array(axis[0]), np.array(axis[1]), axis[2]
    L = np.linalg.norm(b - a)
    t = (b - a) / L
    n = np.array([-t[1], t[0]])
    s = np.arange(0.0, L + 1e-9, h)
    q = np.arange(-w / 2 + h / 2, w / 2, h)
    pts = (a + s[:, None, None] * t + q[None, :, None] * n).reshape(-1, 2)
    pts = np.column_stack([pts, np.full(len(pts), z)])
    inside = np.array([scene.contains(p) for p in pts])
    d = np.zeros(len(pts))
    d[inside] = distance_many(scene, pts[inside])
    lab, _ = ndimage.label((d >= r).reshape(len(s), len(q)), np.ones((3, 3)))
    return bool((set(lab[0].ravel()) & set(lab[-1].ravel())) - {0})


def test_furniture_leaves_a_passage():
    for s in range(60):
        sc = P.generate_scene(P.GenConfig(seed=s, furniture_density=4.0))
        for axis in P.corridor_axes(sc):
            assert _passage_exists(sc, axis), (s, axis)


def test_pose_clearance_and_bands():
    sc = P.generate_scene(P.GenConfig(seed=5))
    rng = np.random.default_rng(0)
    for _ in range(1000):
        p = P.sample_camera_pose(sc, rng)
        assert distance_to_nearest(sc, p.position) >= 0.25
        assert 0.75 <= p.position[2] <= 2.0
        assert 0.0 <= p.yaw < 2 * math.pi
        assert abs(p.pitch) <= math.radians(10.0)


def test_pose_seed_determinism():
    sc = P.generate_scene(P.GenConfig(seed=5))
    assert P.sample_camera_pose(sc, 42) == P.sample_camera_pose(sc, 42)


def test_yaw_uniform_chi_square():
    sc = P.generate_scene(P.GenConfig(seed=9))
    rng = np.random.default_rng(1)
    yaws = [P.sample_camera_pose(sc, rng).yaw for _ in range(10_000)]
    counts, _ = np.histogram(yaws, bins=20, range=(0, 2 * math.pi))
    assert stats.chisquare(counts).pvalue > 0.01


def test_pose_without_free_space():
    sc = P.generate_scene(P.GenConfig(seed=5))
    with pytest.raises(GenerationError):
        P.sample_camera_pose(sc, 0, radius=10.0, max_tries=50)


def test_split_sizes_and_disjointness():
    sp = P.evaluation_split(P.GenConfig(seed=0))
    assert len(sp.train_templates) == 9 and len(sp.test_templates) == 3
    assert not set(sp.train_templates) & set(sp.test_templates)
    assert {s.meta["template_id"] for s in sp.train} == set(sp.train_templates)
    assert {s.meta["template_id"] for s in sp.test} == set(sp.test_templates)
    train_mats = {m for s in sp.train for m in s.materials}
    test_mats = {m for s in sp.test for m in s.materials}
    assert not train_mats & test_mats


def test_texture_pools_disjoint():
    train = set(P.texture_pool(P.TRAIN_TEXTURE_SEED, 200))
    test = set(P.texture_pool(P.TEST_TEXTURE_SEED, P.TEST_POOL_SIZE))
    assert len(train) == 200 and len(test) == 100
    assert not train & test


def test_test_furnish_override():
    sp = P.evaluation_split(P.GenConfig(seed=0), test_furnish=False)
    assert all(s.obstacles == () for s in sp.test)
    assert any(s.obstacles for s in sp.train)


@pytest.mark.parametrize("kw", [dict(width_range=(3.0, 2.0)), dict(width_range=(1.0, 2.0)),
                                dict(furniture_density=-1.0), dict(n_textures_pool=0),
                                dict(texture_pool="other"), dict(template_id=99),
                                dict(light_count_range=(0, math.inf))])
def test_degenerate_config(kw):
    with pytest.raises(ConfigError):
        P.GenConfig(**kw)


def test_appearance_randomization_keeps_geometry():
    sc = P.generate_scene(P.GenConfig(seed=4))
    other = P.randomize_appearance(sc, np.random.default_rng(3), P.texture_pool(1000, 200))
    assert [(w.a, w.b, w.z0, w.z1) for w in other.walls] == \
        [(w.a, w.b, w.z0, w.z1) for w in sc.walls]
    assert [(b.lo, b.hi) for b in other.obstacles] == [(b.lo, b.hi) for b in sc.obstacles]
    assert isinstance(other, Scene)
