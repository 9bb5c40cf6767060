import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from simflight import procgen, qnet, trainer
from simflight.errors import ContractError
from simflight.policies import GreedyNetPolicy, Policy, StraightPolicy
from simflight.render import CameraIntrinsics
from simflight.scene import corridor_scene
from simflight.vehicle import GridSpec, RewardConfig, VehicleState, step

GRID = GridSpec()
TINY = GridSpec(5, CameraIntrinsics(16, 16))


def dyadic(gamma, H):
    # speed, clearances and the (d - r) / (tau - r) ratio are all exact in binary
    return RewardConfig(r=0.25, tau_d=1.25, speed=0.25, gamma=gamma, H=H,
                        altitude_band=(0.5, 3.5))


@pytest.fixture(scope="module")
def line():
    """Corridor wide and tall enough that only the far end wall (x = 10) matters."""
    return corridor_scene(length=10.0, width=10.0, height=4.0)


class Scripted(Policy):
    """Replays a fixed action list regardless of the image."""
    name = "scripted"
    needs_image = False

    def __init__(self, actions):
        self.actions = list(actions)
        self.k = 0

    def act(self, image, grid, scene=None, pose=None):
        a = self.actions[self.k]
        self.k += 1
        return a


# rewards by hand: clearance d = 10 - x, reward = min(1, d - 0.25)
#   x0 = 8.0   -> x = 8.25 8.5 8.75 9.0 9.25 9.5  d = 1.75 1.5 1.25 1.0 0.75 0.5
#                 R = 1 1 1 0.75 0.5 0.25
#   x0 = 8.625 -> x = 8.875 9.125 9.375 9.625 | 9.875 (d = 0.125 < r: collision)
#                 R = 0.875 0.625 0.375 0.125 | 0
HAND = {8.0: [1.0, 1.0, 1.0, 0.75, 0.5, 0.25], 8.625: [0.875, 0.625, 0.375, 0.125]}


def by_hand(rewards, gamma, H):
    g, total, survived = 1.0, 0.0, 0
    # written out the way it is done on paper: R0 + g R1 + g g R2 + ...
    terms = rewards[: H + 1]
    for k, r in enumerate(terms):
        total = total + g * r
        g = g * gamma
        survived += 1
    return total, survived


@pytest.mark.parametrize("gamma", [0.5, 0.9])
@pytest.mark.parametrize("H", [0, 3, 5])
@pytest.mark.parametrize("x0", sorted(HAND))
def test_rollout_matches_hand_enumeration(line, gamma, H, x0):
    cfg = dyadic(gamma, H)
    res = trainer.rollout_return(line, VehicleState((x0, 0.0, 2.0), 0.0), GRID.center,
                                 Scripted([GRID.center] * H), cfg, GRID)
    expect, survived = by_hand(HAND[x0], gamma, H)
    assert res.discounted_return == expect
    assert res.steps_survived == survived
    assert res.normalized_return == expect / cfg.g_max


def test_gamma_half_values_written_out(line):
    res = trainer.rollout_return(line, VehicleState((8.0, 0.0, 2.0), 0.0), GRID.center,
                                 StraightPolicy(), dyadic(0.5, 5), GRID)
    assert res.discounted_return == 1 + 0.5 + 0.25 + 0.125 * 0.75 + 0.0625 * 0.5 + 0.03125 * 0.25
    res = trainer.rollout_return(line, VehicleState((8.625, 0.0, 2.0), 0.0), GRID.center,
                                 StraightPolicy(), dyadic(0.5, 5), GRID)
    assert res.discounted_return == 0.875 + 0.5 * 0.625 + 0.25 * 0.375 + 0.125 * 0.125
    assert res.steps_survived == 4


@pytest.mark.parametrize("gamma", [0.5, 0.9])
@pytest.mark.parametrize("H", [0, 3, 5])
def test_all_safe_normalizes_to_one(gamma, H):
    hall = corridor_scene(length=40.0, width=10.0, height=4.0)
    cfg = RewardConfig(gamma=gamma, H=H)
    res = trainer.rollout_return(hall, VehicleState((2.0, 0.0, 1.5), 0.0), GRID.center,
                                 StraightPolicy(), cfg, GRID)
    assert res.discounted_return == pytest.approx((1 - gamma ** (H + 1)) / (1 - gamma), rel=1e-14)
    assert res.normalized_return == 1.0
    assert res.steps_survived == H + 1
    if (gamma, H) == (0.9, 5):
        assert res.discounted_return == pytest.approx(4.68559, abs=1e-12)


def test_first_step_collision_is_zero(line):
    res = trainer.rollout_return(line, VehicleState((9.6, 0.0, 2.0), 0.0), GRID.center,
                                 StraightPolicy(), RewardConfig(), GRID)
    assert res.discounted_return == 0.0 and res.normalized_return == 0.0
    assert res.steps_survived == 0


def test_rollout_from_collided_state(line):
    with pytest.raises(ContractError):
        trainer.rollout_return(line, VehicleState((5.0, 0.0, 2.0), 0.0, True), GRID.center,
                               StraightPolicy(), RewardConfig(), GRID)


@settings(max_examples=30, deadline=None)
@given(st.floats(1.0, 9.5), st.floats(-4.0, 4.0), st.floats(-3.2, 3.2), st.integers(0, 10),
       st.integers(0, 10))
def test_horizon_zero_is_single_step_reward(x, y, yaw, row, col):
    hall = corridor_scene(length=10.0, width=10.0, height=4.0)
    cfg = RewardConfig(H=0)
    s = VehicleState((x, y, 1.5), yaw)
    res = trainer.rollout_return(hall, s, (row, col), StraightPolicy(), cfg, GRID)
    one = step(hall, s, (row, col), cfg, GRID)
    assert res.normalized_return == res.discounted_return == one.reward
    assert 0.0 <= res.normalized_return <= 1.0


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_normalized_return_properties(seed):
    sc = procgen.generate_scene(procgen.GenConfig(seed=seed % 50))
    rng = np.random.default_rng(seed)
    _, s = trainer.sample_state([sc], rng, RewardConfig())
    a = (int(rng.integers(11)), int(rng.integers(11)))
    res = trainer.rollout_return(sc, s, a, StraightPolicy(), RewardConfig(), GRID)
    assert 0.0 <= res.normalized_return <= 1.0
    first = step(sc, s, a, RewardConfig(), GRID)
    if first.terminal:
        assert res.normalized_return == 0.0
    if res.normalized_return == 0.0:
        assert first.terminal or first.reward == 0.0
    if res.normalized_return == 1.0:
        assert res.steps_survived == RewardConfig().H + 1


def test_lockstep_matches_single_rollouts():
    sc = procgen.generate_scene(procgen.GenConfig(seed=2))
    cfg = RewardConfig()
    params = qnet.init_params(qnet.Arch(input_hw=(16, 16), M=5, convs=((3, 2, 4),)), 0)
    pol = GreedyNetPolicy(params)
    _, s = trainer.sample_state([sc], np.random.default_rng(3), cfg)
    norm, disc, steps = trainer.rollouts_all_actions(sc, s, pol, cfg, TINY)
    for r in range(5):
        for c in range(5):
            one = trainer.rollout_return(sc, s, (r, c), pol, cfg, TINY)
            assert disc[r, c] == one.discounted_return
            assert norm[r, c] == one.normalized_return
            assert steps[r, c] == one.steps_survived


def test_first_step_rewards_do_not_depend_on_policy():
    sc = procgen.generate_scene(procgen.GenConfig(seed=6))
    cfg = RewardConfig(H=0)
    params = qnet.init_params(qnet.Arch(input_hw=(16, 16), M=5, convs=((3, 2, 4),)), 1)
    rng = np.random.default_rng(0)
    for _ in range(5):
        _, s = trainer.sample_state([sc], rng, cfg)
        a = trainer.rollouts_all_actions(sc, s, StraightPolicy(), cfg, TINY)[0]
        b = trainer.rollouts_all_actions(sc, s, GreedyNetPolicy(params), cfg, TINY)[0]
        np.testing.assert_array_equal(a, b)


def test_wall_ahead_centre_target_zero():
    hall = corridor_scene(length=10.0, width=3.0, height=3.0)
    s = VehicleState((9.7, 0.0, 1.5), 0.0)
    norm, _, _ = trainer.rollouts_all_actions(hall, s, StraightPolicy(), RewardConfig(), GRID)
    assert norm[5, 5] == 0.0
    assert np.all((norm >= 0) & (norm <= 1))


def test_open_corridor_forward_beats_sideways():
    hall = corridor_scene(length=30.0, width=2.5, height=3.0)
    cfg = RewardConfig()
    fwd, side = [], []
    for x in (3.0, 8.0, 13.0):
        for y in (-0.4, 0.0, 0.4):
            norm, _, _ = trainer.rollouts_all_actions(hall, VehicleState((x, y, 1.4), 0.0),
                                                      StraightPolicy(), cfg, GRID)
            fwd.append(norm[:, 4:7].mean())
            side.append(np.r_[norm[:, :2].ravel(), norm[:, -2:].ravel()].mean())
    assert np.mean(fwd) >= np.mean(side)


@pytest.fixture(scope="module")
def scenes():
    return [procgen.generate_scene(procgen.GenConfig(seed=s)) for s in range(4)]


def tiny_cfg(**kw):
    base = dict(n_pretrain_images=40, pretrain_epochs=3, n_rl_iterations=2,
                states_per_iteration=3, rl_epochs=2, grid=TINY, convs=((3, 2, 4), (3, 2, 4)),
                batch_size=8)
    base.update(kw)
    return trainer.TrainConfig(**base)


def test_pretrain_dataset_contract(scenes):
    a = trainer.make_pretrain_dataset(scenes, 30, TINY, seed=1)
    b = trainer.make_pretrain_dataset(scenes, 30, TINY, seed=1)
    c = trainer.make_pretrain_dataset(scenes, 30, TINY, seed=2)
    assert a.manifest_hash() == b.manifest_hash() != c.manifest_hash()
    assert set(np.unique(a.targets)) <= {0.0, 1.0}
    assert np.all(a.masks == 1) and a.images.shape == (30, 16, 16, 3)
    np.testing.assert_array_equal(a.targets == 1, a.depths > 1.0)


def test_pretrain_dataset_is_not_degenerate(scenes):
    data = trainer.make_pretrain_dataset(scenes, 1000, TINY, seed=0)
    assert 0.05 < data.targets.mean() < 0.95


def test_pretrain_dataset_parallel_equals_serial(scenes):
    a = trainer.make_pretrain_dataset(scenes, 12, TINY, seed=3, workers=1)
    b = trainer.make_pretrain_dataset(scenes, 12, TINY, seed=3, workers=3)
    assert a.manifest_hash() == b.manifest_hash()


def test_pretrain_loss_decreases_and_zero_epochs(scenes):
    cfg = tiny_cfg(n_pretrain_images=200, pretrain_epochs=3)
    data = trainer.make_pretrain_dataset(scenes, cfg.n_pretrain_images, cfg.grid, cfg.seed)
    p0 = qnet.init_params(cfg.arch(), 0)
    losses = []
    trainer.pretrain(p0, data, cfg, log=lambda e, v: losses.append(v))
    assert losses[0] > losses[1] > losses[2]
    same = trainer.pretrain(p0, data, tiny_cfg(pretrain_epochs=0))
    assert same.equal(p0)


def test_collect_qtargets_shapes_and_doubling(scenes):
    cfg = tiny_cfg(states_per_iteration=2)
    pol = StraightPolicy()
    a = trainer.collect_qtargets(scenes, pol, cfg)
    b = trainer.collect_qtargets(scenes, pol, tiny_cfg(states_per_iteration=4))
    assert len(a) == 2 and len(b) == 4
    assert a.targets.shape == (2, 5, 5)
    assert np.all((a.targets >= 0) & (a.targets <= 1))
    np.testing.assert_array_equal(b.targets[:2], a.targets)


def test_collect_parallel_equals_serial(scenes):
    cfg = tiny_cfg(states_per_iteration=4)
    pol = GreedyNetPolicy(qnet.init_params(cfg.arch(), 0))
    a = trainer.collect_qtargets(scenes, pol, cfg, workers=1)
    b = trainer.collect_qtargets(scenes, pol, cfg, workers=2)
    assert a.manifest_hash() == b.manifest_hash()


def test_cadrl_zero_iterations_returns_input(scenes):
    cfg = tiny_cfg(n_rl_iterations=0)
    p = qnet.init_params(cfg.arch(), 0)
    out, rows = trainer.cadrl_train(cfg, scenes, p)
    assert out.equal(p) and rows == []


def test_cadrl_is_deterministic(tmp_path, scenes):
    cfg = tiny_cfg()
    p = qnet.init_params(cfg.arch(), 0)
    a, rows_a = trainer.cadrl_train(cfg, scenes, p, out_dir=tmp_path)
    b, rows_b = trainer.cadrl_train(cfg, scenes, p)
    assert a.equal(b) and rows_a == rows_b
    assert len(rows_a) == 2 and all(0 <= r["mean_return"] <= 1 for r in rows_a)
    assert (tmp_path / "iter_000.ckpt").exists() and (tmp_path / "iter_001.ckpt").exists()
    assert qnet.load_checkpoint(tmp_path / "iter_001.ckpt").equal(a)
    trainer.write_metrics_csv(tmp_path / "m.csv", rows_a, "config_hash: x")
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[:2] == ["# config_hash: x", "iteration,mean_return,loss"]
