import json
import subprocess
import sys

import pytest

from conftest import tiny_config_dict
from simflight import cli
from simflight.config import (RunConfig, canonical_json, config_from_dict, config_hash,
                              config_to_dict, load_config, save_config)
from simflight.errors import ConfigError


def test_defaults_roundtrip(tmp_path):
    cfg = RunConfig().validate()
    save_config(cfg, tmp_path / "c.json")
    back = load_config(tmp_path / "c.json")
    assert back == cfg
    assert config_hash(back) == config_hash(cfg)
    assert config_from_dict(config_to_dict(cfg)) == cfg


def test_hash_is_stable_and_sensitive():
    a = config_from_dict(tiny_config_dict())
    b = config_from_dict(json.loads(json.dumps(tiny_config_dict())))
    assert config_hash(a) == config_hash(b)
    assert len(config_hash(a)) == 16
    d = tiny_config_dict()
    d["train"]["lr"] = 0.02
    assert config_hash(config_from_dict(d)) != config_hash(a)
    # where outputs go does not change what is computed
    assert config_hash(config_from_dict(tiny_config_dict("elsewhere"))) == config_hash(a)
    assert " " not in canonical_json(a)


@pytest.mark.parametrize("patch", [
    {"trian": {}},
    {"train": {"learning_rate": 0.1}},
    {"train": {"lr": "fast"}},
    {"train": {"n_rl_iterations": 1.5}},
    {"train": {"rerandomize": 1}},
    {"reward": {"gamma": 1.5}},
    {"grid": {"M": 4}},
    {"eval": {"max_steps": 0}},
    {"gen": {"width_range": [3.0, 2.0]}},
    {"run_root": 3},
])
def test_bad_configs_rejected(patch):
    d = tiny_config_dict()
    d.update(patch)
    with pytest.raises(ConfigError):
        config_from_dict(d)


def test_bad_config_file(tmp_path):
    (tmp_path / "x.json").write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "x.json")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")


def test_unknown_subcommand_is_usage_error(capsys):
    assert cli.dispatch(["fly"]) == cli.EXIT_USAGE
    assert cli.dispatch([]) == cli.EXIT_USAGE
    assert cli.dispatch(["eval"]) == cli.EXIT_USAGE  # --policy missing


def test_bad_config_is_usage_error(tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({"train": {"bogus": 1}}))
    assert cli.dispatch(["gen", "--config", str(tmp_path / "c.json")]) == cli.EXIT_USAGE


def test_missing_checkpoint_is_runtime_error(tiny_config, tmp_path):
    code = cli.dispatch(["eval", "--config", str(tiny_config), "--policy", "cadrl",
                         "--checkpoint", str(tmp_path / "none.ckpt"), "--scene", "smoke"])
    assert code == cli.EXIT_RUNTIME


def test_gen_is_deterministic(tiny_config, tmp_path):
    for d in ("a", "b"):
        assert cli.dispatch(["gen", "--config", str(tiny_config), "--out",
                             str(tmp_path / d)]) == 0
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*.json"))
    assert len(files) == 12 + 1  # 9 train + 3 test scenes + config.json
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    h = (tmp_path / "a" / "config_hash.txt").read_text().strip()
    assert h == config_hash(load_config(tiny_config))


def test_smoke_eval_writes_survival_csv(tiny_config, tmp_path):
    out = tmp_path / "ev"
    assert cli.dispatch(["eval", "--config", str(tiny_config), "--policy", "straight",
                         "--scene", "smoke", "--out", str(out), "--top-n", "3"]) == 0
    text = (out / "survival.csv").read_text().splitlines()
    h = config_hash(load_config(tiny_config))
    assert text[0] == f"# config_hash: {h}"
    assert text[1] == "distance_m,fraction"
    assert len(list((out / "trajectories").glob("trial_*.csv"))) == 3
    assert (out / "outcomes.csv").read_text().startswith(f"# config_hash: {h}")


def test_default_output_goes_under_hash_dir(tiny_config):
    cfg = load_config(tiny_config)
    assert cli.dispatch(["eval", "--config", str(tiny_config), "--policy", "fsgt",
                         "--scene", "smoke"]) == 0
    run = f"{cfg.run_root}/{config_hash(cfg)}/eval_fsgt/survival.csv"
    assert open(run).read().startswith("# config_hash:")


def test_render_subcommand(tiny_config, tmp_path):
    assert cli.dispatch(["render", "--config", str(tiny_config), "--scene", "smoke",
                         "--out", str(tmp_path / "v.ppm"), "--depth", str(tmp_path / "v.depth"),
                         "--labels", str(tmp_path / "v.csv"), "--seed", "3"]) == 0
    assert (tmp_path / "v.ppm").read_bytes().startswith(b"P6\n16 16\n255\n")
    assert len((tmp_path / "v.csv").read_text().splitlines()) == 1 + 5
    assert cli.dispatch(["render", "--scene", "smoke", "--pose", "1,2", "--out",
                         str(tmp_path / "w.ppm")]) == cli.EXIT_USAGE


def test_full_pipeline(tiny_config, tmp_path):
    c = ["--config", str(tiny_config)]
    assert cli.dispatch(["gen", *c, "--out", str(tmp_path / "s")]) == 0
    sc = ["--scenes", str(tmp_path / "s")]
    assert cli.dispatch(["pretrain", *c, *sc, "--out", str(tmp_path / "fs.ckpt")]) == 0
    assert (tmp_path / "fs.log.csv").read_text().splitlines()[1] == "epoch,loss"
    assert cli.dispatch(["pretrain", *c, *sc, "--model", "lrs",
                         "--out", str(tmp_path / "lrs.ckpt")]) == 0
    assert cli.dispatch(["train", *c, *sc, "--init", str(tmp_path / "fs.ckpt"),
                         "--out", str(tmp_path / "rl")]) == 0
    assert (tmp_path / "rl" / "iter_001.ckpt").exists()
    assert len((tmp_path / "rl" / "metrics.csv").read_text().splitlines()) == 2 + 2
    for pol, ck in (("cadrl", "rl/final.ckpt"), ("fspred", "fs.ckpt"), ("lrs", "lrs.ckpt")):
        assert cli.dispatch(["eval", *c, *sc, "--policy", pol, "--checkpoint",
                             str(tmp_path / ck), "--out", str(tmp_path / pol)]) == 0
    # the free-space net does not fit the classifier slot and vice versa
    assert cli.dispatch(["eval", *c, *sc, "--policy", "fspred", "--checkpoint",
                         str(tmp_path / "lrs.ckpt")]) == cli.EXIT_RUNTIME
    assert cli.dispatch(["fseval", *c, *sc, "--checkpoint", str(tmp_path / "fs.ckpt"),
                         "--out", str(tmp_path / "fse")]) == 0
    assert (tmp_path / "fse" / "pr.csv").exists()
    assert (tmp_path / "fse" / "pixel_summary.csv").exists()


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "simflight", "--help"], capture_output=True,
                       text=True)
    assert r.returncode == 0
    for sub in ("gen", "render", "pretrain", "train", "eval", "fseval"):
        assert sub in r.stdout
    r = subprocess.run([sys.executable, "-m", "simflight", "nope"], capture_output=True,
                       text=True)
    assert r.returncode == 2
