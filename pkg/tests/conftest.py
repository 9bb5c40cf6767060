import json
import sys

import pytest


def tiny_config_dict(run_root="runs"):
    """A configuration small enough to push every subcommand through in seconds."""
    return {
        "grid": {"M": 5, "width": 16, "height": 16},
        "train": {"n_pretrain_images": 24, "pretrain_epochs": 1, "n_rl_iterations": 2,
                  "states_per_iteration": 2, "rl_epochs": 1, "batch_size": 8,
                  "convs": [[3, 2, 4], [3, 2, 4]]},
        "lrs": {"n_poses": 4, "epochs": 1},
        "split": {"scenes_per_template": 1},
        "eval": {"n_init_points": 10, "max_steps": 30},
        "fseval": {"n_images": 12},
        "run_root": run_root,
    }


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(tiny_config_dict(str(tmp_path / "runs"))))
    return path


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(mod.RESULTS, key=lambda k: int(k[1:])):
        terminalreporter.write_line(mod.RESULTS[key])
