import os
import pathlib
import subprocess

import pytest

ROOT = pathlib.Path(__file__).resolve().parents[2]
CLI = os.environ.get("GEOPIX_CLI", str(ROOT / "build" / "bin" / "geopix"))
CONFIG_DIR = pathlib.Path(os.environ.get("GEOPIX_CONFIG_DIR", ROOT / "configs"))


def run_cli(*args, cwd=None, env=None):
    full_env = dict(os.environ)
    full_env.pop("GEOPIX_SEED", None)
    if env:
        full_env.update(env)
    return subprocess.run([CLI, *map(str, args)], cwd=cwd, env=full_env, capture_output=True, text=True)


@pytest.fixture
def cli():
    return run_cli


@pytest.fixture
def config_dir():
    return CONFIG_DIR
