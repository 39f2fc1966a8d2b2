import subprocess
import sys

import pytest

DESK_GRID = (-60.0, 60.0, 2.0)


def _gen_dataset(out_dir, *args):
    cmd = [sys.executable, "-m", "obdoa.cli", "gen-dataset",
           "--geometry", "sla18", "--out", str(out_dir)] + list(args)
    proc = subprocess.run(cmd, capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    return out_dir


@pytest.fixture(scope="session")
def desk_dataset(tmp_path_factory):
    """2000-sample labeled desk dataset, produced by the estimation CLI."""
    out = tmp_path_factory.mktemp("desk")
    _gen_dataset(out, "--count", "2000", "--seed", "42")
    return {"train": out / "train.obdoa", "val": out / "val.obdoa"}


@pytest.fixture(scope="session")
def desk_testset_20db(tmp_path_factory):
    """Held-out 20 dB evaluation set for the desk benchmark."""
    out = tmp_path_factory.mktemp("desk20")
    _gen_dataset(out, "--count", "512", "--seed", "77", "--snr-set", "20",
                 "--split", "1.0")
    return out / "train.obdoa"


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("tiny")
    _gen_dataset(out, "--count", "80", "--seed", "5")
    return {"train": out / "train.obdoa", "val": out / "val.obdoa"}
