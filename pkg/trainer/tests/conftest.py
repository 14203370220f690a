import subprocess
from pathlib import Path

import pytest

CACHE = Path(__file__).resolve().parent.parent / ".cache"


def run_primary(*args):
    """Invoke the inference-side command line (the only allowed coupling)."""
    cmd = ["epgforge"] + [str(a) for a in args]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    if proc.returncode != 0:
        raise RuntimeError(f"{' '.join(cmd)} -> {proc.returncode}: {proc.stderr}")
    return proc.stdout


@pytest.fixture(scope="session")
def toy_dataset(tmp_path_factory):
    """Small dataset produced by the primary CLI for format/training tests."""
    path = tmp_path_factory.mktemp("data") / "toy.epgt"
    run_primary("train-data", "--n", 50, "--seed", 7, "--out", path,
                "--ntr", 120, "--nrf", 4, "--nz", 2, "--nk", 6)
    return path
