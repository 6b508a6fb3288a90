"""
Shared fixtures for the phase discrimination test suite
"""

import math
import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parent.parent
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from src.services.config import Settings
from src.services.constellation import build_constellation
from src.services.signal import TimeGrid

TWO_QUBIT_PULLS = (4 * math.pi / 10, 3 * math.pi / 10)
FOUR_QUBIT_PULLS = (math.pi / 16, math.pi / 8, math.pi / 4, math.pi / 2)

SMALL_CONFIG = """
[constellation]
pulls = ["4pi/10", "3pi/10"]
amplitude = 5.0

[grid]
dt = 0.01
horizon = 1.0

[strategies.adaptive]
kind = "adaptive"

[strategies.static]
kind = "heterodyne"
rate = "100pi"

[experiment]
alphas = [5.0]
n_runs = {n_runs}
seed = {seed}
correct_state = "average"
times = [0.2, 1.0]
batch_size = {batch_size}
dump_trajectories = {dump}
"""


@pytest.fixture
def n4_constellation():
    """Two-qubit constellation with phases +-7pi/10 and +-pi/10"""
    return build_constellation(TWO_QUBIT_PULLS, 5.0)


@pytest.fixture
def n16_constellation():
    return build_constellation(FOUR_QUBIT_PULLS, 5.0)


@pytest.fixture
def n2_constellation():
    return build_constellation([math.pi / 10], 5.0)


@pytest.fixture
def coarse_grid():
    return TimeGrid(dt=0.01, horizon=1.0)


@pytest.fixture
def settings(tmp_path):
    return Settings(log_level="INFO", threads=1, out_dir=str(tmp_path / "results"))


@pytest.fixture
def small_config(tmp_path):
    """Factory for a fast two-qubit config file with two strategies"""

    def write(name="small.toml", n_runs=24, seed=3, batch_size=10, dump=0):
        path = tmp_path / name
        path.write_text(
            SMALL_CONFIG.format(n_runs=n_runs, seed=seed, batch_size=batch_size, dump=dump),
            encoding="utf-8",
        )
        return path

    return write
