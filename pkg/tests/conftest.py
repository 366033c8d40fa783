import os
from pathlib import Path

import numpy as np
import pytest

from lmgdrive import build_spin_operators

REPO_ROOT = Path(__file__).resolve().parents[1]

# Heavy open-system trajectories are computed once (examples/reference_runs.py)
# and reused from this on-disk cache; tests that need them skip when missing.
CACHE_DIR = Path(os.environ.get("LMGDRIVE_CACHE", REPO_ROOT / "results" / "trajectories"))


@pytest.fixture(scope="session")
def sys2():
    return build_spin_operators(2)


@pytest.fixture(scope="session")
def sys4():
    return build_spin_operators(4)


@pytest.fixture(scope="session")
def sys10():
    return build_spin_operators(10)


@pytest.fixture
def rng():
    return np.random.default_rng(20260823)
