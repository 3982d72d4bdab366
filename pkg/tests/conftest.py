import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # make oracles importable

from dqubit.atom import Manifold, Polarization, ZeemanState


@pytest.fixture
def s_down():
    return ZeemanState(Manifold.S_HALF, -1)


@pytest.fixture
def s_up():
    return ZeemanState(Manifold.S_HALF, 1)


@pytest.fixture
def d_states():
    return tuple(ZeemanState(Manifold.D_THREE_HALF, m) for m in (-3, -1, 1, 3))


PAPER_D_MATRIX = np.array(
    [
        [6.6, 5.4, 0.0, 0.0],
        [0.0, 0.0, 5.4, 6.6],
        [0.0, 6.0, 6.0, 0.0],
        [13.3, 12.6, 11.4, 0.0],
        [0.0, 11.4, 12.6, 13.3],
    ]
)


@pytest.fixture
def reference_matrix():
    """Benchmark detection matrix used as a fixed linear map in solver tests."""
    return PAPER_D_MATRIX.copy()
