import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(0xC51)


def random_matrix(rng, k=8, t=16, scale=1.0):
    """Random complex CSI window with a strictly increasing frequency axis."""
    from csibio.model import CsiMatrix

    values = scale * (rng.normal(1.0, 0.5, (k, t)) + 1j * rng.normal(0.0, 0.5, (k, t)))
    freqs = 5.16e9 + 312_500.0 * np.arange(k)
    return CsiMatrix(values=values, freqs=freqs)
