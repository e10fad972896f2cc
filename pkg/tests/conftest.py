import numpy as np
import pytest


@pytest.fixture(autouse=True)
def _seed_legacy_numpy():
    # Belt and braces: nothing should use the legacy global RNG, but keep it
    # pinned so an accidental use cannot make tests flaky.
    np.random.seed(0)
