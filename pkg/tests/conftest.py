import numpy as np
import pytest

from metasense.mechanics import CellParams

# effective peaks rank cell 2 < cell 3 < cell 1 < cell 4
REPLICA_ETA = (0.0, -0.06, -0.03, 0.04)


def make_cells(eta, **kw):
    return tuple(CellParams(imperfection=float(e), id=i + 1, **kw) for i, e in enumerate(eta))


@pytest.fixture(scope="session")
def replica_cells():
    return make_cells(REPLICA_ETA)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
