import numpy as np
import pytest

from mobflow import Grid
from mobflow.grid import ContinuityOp


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def grid1d():
    return Grid(1, 13, -0.5, 1.8)


@pytest.fixture
def grid2d():
    return Grid(2, 6, 0.0, 1.2, 5, -0.5, 1.0)


def assemble_constraint_matrix(op: ContinuityOp) -> np.ndarray:
    """Dense A by applying the operator to state basis vectors."""
    g = op.grid
    nb = 1 + g.dim
    n = g.ncells
    cols = []
    for block in range(nb):
        for j in range(n):
            u = np.zeros((nb,) + g.shape)
            u[block].ravel()[j] = 1.0
            cols.append(op.apply(u).ravel())
    return np.stack(cols, axis=1)
