import numpy as np
import pytest

from phaseless_em.core import WaveContext


@pytest.fixture
def ctx():
    return WaveContext(1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_unit(rng, n=None):
    v = rng.normal(size=(3,) if n is None else (n, 3))
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def curl_fd(f, x, h=1e-5):
    """Central-difference curl of a vector field f: R3 -> C3 at x."""
    J = np.empty((3, 3), dtype=complex)  # J[i, j] = d f_i / d x_j
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        J[:, j] = (f(x + e) - f(x - e)) / (2 * h)
    return np.array([J[2, 1] - J[1, 2], J[0, 2] - J[2, 0], J[1, 0] - J[0, 1]])
