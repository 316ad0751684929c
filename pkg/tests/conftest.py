import numpy as np
import pytest


def subspace_angle_deg(u, v, gram):
    """Angle in degrees between coefficient vectors under the Gram inner product."""
    cu = u / np.sqrt(u @ gram @ u)
    cv = v / np.sqrt(v @ gram @ v)
    c = abs(cu @ gram @ cv)
    return np.degrees(np.arccos(min(c, 1.0)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240101)
