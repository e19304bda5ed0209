import numpy as np
import pytest

from affdim.linalg import AffineIFS, operator_norm


def make_random_ifs(d, m, rng, norm_range=(0.15, 0.49)):
    """Random invertible contracting maps with norms inside norm_range."""
    mats = []
    while len(mats) < m:
        A = rng.standard_normal((d, d))
        if abs(np.linalg.det(A)) < 1e-3:
            continue
        A = A * (rng.uniform(*norm_range) / operator_norm(A))
        mats.append(A)
    translations = rng.uniform(-0.4, 0.4, size=(m, d))
    return AffineIFS(np.array(mats), translations)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def cantor_ifs():
    """Two maps x/3 and x/3 + 2/3 on the line: the middle-thirds system."""
    return AffineIFS(np.array([[[1 / 3.0]], [[1 / 3.0]]]), np.array([[0.0], [2 / 3.0]]))


@pytest.fixture
def diag_pair_ifs():
    """Two identical maps diag(0.4, 0.2); affinity dimension log2/log2.5."""
    return AffineIFS(np.array([np.diag([0.4, 0.2])] * 2), np.zeros((2, 2)))


@pytest.fixture
def diag_triple_ifs():
    """Three maps diag(0.3, 0.2) with spread-out translations."""
    return AffineIFS(
        np.array([np.diag([0.3, 0.2])] * 3),
        np.array([[0.0, 0.0], [0.35, 0.0], [0.0, 0.3]]),
    )
