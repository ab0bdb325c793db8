import numpy as np
import pytest
from hypothesis import strategies as st

from hgr import diagonal_family, from_matrix
from hgr.rng import make_rng


@pytest.fixture
def diag4():
    """4x4 two-level distribution: 1/8 on the diagonal, 1/24 off."""
    return diagonal_family(4, 1.0 / 8.0, 1.0 / 24.0)


@pytest.fixture
def uniform22():
    return from_matrix(np.full((2, 2), 0.25))


@st.composite
def strict_dists(draw, max_card=5):
    """Random strict joint distributions with entries bounded away from zero."""
    cx = draw(st.integers(2, max_card))
    cy = draw(st.integers(2, max_card))
    cells = draw(
        st.lists(
            st.floats(0.05, 1.0, allow_nan=False, allow_infinity=False),
            min_size=cx * cy,
            max_size=cx * cy,
        )
    )
    p = np.asarray(cells).reshape(cx, cy)
    return from_matrix(p / p.sum())


def random_strict(rng, cx, cy):
    p = rng.uniform(0.05, 1.0, size=(cx, cy))
    return from_matrix(p / p.sum())


def centered_joint_direction(rng, dist):
    """Unit-norm joint direction orthogonal to the sqrt(pxy) component, zero
    on zero-probability cells (a valid tangent to the simplex)."""
    xi = rng.standard_normal((dist.card_y, dist.card_x))
    xi[dist.pxy.T <= 0.0] = 0.0
    root = np.sqrt(dist.pxy).T
    xi -= root * np.sum(root * xi)
    return xi / np.linalg.norm(xi)


def centered_marginal_direction(rng, dist):
    v = rng.standard_normal(dist.card_x)
    root = np.sqrt(dist.px)
    v -= root * (root @ v)
    return v / np.linalg.norm(v)


__all__ = [
    "strict_dists",
    "random_strict",
    "centered_joint_direction",
    "centered_marginal_direction",
    "make_rng",
]
