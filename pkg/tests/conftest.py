import numpy as np
import pytest
from hypothesis import settings, strategies as st

from mixmobo.space import MixedSpace, MixedVector, sample_uniform

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


@st.composite
def spaces(draw, max_dims=4, allow_continuous=True):
    n_c = draw(st.integers(0, max_dims)) if allow_continuous else 0
    n_o = draw(st.integers(0, max_dims))
    n_k = draw(st.integers(0 if n_c + n_o else 1, max_dims))
    cont = []
    for _ in range(n_c):
        lo = draw(st.floats(-100, 100, allow_nan=False))
        width = draw(st.floats(1e-3, 100))
        cont.append((lo, lo + width))
    ords = []
    for _ in range(n_o):
        steps = draw(st.lists(st.floats(0.1, 10), min_size=1, max_size=5))
        start = draw(st.floats(-10, 10))
        ords.append(tuple(start + np.cumsum([0.0] + steps)))
    cats = [draw(st.integers(2, 6)) for _ in range(n_k)]
    return MixedSpace(tuple(cont), tuple(ords), tuple(cats))


@st.composite
def space_and_points(draw, n=2, **kw):
    s = draw(spaces(**kw))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    return s, [sample_uniform(s, rng) for _ in range(n)]


@pytest.fixture
def mixed_space():
    return MixedSpace(((0.0, 10.0), (-1.0, 1.0)), ((1.0, 2.0, 4.0),), (3, 4))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def point(cont=(), ords=(), cats=()):
    return MixedVector(tuple(cont), tuple(ords), tuple(cats))
