import itertools

import numpy as np
import pytest

from tracedensity.corpus import Vocabulary
from tracedensity.model import Density, Dictionary, TraceDensityModel, trivial_model


def make_vocab(n):
    return Vocabulary(tuple(f"w{i + 1}" for i in range(n)))


def make_trivial(n=2, d=2):
    return trivial_model(make_vocab(n), d)


def make_e_model():
    """n=2, d=2 model with M1 = E11, M2 = E12, P_L = I, P_R = E11.

    Satisfies both density constraints exactly; q(w1)=1, q(w2)=0, and every
    conditional is (1, 0).
    """
    e11 = np.array([[1.0, 0.0], [0.0, 0.0]], dtype=complex)
    e12 = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)
    return TraceDensityModel(
        vocab=Vocabulary(("w1", "w2")),
        dictionary=Dictionary(np.stack([e11, e12])),
        p_left=Density(np.eye(2)),
        p_right=Density(e11),
    )


def all_phrases(n, max_len, min_len=1):
    """Every id tuple over {0..n-1} with length in [min_len, max_len]."""
    out = []
    for k in range(min_len, max_len + 1):
        out.extend(itertools.product(range(n), repeat=k))
    return out


@pytest.fixture
def e_model():
    return make_e_model()


@pytest.fixture
def trivial22():
    return make_trivial(2, 2)
