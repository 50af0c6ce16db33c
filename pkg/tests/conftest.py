import numpy as np
import pytest

from infolaunder import Alphabet, Distribution, Kernel


def random_kernel(rng, n_in, n_out, floor=0.0):
    m = rng.dirichlet(np.ones(n_out), size=n_in).T + floor
    return Kernel.from_matrix(m / m.sum(axis=0))


def random_dist(rng, n):
    return Distribution(Alphabet.of_size(n), rng.dirichlet(np.ones(n)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
