import numpy as np
import pytest

from orthokernel import KernelTensor


def rng(seed):
    return np.random.Generator(np.random.PCG64(seed))


def random_kernel(c_out, c_in, k1, k2, seed=0, scale=1.0):
    return KernelTensor(scale * rng(seed).standard_normal((c_out, c_in, k1, k2)))


def gram_residual(O):
    O = np.asarray(O)
    G = O @ O.T if O.shape[0] <= O.shape[1] else O.T @ O
    return float(np.max(np.abs(G - np.eye(G.shape[0]))))


@pytest.fixture
def make_rng():
    return rng
