import numpy as np
import pytest

from openanneal.model import Protocol, Schedule, chain_model
from openanneal.spectral import BathSpec

SX = np.array([[0.0, 1.0], [1.0, 0.0]])
SY = np.array([[0.0, -1.0j], [1.0j, 0.0]])
SZ = np.array([[1.0, 0.0], [0.0, -1.0]])
ID = np.eye(2)


def kron_chain(ops):
    """Brute-force tensor product, the reference construction used as oracle."""
    out = np.array([[1.0]])
    for op in ops:
        out = np.kron(out, op)
    return out


def op_on(op, i, n):
    return kron_chain([op if k == i else ID for k in range(n)])


def random_hermitian(dim, rng, scale=1.0):
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return scale * (a + a.conj().T) / 2.0


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def linear_schedule():
    return Schedule.linear(8.0, 8.0)


@pytest.fixture
def bath():
    return BathSpec(eta_g2=1e-3, omega_c=1e3, temperature=1.57)


@pytest.fixture
def chain2(linear_schedule):
    return chain_model(2, linear_schedule, Protocol(variant="forward", tau=20.0))


@pytest.fixture
def chain3(linear_schedule):
    return chain_model(3, linear_schedule, Protocol(variant="forward", tau=20.0))
