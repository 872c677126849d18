import numpy as np
import pytest
from importlib.resources import files

from zparity import NoiseParams, load_config
from zparity.qmat import DensityMatrix


EXAMPLE_CONFIG = files("zparity") / "configs" / "example.toml"
IDEAL_CONFIG = files("zparity") / "configs" / "ideal.toml"


@pytest.fixture(scope="session")
def tuned_params() -> NoiseParams:
    return load_config(str(EXAMPLE_CONFIG))


@pytest.fixture(scope="session")
def ideal_params() -> NoiseParams:
    return load_config(str(IDEAL_CONFIG))


def random_density(rng: np.random.Generator, n_qubits: int, pure: bool = False) -> DensityMatrix:
    """Haar-ish random state: pure from a Gaussian vector, mixed from Ginibre."""
    dim = 2**n_qubits
    if pure:
        vec = rng.normal(size=dim) + 1j * rng.normal(size=dim)
        vec /= np.linalg.norm(vec)
        return DensityMatrix.from_matrix(np.outer(vec, vec.conj()))
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    mat = g @ g.conj().T
    return DensityMatrix.from_matrix(mat / np.trace(mat))
