import numpy as np
import pytest

from hemiparam import samples
from hemiparam.registration import register, size_hemispheroid


@pytest.fixture(scope="session")
def face_small():
    """Registered face-like cap (~700 vertices) and its hemispheroid."""
    mesh, _ = register(samples.benchmark("face", n_rings=15))
    return mesh, size_hemispheroid(mesh)


@pytest.fixture(scope="session")
def wavy_small():
    mesh, _ = register(samples.benchmark("wavy", n_rings=15))
    return mesh, size_hemispheroid(mesh)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
