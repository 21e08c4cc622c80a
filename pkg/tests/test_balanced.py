import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hemiparam.balanced import (
    BalanceWeights,
    balanced_components,
    balanced_from_components,
    mix_beltrami,
)
from hemiparam.qc import count_flips


@pytest.fixture(scope="module")
def components(face_small):
    mesh, s = face_small
    return mesh, s, balanced_components(mesh, s)


@pytest.mark.parametrize("w", [(-0.1, 0.6, 0.5), (0.5, 0.5, 0.5), (np.nan, 0.5, 0.5)])
def test_invalid_weights(w):
    with pytest.raises(ValueError):
        BalanceWeights(*w)


def test_from_two():
    w = BalanceWeights.from_two(0.2, 0.3)
    assert w.gamma == pytest.approx(0.5)


@settings(max_examples=50)
@given(st.floats(0, 1), st.floats(0, 1))
def test_mix_is_convex(a, b):
    if a + b > 1:
        a, b = a / (a + b), b / (a + b)
    w = BalanceWeights(a, b, max(0.0, 1 - a - b))
    mu = mix_beltrami(np.zeros(3), np.full(3, 0.5 + 0j), np.full(3, -0.5j), w)
    np.testing.assert_allclose(mu, 0.5 * w.beta - 0.5j * w.gamma)


@pytest.mark.parametrize("key,w", [("T", (1, 0, 0)), ("C", (0, 1, 0)), ("A", (0, 0, 1))])
def test_pure_weights_reproduce_components(components, key, w):
    mesh, s, comp = components
    res = balanced_from_components(mesh, s, comp, BalanceWeights(*w))
    np.testing.assert_allclose(res.disk, comp.disks[key], atol=1e-9)


def test_tutte_component_has_zero_beltrami(components):
    _, _, comp = components
    assert np.abs(comp.mus["T"]).max() < 1e-12


def test_mixed_map_is_bijective(components):
    mesh, s, comp = components
    res = balanced_from_components(mesh, s, comp, BalanceWeights(0.2, 0.4, 0.4))
    assert count_flips(res.disk, mesh.faces) == 0
