import json
import math

import mpmath
import numpy as np
import pytest
from scipy.integrate import quad
from hypothesis import given, settings
from hypothesis import strategies as st

from hemiparam.harmonics import (
    FORMAT_NAME,
    HarmonicCoeffs,
    HarmonicsError,
    alp_normalized,
    basis_matrix,
    decompose,
    degree_order,
    index,
    n_coeffs,
    quadrature_grid,
    reconstruct,
    sample_uniform_hemispheroid,
)
from hemiparam.projection import to_eta_phi
from hemiparam.registration import RigidTransform, Spheroid


def alp_oracle(n, m, x, dps=120):
    """Normalized ALP from the explicit Legendre polynomial sum, differentiated m times, in high precision."""
    with mpmath.workdps(dps):
        x = mpmath.mpf(x)
        total = mpmath.mpf(0)
        for k in range(n // 2 + 1):
            p = n - 2 * k
            if p < m:
                continue
            c = (-1) ** k * mpmath.binomial(n, k) * mpmath.binomial(2 * n - 2 * k, n)
            total += c * mpmath.ff(p, m) * x ** (p - m)
        total /= mpmath.mpf(2) ** n
        val = (-1) ** m * (1 - x * x) ** (mpmath.mpf(m) / 2) * total
        norm = mpmath.sqrt((2 * n + 1) / (4 * mpmath.pi) * mpmath.factorial(n - m) / mpmath.factorial(n + m))
        return float(norm * val)


@pytest.mark.parametrize("n,m", [(0, 0), (1, 0), (1, 1), (2, 1), (5, 3), (10, 0), (17, 9), (30, 30), (45, 12), (60, 59)])
def test_alp_against_high_precision_oracle(n, m):
    xs = np.array([-0.999, -0.73, -0.2, 0.0, 0.31, 0.5, 0.88, 0.9999])
    got = alp_normalized(n, m, xs)
    want = np.array([alp_oracle(n, m, x) for x in xs])
    scale = max(np.abs(want).max(), 1e-300)
    np.testing.assert_allclose(got, want, atol=1e-12 * scale, rtol=1e-10)


def test_alp_low_degree_closed_forms():
    x = np.linspace(-1, 1, 9)
    c = 1 / np.sqrt(4 * np.pi)
    np.testing.assert_allclose(alp_normalized(0, 0, x), c)
    np.testing.assert_allclose(alp_normalized(1, 0, x), np.sqrt(3) * c * x)
    np.testing.assert_allclose(alp_normalized(1, 1, x), -np.sqrt(1.5) * c * np.sqrt(1 - x * x))


def test_alp_argument_checks():
    with pytest.raises(ValueError):
        alp_normalized(2, 3, 0.1)
    with pytest.raises(ValueError):
        alp_normalized(2, 1, 1.5)


@settings(max_examples=200)
@given(st.integers(0, 5000))
def test_index_round_trip(k):
    n, m = degree_order(k)
    assert -n <= m <= n and index(n, m) == k


def test_column_layout():
    eta = np.array([0.3, 0.9])
    phi = np.array([0.4, 2.0])
    b = basis_matrix(eta, phi, 3, "oblate").values
    assert b.shape == (2, n_coeffs(3))
    from hemiparam.projection import xi_hat

    x = xi_hat(eta, "oblate")
    np.testing.assert_allclose(b[:, index(2, 0)], alp_normalized(2, 0, x))
    np.testing.assert_allclose(b[:, index(3, 2)], np.sqrt(2) * alp_normalized(3, 2, x) * np.cos(2 * phi))
    np.testing.assert_allclose(b[:, index(3, -2)], np.sqrt(2) * alp_normalized(3, 2, x) * np.sin(2 * phi))


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(["oblate", "prolate"]), st.floats(0, np.pi / 2), st.floats(0, 2 * np.pi))
def test_azimuthal_parity(kind, eta, phi):
    n_max = 6
    b0 = basis_matrix([eta], [phi], n_max, kind).values[0]
    b1 = basis_matrix([eta], [phi + np.pi], n_max, kind).values[0]
    sign = np.array([(-1) ** abs(degree_order(k)[1]) for k in range(n_coeffs(n_max))])
    np.testing.assert_allclose(b1, sign * b0, atol=1e-12)


@pytest.mark.parametrize("kind", ["oblate", "prolate"])
def test_orthonormal_under_quadrature(kind):
    n_max = 12
    eta, phi, w = quadrature_grid(n_max + 2, 2 * n_max + 2, kind)
    b = basis_matrix(eta, phi, n_max, kind).values
    gram = b.T @ (b * w[:, None])
    assert np.abs(gram - np.eye(len(gram))).max() < 1e-12


def _spheroid_points(s, count):
    (eta, phi), mesh = sample_uniform_hemispheroid(s, count)
    return eta, phi, mesh


@pytest.mark.parametrize("c", [0.5, 1.7])
def test_uniform_sampling_is_area_uniform(c):
    s = Spheroid(1.0, c)
    eta, phi, mesh = _spheroid_points(s, 4000)
    # fraction of points below the mid-angle equals the exact cap-area fraction
    dens = lambda e: np.sin(e) * np.sqrt(np.cos(e) ** 2 + (c * np.sin(e)) ** 2)
    frac = quad(dens, 0, np.pi / 4)[0] / quad(dens, 0, np.pi / 2)[0]
    assert np.mean(eta < np.pi / 4) == pytest.approx(frac, abs=1e-3)
    np.testing.assert_allclose(mesh.vertices[:, 2], c * np.cos(eta), atol=1e-12)


def test_decompose_recovers_coefficients():
    s = Spheroid(1.0, 0.8)
    eta, phi, mesh = _spheroid_points(s, 1500)
    rng = np.random.default_rng(11)
    true = rng.normal(size=(n_coeffs(4), 3))
    pts = basis_matrix(eta, phi, 4, s.kind).values @ true
    hemi = mesh.vertices
    target = mesh.with_vertices(pts)
    eta2, phi2 = to_eta_phi(hemi, s, 1e-9)
    np.testing.assert_allclose(eta2, eta, atol=1e-9)
    co = decompose(hemi, target, s, 4, eps_eta=1e-9)
    np.testing.assert_allclose(co.coeffs, true, atol=1e-9)
    assert co.residual_rms < 1e-10


def test_qr_path_agrees_with_normal_equations():
    s = Spheroid(1.0, 1.4)
    eta, phi, w = quadrature_grid(50, 100, s.kind)
    b = basis_matrix(eta, phi, 40, s.kind).values
    rng = np.random.default_rng(2)
    true = rng.normal(size=(b.shape[1], 3))
    from hemiparam.harmonics import _solve_least_squares

    got = _solve_least_squares(b, b @ true)
    assert b.shape[1] > 1600
    np.testing.assert_allclose(got, true, atol=1e-8)


def test_too_few_points():
    s = Spheroid(1.0, 0.5)
    eta, phi, mesh = _spheroid_points(s, 30)
    with pytest.raises(HarmonicsError, match="lower n_max"):
        decompose(mesh.vertices, mesh, s, 10)


def test_reconstruct_truncation_and_pose():
    s = Spheroid(1.0, 0.5)
    eta, phi, mesh = _spheroid_points(s, 800)
    rot = np.array([[0.0, -1, 0], [1, 0, 0], [0, 0, 1]])
    reg = RigidTransform(rot, np.array([1.0, 2.0, 3.0]))
    co = decompose(mesh.vertices, mesh, s, 6, registration=reg)
    full = reconstruct(co, eta, phi)
    zero = reconstruct(co, eta, phi, n_upto=0)
    np.testing.assert_allclose(zero, np.broadcast_to(co.coeffs[0] / np.sqrt(4 * np.pi), zero.shape))
    np.testing.assert_allclose(reconstruct(co, eta, phi, original_pose=True), reg.inverse().apply(full))
    with pytest.raises(ValueError):
        reconstruct(co, eta, phi, n_upto=7)


def test_json_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(4)
    co = HarmonicCoeffs(3, rng.normal(size=(16, 3)), Spheroid(1.0, 0.37), math.pi / 160)
    path = tmp_path / "c.json"
    co.save(path)
    text = path.read_text()
    back = HarmonicCoeffs.load(path)
    assert np.array_equal(back.coeffs, co.coeffs)
    back.save(tmp_path / "d.json")
    assert (tmp_path / "d.json").read_text() == text
    d = json.loads(text)
    assert list(d) == ["format", "version", "n_max", "spheroid", "eps_eta", "registration", "coefficients"]
    assert d["format"] == FORMAT_NAME and d["spheroid"]["kind"] == "oblate"
    assert text.endswith("}\n")
    assert co[(2, -1)].tolist() == d["coefficients"][index(2, -1)]


def test_json_rejects_foreign_files():
    with pytest.raises(HarmonicsError):
        HarmonicCoeffs.from_dict({"format": "other"})


def test_wrong_shape_rejected():
    with pytest.raises(ValueError):
        HarmonicCoeffs(2, np.zeros((8, 3)), Spheroid(1.0, 0.5))
