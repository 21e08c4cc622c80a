import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hemiparam import samples
from hemiparam.qc import (
    QCError,
    beltrami_from_planar_map,
    beltrami_from_surface_map,
    cotangent_laplacian,
    count_flips,
    invert_pl_map,
    lbs_solve,
    repair_folds,
    stiffness_matrix,
    unfold_planar_map,
)
from hemiparam.tutte import disk_boundary


def planar_disk(n_rings=8):
    uv, faces = samples.disk_mesh2d(n_rings)
    return uv, faces


def affine(uv, p, q):
    """``z -> p z + q conj(z)``: Beltrami coefficient ``q / p`` everywhere."""
    z = uv[:, 0] + 1j * uv[:, 1]
    w = p * z + q * np.conj(z)
    return np.c_[w.real, w.imag]


complex_small = st.builds(complex, st.floats(-0.9, 0.9), st.floats(-0.9, 0.9)).filter(lambda z: abs(z) < 0.9)
complex_unit = st.builds(complex, st.floats(-3, 3), st.floats(-3, 3)).filter(lambda z: abs(z) > 0.1)


@settings(max_examples=50, deadline=None)
@given(complex_unit, complex_small)
def test_affine_beltrami(p, k):
    uv, faces = planar_disk(4)
    mu = beltrami_from_planar_map(uv, affine(uv, p, k * p), faces)
    np.testing.assert_allclose(mu, k, atol=1e-10)


def test_beltrami_of_3d_similarity_is_zero():
    mesh = samples.benchmark("face", n_rings=6)
    rot = np.linalg.qr(np.random.default_rng(3).normal(size=(3, 3)))[0]
    mu = beltrami_from_surface_map(mesh, 2.5 * mesh.vertices @ rot.T)
    assert np.abs(mu).max() < 1e-10


def cot_oracle(points, faces):
    """Textbook cotangent weights ``(cot a + cot b) / 2`` per edge."""
    n = len(points)
    w = np.zeros((n, n))
    for f in faces:
        for k in range(3):
            i, j, o = f[k], f[(k + 1) % 3], f[(k + 2) % 3]
            u, v = points[i] - points[o], points[j] - points[o]
            cot = np.dot(u, v) / np.linalg.norm(np.cross(np.r_[u, 0][:3], np.r_[v, 0][:3]))
            w[i, j] += 0.5 * cot
            w[j, i] += 0.5 * cot
    return np.diag(w.sum(axis=1)) - w


def test_cotangent_laplacian_matches_textbook_weights():
    uv, faces = planar_disk(3)
    uv = uv + 0.05 * np.random.default_rng(0).normal(size=uv.shape)
    np.testing.assert_allclose(cotangent_laplacian(uv, faces).toarray(), cot_oracle(uv, faces), atol=1e-12)


def test_zero_mu_stiffness_is_laplacian():
    uv, faces = planar_disk(4)
    k0 = stiffness_matrix(uv[faces], faces, len(uv), np.zeros(len(faces)))
    np.testing.assert_allclose(k0.toarray(), cotangent_laplacian(uv, faces).toarray(), atol=1e-12)


def test_lbs_reproduces_map_from_its_own_coefficient():
    uv, faces = planar_disk(8)
    r = np.hypot(uv[:, 0], uv[:, 1])
    target = uv * (1 + 0.3 * r**2)[:, None] + 0.1 * np.c_[uv[:, 1] ** 2, np.sin(uv[:, 0])]
    mu = beltrami_from_planar_map(uv, target, faces)
    bd = np.flatnonzero(r > 1 - 1e-9)
    out = lbs_solve(mu, faces, uv, bd, target[bd])
    np.testing.assert_allclose(out, target, atol=1e-10)


def test_lbs_rejects_folded_coefficients():
    uv, faces = planar_disk(3)
    mu = np.zeros(len(faces), complex)
    mu[0] = 1.2
    with pytest.raises(QCError):
        lbs_solve(mu, faces, uv, np.array([0]), uv[[0]])


def test_repair_folds_caps_modulus():
    uv, faces = planar_disk(4)
    mu = np.full(len(faces), 0.2 + 0j)
    mu[[0, 5]] = [1.5, np.inf]
    fixed = repair_folds(mu, faces)
    assert np.all(np.abs(fixed) <= 0.95 + 1e-12)
    assert fixed[5] == pytest.approx(0.2)


def test_unfold_removes_a_flip():
    mesh = samples.benchmark("face", n_rings=8)
    idx, pos = disk_boundary(mesh)
    from hemiparam.tutte import solve_tutte_disk

    src = solve_tutte_disk(mesh)
    bad = src.copy()
    inner = np.setdiff1d(np.arange(len(src)), idx)
    v = inner[len(inner) // 2]
    bad[v] = bad[v] + np.array([0.15, 0.0])
    assert count_flips(bad, mesh.faces) > 0
    fixed = unfold_planar_map(src, bad, mesh.faces, idx)
    assert count_flips(fixed, mesh.faces) == 0
    np.testing.assert_allclose(fixed[idx], bad[idx])


def test_invert_pl_map_of_affine_map():
    uv, faces = planar_disk(6)
    img = affine(uv, 1.3 + 0.2j, 0.1)
    rng = np.random.default_rng(5)
    q = rng.uniform(-0.5, 0.5, size=(200, 2))
    pre = invert_pl_map(uv, img, faces, affine(q, 1.3 + 0.2j, 0.1))
    np.testing.assert_allclose(pre, q, atol=1e-12)
