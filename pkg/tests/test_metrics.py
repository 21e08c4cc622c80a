import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from hemiparam import samples
from hemiparam.harmonics import quadrature_grid
from hemiparam.metrics import (
    HIST_BINS,
    DistortionReport,
    SurfaceDistance,
    a_rmse,
    angle_distortion,
    area_distortion,
    closest_points_on_triangles,
    mean_orthogonality,
    normalized_gram,
    orthogonality_error,
    write_histogram_csv,
)


def seg_dist(p, a, b):
    t = np.clip(np.dot(p - a, b - a) / np.dot(b - a, b - a), 0, 1)
    return np.linalg.norm(p - (a + t * (b - a)))


def tri_dist_oracle(p, a, b, c):
    """Plane projection if it falls inside, else the nearest of the three edges."""
    n = np.cross(b - a, c - a)
    n = n / np.linalg.norm(n)
    q = p - np.dot(p - a, n) * n
    m = np.column_stack([b - a, c - a])
    uv = np.linalg.lstsq(m, q - a, rcond=None)[0]
    if uv.min() >= 0 and uv.sum() <= 1:
        return abs(np.dot(p - a, n))
    return min(seg_dist(p, a, b), seg_dist(p, b, c), seg_dist(p, c, a))


def test_closest_point_against_oracle():
    rng = np.random.default_rng(8)
    n = 3000
    p, a, b, c = (rng.normal(size=(n, 3)) for _ in range(4))
    cp = closest_points_on_triangles(p, a, b, c)
    got = np.linalg.norm(p - cp, axis=1)
    want = np.array([tri_dist_oracle(*x) for x in zip(p, a, b, c)])
    np.testing.assert_allclose(got, want, atol=1e-10)


def test_surface_distance_against_brute_force():
    mesh = samples.benchmark("wavy", n_rings=6)
    rng = np.random.default_rng(9)
    q = rng.uniform(-1.5, 1.5, size=(200, 3))
    got = SurfaceDistance(mesh.vertices, mesh.faces, chunk=37).distances(q)
    tri = mesh.vertices[mesh.faces]
    want = [min(tri_dist_oracle(x, *t) for t in tri) for x in q]
    np.testing.assert_allclose(got, want, atol=1e-10)


def test_a_rmse_of_offset_plane():
    uv, faces = samples.disk_mesh2d(6)
    from hemiparam.mesh import TriMesh

    m0 = TriMesh.from_arrays(np.c_[uv, np.zeros(len(uv))], faces)
    m1 = m0.with_vertices(m0.vertices + [0, 0, 0.1])
    assert a_rmse(m0, m0) == 0.0
    assert a_rmse(m0, m1, normalize=False) == pytest.approx(0.1)
    assert a_rmse(m0, m1) == pytest.approx(0.1 / np.linalg.norm(np.ptp(m0.vertices, axis=0)))


def test_distortion_of_identity_is_zero():
    mesh = samples.benchmark("face", n_rings=6)
    assert angle_distortion(mesh, mesh.vertices).mean == pytest.approx(0.0, abs=1e-10)
    assert area_distortion(mesh, mesh.vertices).mean == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.01, 100), st.integers(0, 2**31))
def test_distortion_similarity_invariance(scale, seed):
    mesh = samples.benchmark("bunny", n_rings=5)
    rng = np.random.default_rng(seed)
    img = mesh.vertices * [1.0, 0.7, 1.3]
    moved = scale * img @ Rotation.random(random_state=rng).as_matrix().T + rng.normal(size=3)
    a0, a1 = angle_distortion(mesh, img), angle_distortion(mesh, moved)
    np.testing.assert_allclose(a1.values, a0.values, atol=1e-8)
    np.testing.assert_allclose(area_distortion(mesh, moved).values, area_distortion(mesh, img).values, atol=1e-10)


def test_report_histogram():
    rep = DistortionReport.from_values([-3.0, 1.0, 2.0, -0.5])
    assert rep.mean == pytest.approx(1.625)
    assert rep.hist_counts.sum() == 4 and len(rep.hist_counts) == HIST_BINS
    assert rep.summary()["count"] == 4


def test_histogram_csv(tmp_path):
    path = tmp_path / "h.csv"
    write_histogram_csv(path, {"angle": DistortionReport.from_values([1.0, 2.0])})
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["metric", "bin_lo", "bin_hi", "count"]
    assert len(rows) == HIST_BINS + 1


def test_orthogonality_of_quadrature_nodes_with_weights():
    eta, phi, w = quadrature_grid(12, 22, "oblate")
    assert mean_orthogonality((eta, phi), 10, "oblate", weights=w) < 1e-13
    assert mean_orthogonality((eta, phi), 10, "oblate") > 1e-3


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31))
def test_gram_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    eta = rng.uniform(0, 1.5, 300)
    phi = rng.uniform(0, 2 * np.pi, 300)
    perm = rng.permutation(300)
    g0 = normalized_gram(eta, phi, 5, "prolate")
    g1 = normalized_gram(eta[perm], phi[perm], 5, "prolate")
    np.testing.assert_allclose(g0, g1, atol=1e-12)
    diff, mean = orthogonality_error((eta, phi), (eta[perm], phi[perm]), 5, "prolate")
    assert mean < 1e-12
