import csv

import numpy as np
import pytest

from hemiparam.area import (
    CV_TARGET,
    DemState,
    coefficient_of_variation,
    density_rho_H,
    dem_step,
    hemispheroidal_area_preserving,
)
from hemiparam.metrics import area_distortion
from hemiparam.projection import inverse_spheroidal_projection
from hemiparam.qc import count_flips
from hemiparam.tutte import disk_boundary, solve_tutte_disk


def test_cv_of_constant_is_zero():
    assert coefficient_of_variation(np.full(10, 3.3)) == pytest.approx(0.0, abs=1e-15)
    assert coefficient_of_variation(np.array([1.0, 3.0])) == pytest.approx(0.5)


def test_density_is_area_ratio(face_small):
    mesh, s = face_small
    g = solve_tutte_disk(mesh)
    rho = density_rho_H(mesh, g, s)
    img = inverse_spheroidal_projection(g, s)
    f = mesh.faces[7]
    a_src = 0.5 * np.linalg.norm(np.cross(*(mesh.vertices[f[1:]] - mesh.vertices[f[0]])))
    a_img = 0.5 * np.linalg.norm(np.cross(*(img[f[1:]] - img[f[0]])))
    assert rho[7] == pytest.approx(a_src / a_img, rel=1e-12)


def test_one_step_lowers_cv_and_keeps_circle(face_small):
    mesh, s = face_small
    g = solve_tutte_disk(mesh)
    st = DemState(g, density_rho_H(mesh, g, s))
    nxt = dem_step(st, mesh, s)
    assert coefficient_of_variation(nxt.density) < coefficient_of_variation(st.density)
    idx, _ = disk_boundary(mesh)
    np.testing.assert_allclose(np.hypot(*nxt.disk[idx].T), 1.0, atol=1e-12)
    assert count_flips(nxt.disk, mesh.faces) == 0


def test_full_run(face_small, tmp_path):
    mesh, s = face_small
    log = tmp_path / "dem.csv"
    res = hemispheroidal_area_preserving(mesh, s, log_path=log)
    assert min(res.cv_history) < CV_TARGET
    assert count_flips(res.disk, mesh.faces) == 0
    t = area_distortion(mesh, inverse_spheroidal_projection(solve_tutte_disk(mesh), s)).mean
    assert area_distortion(mesh, res.hemi).mean < 0.2 * t
    rows = list(csv.reader(open(log)))
    assert rows[0] == ["iteration", "cv_rho", "flipped"]
    assert len(rows) == res.iterations + 2


def test_iteration_cap(face_small):
    mesh, s = face_small
    res = hemispheroidal_area_preserving(mesh, s, max_iterations=1)
    assert res.iterations <= 1
