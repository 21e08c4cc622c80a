import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hemiparam import samples
from hemiparam.conformal import (
    MobiusParams,
    area_energy,
    disk_conformal,
    hemispheroidal_conformal,
    mobius,
    optimize_mobius,
    projection_beltrami,
)
from hemiparam.metrics import angle_distortion
from hemiparam.qc import beltrami_from_surface_map, count_flips
from hemiparam.registration import Spheroid
from hemiparam.tutte import disk_boundary, solve_tutte_disk


@settings(max_examples=100)
@given(st.floats(0, 0.99), st.floats(-np.pi, np.pi), st.floats(0, 2 * np.pi), st.floats(0, 1))
def test_mobius_preserves_disk_and_circle(r, theta, t, rad):
    p = MobiusParams(r, theta)
    on = mobius(np.array([[np.cos(t), np.sin(t)]]), p)
    assert np.hypot(*on[0]) == pytest.approx(1.0, abs=1e-9)
    inside = mobius(np.array([[rad * np.cos(t), rad * np.sin(t)]]), p)
    assert np.hypot(*inside[0]) <= 1 + 1e-9


def test_mobius_identity_and_center():
    z = np.random.default_rng(0).uniform(-0.7, 0.7, size=(20, 2))
    np.testing.assert_array_equal(mobius(z, MobiusParams()), z)
    p = MobiusParams(0.4, 1.0)
    c = 0.4 * np.array([np.cos(1.0), np.sin(1.0)])
    np.testing.assert_allclose(mobius(c[None], p)[0], 0.0, atol=1e-15)


def test_bad_mobius_radius():
    with pytest.raises(ValueError):
        MobiusParams(1.0, 0.0)


def test_disk_conformal_on_planar_disk_is_identity_up_to_rotation():
    uv, faces = samples.disk_mesh2d(10)
    from hemiparam.mesh import TriMesh

    mesh = TriMesh.from_arrays(np.c_[uv, np.zeros(len(uv))], faces)
    disk = disk_conformal(mesh)
    mu = beltrami_from_surface_map(mesh, disk)
    assert np.abs(mu).max() < 1e-3
    idx, _ = disk_boundary(mesh)
    np.testing.assert_allclose(np.hypot(*disk[idx].T), 1.0, atol=1e-12)


def test_conformal_beats_tutte_on_angles(face_small):
    mesh, s = face_small
    conf = hemispheroidal_conformal(mesh, s)
    tut = solve_tutte_disk(mesh)
    from hemiparam.projection import inverse_spheroidal_projection

    assert count_flips(conf.disk_corrected, mesh.faces) == 0
    a_c = angle_distortion(mesh, conf.hemi).mean
    a_t = angle_distortion(mesh, inverse_spheroidal_projection(tut, s)).mean
    assert a_c < 0.25 * a_t


def test_mobius_search_never_worse_than_identity(face_small):
    mesh, s = face_small
    g = solve_tutte_disk(mesh)
    p = optimize_mobius(g, mesh, s, max_evals=60)
    assert area_energy(g, mesh, p, s) <= area_energy(g, mesh, MobiusParams(), s)


def test_projection_beltrami_vanishes_for_sphere():
    # P^-1 onto the sphere is conformal (stereographic)
    uv, faces = samples.disk_mesh2d(20)
    mu = projection_beltrami(uv, faces, Spheroid(1.0, 1.0))
    assert np.abs(mu).max() < 0.02
    mu_flat = projection_beltrami(uv, faces, Spheroid(1.0, 0.3))
    assert np.abs(mu_flat).mean() > 0.05
