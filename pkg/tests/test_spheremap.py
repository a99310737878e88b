import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from haarlight.haar2d import LatLongMap
from haarlight.spheremap import (
    RotationSpec,
    angles_from_dir,
    canonical_decompose,
    dir_from_angles,
    grid_map_terms,
    jacobian,
    random_rotations,
    recompose,
    rot_x,
    rotate_angles,
    rotate_map_spatial,
)

angle = st.floats(-np.pi, np.pi, allow_nan=False)
interior_theta = st.floats(0.05, np.pi - 0.05)
azimuth = st.floats(0.0, 2 * np.pi, exclude_max=True)


def test_dir_examples():
    np.testing.assert_allclose(dir_from_angles(0.0, 1.3), [0, 1, 0], atol=1e-16)
    np.testing.assert_allclose(dir_from_angles(np.pi / 2, 0.0), [0, 0, 1], atol=1e-16)
    theta, phi = angles_from_dir(dir_from_angles(np.pi / 3, np.pi / 4))
    assert abs(theta - np.pi / 3) <= 1e-12 and abs(phi - np.pi / 4) <= 1e-12


def test_pole_azimuth_is_zero():
    assert angles_from_dir([0.0, 1.0, 0.0]) == (0.0, 0.0)
    theta, phi = rotate_angles(rot_x(np.pi / 2), np.pi / 2, 0.0)  # (0,0,1) goes to (0,-1,0)
    assert theta == pytest.approx(np.pi) and phi == 0.0


def test_matrix_matches_explicit_euler():
    for a, b, g in [(0.1, 0.2, 0.3), (-1.0, 2.5, 0.7), (3.0, -0.4, -2.0)]:
        np.testing.assert_allclose(RotationSpec(a, b, g).matrix, oracles.euler_matrix(a, b, g), atol=1e-15)


@given(a=angle, b=angle, g=angle)
def test_matrix_orthonormal(a, b, g):
    m = RotationSpec(a, b, g).matrix
    np.testing.assert_allclose(m @ m.T, np.eye(3), atol=1e-12)
    assert abs(np.linalg.det(m) - 1.0) <= 1e-12


def test_rotate_angles_examples():
    assert rotate_angles(RotationSpec(), 0.7, 2.1) == pytest.approx((0.7, 2.1), abs=1e-15)
    theta, phi = rotate_angles(RotationSpec.from_degrees(alpha=20), np.pi / 2, 0.0)
    assert theta == pytest.approx(np.pi / 2 + np.radians(20), abs=1e-12) and phi == pytest.approx(0.0, abs=1e-12)


@given(beta=angle, theta=interior_theta, phi=azimuth)
def test_pure_azimuth_shifts_phi(beta, theta, phi):
    t2, p2 = rotate_angles(RotationSpec(beta=beta), theta, phi)
    assert t2 == pytest.approx(theta, abs=1e-12)
    diff = np.angle(np.exp(1j * (p2 - (phi - beta))))
    assert abs(diff) <= 1e-12


@given(a=angle, b=angle, g=angle, theta=interior_theta, phi=azimuth)
def test_rotate_angles_matches_oracle_and_inverts(a, b, g, theta, phi):
    rot = RotationSpec(a, b, g)
    t2, p2 = rotate_angles(rot, theta, phi)
    to, po = oracles.rotated_angles(oracles.euler_matrix(a, b, g), theta, phi)
    assert t2 == pytest.approx(to, abs=1e-12)
    if 1e-6 < t2 < np.pi - 1e-6:
        assert abs(np.angle(np.exp(1j * (p2 - po)))) <= 1e-9
        t3, p3 = rotate_angles(rot.inverse(), t2, p2)
        assert t3 == pytest.approx(theta, abs=1e-9)
        assert abs(np.angle(np.exp(1j * (p3 - phi)))) <= 1e-9


@given(a1=angle, b1=angle, a2=angle, g2=angle, theta=interior_theta, phi=azimuth)
def test_composition(a1, b1, a2, g2, theta, phi):
    r1, r2 = RotationSpec(a1, b1, 0.3), RotationSpec(a2, -0.2, g2)
    via = rotate_angles(r2, *rotate_angles(r1, theta, phi))
    direct = rotate_angles(r2.compose(r1), theta, phi)
    assert direct[0] == pytest.approx(via[0], abs=1e-9)
    if 1e-6 < direct[0] < np.pi - 1e-6:
        assert abs(np.angle(np.exp(1j * (direct[1] - via[1])))) <= 1e-9


def test_from_matrix_round_trip():
    for rot in random_rotations(50, np.random.default_rng(3)):
        np.testing.assert_allclose(RotationSpec.from_matrix(rot.matrix).matrix, rot.matrix, atol=1e-12)
    gimbal = RotationSpec(0.4, np.pi / 2, -0.3)
    np.testing.assert_allclose(RotationSpec.from_matrix(gimbal.matrix).matrix, gimbal.matrix, atol=1e-12)


# -- canonical decomposition ------------------------------------------------------


def test_canonical_examples():
    assert canonical_decompose(RotationSpec()) == (0.0, 0.0, 0.0)
    pre, elev, post = canonical_decompose(RotationSpec(alpha=0.6))
    assert (pre, post) == pytest.approx((0.0, 0.0), abs=1e-15) and elev == pytest.approx(0.6)


def test_canonical_recomposes_random():
    worst = 0.0
    for rot in random_rotations(1000, np.random.default_rng(11)):
        pre, elev, post = canonical_decompose(rot)
        assert 0.0 <= elev <= np.pi
        worst = max(worst, float(np.max(np.abs(recompose(pre, elev, post) - rot.matrix))))
    assert worst <= 1e-10


@pytest.mark.parametrize("elev", [0.0, np.pi])
def test_canonical_degenerate(elev):
    mat = recompose(0.9, elev, -0.4)
    pre, e, post = canonical_decompose(mat)
    assert post == 0.0 and e == elev
    np.testing.assert_allclose(recompose(pre, e, post), mat, atol=1e-12)


# -- Jacobian ---------------------------------------------------------------------


def test_jacobian_identity_and_azimuth():
    for rot in (RotationSpec(), RotationSpec(beta=1.1)):
        j = jacobian(rot, np.array(0.8), np.array(2.0))
        np.testing.assert_allclose(j.as_tuple(), (1, 0, 0, 1, 0, 0), atol=1e-12)


def _matrix_relative_error(rot, theta, phi):
    j = jacobian(rot, theta, phi)
    analytic = np.stack([j.dTheta_dtheta, j.dTheta_dphi, j.dPhi_dtheta, j.dPhi_dphi])
    fd = np.stack(oracles.finite_difference_jacobian(rot.matrix, theta, phi))
    return np.max(np.abs(analytic - fd), axis=0) / np.max(np.abs(analytic), axis=0)


def test_jacobian_matches_finite_differences_example():
    err = _matrix_relative_error(RotationSpec.from_degrees(alpha=20), np.array(np.pi / 3), np.array(np.pi / 4))
    assert err <= 1e-6


def test_mixed_partials_match_finite_differences():
    rot = RotationSpec(0.4, -0.7, 1.2)
    theta, phi, h = np.array(1.1), np.array(0.9), 1e-5
    j = jacobian(rot, theta, phi)
    up, dn = jacobian(rot, theta, phi + h), jacobian(rot, theta, phi - h)
    assert j.d2Theta_dthetadphi == pytest.approx((up.dTheta_dtheta - dn.dTheta_dtheta) / (2 * h), rel=1e-6)
    assert j.d2Phi_dthetadphi == pytest.approx((up.dPhi_dtheta - dn.dPhi_dtheta) / (2 * h), rel=1e-6)


def test_jacobian_pole_flag():
    rot = rot_x(np.pi / 2)  # (theta=pi/2, phi=0) lands on the south pole
    j = jacobian(rot, np.array(np.pi / 2), np.array(0.0))
    assert j.degenerate and np.all(np.isfinite(j.as_tuple()))
    assert not jacobian(rot, np.array(1.0), np.array(1.0)).degenerate


# -- spatial oracle ---------------------------------------------------------------


def test_spatial_identity_and_constant(rng):
    m = LatLongMap(rng.standard_normal((3, 32, 32)))
    np.testing.assert_allclose(rotate_map_spatial(m, RotationSpec()).samples, m.samples, atol=1e-12)
    const = LatLongMap(np.full((1, 32, 32), 2.5))
    for rot in random_rotations(5, rng):
        np.testing.assert_allclose(rotate_map_spatial(const, rot).samples, 2.5, atol=1e-12)


@pytest.mark.parametrize("cols", [1, 3, -2])
def test_spatial_column_shift_is_exact(rng, cols):
    m = LatLongMap(rng.standard_normal((1, 16, 16)))
    out = rotate_map_spatial(m, RotationSpec(beta=cols * 2 * np.pi / 16))
    np.testing.assert_allclose(out.samples, np.roll(m.samples, cols, axis=-1), atol=1e-12)


def test_random_rotations_deterministic_and_uniformish():
    a = random_rotations(2000, np.random.default_rng(5))
    b = random_rotations(3, np.random.default_rng(5))
    assert a[:3] == b
    # uniform on SO(3): the image of a fixed axis is uniform on the sphere, so its mean is ~0
    ys = np.array([r.matrix @ np.array([0.0, 1.0, 0.0]) for r in a])
    assert np.all(np.abs(ys.mean(axis=0)) < 0.05)


def test_grid_terms_match_pointwise_maps():
    theta = np.pi * (np.arange(15) + 1.0) / 16
    phi = 2 * np.pi * (np.arange(16) + 0.5) / 16
    tt, pp = np.meshgrid(theta, phi, indexing="ij")
    for rot in random_rotations(5, np.random.default_rng(21)) + [RotationSpec(), rot_x(np.pi / 2)]:
        terms = grid_map_terms(rot, theta, phi)
        th2, ph2 = rotate_angles(rot, tt, pp)
        j = jacobian(rot, tt, pp)
        np.testing.assert_allclose(terms.Theta, th2, atol=1e-12)
        np.testing.assert_allclose(np.angle(np.exp(1j * (terms.Phi - ph2))), 0.0, atol=1e-12)
        for name in ("dTheta_dtheta", "dTheta_dphi", "dPhi_dtheta", "dPhi_dphi"):
            np.testing.assert_allclose(getattr(terms, name), getattr(j, name), rtol=1e-12, atol=1e-12)
        np.testing.assert_array_equal(terms.degenerate, j.degenerate)
