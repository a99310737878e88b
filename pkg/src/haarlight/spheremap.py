"""Spherical geometry on the lat-long grid.

Directions use a right-handed frame with Y up and Z as depth:

    p(theta, phi) = (sin theta sin phi, cos theta, sin theta cos phi).

Axis rotations all follow one pattern: ``-sin`` sits in the upper-right
corner of the 2x2 block acting on the other two axes (taken in x, y, z
order)::

    R_x(a) = [[1, 0, 0], [0, c, -s], [0, s, c]]
    R_y(b) = [[c, 0, -s], [0, 1, 0], [s, 0, c]]
    R_z(g) = [[c, -s, 0], [s, c, 0], [0, 0, 1]]

and ``R = R_z(gamma) R_y(beta) R_x(alpha)``. A rotated map is
``g(theta, phi) = f(Theta, Phi)`` where ``(Theta, Phi)`` are the angles of
``R p(theta, phi)``; under this pattern ``R_y(b)`` maps ``phi`` to ``phi - b``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .haar2d import LatLongMap, cell_centers

TWO_PI = 2.0 * np.pi
EPS_POLE = 1e-6


def rot_x(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(b: float) -> np.ndarray:
    c, s = np.cos(b), np.sin(b)
    return np.array([[c, 0.0, -s], [0.0, 1.0, 0.0], [s, 0.0, c]])


def rot_z(g: float) -> np.ndarray:
    c, s = np.cos(g), np.sin(g)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _wrap(angle):
    return np.mod(angle, TWO_PI)


@dataclass(frozen=True)
class RotationSpec:
    """Euler angles (radians) about X, Y, Z composed as ``R_z R_y R_x``."""

    alpha: float = 0.0
    beta: float = 0.0
    gamma: float = 0.0

    @property
    def matrix(self) -> np.ndarray:
        return rot_z(self.gamma) @ rot_y(self.beta) @ rot_x(self.alpha)

    @property
    def canonical(self) -> tuple[float, float, float]:
        return canonical_decompose(self)

    def inverse(self) -> "RotationSpec":
        return RotationSpec.from_matrix(self.matrix.T)

    def compose(self, first: "RotationSpec") -> "RotationSpec":
        """Rotation acting as ``first`` then ``self`` on angle pairs.

        ``rotate_angles(a.compose(b), x) == rotate_angles(a, rotate_angles(b, x))``
        holds because ``rotate_angles`` reads angles of ``R p``.
        """
        return RotationSpec.from_matrix(self.matrix @ first.matrix)

    def is_identity(self, tol: float = 1e-15) -> bool:
        return bool(np.max(np.abs(self.matrix - np.eye(3))) <= tol)

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "RotationSpec":
        m = np.asarray(m, dtype=np.float64)
        sb = float(np.clip(m[2, 0], -1.0, 1.0))
        beta = float(np.arcsin(sb))
        cb = np.sqrt(max(0.0, 1.0 - sb * sb))
        if cb > 1e-12:
            alpha = float(np.arctan2(m[2, 1], m[2, 2]))
            gamma = float(np.arctan2(m[1, 0], m[0, 0]))
        else:
            alpha = 0.0
            gamma = float(np.arctan2(-m[0, 1], m[1, 1]))
        return cls(alpha, beta, gamma)

    @classmethod
    def from_degrees(cls, alpha=0.0, beta=0.0, gamma=0.0) -> "RotationSpec":
        return cls(np.radians(alpha), np.radians(beta), np.radians(gamma))


def canonical_decompose(rot: RotationSpec | np.ndarray) -> tuple[float, float, float]:
    """Split ``R = R_y(pre) R_x(elevation) R_y(post)`` with elevation in [0, pi].

    When the elevation is 0 or pi the split is degenerate and ``post`` is 0.
    """
    m = rot.matrix if isinstance(rot, RotationSpec) else np.asarray(rot, dtype=np.float64)
    elev = float(np.arccos(np.clip(m[1, 1], -1.0, 1.0)))
    if np.sin(elev) > 1e-9:
        pre = float(np.arctan2(-m[0, 1], m[2, 1]))
        post = float(np.arctan2(-m[1, 0], -m[1, 2]))
    else:
        # R_x(0) or R_x(pi) fixes the x axis, so R_y(pre) alone shows in column 0
        pre = float(np.arctan2(m[2, 0], m[0, 0]))
        post = 0.0
        elev = 0.0 if m[1, 1] > 0 else np.pi
    return pre, elev, post


def recompose(pre: float, elev: float, post: float) -> np.ndarray:
    return rot_y(pre) @ rot_x(elev) @ rot_y(post)


def dir_from_angles(theta, phi) -> np.ndarray:
    """Unit vector(s) for elevation/azimuth; trailing axis holds (x, y, z)."""
    theta = np.asarray(theta, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    st = np.sin(theta)
    return np.stack([st * np.sin(phi), np.cos(theta), st * np.cos(phi)], axis=-1)


def angles_from_dir(v) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`dir_from_angles`; azimuth in [0, 2 pi), 0 at the poles."""
    v = np.asarray(v, dtype=np.float64)
    norm = np.linalg.norm(v, axis=-1)
    y = np.clip(v[..., 1] / norm, -1.0, 1.0)
    theta = np.arccos(y)
    rho = np.hypot(v[..., 0], v[..., 2])
    phi = np.where(rho > 1e-14 * norm, _wrap(np.arctan2(v[..., 0], v[..., 2])), 0.0)
    if np.ndim(phi) == 0:
        return float(theta), float(phi)
    return theta, phi


def rotate_angles(rot: RotationSpec | np.ndarray, theta, phi):
    """Angles of ``R p(theta, phi)``: the pre-image point sampled by the rotated map."""
    m = rot.matrix if isinstance(rot, RotationSpec) else rot
    q = dir_from_angles(theta, phi) @ m.T
    return angles_from_dir(q)


@dataclass
class JacobianAtPoint:
    """Partials of (Theta, Phi) with respect to (theta, phi), plus mixed seconds.

    Arrays broadcast over the evaluation points; ``degenerate`` marks points
    whose pre-image lies within ``EPS_POLE`` of a pole, where the values are
    computed with ``sin(Theta)`` clamped to ``sin(EPS_POLE)``.
    """

    dTheta_dtheta: np.ndarray
    dTheta_dphi: np.ndarray
    dPhi_dtheta: np.ndarray
    dPhi_dphi: np.ndarray
    d2Theta_dthetadphi: np.ndarray
    d2Phi_dthetadphi: np.ndarray
    degenerate: np.ndarray

    def as_tuple(self):
        return (
            self.dTheta_dtheta,
            self.dTheta_dphi,
            self.dPhi_dtheta,
            self.dPhi_dphi,
            self.d2Theta_dthetadphi,
            self.d2Phi_dthetadphi,
        )


def jacobian(rot: RotationSpec | np.ndarray, theta, phi) -> JacobianAtPoint:
    """Closed-form partials of the rotation maps at ``(theta, phi)``.

    With ``q = R p``: ``Theta = acos(q_y)``, ``Phi = atan2(q_x, q_z)``, so

        Theta_u = -q_u,y / sin(Theta)
        Phi_u   = (q_z q_u,x - q_x q_u,z) / sin^2(Theta)

    for ``u`` in (theta, phi), and the mixed terms follow by differentiating
    once more in phi.
    """
    m = rot.matrix if isinstance(rot, RotationSpec) else np.asarray(rot)
    theta = np.asarray(theta, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    st, ct = np.sin(theta), np.cos(theta)
    sp, cp = np.sin(phi), np.cos(phi)
    zero = np.zeros(np.broadcast(theta, phi).shape)
    p = np.stack([st * sp, ct + zero, st * cp], axis=-1)
    p_t = np.stack([ct * sp, -st + zero, ct * cp], axis=-1)
    p_p = np.stack([st * cp, zero, -st * sp], axis=-1)
    p_tp = np.stack([ct * cp, zero, -ct * sp], axis=-1)
    q, q_t, q_p, q_tp = (v @ m.T for v in (p, p_t, p_p, p_tp))

    rho2 = q[..., 0] ** 2 + q[..., 2] ** 2
    floor = np.sin(EPS_POLE) ** 2
    degenerate = rho2 < floor
    rho2 = np.maximum(rho2, floor)
    rho = np.sqrt(rho2)
    qy = q[..., 1]

    th_t = -q_t[..., 1] / rho
    th_p = -q_p[..., 1] / rho
    th_tp = -q_tp[..., 1] / rho - q_t[..., 1] * qy * q_p[..., 1] / rho ** 3

    num_t = q[..., 2] * q_t[..., 0] - q[..., 0] * q_t[..., 2]
    num_p = q[..., 2] * q_p[..., 0] - q[..., 0] * q_p[..., 2]
    ph_t = num_t / rho2
    ph_p = num_p / rho2
    dnum_t = (q_p[..., 2] * q_t[..., 0] + q[..., 2] * q_tp[..., 0]
              - q_p[..., 0] * q_t[..., 2] - q[..., 0] * q_tp[..., 2])
    drho2 = 2.0 * (q[..., 0] * q_p[..., 0] + q[..., 2] * q_p[..., 2])
    ph_tp = (dnum_t * rho2 - num_t * drho2) / rho2 ** 2
    return JacobianAtPoint(th_t, th_p, ph_t, ph_p, th_tp, ph_tp, degenerate)


@dataclass
class GridMapTerms:
    """Rotated angles and first partials over a separable (theta, phi) grid."""

    Theta: np.ndarray
    Phi: np.ndarray
    dTheta_dtheta: np.ndarray
    dTheta_dphi: np.ndarray
    dPhi_dtheta: np.ndarray
    dPhi_dphi: np.ndarray
    degenerate: np.ndarray


def grid_map_terms(rot: RotationSpec | np.ndarray, theta, phi) -> GridMapTerms:
    """:func:`rotate_angles` and the first-order :func:`jacobian` on the grid ``theta x phi``.

    Same formulas, but the rotated vector is built by broadcasting a theta
    column against a phi row, so no ``(..., 3)`` stacks are formed and the
    direction is computed once for both results.
    """
    m = rot.matrix if isinstance(rot, RotationSpec) else np.asarray(rot)
    theta = np.asarray(theta, dtype=np.float64).reshape(-1, 1)
    phi = np.asarray(phi, dtype=np.float64).reshape(1, -1)
    st, ct = np.sin(theta), np.cos(theta)
    sp, cp = np.sin(phi), np.cos(phi)
    # p = (st sp, ct, st cp), p_t = (ct sp, -st, ct cp), p_p = (st cp, 0, -st sp)
    stsp, stcp, ctsp, ctcp = st * sp, st * cp, ct * sp, ct * cp
    q = [m[i, 0] * stsp + m[i, 1] * ct + m[i, 2] * stcp for i in range(3)]
    q_t = [m[i, 0] * ctsp - m[i, 1] * st + m[i, 2] * ctcp for i in range(3)]
    q_p = [m[i, 0] * stcp - m[i, 2] * stsp for i in range(3)]

    rho2 = q[0] * q[0] + q[2] * q[2]
    Theta = np.arccos(np.clip(q[1], -1.0, 1.0))
    Phi = np.where(rho2 > 1e-28, _wrap(np.arctan2(q[0], q[2])), 0.0)
    floor = np.sin(EPS_POLE) ** 2
    degenerate = rho2 < floor
    rho2 = np.maximum(rho2, floor)
    rho = np.sqrt(rho2)
    return GridMapTerms(
        Theta, Phi,
        -q_t[1] / rho, -q_p[1] / rho,
        (q[2] * q_t[0] - q[0] * q_t[2]) / rho2,
        (q[2] * q_p[0] - q[0] * q_p[2]) / rho2,
        degenerate,
    )


# ---------------------------------------------------------------------------
# resampling on the lat-long grid
# ---------------------------------------------------------------------------


def sample_bilinear(grid: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Bilinear lookup of ``grid[..., rows, cols]`` at fractional (row u, col v).

    Columns wrap periodically; rows are clamped, so callers pad ghost rows
    for anything beyond the stored range.
    """
    rows, cols = grid.shape[-2:]
    u = np.clip(u, 0.0, rows - 1)
    r0 = np.minimum(np.floor(u).astype(np.int64), rows - 2) if rows > 1 else np.zeros(u.shape, np.int64)
    fu = u - r0
    r1 = np.minimum(r0 + 1, rows - 1)
    c0f = np.floor(v)
    fv = v - c0f
    c0 = np.mod(c0f.astype(np.int64), cols)
    c1 = np.mod(c0 + 1, cols)
    top = grid[..., r0, c0] * (1.0 - fv) + grid[..., r0, c1] * fv
    bot = grid[..., r1, c0] * (1.0 - fv) + grid[..., r1, c1] * fv
    return top * (1.0 - fu) + bot * fu


def pad_poles(grid: np.ndarray, sign: float = 1.0) -> np.ndarray:
    """Add one ghost row past each pole holding the reflected row.

    Crossing a pole at azimuth phi continues at phi + pi, so the ghost is
    the edge row rolled by half the width, times ``sign``.
    """
    half = grid.shape[-1] // 2
    top = sign * np.roll(grid[..., :1, :], half, axis=-1)
    bottom = sign * np.roll(grid[..., -1:, :], half, axis=-1)
    return np.concatenate([top, grid, bottom], axis=-2)


def rotate_map_spatial(m: LatLongMap, rot: RotationSpec | np.ndarray) -> LatLongMap:
    """Ground-truth rotation: bilinear resampling at the rotated cell centers."""
    n = m.size_exp
    size = m.size
    theta, phi = cell_centers(n)
    tt, pp = np.meshgrid(theta, phi, indexing="ij")
    th2, ph2 = rotate_angles(rot, tt, pp)
    u = th2 / (np.pi / size) - 0.5 + 1.0  # +1 for the ghost row
    v = ph2 / (TWO_PI / size) - 0.5
    return LatLongMap(sample_bilinear(pad_poles(m.samples), u, v))


def random_rotations(count: int, rng: np.random.Generator) -> list[RotationSpec]:
    """Rotations uniform over SO(3), drawn as normalized Gaussian quaternions."""
    out = []
    for _ in range(count):
        w, x, y, z = rng.standard_normal(4)
        s = 1.0 / np.sqrt(w * w + x * x + y * y + z * z)
        w, x, y, z = w * s, x * s, y * s, z * s
        m = np.array([
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ])
        out.append(RotationSpec.from_matrix(m))
    return out


def solid_angle_weights(n: int) -> np.ndarray:
    """Per-row quadrature weight ``sin(theta) dtheta dphi`` for a ``2^n`` grid."""
    size = 1 << n
    theta, _ = cell_centers(n)
    return np.sin(theta) * (np.pi / size) * (TWO_PI / size)
