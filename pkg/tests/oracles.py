"""Independent reference implementations used only by the tests.

Nothing here imports the transform, tripling or rotation code under test.
Basis functions are written out from their definition (quadrant signs times
2^l on a dyadic square), and integrals are plain grid means.
"""

from __future__ import annotations

import numpy as np

SIGNS = {
    0: np.array([[1, -1], [1, -1]]),   # horizontal: + left
    1: np.array([[1, 1], [-1, -1]]),   # vertical: + top
    2: np.array([[1, -1], [-1, 1]]),   # diagonal: + main diagonal
}


def basis_list(n: int):
    """[(flat, level, kind, row, col)] in flat order; kind None for scaling."""
    out = [(0, None, None, 0, 0)]
    for level in range(n):
        side = 1 << level
        for kind in range(3):
            for r in range(side):
                for c in range(side):
                    out.append((len(out), level, kind, r, c))
    return out


def basis_grid(n: int, level, kind, row, col) -> np.ndarray:
    size = 1 << n
    if level is None:
        return np.ones((size, size))
    cells = size >> level
    half = cells // 2
    block = np.kron(SIGNS[kind], np.ones((half, half))) * float(1 << level)
    grid = np.zeros((size, size))
    grid[row * cells:(row + 1) * cells, col * cells:(col + 1) * cells] = block
    return grid


def basis_matrix(n: int) -> np.ndarray:
    """Rows are flattened basis functions in flat-index order."""
    return np.stack([basis_grid(n, *b[1:]).ravel() for b in basis_list(n)])


def project(samples: np.ndarray) -> np.ndarray:
    """Coefficients ``(4^n, C)`` as unit-square inner products with every basis function."""
    if samples.ndim == 2:
        samples = samples[None]
    c, size, _ = samples.shape
    n = size.bit_length() - 1
    B = basis_matrix(n)
    return B @ samples.reshape(c, -1).T / (size * size)


def brute_triple_tensor(n: int) -> np.ndarray:
    """All ``C_ijk`` as means of products of explicit basis grids."""
    B = basis_matrix(n)
    return np.einsum("ix,jx,kx->ijk", B, B, B) / B.shape[1]


def best_k_mse(coeffs: np.ndarray, k: int) -> float:
    """Reconstruction MSE of the best k-term approximation keeping the scaling term."""
    mag = np.sqrt(np.sum(coeffs[1:] ** 2, axis=1))
    order = np.argsort(-mag, kind="stable")
    dropped = order[k - 1:]
    return float(np.sum(coeffs[1:][dropped] ** 2)) / coeffs.shape[1]


def euler_matrix(alpha, beta, gamma) -> np.ndarray:
    """``R_z R_y R_x`` written out explicitly from the per-axis patterns."""
    ca, sa = np.cos(alpha), np.sin(alpha)
    cb, sb = np.cos(beta), np.sin(beta)
    cg, sg = np.cos(gamma), np.sin(gamma)
    rx = np.array([[1, 0, 0], [0, ca, -sa], [0, sa, ca]])
    ry = np.array([[cb, 0, -sb], [0, 1, 0], [sb, 0, cb]])
    rz = np.array([[cg, -sg, 0], [sg, cg, 0], [0, 0, 1]])
    return rz @ ry @ rx


def angles_of(v) -> tuple[np.ndarray, np.ndarray]:
    v = np.asarray(v, dtype=np.float64)
    theta = np.arccos(np.clip(v[..., 1] / np.linalg.norm(v, axis=-1), -1, 1))
    phi = np.mod(np.arctan2(v[..., 0], v[..., 2]), 2 * np.pi)
    return theta, phi


def direction(theta, phi) -> np.ndarray:
    theta, phi = np.asarray(theta, float), np.asarray(phi, float)
    return np.stack([np.sin(theta) * np.sin(phi), np.cos(theta), np.sin(theta) * np.cos(phi)], -1)


def rotated_angles(mat, theta, phi):
    return angles_of(direction(theta, phi) @ np.asarray(mat).T)


def finite_difference_jacobian(mat, theta, phi, h: float = 1e-5):
    """Central differences of the rotated angles, azimuth differences unwrapped."""
    def wrap(d):
        return np.angle(np.exp(1j * d))

    t1, p1 = rotated_angles(mat, theta + h, phi)
    t0, p0 = rotated_angles(mat, theta - h, phi)
    dT_dt, dP_dt = (t1 - t0) / (2 * h), wrap(p1 - p0) / (2 * h)
    t1, p1 = rotated_angles(mat, theta, phi + h)
    t0, p0 = rotated_angles(mat, theta, phi - h)
    dT_dp, dP_dp = (t1 - t0) / (2 * h), wrap(p1 - p0) / (2 * h)
    return dT_dt, dT_dp, dP_dt, dP_dp


def quadrature_integral(values: np.ndarray) -> np.ndarray:
    """Midpoint-rule spherical integral of ``(C, N, N)`` lat-long samples."""
    c, size, _ = values.shape
    theta = np.pi * (np.arange(size) + 0.5) / size
    w = np.sin(theta) * (np.pi / size) * (2 * np.pi / size)
    return np.sum(values * w[:, None], axis=(1, 2))
