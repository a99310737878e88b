"""Deterministic test maps: Phong lobes, smooth band-limited functions, environments."""

from __future__ import annotations

import numpy as np

from .haar2d import LatLongMap, cell_centers
from .spheremap import dir_from_angles, solid_angle_weights


def grid_directions(n: int) -> np.ndarray:
    """Unit vectors at every cell center, shape ``(2^n, 2^n, 3)``."""
    theta, phi = cell_centers(n)
    tt, pp = np.meshgrid(theta, phi, indexing="ij")
    return dir_from_angles(tt, pp)


def phong_lobe_map(n: int, exponent: float = 20.0, theta: float = 0.7, phi: float = 1.1) -> LatLongMap:
    """``max(0, w . r)^e`` around direction ``r`` at (theta, phi)."""
    axis = dir_from_angles(theta, phi)
    cosang = grid_directions(n) @ axis
    return LatLongMap(np.maximum(cosang, 0.0)[None] ** exponent)


def phong_lobe_batch(n: int, count: int, rng: np.random.Generator, exponent: float = 20.0) -> list[LatLongMap]:
    """Lobes centered on uniformly random directions."""
    out = []
    for _ in range(count):
        v = rng.standard_normal(3)
        v /= np.linalg.norm(v)
        theta = float(np.arccos(np.clip(v[1], -1.0, 1.0)))
        phi = float(np.arctan2(v[0], v[2]) % (2.0 * np.pi))
        out.append(phong_lobe_map(n, exponent, theta, phi))
    return out


def low_order_harmonics(n: int, rng: np.random.Generator, terms: int = 8) -> LatLongMap:
    """Random combination of real polynomial harmonics up to degree 2, plus an offset."""
    x, y, z = np.moveaxis(grid_directions(n), -1, 0)
    basis = [x, y, z, x * y, y * z, x * z, 3.0 * y * y - 1.0, x * x - z * z]
    pick = rng.choice(len(basis), size=min(terms, len(basis)), replace=False)
    w = rng.uniform(-1.0, 1.0, size=len(pick))
    vals = 3.0 + sum(wi * basis[i] for wi, i in zip(w, pick))
    return LatLongMap(vals[None])


def normalize_environment(m: LatLongMap) -> LatLongMap:
    """Scale so the solid-angle mean (averaged over channels) is 1."""
    w = solid_angle_weights(m.size_exp)[:, None]
    mean = float(np.sum(m.samples * w) / (4.0 * np.pi) / m.channels)
    if mean <= 0.0:
        raise ValueError("environment has no positive energy")
    return LatLongMap(m.samples / mean)


def constant_environment(n: int, value: float = 1.0) -> LatLongMap:
    return LatLongMap(np.full((3, 1 << n, 1 << n), float(value)))


def _sky(d):
    x, y, z = np.moveaxis(d, -1, 0)
    sun = np.array([0.4, 0.8, 0.45])
    sun /= np.linalg.norm(sun)
    base = np.clip(0.3 + 0.7 * y, 0.05, None)
    glow = np.maximum(d @ sun, 0.0) ** 60 * 30.0
    return np.stack([base * 0.7 + glow, base * 0.85 + glow, base + 0.9 * glow])


def _studio(d):
    lights = [((0.0, 1.0, 0.0), 12, (6.0, 6.0, 6.0)), ((0.9, 0.2, 0.4), 25, (8.0, 5.0, 3.0)),
              ((-0.7, 0.1, -0.7), 25, (2.0, 4.0, 9.0))]
    out = np.full((3,) + d.shape[:-1], 0.05)
    for axis, power, color in lights:
        a = np.asarray(axis) / np.linalg.norm(axis)
        lobe = np.maximum(d @ a, 0.0) ** power
        out += np.asarray(color)[:, None, None] * lobe
    return out


def _bands(d):
    x, y, z = np.moveaxis(d, -1, 0)
    phi = np.arctan2(x, z)
    stripes = 0.5 + 0.5 * np.cos(6.0 * phi) * np.sqrt(np.clip(1.0 - y * y, 0.0, None))
    return np.stack([stripes + 0.2, 0.6 * stripes + 0.3 * (y > 0), 1.2 - stripes])


PROCEDURAL = {"sky": _sky, "studio": _studio, "bands": _bands}


def procedural_environment(name: str, n: int) -> LatLongMap:
    """Named synthetic light probe, normalized to unit solid-angle mean."""
    if name not in PROCEDURAL:
        raise ValueError(f"unknown procedural environment {name!r}; choose from {sorted(PROCEDURAL)}")
    return normalize_environment(LatLongMap(PROCEDURAL[name](grid_directions(n))))


def single_texel_environment(n: int, row: int, col: int, value: float = 1000.0) -> LatLongMap:
    samples = np.zeros((3, 1 << n, 1 << n))
    samples[:, row, col] = value
    return LatLongMap(samples)
