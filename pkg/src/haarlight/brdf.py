"""Analytic materials and their cosine-weighted BRDF tables over outgoing-direction buckets."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .haar2d import HaarPyramid, LatLongMap, cell_centers, forward_transform
from .spheremap import angles_from_dir, dir_from_angles, solid_angle_weights

MODELS = ("lambertian", "phong")


def _rgb(value) -> np.ndarray:
    arr = np.broadcast_to(np.asarray(value, dtype=np.float64), (3,)).copy()
    return arr


@dataclass(frozen=True)
class Material:
    """Lambertian or normalized Phong material.

    ``f_r = rho_d / pi + rho_s (e + 2) / (2 pi) cos^e(alpha)`` with ``alpha``
    the angle between the incoming direction and the mirror of the outgoing
    one; the Phong term is absent for the lambertian model.
    """

    model: str = "lambertian"
    diffuse: tuple = (0.8, 0.8, 0.8)
    specular: tuple = (0.0, 0.0, 0.0)
    exponent: float = 0.0

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"unknown material model {self.model!r}")
        if not np.isfinite(self.exponent) or self.exponent < 0:
            raise ValueError(f"invalid phong exponent {self.exponent}")
        object.__setattr__(self, "diffuse", tuple(_rgb(self.diffuse)))
        object.__setattr__(self, "specular", tuple(_rgb(self.specular)))
        for name in ("diffuse", "specular"):
            vals = np.asarray(getattr(self, name))
            if np.any(vals < 0) or np.any(vals > 1):
                raise ValueError(f"{name} albedo must lie in [0, 1]")

    @property
    def is_lambertian(self) -> bool:
        return self.model == "lambertian" or not any(self.specular)

    def cosine_weighted(self, w_out: np.ndarray, w_in: np.ndarray) -> np.ndarray:
        """``f_r cos(theta_in)`` clamped to the upper hemisphere; shape ``(3,) + w_in.shape[:-1]``."""
        cos_in = w_in[..., 1]
        upper = cos_in > 0.0
        shape = (3,) + (1,) * (w_in.ndim - 1)
        value = np.asarray(self.diffuse).reshape(shape) / np.pi * np.ones_like(cos_in)
        if self.model == "phong":
            mirror = np.array([-w_out[0], w_out[1], -w_out[2]])
            cos_a = np.maximum(w_in @ mirror, 0.0)
            rho_s = np.asarray(self.specular).reshape(shape)
            value = value + rho_s * (self.exponent + 2.0) / (2.0 * np.pi) * cos_a ** self.exponent
        return np.where(upper, value * cos_in, 0.0)


PRESETS = {
    "matte": Material("lambertian", diffuse=(0.8, 0.8, 0.8)),
    "glossy": Material("phong", diffuse=(0.2, 0.2, 0.2), specular=(0.6, 0.6, 0.6), exponent=20.0),
    "mirror-ish": Material("phong", diffuse=(0.05, 0.05, 0.05), specular=(0.9, 0.9, 0.9), exponent=200.0),
}


def hemisphere_albedo(mat: Material, w_out: np.ndarray, n: int = 8) -> np.ndarray:
    """Quadrature of ``f_r cos`` over incoming directions, per channel."""
    theta, phi = cell_centers(n)
    tt, pp = np.meshgrid(theta, phi, indexing="ij")
    vals = mat.cosine_weighted(np.asarray(w_out, dtype=np.float64), dir_from_angles(tt, pp))
    return np.sum(vals * solid_angle_weights(n)[:, None], axis=(1, 2))


def bucket_shape(count: int) -> tuple[int, int]:
    """(elevation, azimuth) bucket counts: largest elevation divisor not above sqrt(count/2)."""
    if count < 1:
        raise ValueError("bucket count must be >= 1")
    rows = 1
    for d in range(1, int(np.sqrt(count / 2.0)) + 1):
        if count % d == 0:
            rows = d
    return rows, count // rows


def bucket_center(index: int, rows: int, cols: int) -> np.ndarray:
    """Local outgoing direction at the middle of a bucket."""
    r, c = divmod(index, cols)
    theta = (r + 0.5) * 0.5 * np.pi / rows
    phi = (c + 0.5) * 2.0 * np.pi / cols
    return dir_from_angles(theta, phi)


@dataclass
class BRDFTable:
    """Per-bucket pyramids of ``f_r cos(theta_in)`` in the local frame (normal = +Y)."""

    material: Material
    size_exp: int
    rows: int
    cols: int
    pyramids: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.pyramids) != self.rows * self.cols:
            raise ValueError("bucket count does not match pyramid list")
        if any(p.size_exp != self.size_exp for p in self.pyramids):
            raise ValueError("pyramids differ in size_exp")

    @property
    def count(self) -> int:
        return self.rows * self.cols

    def bucket_of(self, w_out) -> int:
        """Bucket holding a local outgoing direction; grazing and lower directions clamp to the last row."""
        theta, phi = angles_from_dir(np.asarray(w_out, dtype=np.float64))
        r = min(int(theta / (0.5 * np.pi) * self.rows), self.rows - 1)
        c = int(phi / (2.0 * np.pi) * self.cols) % self.cols
        return r * self.cols + c

    def bucket_center(self, index: int) -> np.ndarray:
        return bucket_center(index, self.rows, self.cols)

    def pyramid_for(self, w_out) -> HaarPyramid:
        return self.pyramids[self.bucket_of(w_out)]


def tabulate(mat: Material, w_out: np.ndarray, n: int) -> LatLongMap:
    theta, phi = cell_centers(n)
    tt, pp = np.meshgrid(theta, phi, indexing="ij")
    return LatLongMap(mat.cosine_weighted(np.asarray(w_out, dtype=np.float64), dir_from_angles(tt, pp)))


def generate_brdf_table(mat: Material, n: int, count: int = 64) -> BRDFTable:
    """Forward-transformed ``f_r cos`` map for every outgoing-direction bucket."""
    if n < 4:
        raise ValueError("BRDF tables need size_exp >= 4")
    rows, cols = bucket_shape(count)
    if mat.is_lambertian:
        pyr = forward_transform(tabulate(mat, np.array([0.0, 1.0, 0.0]), n))
        pyramids = [pyr] * (rows * cols)
    else:
        pyramids = [forward_transform(tabulate(mat, bucket_center(i, rows, cols), n)) for i in range(rows * cols)]
    return BRDFTable(mat, n, rows, cols, pyramids)
