"""Image formation: ray casting, per-pixel BRDF rotation and Haar triple-product shading.

Outgoing radiance at a point is the spherical integral of light, BRDF
(times the incoming cosine) and visibility. On the lat-long grid the
integral is ``sum L f V sin(theta) dtheta dphi``; because the triple product
of unit-square coefficients is a mean over the ``N^2`` cells, the light map
is pre-multiplied by ``sin(theta) * 2 pi^2`` before its forward transform
and the triple product then equals the integral directly.

The BRDF is tabulated in a local frame whose +Y axis is the surface normal
and is carried to the global frame per pixel, either in the Haar domain or
by the spatial oracle.
"""

from __future__ import annotations

import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .brdf import BRDFTable, generate_brdf_table
from .haar2d import HaarPyramid, LatLongMap, cell_centers, forward_transform, inverse_transform, truncate_top_k
from .haarrot import build_rotated_pyramid
from .scene import EPS_RAY, Scene, bake_visibility
from .spheremap import rot_x, rot_y, rotate_map_spatial
from .tripling import tripling_table

MODES = ("haar", "spatial")
PSNR_CAP = 300.0


@dataclass
class RenderOptions:
    """``K=None`` keeps every coefficient; ``start_level=None`` means ``n - 1``."""

    K: int | None = 256
    n: int = 6
    D: int = 64
    mode: str = "haar"
    start_level: int | None = None
    threads: int | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.K is not None and self.K < 1:
            raise ValueError("K must be >= 1")
        if self.n < 4:
            raise ValueError("n must be >= 4")
        if self.start_level is not None and not 1 <= self.start_level <= self.n - 1:
            raise ValueError(f"start_level must lie in 1..{self.n - 1}")

    @property
    def level(self) -> int:
        return self.n - 1 if self.start_level is None else self.start_level

    @classmethod
    def from_scene(cls, scene: Scene, **overrides) -> "RenderOptions":
        kw = dict(scene.options)
        kw.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**kw)


def frame_matrix(normal) -> np.ndarray:
    """Local-to-global rotation taking +Y to ``normal``: ``R_y(-phi_N) R_x(theta_N)``."""
    nrm = np.asarray(normal, dtype=np.float64)
    nrm = nrm / np.linalg.norm(nrm)
    theta = np.arccos(np.clip(nrm[1], -1.0, 1.0))
    phi = np.arctan2(nrm[0], nrm[2]) if np.hypot(nrm[0], nrm[2]) > 1e-14 else 0.0
    return rot_y(-phi) @ rot_x(theta)


def weighted_light(env: LatLongMap | HaarPyramid, n: int) -> HaarPyramid:
    """Light pyramid with the lat-long solid-angle measure folded in."""
    if isinstance(env, HaarPyramid):
        env = inverse_transform(env)
    if env.size_exp < n:
        raise ValueError(f"environment is 2^{env.size_exp}, renderer needs at least 2^{n}")
    samples = env.samples
    while samples.shape[-1] > (1 << n):
        samples = 0.25 * (samples[..., ::2, ::2] + samples[..., 1::2, ::2] + samples[..., ::2, 1::2] + samples[..., 1::2, 1::2])
    if samples.shape[0] == 1:
        samples = np.repeat(samples, 3, axis=0)
    theta, _ = cell_centers(n)
    return forward_transform(LatLongMap(samples * (np.sin(theta) * 2.0 * np.pi ** 2)[:, None]))


def rotate_brdf(pyr: HaarPyramid, normal, mode: str = "haar", start_level: int | None = None) -> HaarPyramid:
    """Carry a local-frame BRDF pyramid to the global frame of ``normal``."""
    rot = frame_matrix(normal).T
    if mode == "haar":
        level = pyr.size_exp - 1 if start_level is None else start_level
        return build_rotated_pyramid(pyr, rot, level)
    return forward_transform(rotate_map_spatial(inverse_transform(pyr), rot))


def _truncated(pyr: HaarPyramid, k: int | None) -> np.ndarray:
    if k is None:
        return pyr.to_vector()
    return truncate_top_k(pyr, k).to_dense()


def shade_point(scene: Scene | None, point, normal, w_out, table: BRDFTable, env, vis: LatLongMap,
                K: int | None, rotation_mode: str = "haar", start_level: int | None = None) -> np.ndarray:
    """Outgoing radiance (3 channels) at one surface point.

    ``env`` is the raw environment (map or pyramid) or a
    :class:`WeightedLight`; pass the latter when shading many points.
    ``scene`` and ``point`` are accepted for a uniform call shape; the
    visibility map already encodes the geometry.
    """
    light = env.pyramid if isinstance(env, WeightedLight) else weighted_light(env, table.size_exp)
    local_out = frame_matrix(normal).T @ np.asarray(w_out, dtype=np.float64)
    brdf = rotate_brdf(table.pyramid_for(local_out), normal, rotation_mode, start_level)
    vis_vec = _truncated(forward_transform(vis), K)
    tbl = tripling_table(table.size_exp)
    return tbl.triple(_truncated(light, K), _truncated(brdf, K), vis_vec)


@dataclass(frozen=True)
class WeightedLight:
    """A light pyramid that already carries the solid-angle weighting."""

    pyramid: HaarPyramid

    @classmethod
    def from_env(cls, env, n: int) -> "WeightedLight":
        return cls(weighted_light(env, n))


@dataclass
class RenderResult:
    image: np.ndarray
    mask: np.ndarray
    timings: dict = field(default_factory=dict)


def _thread_count(requested: int | None) -> int:
    cap = os.environ.get("HAARLIGHT_THREADS")
    count = requested or os.cpu_count() or 1
    if cap:
        try:
            count = min(count, max(1, int(cap)))
        except ValueError:
            pass
    return max(1, count)


def render_image(scene: Scene, env, options: RenderOptions | None = None,
                 tables: dict | None = None) -> RenderResult:
    """Shade every pixel whose primary ray hits geometry; others get the background.

    Pixels are independent, so the tile pool only changes scheduling, never
    the values.
    """
    import time

    opts = options or RenderOptions.from_scene(scene)
    n, k = opts.n, opts.K
    timings = {}
    t0 = time.perf_counter()
    cam = scene.camera
    origins, dirs = cam.rays()
    hits = scene.intersect(origins, dirs, t_min=0.0)
    points, normals = scene.shading_normals(origins, dirs, hits)
    hit_idx = np.flatnonzero(hits.mask)
    timings["intersect"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    tables = dict(tables or {})
    for obj in set(hits.obj[hit_idx].tolist()):
        name = scene.objects[obj].material
        if name not in tables:
            tables[name] = generate_brdf_table(scene.materials[name], n, opts.D)
    light_vec = _truncated(weighted_light(env, n), k)
    tbl = tripling_table(n)
    timings["tables"] = time.perf_counter() - t0

    # visibility: per hit point on spheres, per nearest vertex on meshes
    t0 = time.perf_counter()
    vis_cache: dict = {}
    ones = np.zeros((4 ** n, 1))
    ones[0] = 1.0

    def visibility(i: int) -> np.ndarray:
        obj = int(hits.obj[hit_idx[i]])
        if obj < len(scene.spheres):
            key, point = ("p", i), points[i] + EPS_RAY * normals[i]
        else:
            vert = scene.nearest_vertex(obj, int(hits.prim[hit_idx[i]]), hits.bary[hit_idx[i]])
            key = ("v", obj, vert)
            mesh = scene.meshes[obj - len(scene.spheres)]
            point = mesh.vertices[vert] + EPS_RAY * mesh.normals[vert]
        if key not in vis_cache:
            vis = bake_visibility(scene, point, normals[i], n, owner=obj)
            vis_cache[key] = ones if np.all(vis.samples == 1.0) else _truncated(forward_transform(vis), k)
        return vis_cache[key]

    vis_vecs = [visibility(i) for i in range(len(hit_idx))]
    timings["visibility"] = time.perf_counter() - t0

    def shade(i: int) -> np.ndarray:
        obj = int(hits.obj[hit_idx[i]])
        table = tables[scene.objects[obj].material]
        w_out = -dirs[hit_idx[i]]
        local_out = frame_matrix(normals[i]).T @ w_out
        brdf = rotate_brdf(table.pyramid_for(local_out), normals[i], opts.mode, opts.level)
        return tbl.triple(light_vec, _truncated(brdf, k), vis_vecs[i])

    t0 = time.perf_counter()
    radiance = np.zeros((len(hit_idx), 3))
    chunks = [range(s, min(s + 64, len(hit_idx))) for s in range(0, len(hit_idx), 64)]

    def run(chunk):
        for i in chunk:
            radiance[i] = shade(i)

    workers = _thread_count(opts.threads)
    if workers == 1 or len(chunks) <= 1:
        for chunk in chunks:
            run(chunk)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, chunks))
    timings["shade"] = time.perf_counter() - t0

    image = np.tile(scene.background, (cam.height * cam.width, 1))
    image[hit_idx] = radiance
    return RenderResult(image.reshape(cam.height, cam.width, 3), hits.mask.reshape(cam.height, cam.width), timings)


@dataclass(frozen=True)
class ImageComparison:
    mse: float
    psnr: float
    pixels: int


def compare_images(ref: np.ndarray, test: np.ndarray, mask: np.ndarray | None = None) -> ImageComparison:
    """MSE over masked pixels (all channels) and PSNR against the reference peak.

    An empty mask reports MSE 0 (and the PSNR cap) with a warning.
    """
    ref = np.asarray(ref, dtype=np.float64)
    test = np.asarray(test, dtype=np.float64)
    if ref.shape != test.shape:
        raise ValueError(f"image sizes differ: {ref.shape} vs {test.shape}")
    if mask is None:
        mask = np.ones(ref.shape[:2], dtype=bool)
    count = int(np.count_nonzero(mask))
    if count == 0:
        warnings.warn("no foreground pixels to compare; reporting MSE 0", RuntimeWarning, stacklevel=2)
        return ImageComparison(0.0, PSNR_CAP, 0)
    mse = float(np.mean((ref[mask] - test[mask]) ** 2))
    peak = float(np.max(ref))
    if mse == 0.0:
        return ImageComparison(0.0, PSNR_CAP, count)
    psnr = 20.0 * np.log10(peak / np.sqrt(mse)) if peak > 0 else float("-inf")
    return ImageComparison(mse, float(min(PSNR_CAP, psnr)), count)


def foreground_mask(image: np.ndarray, background) -> np.ndarray:
    bg = np.broadcast_to(np.asarray(background, dtype=np.float64), (image.shape[-1],))
    return np.any(np.abs(image - bg) > 0.0, axis=-1)
