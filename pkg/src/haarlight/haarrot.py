"""Rotation of Haar pyramids in the transform domain.

Horizontal, vertical and diagonal Haar details are finite differences of the
map along phi, theta and both. A rotation is carried out on those
differences with the chain rule, and the rotated differences are folded back
into detail coefficients with triangular (along the difference axis) and box
(across it) kernels.

Working level ``j`` means the resolution ``M = 2^(j+1)`` approximation of the
map, i.e. everything the details of levels ``0..j`` describe. Its derivative
fields are staggered dense differences (angle units):

    g_theta[r, c]    = (A[r+1, c] - A[r, c]) / dtheta   at (theta=(r+1) dtheta, phi=(c+1/2) dphi)
    g_phi[r, c]      = (A[r, c+1] - A[r, c]) / dphi     at (theta=(r+1/2) dtheta, phi=(c+1) dphi)
    g_thetaphi[r, c] = (g_phi[r+1, c] - g_phi[r, c]) / dtheta

with ``dtheta = pi / M``, ``dphi = 2 pi / M`` and phi periodic. Every detail at
levels ``0..j`` is an exact linear functional of these fields.

Convention for the scaling coefficient: rotation is not the identity on the
unit-square mean, so the rotated pyramid's mean is estimated by spatially
resampling the ``2^j`` approximation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .haar2d import HaarFormatError, HaarPyramid, LatLongMap, synthesize_approximation
from .spheremap import (
    RotationSpec,
    canonical_decompose,
    grid_map_terms,
    pad_poles,
    rot_x,
    rot_y,
    rotate_map_spatial,
    sample_bilinear,
)


class AzimuthAlignmentError(ValueError):
    """Shift is not a whole number of cells at some populated level."""


@dataclass
class DerivativeFields:
    """Staggered derivative grids of a working level (see module docstring)."""

    level: int
    g_theta: np.ndarray
    g_phi: np.ndarray
    g_thetaphi: np.ndarray

    def __post_init__(self):
        m = 1 << (self.level + 1)
        c = self.g_phi.shape[0]
        if self.g_phi.shape != (c, m, m):
            raise ValueError(f"g_phi shape {self.g_phi.shape} does not match level {self.level}")
        for name in ("g_theta", "g_thetaphi"):
            if getattr(self, name).shape != (c, m - 1, m):
                raise ValueError(f"{name} shape {getattr(self, name).shape} does not match level {self.level}")

    @property
    def resolution(self) -> int:
        return 1 << (self.level + 1)

    @property
    def steps(self) -> tuple[float, float]:
        m = self.resolution
        return np.pi / m, 2.0 * np.pi / m


def coeffs_to_derivatives(pyr: HaarPyramid, level: int) -> DerivativeFields:
    """Derivative fields of the working level built from details ``0..level``."""
    if not 0 <= level <= pyr.size_exp - 1:
        raise HaarFormatError(f"level {level} outside 0..{pyr.size_exp - 1}")
    approx = synthesize_approximation(pyr, level + 1, include_scaling=False)
    m = approx.shape[-1]
    dtheta, dphi = np.pi / m, 2.0 * np.pi / m
    g_theta = np.diff(approx, axis=-2) / dtheta
    g_phi = (np.roll(approx, -1, axis=-1) - approx) / dphi
    g_thetaphi = np.diff(g_phi, axis=-2) / dtheta
    return DerivativeFields(level, g_theta, g_phi, g_thetaphi)


# ---------------------------------------------------------------------------
# synthesis kernels
# ---------------------------------------------------------------------------


def tent_kernel(span: int) -> np.ndarray:
    """Weights ``min(k+1, span-1-k)`` of the ``span-1`` differences inside a square."""
    k = np.arange(span - 1)
    return np.minimum(k + 1, span - 1 - k).astype(np.float64)


def box_kernel(span: int) -> np.ndarray:
    return np.ones(span)


def upsampled_tent(step: int) -> np.ndarray:
    """The 3-tap ``[1, 2, 1]`` with ``step - 1`` zeros between taps."""
    out = np.zeros(2 * step + 1)
    out[[0, step, 2 * step]] = (1.0, 2.0, 1.0)
    return out


@dataclass(frozen=True)
class SynthesisKernels:
    """Kernels taking working-level fields to one coarser level ``span`` cells wide."""

    span: int

    @property
    def h_t(self) -> np.ndarray:
        return tent_kernel(self.span)

    @property
    def h_s(self) -> np.ndarray:
        return box_kernel(self.span)

    def factored(self) -> np.ndarray:
        """``h_t`` rebuilt from 3-tap factors: ``t(2S) = t(S) * up_{S/2}[1, 2, 1]``."""
        kern = np.ones(1)
        span = 2
        while span < self.span:
            kern = np.convolve(kern, upsampled_tent(span // 2))
            span *= 2
        return kern


def _scale(fields: DerivativeFields, span: int) -> np.ndarray:
    dtheta, dphi = fields.steps
    denom = fields.resolution * span
    return np.array([-dphi / denom, -dtheta / denom, dtheta * dphi / denom])


def _pad_row(x: np.ndarray) -> np.ndarray:
    return np.concatenate([x, np.zeros(x.shape[:-2] + (1, x.shape[-1]))], axis=-2)


def synthesize_coarser_direct(fields: DerivativeFields, target_level: int) -> np.ndarray:
    """Details ``(3, C, 2^t, 2^t)`` at ``target_level`` by explicit kernels."""
    j = fields.level
    if not 0 <= target_level <= j:
        raise ValueError(f"target level {target_level} outside 0..{j}")
    m = fields.resolution
    span = m >> target_level
    q = m // span
    c = fields.g_phi.shape[0]
    w = np.append(tent_kernel(span), 0.0)
    gt = _pad_row(fields.g_theta).reshape(c, q, span, q, span)
    gp = fields.g_phi.reshape(c, q, span, q, span)
    gtp = _pad_row(fields.g_thetaphi).reshape(c, q, span, q, span)
    s_h, s_v, s_d = _scale(fields, span)
    h = s_h * np.einsum("crsqk,k->crq", gp, w)
    v = s_v * np.einsum("crkqs,k->crq", gt, w)
    d = s_d * np.einsum("crkql,k,l->crq", gtp, w, w)
    return np.stack([h, v, d])


def _tent_levels(x: np.ndarray, top: int) -> list[np.ndarray]:
    """Tent sums over the last axis for spans ``2^(l+1)``, ``l = 0..top``.

    Entry ``l`` holds the sum starting at every multiple of the span. Each
    step applies one 3-tap upsampled tent to the previous step's output.
    """
    out = []
    t = x
    for l in range(top + 1):
        if l:
            tp = np.concatenate([t, np.zeros(t.shape[:-1] + (2,))], axis=-1)
            t = tp[..., 0:-2:2] + 2.0 * tp[..., 1:-1:2] + tp[..., 2::2]
        out.append(t[..., ::2])
    return out


def _box(x: np.ndarray, times: int) -> np.ndarray:
    for _ in range(times):
        x = x[..., ::2] + x[..., 1::2]
    return x


def synthesize_levels(fields: DerivativeFields, recursive: bool = True) -> list[np.ndarray]:
    """Details for every level ``0..j`` of the working level's fields."""
    j = fields.level
    if not recursive:
        return [synthesize_coarser_direct(fields, t) for t in range(j + 1)]
    out: list[np.ndarray] = [None] * (j + 1)  # type: ignore[list-item]
    tents_v = _tent_levels(_pad_row(fields.g_theta).swapaxes(-1, -2), j)
    tents_h = _tent_levels(fields.g_phi, j)
    tents_d = _tent_levels(_pad_row(fields.g_thetaphi).swapaxes(-1, -2), j)
    for l in range(j + 1):
        span = 2 << l
        s_h, s_v, s_d = _scale(fields, span)
        v = _box(tents_v[l].swapaxes(-1, -2), l + 1)
        h = _box(tents_h[l].swapaxes(-1, -2), l + 1).swapaxes(-1, -2)
        d = _tent_levels(tents_d[l].swapaxes(-1, -2), l)[l]
        out[j - l] = np.stack([s_h * h, s_v * v, s_d * d])
    return out


def derivatives_to_coeffs(fields: DerivativeFields, recursive: bool = True) -> list[np.ndarray]:
    """Inverse of :func:`coeffs_to_derivatives` on the details ``0..j``."""
    return synthesize_levels(fields, recursive)


# ---------------------------------------------------------------------------
# chain-rule rotation of the fields
# ---------------------------------------------------------------------------


def _fill_degenerate(grid: np.ndarray, flags: np.ndarray) -> np.ndarray:
    if not flags.any() or flags.all():
        return grid
    idx = ndimage.distance_transform_edt(flags, return_distances=False, return_indices=True)
    return grid[..., idx[0], idx[1]]


def rotate_derivatives(fields: DerivativeFields, rot: RotationSpec | np.ndarray) -> DerivativeFields:
    """Fields of ``g(theta, phi) = f(Theta, Phi)`` from the fields of ``f``.

    ``f``'s theta- and phi-differences are resampled bilinearly at the
    rotated points and combined with the rotation Jacobian; the mixed field
    is the theta-difference of the rotated phi field.
    """
    m = fields.resolution
    half = m // 2
    dtheta, dphi = fields.steps
    ft = fields.g_theta
    # ghost rows at the poles themselves; theta-differences flip sign across a pole
    top = 0.5 * (ft[..., :1, :] - np.roll(ft[..., :1, :], half, axis=-1))
    bottom = 0.5 * (ft[..., -1:, :] - np.roll(ft[..., -1:, :], half, axis=-1))
    ft_grid = np.concatenate([top, ft, bottom], axis=-2)
    fp_grid = pad_poles(fields.g_phi, 1.0)

    def chain(theta, phi):
        jac = grid_map_terms(rot, theta, phi)
        f_t = sample_bilinear(ft_grid, jac.Theta / dtheta, jac.Phi / dphi - 0.5)
        f_p = sample_bilinear(fp_grid, jac.Theta / dtheta + 0.5, jac.Phi / dphi - 1.0)
        return f_t, f_p, jac

    idx = np.arange(m, dtype=np.float64)
    f_t, f_p, jac = chain((idx[:-1] + 1.0) * dtheta, (idx + 0.5) * dphi)
    g_theta = _fill_degenerate(f_t * jac.dTheta_dtheta + f_p * jac.dPhi_dtheta, jac.degenerate)
    f_t, f_p, jac = chain((idx + 0.5) * dtheta, (idx + 1.0) * dphi)
    g_phi = _fill_degenerate(f_t * jac.dTheta_dphi + f_p * jac.dPhi_dphi, jac.degenerate)
    g_thetaphi = np.diff(g_phi, axis=-2) / dtheta
    return DerivativeFields(fields.level, g_theta, g_phi, g_thetaphi)


# ---------------------------------------------------------------------------
# azimuth shifts
# ---------------------------------------------------------------------------


def coarsest_populated_level(pyr: HaarPyramid) -> int | None:
    for level, grids in enumerate(pyr.details):
        if np.any(grids != 0.0):
            return level
    return None


def is_azimuth_aligned(pyr: HaarPyramid, columns: int) -> bool:
    """True when shifting by ``columns`` finest columns permutes every populated level."""
    size = 1 << pyr.size_exp
    coarse = coarsest_populated_level(pyr)
    if coarse is None:
        return True
    return int(columns) % (size >> max(coarse, 1)) == 0


def azimuth_shift_fast(pyr: HaarPyramid, columns: int) -> HaarPyramid:
    """Pyramid of the map rolled right by ``columns`` finest columns.

    Each level's grids are rolled by whole cells. A half-turn moves the
    single level-0 square onto itself, negating its horizontal and diagonal
    terms.
    """
    columns = int(columns)
    if columns != round(columns):
        raise AzimuthAlignmentError("shift must be an integer number of columns")
    if not is_azimuth_aligned(pyr, columns):
        raise AzimuthAlignmentError(
            f"shift of {columns} columns is not cell-aligned at every populated level; "
            "use build_rotated_pyramid for general azimuth rotations"
        )
    size = 1 << pyr.size_exp
    s = columns % size
    out = pyr.copy()
    for level, grids in enumerate(out.details):
        stride = size >> level
        if s % stride == 0:
            out.details[level] = np.roll(grids, s // stride, axis=-1)
        elif level == 0 and s == size // 2:
            grids[0] *= -1.0
            grids[2] *= -1.0
    return out


# ---------------------------------------------------------------------------
# full rotation
# ---------------------------------------------------------------------------


def _aligned_columns(pyr: HaarPyramid, angle: float) -> int | None:
    size = 1 << pyr.size_exp
    cols = angle / (2.0 * np.pi / size)
    whole = round(cols)
    if abs(cols - whole) > 1e-9:
        return None
    return whole if is_azimuth_aligned(pyr, whole) else None


def _chain_rule_rotate(pyr, mat, start_level, recursive, fill_finer):
    n = pyr.size_exp
    out = HaarPyramid.zeros(n, pyr.channels)
    if fill_finer:
        for level in range(n - 1, start_level, -1):
            rotated = rotate_derivatives(coeffs_to_derivatives(pyr, level), mat)
            out.details[level] = synthesize_coarser_direct(rotated, level)
    rotated = rotate_derivatives(coeffs_to_derivatives(pyr, start_level), mat)
    for level, grids in enumerate(synthesize_levels(rotated, recursive)):
        out.details[level] = grids
    coarse = LatLongMap(synthesize_approximation(pyr, start_level))
    out.scaling = rotate_map_spatial(coarse, mat).samples.mean(axis=(1, 2))
    return out


def build_rotated_pyramid(
    pyr: HaarPyramid,
    rot: RotationSpec | np.ndarray,
    start_level: int,
    recursive: bool = True,
    fill_finer: bool = True,
) -> HaarPyramid:
    """Pyramid of the rotated map computed from the input's coefficients.

    The rotation is split as ``R_y(pre) R_x(elev) R_y(post)``; azimuth parts
    that are cell-aligned go through :func:`azimuth_shift_fast`, the rest is
    handled by the chain rule at ``start_level`` with coarser levels
    synthesized recursively. Finer levels are rotated at their own
    resolution unless ``fill_finer`` is False, in which case they are
    dropped (zero) and the cost falls by 4x per dropped level.
    """
    n = pyr.size_exp
    if not 1 <= start_level <= n - 1:
        raise ValueError(f"start_level {start_level} outside 1..{n - 1}")
    mat = rot.matrix if isinstance(rot, RotationSpec) else np.asarray(rot, dtype=np.float64)
    pre, elev, post = canonical_decompose(mat)

    work = pyr
    residual_pre, residual_post = np.eye(3), np.eye(3)
    pre_cols = _aligned_columns(work, pre)
    if pre_cols is not None:
        work = azimuth_shift_fast(work, pre_cols)
    else:
        residual_pre = rot_y(pre)
    post_cols = _aligned_columns(work, post)
    if post_cols is None:
        residual_post = rot_y(post)
    residual = residual_pre @ rot_x(elev) @ residual_post

    if np.max(np.abs(residual - np.eye(3))) <= 1e-15:
        out = work.copy()
        if not fill_finer:
            for level in range(start_level + 1, n):
                out.details[level] = np.zeros_like(out.details[level])
    else:
        out = _chain_rule_rotate(work, residual, start_level, recursive, fill_finer)
    if post_cols is not None and post_cols % (1 << n):
        if is_azimuth_aligned(out, post_cols):
            out = azimuth_shift_fast(out, post_cols)
        else:
            out = _chain_rule_rotate(out, rot_y(post), start_level, recursive, fill_finer)
    return out


def rotate_pyramid_spatial(pyr: HaarPyramid, rot: RotationSpec | np.ndarray) -> HaarPyramid:
    """Oracle route: synthesize, rotate the samples, transform back."""
    from .haar2d import forward_transform, inverse_transform

    return forward_transform(rotate_map_spatial(inverse_transform(pyr), rot))


def pyramid_psnr(ref: HaarPyramid, test: HaarPyramid, cap: float = 300.0) -> float:
    """PSNR of the synthesized maps, peak taken from the reference map."""
    from .haar2d import inverse_transform

    a = inverse_transform(ref).samples
    b = inverse_transform(test).samples
    mse = float(np.mean((a - b) ** 2))
    peak = float(np.max(a))
    if mse == 0.0:
        return cap
    if peak <= 0.0:
        return float("-inf")
    return min(cap, 20.0 * np.log10(peak / np.sqrt(mse)))
