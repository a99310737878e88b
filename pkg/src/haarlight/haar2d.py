"""2D non-separable Haar transform over square lat-long grids.

Grids are ``2^n x 2^n``. Rows index elevation theta in [0, pi] and columns
index azimuth phi in [0, 2 pi), with cell centers at

    theta_r = pi (r + 0.5) / 2^n,    phi_c = 2 pi (c + 0.5) / 2^n.

Coefficients use the unit-square convention: the domain is treated as the
unit square, inner products are means over it, and a level-``l`` wavelet
takes the values ``+-2^l`` on its support square of side ``2^-l``. The basis
is orthonormal under that inner product.

Sign table (quadrants of the support square, row-major TL, TR, BL, BR):

    horizontal  (+, -, +, -)   positive on the left half
    vertical    (+, +, -, -)   positive on the top half
    diagonal    (+, -, -, +)   positive on the main-diagonal quadrants

Flat basis index: 0 is the scaling function; level ``l`` occupies the range
``[4^l, 4^(l+1))`` laid out as the horizontal grid, then vertical, then
diagonal, each row-major. This is also the order of :meth:`HaarPyramid.to_vector`
and of the ``HAAR1`` binary format.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

HORIZONTAL, VERTICAL, DIAGONAL = 0, 1, 2
KIND_NAMES = ("horizontal", "vertical", "diagonal")
HAAR_MAGIC = b"HAAR1"


class HaarFormatError(ValueError):
    """Raised for malformed maps, pyramids or HAAR1 files."""


def size_exp_of(size: int) -> int:
    """Return ``n`` for a power-of-two ``size = 2^n`` (n >= 1)."""
    if size < 2 or size & (size - 1):
        raise HaarFormatError(f"grid size {size} is not a power of two >= 2")
    return size.bit_length() - 1


def cell_centers(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Elevation and azimuth cell centers of a ``2^n`` grid."""
    size = 1 << n
    idx = np.arange(size) + 0.5
    return np.pi * idx / size, 2.0 * np.pi * idx / size


@dataclass
class LatLongMap:
    """Samples of a spherical function on a ``2^n x 2^n`` lat-long grid.

    ``samples`` is channels-first, shape ``(C, 2^n, 2^n)``.
    """

    samples: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim == 2:
            s = s[None]
        if s.ndim != 3 or s.shape[1] != s.shape[2]:
            raise HaarFormatError(f"expected a square (C, N, N) grid, got shape {s.shape}")
        if s.shape[0] not in (1, 3):
            raise HaarFormatError(f"expected 1 or 3 channels, got {s.shape[0]}")
        size_exp_of(s.shape[1])
        if not np.all(np.isfinite(s)):
            raise HaarFormatError("map contains non-finite samples")
        self.samples = s

    @property
    def size_exp(self) -> int:
        return self.samples.shape[1].bit_length() - 1

    @property
    def size(self) -> int:
        return self.samples.shape[1]

    @property
    def channels(self) -> int:
        return self.samples.shape[0]

    @classmethod
    def from_function(cls, fn, n: int) -> "LatLongMap":
        """Tabulate ``fn(theta, phi)`` at the cell centers of a ``2^n`` grid."""
        theta, phi = cell_centers(n)
        tt, pp = np.meshgrid(theta, phi, indexing="ij")
        return cls(np.asarray(fn(tt, pp), dtype=np.float64))


@dataclass
class HaarPyramid:
    """Scaling coefficient plus per-level detail grids.

    ``details[l]`` has shape ``(3, C, 2^l, 2^l)`` ordered (h, v, d).
    """

    scaling: np.ndarray
    details: list[np.ndarray] = field(default_factory=list)
    normalization: str = "unit-square"

    def __post_init__(self):
        self.scaling = np.atleast_1d(np.asarray(self.scaling, dtype=np.float64))
        channels = self.scaling.shape[0]
        if self.scaling.ndim != 1 or channels not in (1, 3):
            raise HaarFormatError(f"bad scaling shape {self.scaling.shape}")
        if not self.details:
            raise HaarFormatError("pyramid needs at least one detail level")
        fixed = []
        for level, grids in enumerate(self.details):
            grids = np.asarray(grids, dtype=np.float64)
            expect = (3, channels, 1 << level, 1 << level)
            if grids.shape != expect:
                raise HaarFormatError(
                    f"level {level}: expected detail shape {expect}, got {grids.shape}"
                )
            fixed.append(grids)
        self.details = fixed
        if self.normalization != "unit-square":
            raise HaarFormatError(f"unsupported normalization {self.normalization!r}")

    @property
    def size_exp(self) -> int:
        return len(self.details)

    @property
    def channels(self) -> int:
        return self.scaling.shape[0]

    @property
    def num_coefficients(self) -> int:
        return 4 ** self.size_exp

    def copy(self) -> "HaarPyramid":
        return HaarPyramid(self.scaling.copy(), [d.copy() for d in self.details])

    @classmethod
    def zeros(cls, n: int, channels: int = 1) -> "HaarPyramid":
        return cls(
            np.zeros(channels),
            [np.zeros((3, channels, 1 << l, 1 << l)) for l in range(n)],
        )

    def to_vector(self) -> np.ndarray:
        """Coefficients in flat basis-index order, shape ``(4^n, C)``."""
        parts = [self.scaling[None, :]]
        for grids in self.details:
            parts.append(grids.transpose(0, 2, 3, 1).reshape(-1, self.channels))
        return np.concatenate(parts, axis=0)

    @classmethod
    def from_vector(cls, vec: np.ndarray, n: int) -> "HaarPyramid":
        vec = np.asarray(vec, dtype=np.float64)
        if vec.ndim == 1:
            vec = vec[:, None]
        if vec.shape[0] != 4 ** n:
            raise HaarFormatError(f"expected {4 ** n} coefficients, got {vec.shape[0]}")
        channels = vec.shape[1]
        details = []
        for level in range(n):
            side = 1 << level
            block = vec[4 ** level: 4 ** (level + 1)]
            details.append(block.reshape(3, side, side, channels).transpose(0, 3, 1, 2))
        return cls(vec[0].copy(), details)


def forward_transform(m: LatLongMap | np.ndarray) -> HaarPyramid:
    """Decompose a lat-long map into its Haar pyramid."""
    if not isinstance(m, LatLongMap):
        m = LatLongMap(m)
    approx = m.samples
    n = m.size_exp
    details: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    for level in range(n - 1, -1, -1):
        c, size = approx.shape[0], approx.shape[1] // 2
        q = approx.reshape(c, size, 2, size, 2)
        tl, tr = q[:, :, 0, :, 0], q[:, :, 0, :, 1]
        bl, br = q[:, :, 1, :, 0], q[:, :, 1, :, 1]
        scale = 1.0 / (1 << (level + 2))
        details[level] = np.stack(
            [(tl - tr + bl - br) * scale, (tl + tr - bl - br) * scale, (tl - tr - bl + br) * scale]
        )
        approx = 0.25 * (tl + tr + bl + br)
    return HaarPyramid(approx[:, 0, 0], details)


def synthesize_approximation(pyr: HaarPyramid, level: int, include_scaling: bool = True) -> np.ndarray:
    """Approximation of the map at resolution ``2^level``, shape ``(C, 2^level, 2^level)``.

    Uses the scaling coefficient and the details of levels ``0 .. level-1``.
    """
    if not 0 <= level <= pyr.size_exp:
        raise HaarFormatError(f"level {level} outside 0..{pyr.size_exp}")
    c = pyr.channels
    approx = (pyr.scaling if include_scaling else np.zeros(c)).reshape(c, 1, 1).copy()
    for l in range(level):
        h, v, d = pyr.details[l]
        w = float(1 << l)
        side = 1 << l
        out = np.empty((c, side, 2, side, 2))
        out[:, :, 0, :, 0] = approx + w * (h + v + d)
        out[:, :, 0, :, 1] = approx + w * (-h + v - d)
        out[:, :, 1, :, 0] = approx + w * (h - v - d)
        out[:, :, 1, :, 1] = approx + w * (-h - v + d)
        approx = out.reshape(c, 2 * side, 2 * side)
    return approx


def inverse_transform(pyr: HaarPyramid) -> LatLongMap:
    """Exact synthesis of the map from its pyramid."""
    return LatLongMap(synthesize_approximation(pyr, pyr.size_exp))


# ---------------------------------------------------------------------------
# basis indices and sparse coefficient sets
# ---------------------------------------------------------------------------


class BasisIndex(NamedTuple):
    """A basis function of a ``2^size_exp`` pyramid.

    ``kind`` is ``None`` for the scaling function, else one of
    HORIZONTAL / VERTICAL / DIAGONAL at ``(level, row, col)``.
    """

    size_exp: int
    level: int = 0
    kind: int | None = None
    row: int = 0
    col: int = 0

    @property
    def is_scaling(self) -> bool:
        return self.kind is None

    @property
    def flat(self) -> int:
        if self.kind is None:
            return 0
        side = 1 << self.level
        return 4 ** self.level + self.kind * side * side + self.row * side + self.col

    @classmethod
    def scaling(cls, size_exp: int) -> "BasisIndex":
        return cls(size_exp)

    @classmethod
    def from_flat(cls, flat: int, size_exp: int) -> "BasisIndex":
        flat = int(flat)
        if not 0 <= flat < 4 ** size_exp:
            raise HaarFormatError(f"basis index {flat} outside a size_exp={size_exp} pyramid")
        if flat == 0:
            return cls(size_exp)
        level = (flat.bit_length() - 1) // 2
        side = 1 << level
        rest = flat - 4 ** level
        kind, rest = divmod(rest, side * side)
        row, col = divmod(rest, side)
        return cls(size_exp, level, kind, row, col)

    def validate(self) -> None:
        if self.kind is None:
            return
        side = 1 << self.level
        if not (0 <= self.level < self.size_exp and self.kind in (0, 1, 2)
                and 0 <= self.row < side and 0 <= self.col < side):
            raise HaarFormatError(f"invalid basis index {self}")


def basis_function_grid(index: BasisIndex, n: int | None = None) -> np.ndarray:
    """Tabulate one basis function on a ``2^n`` grid (defaults to its own size)."""
    n = index.size_exp if n is None else n
    size = 1 << n
    if index.kind is None:
        return np.ones((size, size))
    index.validate()
    cells = size >> index.level
    half = cells // 2
    quad = np.zeros((cells, cells))
    signs = {
        HORIZONTAL: (1, -1, 1, -1),
        VERTICAL: (1, 1, -1, -1),
        DIAGONAL: (1, -1, -1, 1),
    }[index.kind]
    quad[:half, :half], quad[:half, half:], quad[half:, :half], quad[half:, half:] = signs
    grid = np.zeros((size, size))
    r0, c0 = index.row * cells, index.col * cells
    grid[r0:r0 + cells, c0:c0 + cells] = quad * float(1 << index.level)
    return grid


@dataclass
class SparseCoeffs:
    """Retained coefficients of a pyramid: flat basis indices and per-channel values."""

    size_exp: int
    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64).ravel()
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.shape[0] != self.indices.shape[0]:
            raise HaarFormatError("indices and values differ in length")
        if len(np.unique(self.indices)) != len(self.indices):
            raise HaarFormatError("duplicate basis indices")
        if len(self.indices) and (self.indices.min() < 0 or self.indices.max() >= 4 ** self.size_exp):
            raise HaarFormatError("basis index out of range")
        self.values = vals

    def __len__(self) -> int:
        return len(self.indices)

    @property
    def channels(self) -> int:
        return self.values.shape[1]

    def items(self):
        return zip(self.indices.tolist(), self.values)

    def to_dense(self) -> np.ndarray:
        vec = np.zeros((4 ** self.size_exp, self.channels))
        vec[self.indices] = self.values
        return vec

    def to_pyramid(self) -> HaarPyramid:
        return HaarPyramid.from_vector(self.to_dense(), self.size_exp)

    @classmethod
    def from_pyramid(cls, pyr: HaarPyramid) -> "SparseCoeffs":
        """All nonzero coefficients (the scaling entry is kept regardless)."""
        vec = pyr.to_vector()
        keep = np.any(vec != 0.0, axis=1)
        keep[0] = True
        idx = np.flatnonzero(keep)
        return cls(pyr.size_exp, idx, vec[idx])


def truncate_top_k(pyr: HaarPyramid, k: int) -> SparseCoeffs:
    """Nonlinear approximation: keep the ``k`` largest-magnitude coefficients.

    The scaling coefficient is always kept and counts toward ``k``. Across
    channels the magnitude is the Euclidean norm of the per-channel values,
    so every channel shares one index set. Ties go to the smaller basis index;
    exact zeros among the details are dropped.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    vec = pyr.to_vector()
    mag = np.sqrt(np.sum(vec[1:] ** 2, axis=1))
    order = np.lexsort((np.arange(1, len(vec)), -mag))[: k - 1]
    order = order[mag[order] > 0.0] + 1
    idx = np.concatenate([[0], np.sort(order)])
    return SparseCoeffs(pyr.size_exp, idx, vec[idx])


# ---------------------------------------------------------------------------
# HAAR1 binary format
# ---------------------------------------------------------------------------


def pyramid_to_bytes(pyr: HaarPyramid) -> bytes:
    """Serialize as ``HAAR1``: magic, size_exp u32, channels u32, then f64 LE.

    Coefficients are channel-planar: each channel's full flat-index sequence
    (scaling, then per level h, v, d row-major) is written in turn.
    """
    head = HAAR_MAGIC + struct.pack("<II", pyr.size_exp, pyr.channels)
    body = np.ascontiguousarray(pyr.to_vector().T, dtype="<f8").tobytes()
    return head + body


def pyramid_from_bytes(blob: bytes) -> HaarPyramid:
    if blob[:5] != HAAR_MAGIC:
        raise HaarFormatError("not a HAAR1 file (bad magic)")
    if len(blob) < 13:
        raise HaarFormatError("truncated HAAR1 header")
    n, channels = struct.unpack("<II", blob[5:13])
    if n < 1 or n > 16 or channels not in (1, 3):
        raise HaarFormatError(f"bad HAAR1 header: size_exp={n}, channels={channels}")
    count = 4 ** n * channels
    body = blob[13:]
    if len(body) != 8 * count:
        raise HaarFormatError(f"HAAR1 body holds {len(body)} bytes, expected {8 * count}")
    vec = np.frombuffer(body, dtype="<f8").reshape(channels, 4 ** n).T
    return HaarPyramid.from_vector(vec.astype(np.float64), n)


def write_pyramid(path: str | Path, pyr: HaarPyramid) -> None:
    Path(path).write_bytes(pyramid_to_bytes(pyr))


def read_pyramid(path: str | Path) -> HaarPyramid:
    return pyramid_from_bytes(Path(path).read_bytes())


def parseval_residual(m: LatLongMap, pyr: HaarPyramid) -> float:
    """Relative gap between mean-square samples and sum of squared coefficients."""
    energy = float(np.mean(m.samples ** 2)) * m.channels
    coeffs = float(np.sum(pyr.to_vector() ** 2))
    return abs(energy - coeffs) / max(energy, 1e-300)
