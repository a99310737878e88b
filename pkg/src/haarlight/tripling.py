"""Tripling coefficients and the Haar-domain triple product.

``C_ijk`` is the unit-square integral of three basis functions. It is
nonzero only when

* all three are the scaling function (value 1),
* all three sit on the same wavelet square with distinct types (``2^l``),
* two are the same wavelet and the third is the scaling function (1) or a
  wavelet on a strictly coarser square containing them (``+-2^l'`` with the
  sign of that coarser wavelet on the pair's square).

:func:`triple_product_sum` walks only those cases. :class:`TriplingTable`
precomputes the same structure as index arrays so dense coefficient vectors
can be contracted with numpy.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import permutations

import numpy as np

from .haar2d import (
    DIAGONAL,
    HORIZONTAL,
    VERTICAL,
    BasisIndex,
    LatLongMap,
    SparseCoeffs,
)

ALL_SCALING = "all_scaling"
SAME_SQUARE_DISTINCT = "same_square_distinct"
PAIR_PLUS_COARSER = "pair_plus_coarser"
ZERO = "zero"


@dataclass(frozen=True)
class TriplingCase:
    tag: str
    value: float


def _ancestor_value(fine: BasisIndex, coarse: BasisIndex) -> float:
    """Value of the coarser wavelet on the support square of ``fine`` (0 if disjoint)."""
    shift = fine.level - coarse.level
    if (fine.row >> shift, fine.col >> shift) != (coarse.row, coarse.col):
        return 0.0
    bottom = (fine.row >> (shift - 1)) & 1
    right = (fine.col >> (shift - 1)) & 1
    sign = {
        HORIZONTAL: -1 if right else 1,
        VERTICAL: -1 if bottom else 1,
        DIAGONAL: -1 if bottom != right else 1,
    }[coarse.kind]
    return float(sign * (1 << coarse.level))


def tripling_coefficient(i: BasisIndex, j: BasisIndex, k: BasisIndex) -> TriplingCase:
    """Exact ``C_ijk`` with the theorem case that produced it."""
    if not (i.size_exp == j.size_exp == k.size_exp):
        raise ValueError("basis indices belong to pyramids of different size_exp")
    for b in (i, j, k):
        b.validate()
    trio = (i, j, k)
    wavelets = [b for b in trio if not b.is_scaling]
    if not wavelets:
        return TriplingCase(ALL_SCALING, 1.0)
    if len(wavelets) == 3:
        squares = {(b.level, b.row, b.col) for b in trio}
        if len(squares) == 1 and {b.kind for b in trio} == {0, 1, 2}:
            return TriplingCase(SAME_SQUARE_DISTINCT, float(1 << i.level))
    # two identical wavelets plus a third function
    for a, b, third in ((i, j, k), (i, k, j), (j, k, i)):
        if a == b and not a.is_scaling and a != third:
            if third.is_scaling:
                return TriplingCase(PAIR_PLUS_COARSER, 1.0)
            if third.level < a.level:
                value = _ancestor_value(a, third)
                if value:
                    return TriplingCase(PAIR_PLUS_COARSER, value)
    return TriplingCase(ZERO, 0.0)


def _ancestors(flat: int, n: int):
    """(flat index, value) for every coarser wavelet overlapping wavelet ``flat``."""
    fine = BasisIndex.from_flat(flat, n)
    out = []
    for level in range(fine.level):
        shift = fine.level - level
        for kind in (HORIZONTAL, VERTICAL, DIAGONAL):
            coarse = BasisIndex(n, level, kind, fine.row >> shift, fine.col >> shift)
            out.append((coarse.flat, _ancestor_value(fine, coarse)))
    return out


def triple_product_sum(a: SparseCoeffs, b: SparseCoeffs, c: SparseCoeffs) -> np.ndarray:
    """``sum_ijk C_ijk a_i b_j c_k`` per channel, visiting only nonzero ``C_ijk``."""
    n = a.size_exp
    if not (b.size_exp == c.size_exp == n):
        raise ValueError("coefficient sets belong to pyramids of different size_exp")
    da, db, dc = (dict(s.items()) for s in (a, b, c))
    zero = np.zeros(max(a.channels, b.channels, c.channels))
    total = zero.copy()
    if 0 in da and 0 in db and 0 in dc:
        total += da[0] * db[0] * dc[0]

    # two identical wavelets, third is scaling or an overlapping coarser wavelet
    for x, y, z in ((da, db, dc), (da, dc, db), (db, dc, da)):
        small, large = (x, y) if len(x) <= len(y) else (y, x)
        z0 = z.get(0, zero)
        for w, val in small.items():
            if w == 0 or w not in large:
                continue
            third = z0.copy()
            for u, sign in _ancestors(w, n):
                if u in z:
                    third = third + sign * z[u]
            total += val * large[w] * third

    # same square, three distinct types
    for w, va in da.items():
        if w == 0:
            continue
        idx = BasisIndex.from_flat(w, n)
        others = [k for k in (HORIZONTAL, VERTICAL, DIAGONAL) if k != idx.kind]
        for kb, kc in permutations(others):
            jb = idx._replace(kind=kb).flat
            jc = idx._replace(kind=kc).flat
            if jb in db and jc in dc:
                total += float(1 << idx.level) * va * db[jb] * dc[jc]
    return total


def brute_force_triple_integral(ma: LatLongMap, mb: LatLongMap, mc: LatLongMap) -> np.ndarray:
    """Unit-square mean of the pointwise product of three maps, per channel."""
    if not (ma.size == mb.size == mc.size):
        raise ValueError("maps differ in size")
    return np.mean(ma.samples * mb.samples * mc.samples, axis=(1, 2))


# ---------------------------------------------------------------------------
# vectorized form over dense coefficient vectors
# ---------------------------------------------------------------------------


class TriplingTable:
    """Index arrays describing every nonzero tripling coefficient of a size.

    ``anc_idx[w]`` / ``anc_val[w]`` list the coarser wavelets overlapping
    wavelet ``w + 1`` and their values on its square (zero-padded).
    """

    def __init__(self, n: int):
        self.n = n
        count = 4 ** n
        width = max(3 * (n - 1), 1)
        self.anc_idx = np.zeros((count - 1, width), dtype=np.int64)
        self.anc_val = np.zeros((count - 1, width))
        for level in range(1, n):
            side = 1 << level
            r, c = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")
            r, c = r.ravel(), c.ravel()
            for kind in (HORIZONTAL, VERTICAL, DIAGONAL):
                rows = 4 ** level + kind * side * side + r * side + c - 1
                col = 0
                for coarse in range(level):
                    shift = level - coarse
                    cr, cc = r >> shift, c >> shift
                    bottom = (r >> (shift - 1)) & 1
                    right = (c >> (shift - 1)) & 1
                    csign = {
                        HORIZONTAL: 1 - 2 * right,
                        VERTICAL: 1 - 2 * bottom,
                        DIAGONAL: 1 - 2 * (bottom ^ right),
                    }
                    cside = 1 << coarse
                    for ckind in (HORIZONTAL, VERTICAL, DIAGONAL):
                        self.anc_idx[rows, col] = 4 ** coarse + ckind * cside * cside + cr * cside + cc
                        self.anc_val[rows, col] = csign[ckind] * float(1 << coarse)
                        col += 1
        # per square: flat indices of its (h, v, d) and its weight 2^l
        sq_h, sq_v, sq_d, sq_w = [], [], [], []
        for level in range(n):
            side = 1 << level
            base = 4 ** level + np.arange(side * side)
            sq_h.append(base)
            sq_v.append(base + side * side)
            sq_d.append(base + 2 * side * side)
            sq_w.append(np.full(side * side, float(1 << level)))
        self.sq_h = np.concatenate(sq_h)
        self.sq_v = np.concatenate(sq_v)
        self.sq_d = np.concatenate(sq_d)
        self.sq_w = np.concatenate(sq_w)

    def _parent_sum(self, x: np.ndarray) -> np.ndarray:
        # sum over coarser overlapping wavelets, weighted by their value, per fine wavelet
        return np.einsum("wm,wm...->w...", self.anc_val, x[self.anc_idx])

    def _check(self, *vecs):
        for v in vecs:
            if v.shape[0] != 4 ** self.n:
                raise ValueError(f"expected {4 ** self.n} coefficients, got {v.shape[0]}")

    def triple(self, a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
        """Triple product of dense vectors shaped ``(4^n,)`` or ``(4^n, C)``."""
        self._check(a, b, c)
        aw, bw, cw = a[1:], b[1:], c[1:]
        total = a[0] * b[0] * c[0]
        total = total + np.sum(aw * bw * (c[0] + self._parent_sum(c)), axis=0)
        total = total + np.sum(aw * cw * (b[0] + self._parent_sum(b)), axis=0)
        total = total + np.sum(bw * cw * (a[0] + self._parent_sum(a)), axis=0)
        h, v, d = self.sq_h, self.sq_v, self.sq_d
        w = self.sq_w.reshape((-1,) + (1,) * (a.ndim - 1))
        perm = (
            a[h] * (b[v] * c[d] + b[d] * c[v])
            + a[v] * (b[h] * c[d] + b[d] * c[h])
            + a[d] * (b[h] * c[v] + b[v] * c[h])
        )
        return total + np.sum(w * perm, axis=0)

    def product_projection(self, a: np.ndarray, c: np.ndarray) -> np.ndarray:
        """Vector ``P`` with ``P_j = sum_ik C_ijk a_i c_k``, so triple(a, b, c) = b . P."""
        self._check(a, c)
        aw, cw = a[1:], c[1:]
        out = np.zeros(np.broadcast_shapes(a.shape, c.shape))
        out[0] = a[0] * c[0] + np.sum(aw * cw, axis=0)
        # b is one of the identical pair
        out[1:] += aw * (c[0] + self._parent_sum(c)) + cw * (a[0] + self._parent_sum(a))
        # b is the coarser third of an a/c pair
        pair = aw * cw
        weighted = self.anc_val.reshape(self.anc_val.shape + (1,) * (pair.ndim - 1)) * pair[:, None]
        flat_idx = self.anc_idx.ravel()
        np.add.at(out, flat_idx, weighted.reshape((-1,) + pair.shape[1:]))
        # same square, b takes the remaining type
        h, v, d = self.sq_h, self.sq_v, self.sq_d
        w = self.sq_w.reshape((-1,) + (1,) * (out.ndim - 1))
        out[h] += w * (a[v] * c[d] + a[d] * c[v])
        out[v] += w * (a[h] * c[d] + a[d] * c[h])
        out[d] += w * (a[h] * c[v] + a[v] * c[h])
        return out


@lru_cache(maxsize=8)
def tripling_table(n: int) -> TriplingTable:
    return TriplingTable(n)


def triple_product_dense(a: np.ndarray, b: np.ndarray, c: np.ndarray, n: int) -> np.ndarray:
    return tripling_table(n).triple(a, b, c)


def count_nonzero_triples(n: int) -> int:
    """Number of ordered index triples with nonzero ``C_ijk`` for a ``2^n`` pyramid."""
    wavelets = 4 ** n - 1
    table = tripling_table(n)
    coarser = int(np.count_nonzero(table.anc_val)) if n > 1 else 0
    squares = len(table.sq_w)
    # scaling triple; pair + scaling (3 placements); pair + coarser (3 placements); 6 type permutations
    return 1 + 3 * wavelets + 3 * coarser + 6 * squares
