"""Relighting with 2D Haar environment maps and transform-domain rotation."""

from .haar2d import (
    BasisIndex,
    HaarFormatError,
    HaarPyramid,
    LatLongMap,
    SparseCoeffs,
    forward_transform,
    inverse_transform,
    truncate_top_k,
)
from .haarrot import AzimuthAlignmentError, azimuth_shift_fast, build_rotated_pyramid
from .spheremap import RotationSpec
from .tripling import TriplingTable, triple_product_sum, tripling_coefficient

__version__ = "0.1.0"

__all__ = [
    "AzimuthAlignmentError",
    "BasisIndex",
    "HaarFormatError",
    "HaarPyramid",
    "LatLongMap",
    "RotationSpec",
    "SparseCoeffs",
    "TriplingTable",
    "azimuth_shift_fast",
    "build_rotated_pyramid",
    "forward_transform",
    "inverse_transform",
    "triple_product_sum",
    "tripling_coefficient",
    "truncate_top_k",
]
