"""Second-order (autocorrelation) pooling of feature blocks.

A feature block is a K x N float array whose columns are feature
vectors. Pooling forms M = (1/N) sum_n phi_n phi_n^T, optionally after
beta-centering (subtracting beta times the column mean) and optionally
augmented with RBF-encoded spatial coordinates so that location enters
the second-order statistics.

The coordinate encoder maps a scalar location x in [0,1] to Z Gaussian
responses exp(-(x - pivot_i)^2 / sigma^2) over pivots equally spaced on
[-0.2, 1.2]. The overshoot past [0,1] keeps boundary locations covered.
Inner products of these responses approximate a Gaussian kernel in the
location difference once multiplied by the quadrature constant
(sqrt(2/(pi sigma^2)) times the pivot spacing); descriptors use the raw
responses (constant 1), since a fixed scale is absorbed by the weight
alpha.
"""

from __future__ import annotations

import math
import warnings
from typing import NamedTuple, Optional

import numpy as np

from . import elempn
from .matcore import sym

__all__ = [
    "CoordEncoderConfig",
    "PoolSpec",
    "coord_encoder",
    "default_pivots",
    "linearization_constant",
    "encode_coordinate",
    "beta_center",
    "coordinate_grid",
    "autocorrelation",
    "relation_descriptor",
]


class CoordEncoderConfig(NamedTuple):
    pivot_count: int
    bandwidth: float
    weight: float
    pivots: np.ndarray


class PoolSpec(NamedTuple):
    """Pooling options: centering strength and optional coordinate encoder."""

    beta: float = 0.0
    coord: Optional[CoordEncoderConfig] = None


def default_pivots(pivot_count):
    """Equally spaced pivots on [-0.2, 1.2]."""
    return np.linspace(-0.2, 1.2, pivot_count)


def coord_encoder(pivot_count, bandwidth, weight=1.0):
    """Build a coordinate-encoder config with the default pivot layout.

    pivot_count is limited to [2, 64]: one pivot cannot span the range
    and past 64 the quadrature constant stops improving anything.
    """
    z = int(pivot_count)
    if z != pivot_count or not 2 <= z <= 64:
        raise ValueError(f"pivot_count must be an integer in [2, 64], got {pivot_count!r}")
    if not bandwidth > 0:
        raise ValueError(f"bandwidth must be > 0, got {bandwidth}")
    if not weight >= 0:
        raise ValueError(f"weight must be >= 0, got {weight}")
    return CoordEncoderConfig(z, float(bandwidth), float(weight), default_pivots(z))


def linearization_constant(cfg):
    """Quadrature constant making encoded inner products match the kernel.

    c = sqrt(2 / (pi sigma^2)) * h with h the pivot spacing:
    c * <enc(x), enc(y)> approximates exp(-(x-y)^2 / (2 sigma^2)).
    """
    h = float(cfg.pivots[1] - cfg.pivots[0])
    return math.sqrt(2.0 / (math.pi * cfg.bandwidth**2)) * h


def encode_coordinate(x, cfg):
    """Z Gaussian responses of a scalar location against the pivots.

    Values outside [0,1] are accepted with a warning; the pivot range
    deliberately overshoots, so moderate excursions stay well covered.
    """
    x = float(x)
    if x < 0.0 or x > 1.0:
        warnings.warn(f"coordinate {x} outside [0, 1]", stacklevel=2)
    d = x - cfg.pivots
    return np.exp(-(d * d) / (cfg.bandwidth**2))


def _encode_many(xs, cfg):
    # vectorized encode for internal use; same warning semantics
    xs = np.asarray(xs, dtype=float)
    if xs.size and (xs.min() < 0.0 or xs.max() > 1.0):
        warnings.warn("coordinates outside [0, 1]", stacklevel=3)
    d = xs[None, :] - cfg.pivots[:, None]
    return np.exp(-(d * d) / (cfg.bandwidth**2))


def beta_center(block, beta):
    """Subtract beta times the column mean from every column."""
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must lie in [0, 1], got {beta}")
    block = np.asarray(block, dtype=float)
    if beta == 0.0:
        return block.copy()
    mu = block.mean(axis=1, keepdims=True)
    return block - beta * mu


def coordinate_grid(width, height):
    """Normalized (x, y) pairs for a width x height raster, row-major.

    Returns a 2 x (width*height) array; column k holds the location of
    the k-th pixel when scanning rows top to bottom, left to right.
    Coordinates are x'/(width-1), y'/(height-1), pinned to 0 for
    degenerate single-pixel axes.
    """
    if width < 1 or height < 1:
        raise ValueError("width and height must be >= 1")
    xs = np.arange(width) / (width - 1) if width > 1 else np.zeros(width)
    ys = np.arange(height) / (height - 1) if height > 1 else np.zeros(height)
    gx, gy = np.meshgrid(xs, ys)  # row-major: y varies across rows
    return np.vstack([gx.ravel(), gy.ravel()])


def _stack_block(block, spec, coords):
    block = np.asarray(block, dtype=float)
    if block.ndim != 2 or block.shape[0] < 1 or block.shape[1] < 1:
        raise ValueError(f"feature block must be 2-D K x N, got shape {block.shape}")
    centered = beta_center(block, spec.beta)
    if spec.coord is None:
        if coords is not None:
            raise ValueError("coords supplied but spec has no coordinate encoder")
        return centered
    if coords is None:
        raise ValueError("spec has a coordinate encoder but no coords were supplied")
    coords = np.asarray(coords, dtype=float)
    if coords.shape != (2, block.shape[1]):
        raise ValueError(
            f"coords must have shape (2, {block.shape[1]}), got {coords.shape}"
        )
    cfg = spec.coord
    ex = cfg.weight * _encode_many(coords[0], cfg)
    ey = cfg.weight * _encode_many(coords[1], cfg)
    return np.vstack([centered, ex, ey])


def autocorrelation(block, spec=PoolSpec(), coords=None):
    """Mean outer product of the (centered, optionally augmented) columns.

    Output side is K, or K + 2Z when ``spec`` carries a coordinate
    encoder; positive semi-definite by construction. Centering applies
    to the feature channels only; encoded coordinates are appended
    afterwards.
    """
    stacked = _stack_block(block, spec, coords)
    n = stacked.shape[1]
    return sym(stacked @ stacked.T / n)


def relation_descriptor(variant, supports, query, pn):
    """Support/query descriptor pair for few-shot relation learning.

    variant "average_features" pools the element-wise mean of the J
    support blocks and normalizes once; "average_pooled" normalizes each
    support's pooled matrix and averages the results (wins at larger
    resolutions where single-support statistics are already stable).
    The query side is pooled and normalized the same way in both. The
    caller concatenates the pair along the channel mode.
    """
    if variant not in ("average_features", "average_pooled"):
        raise ValueError(
            f"variant must be 'average_features' or 'average_pooled', got {variant!r}"
        )
    if len(supports) < 1:
        raise ValueError("need at least one support block")
    supports = [np.asarray(s, dtype=float) for s in supports]
    query = np.asarray(query, dtype=float)
    k = supports[0].shape[0]
    for s in supports:
        if s.ndim != 2 or s.shape[0] != k:
            raise ValueError("all support blocks must share the channel count K")
    if query.ndim != 2 or query.shape[0] != k:
        raise ValueError("query block must share the channel count K")

    def pooled(block):
        return sym(block @ block.T / block.shape[1])

    if variant == "average_features":
        shape = supports[0].shape
        for s in supports:
            if s.shape != shape:
                raise ValueError("average_features requires equally shaped supports")
        mean_block = np.mean(supports, axis=0)
        support_desc = elempn.pn_forward(pooled(mean_block), pn)
    else:
        support_desc = np.mean(
            [elempn.pn_forward(pooled(s), pn) for s in supports], axis=0
        )
    query_desc = elempn.pn_forward(pooled(query), pn)
    return support_desc, query_desc
