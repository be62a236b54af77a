"""Spectral power normalization.

Applies a scalar operator profile to the eigenvalues of a symmetric
matrix and reconstructs: Psi = U diag(g(p(lambda))) U^T, with p the
optional trace normalization (maxexp/sigme only, same rule as the
element-wise path).

Near-degenerate spectra make the eigenvector derivative blow up, so the
forward pass can enforce a minimum adjacent-eigenvalue gap: when two
eigenvalues sit closer than the configured gap, a seeded random diagonal
perturbation (scaled up with each attempt) is added and the matrix is
re-decomposed, up to a retry cap. The decomposition actually used is
returned so the backward pass differentiates the function that was
really evaluated.
"""

from __future__ import annotations

import warnings
from typing import NamedTuple, Optional

import numpy as np

from .elempn import PNConfig, _profile_slope, _profile_value, validate_pn_config
from .matcore import (
    ConvergenceError,
    PoolDomainError,
    SpectralDecomp,
    as_sym_matrix,
    rng_stream,
    sym,
    sym_eig,
)

__all__ = [
    "DEFAULT_GAP",
    "SpectralGapConfig",
    "spn_forward",
    "spn_backward",
]

DEFAULT_GAP = 1e-5

# operators whose scalar profile needs a nonnegative spectrum
_PSD_ONLY_OPS = ("gamma", "maxexp", "hdp")


class SpectralGapConfig(NamedTuple):
    """Minimum-gap enforcement for the eigendecomposition.

    gap is the required separation between adjacent eigenvalues; rng
    seeds the diagonal perturbation draws (None means a fixed seed-0
    stream, keeping repeated calls deterministic).
    """

    gap: float = DEFAULT_GAP
    max_retries: int = 10
    rng: Optional[np.random.Generator] = None


def _min_adjacent_gap(values):
    if len(values) < 2:
        return np.inf
    return float(np.min(np.abs(np.diff(values))))


def _decompose_with_gap(m, gap_cfg):
    decomp = sym_eig(m)
    if gap_cfg is None or _min_adjacent_gap(decomp.values) >= gap_cfg.gap:
        return decomp
    if not gap_cfg.gap > 0 or gap_cfg.max_retries < 1:
        raise ValueError(f"invalid gap config {gap_cfg!r}")
    d = m.shape[0]
    rng = gap_cfg.rng if gap_cfg.rng is not None else rng_stream(0)
    eps = gap_cfg.gap
    for attempt in range(1, gap_cfg.max_retries + 1):
        # fresh per-entry draws each attempt, scaled by the attempt index
        xi = rng.uniform(eps, eps + d * eps, size=d)
        candidate = m + np.diag(attempt * xi)
        decomp = sym_eig(candidate)
        if _min_adjacent_gap(decomp.values) >= eps:
            return decomp
    raise ConvergenceError(
        f"could not separate the spectrum by {eps:.3e} after "
        f"{gap_cfg.max_retries} diagonal perturbation attempts (d={d})"
    )


def _clamp_values(values, cfg, tol):
    """Clamp eigenvalues in [-tol, 0) to zero for PSD-domain profiles."""
    if cfg.op not in _PSD_ONLY_OPS or (cfg.op == "gamma" and cfg.gamma_abs):
        return values
    low = float(values.min())
    if low < -tol:
        raise PoolDomainError(
            f"invalid power normalization: {cfg.op} requires a PSD spectrum; "
            f"min eigenvalue {low:.3e} below -{tol:.3e}"
        )
    if low < 0.0:
        warnings.warn(
            f"clamped negative eigenvalues (min {low:.3e}) to 0 for {cfg.op}",
            stacklevel=3,
        )
        return np.maximum(values, 0.0)
    return values


def _reject_residual(cfg):
    if cfg.residual_gamma is not None or cfg.residual_kappa is not None:
        raise PoolDomainError(
            "residual variants are defined for the element-wise path only"
        )


def _spectral_scale(values, cfg):
    if cfg.trace_normalize and cfg.op in ("maxexp", "sigme"):
        return float(values.sum()) + cfg.eps
    return 1.0


def spn_forward(m, cfg, gap=None):
    """Spectral operator application; returns (Psi, decomposition used).

    gap is an optional SpectralGapConfig enabling the retry loop above;
    None decomposes once and accepts whatever spectrum results. Hand the
    returned decomposition to spn_backward.
    """
    validate_pn_config(cfg)
    _reject_residual(cfg)
    m = as_sym_matrix(m)
    decomp = _decompose_with_gap(m, gap)
    tol = gap.gap if gap is not None else DEFAULT_GAP
    lam = _clamp_values(decomp.values, cfg, tol)
    s = _spectral_scale(decomp.values, cfg)
    g = _profile_value(cfg.op, cfg.param, lam / s, cfg.eps)
    u = decomp.vectors
    psi = sym((u * g) @ u.T)
    return psi, decomp


def spn_backward(m, upstream, cfg, decomp, gap=None):
    """Gradient of a loss through spn_forward.

    Works in the eigenbasis of the decomposition the forward pass used:
    the eigenvalue chain term contributes g'(p_i) on the diagonal, the
    eigenvector term fills the off-diagonal with divided differences
    (g_i - g_j)/(lambda_i - lambda_j), pseudo-inverted to 0 when the
    eigenvalue gap falls below half the configured gap. Trace
    normalization adds its coupling through the normalizer. The output
    is symmetric.

    When a SpectralGapConfig is passed, an adjacent gap below its target
    raises ConvergenceError: that decomposition should have been
    regularized before reaching the backward pass.
    """
    validate_pn_config(cfg)
    _reject_residual(cfg)
    m = np.asarray(m, dtype=float)
    upstream = np.asarray(upstream, dtype=float)
    u, lam_raw = decomp.vectors, decomp.values
    if upstream.shape != (len(lam_raw), len(lam_raw)) or m.shape != upstream.shape:
        raise ValueError("matrix, upstream and decomposition dimensions disagree")

    if isinstance(gap, SpectralGapConfig):
        if _min_adjacent_gap(lam_raw) < gap.gap:
            raise ConvergenceError(
                "decomposition has adjacent eigenvalues closer than the configured "
                "gap; regularize in the forward pass first"
            )
        eps_gap = gap.gap
    else:
        eps_gap = float(gap) if gap is not None else DEFAULT_GAP
    cutoff = 0.5 * eps_gap

    tol = eps_gap
    lam = _clamp_values(lam_raw, cfg, tol)
    s = _spectral_scale(lam_raw, cfg)
    p = lam / s
    g = _profile_value(cfg.op, cfg.param, p, cfg.eps)
    with np.errstate(divide="ignore"):
        dg = _profile_slope(cfg.op, cfg.param, p, cfg.eps)
    # clamped eigenvalues are locally constant at 0: no eigenvalue sensitivity
    dg = np.where(lam_raw < 0.0, 0.0, dg)

    a = u.T @ sym(upstream) @ u
    diff = lam_raw[:, None] - lam_raw[None, :]
    gdiff = g[:, None] - g[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        loewner = np.where(np.abs(diff) > cutoff, gdiff / diff, 0.0)
    np.fill_diagonal(loewner, dg / s)

    grad = (u @ (a * loewner) @ u.T)
    if s != 1.0:
        coupling = -float(np.sum(np.diag(a) * dg * p)) / s
        grad = grad + coupling * np.eye(len(lam_raw))
    return sym(grad)
