"""Element-wise power normalization.

The operator family, applied entry-wise to a pooled symmetric matrix M
(p denotes the entry, optionally divided by trace(M)+eps):

  gamma     (p + eps)^gamma                 gamma > 0, needs p >= -eps
  maxexp    1 - (1 - p)^eta                 eta >= 1, needs p >= -eps
  sigme     2 / (1 + exp(-etap * p)) - 1    etap >= 1
  asinhe    asinh(gammap * p)               gammap > 0
  hdp       exp(-t / p) for p > 0, else 0   t > 0, needs p >= -eps
  identity  p

Trace normalization (dividing by trace(M)+eps) applies to maxexp and
sigme only, and only when the config flag is set. Two residual variants
can be stacked on any operator: an additive floor kappa*M that keeps the
derivative away from zero, and a trace-power factor (trace(M)+eps)^rg
that restores scale information removed by normalization. The floor is
added first, the trace factor multiplies the sum.

The backward pass here is the exact vector-Jacobian product, including
the cross-entry coupling introduced by trace normalization; the
derivative-matrix helper exposes the entry-local slope separately.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .matcore import PoolDomainError, sym

__all__ = [
    "PN_OPS",
    "PNConfig",
    "validate_pn_config",
    "pn_forward",
    "pn_backward",
    "pn_derivative_matrix",
    "pn_feature_backward",
    "scalar_profile",
    "maxexp_pm",
    "multinomial_oracle",
    "multinomial_pm_oracle",
    "sigme_maxexp_align",
    "alignment_point",
    "ALIGN_A",
    "ALIGN_B",
]

PN_OPS = ("gamma", "maxexp", "sigme", "asinhe", "hdp", "identity")

# sigme <-> maxexp alignment constants: A = log(sqrt(3)+2), B = (4-2*sqrt(3))/3
ALIGN_A = math.log(math.sqrt(3.0) + 2.0)
ALIGN_B = (4.0 - 2.0 * math.sqrt(3.0)) / 3.0


class PNConfig(NamedTuple):
    """Configuration of one power-normalization operator.

    param is gamma/eta/etap/gammap/t depending on op (ignored for
    identity). gamma_abs switches gamma to (|p|+eps)^gamma for signed
    inputs; the default is a hard domain error below -eps, since a
    silently absolute-valued entry would mask bugs.
    """

    op: str
    param: float = 1.0
    eps: float = 1e-6
    trace_normalize: bool = False
    residual_gamma: float | None = None
    residual_kappa: float | None = None
    gamma_abs: bool = False


def validate_pn_config(cfg):
    """Check op name and parameter range; returns cfg unchanged."""
    if cfg.op not in PN_OPS:
        raise PoolDomainError(f"unknown power-normalization op {cfg.op!r}")
    p = cfg.param
    if cfg.op in ("gamma", "asinhe") and not p > 0:
        raise PoolDomainError(f"{cfg.op} requires param > 0, got {p}")
    if cfg.op in ("maxexp", "sigme") and not p >= 1:
        raise PoolDomainError(f"{cfg.op} requires param >= 1, got {p}")
    if cfg.op == "hdp" and not p > 0:
        raise PoolDomainError(f"hdp requires param t > 0, got {p}")
    if cfg.eps < 0:
        raise PoolDomainError(f"eps must be >= 0, got {cfg.eps}")
    return cfg


def _norm_scale(m, cfg):
    """Normalization divisor: trace(M)+eps for flagged maxexp/sigme, else 1."""
    if cfg.trace_normalize and cfg.op in ("maxexp", "sigme"):
        return float(np.trace(m)) + cfg.eps
    return 1.0


def _check_domain(m, cfg):
    if cfg.op in ("gamma", "maxexp", "hdp") and not (cfg.op == "gamma" and cfg.gamma_abs):
        low = float(m.min())
        if low < -cfg.eps:
            raise PoolDomainError(
                f"invalid power normalization: {cfg.op} requires entries >= -eps "
                f"(negative p is outside the operator domain); min entry {low:.3e}, "
                f"eps {cfg.eps:.3e}"
            )
    if cfg.op == "maxexp" and float(cfg.param) != int(cfg.param):
        # non-integer exponent needs 1 - p >= 0 to stay real
        s = _norm_scale(m, cfg)
        if float(m.max()) / s > 1.0:
            raise PoolDomainError(
                "maxexp with non-integer eta requires normalized entries <= 1"
            )


def _profile_value(op, param, x, eps):
    """Scalar profile g(x) applied to an array of (possibly normalized) entries."""
    if op == "identity":
        return np.array(x, dtype=float, copy=True)
    if op == "gamma":
        return (x + eps) ** param
    if op == "maxexp":
        return 1.0 - (1.0 - x) ** param
    if op == "sigme":
        # 2/(1+exp(-a)) - 1 == tanh(a/2), which never overflows
        return np.tanh(0.5 * param * x)
    if op == "asinhe":
        return np.arcsinh(param * x)
    if op == "hdp":
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        pos = x > 0
        out[pos] = np.exp(-param / x[pos])
        return out
    raise PoolDomainError(f"unknown power-normalization op {op!r}")


def _profile_slope(op, param, x, eps):
    """Derivative g'(x) of the scalar profile."""
    if op == "identity":
        return np.ones_like(np.asarray(x, dtype=float))
    if op == "gamma":
        return param * (x + eps) ** (param - 1.0)
    if op == "maxexp":
        return param * (1.0 - x) ** (param - 1.0)
    if op == "sigme":
        t = np.tanh(0.5 * param * x)
        return 0.5 * param * (1.0 - t * t)
    if op == "asinhe":
        return param / np.sqrt(1.0 + (param * x) ** 2)
    if op == "hdp":
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        pos = x > 0
        out[pos] = param * np.exp(-param / x[pos]) / x[pos] ** 2
        return out
    raise PoolDomainError(f"unknown power-normalization op {op!r}")


def scalar_profile(op, param, x, eps=0.0):
    """Public scalar map g(x): the law every matrix path applies per entry
    or per eigenvalue. Used by the spectrum push-forward study."""
    if op not in PN_OPS:
        raise PoolDomainError(f"unknown power-normalization op {op!r}")
    return _profile_value(op, param, np.asarray(x, dtype=float), eps)


def _gamma_input(m, cfg):
    return np.abs(m) if (cfg.op == "gamma" and cfg.gamma_abs) else m


def pn_forward(m, cfg):
    """Apply the configured operator entry-wise; returns a matrix like m.

    Residual variants, when configured, are applied afterwards in the
    order: add residual_kappa * M, then multiply by
    (trace(M)+eps)^residual_gamma.
    """
    validate_pn_config(cfg)
    m = np.asarray(m, dtype=float)
    _check_domain(m, cfg)
    s = _norm_scale(m, cfg)
    x = _gamma_input(m, cfg) / s
    psi = _profile_value(cfg.op, cfg.param, x, cfg.eps)
    if cfg.residual_kappa is not None:
        psi = psi + cfg.residual_kappa * m
    if cfg.residual_gamma is not None:
        psi = psi * (float(np.trace(m)) + cfg.eps) ** cfg.residual_gamma
    return psi


def pn_derivative_matrix(m, cfg):
    """Entry-local slope matrix D with D_kl = d psi_kl / d m_kl, trace held fixed.

    With the residual floor configured, every entry is >= kappa (times
    the trace factor if that is also configured). The trace-coupled
    cross terms are not part of D; pn_backward carries them.
    """
    validate_pn_config(cfg)
    m = np.asarray(m, dtype=float)
    _check_domain(m, cfg)
    s = _norm_scale(m, cfg)
    x = _gamma_input(m, cfg) / s
    d = _profile_slope(cfg.op, cfg.param, x, cfg.eps) / s
    if cfg.op == "gamma" and cfg.gamma_abs:
        d = d * np.sign(m)
    if cfg.residual_kappa is not None:
        d = d + cfg.residual_kappa
    if cfg.residual_gamma is not None:
        d = d * (float(np.trace(m)) + cfg.eps) ** cfg.residual_gamma
    return d


def pn_backward(m, upstream, cfg):
    """Exact vector-Jacobian product: d loss / d M for loss grad ``upstream``.

    For trace-normalized operators the diagonal picks up the coupling
    through the normalizer: with s = trace(M)+eps, x = M/s and B = g'(x),

        vjp = upstream * B / s - I * <upstream, B * M> / s**2

    which reduces to upstream * g'(M) in the unnormalized case. The
    residual variants chain through both their direct terms and the
    trace factor's own dependence on M.
    """
    validate_pn_config(cfg)
    m = np.asarray(m, dtype=float)
    upstream = np.asarray(upstream, dtype=float)
    if upstream.shape != m.shape:
        raise ValueError(f"upstream shape {upstream.shape} != matrix shape {m.shape}")
    _check_domain(m, cfg)

    s = _norm_scale(m, cfg)
    x = _gamma_input(m, cfg) / s
    b = _profile_slope(cfg.op, cfg.param, x, cfg.eps)
    if cfg.op == "gamma" and cfg.gamma_abs:
        b = b * np.sign(m)
    grad = upstream * b / s
    if s != 1.0:
        eye = np.eye(m.shape[0])
        grad = grad - eye * (float(np.sum(upstream * b * m)) / s**2)

    if cfg.residual_kappa is not None:
        grad = grad + cfg.residual_kappa * upstream
    if cfg.residual_gamma is not None:
        st = float(np.trace(m)) + cfg.eps
        rg = cfg.residual_gamma
        psi0 = _profile_value(cfg.op, cfg.param, x, cfg.eps)
        if cfg.residual_kappa is not None:
            psi0 = psi0 + cfg.residual_kappa * m
        grad = st**rg * grad + (
            rg * st ** (rg - 1.0) * float(np.sum(upstream * psi0))
        ) * np.eye(m.shape[0])
    return grad


def pn_feature_backward(stacked, upstream, cfg, feature_rows=None):
    """Backward through pooling + PN down to the stacked feature block.

    ``stacked`` is the (K + extra) x N block whose autocorrelation
    (1/N) stacked stacked^T was normalized; the gradient of the pooled
    matrix is pushed through with the 2/N * Sym factor and
    right-multiplied by the block. Pass feature_rows=K to slice off the
    gradient of appended coordinate rows (constants w.r.t. features).
    """
    stacked = np.asarray(stacked, dtype=float)
    n = stacked.shape[1]
    m = stacked @ stacked.T / n
    g_m = pn_backward(m, upstream, cfg)
    grad = (2.0 / n) * sym(g_m) @ stacked
    if feature_rows is not None:
        grad = grad[:feature_rows, :]
    return grad


def maxexp_pm(p_star, n_trials):
    """Signed co-occurrence profile (1-q)^N - (1-p)^N.

    p = max(0, p_star) and q = max(0, -p_star), so the function is odd
    in p_star: positive evidence saturates toward 1, negative evidence
    toward -1.
    """
    n = int(n_trials)
    if n != n_trials or n < 1:
        raise PoolDomainError(f"n_trials must be an integer >= 1, got {n_trials!r}")
    p = max(0.0, float(p_star))
    q = max(0.0, -float(p_star))
    return (1.0 - q) ** n - (1.0 - p) ** n


_MULTINOMIAL_CAP = 20


def _check_multinomial_args(n_trials, *probs):
    n = int(n_trials)
    if n != n_trials or n < 1:
        raise PoolDomainError(f"n_trials must be an integer >= 1, got {n_trials!r}")
    if n > _MULTINOMIAL_CAP:
        raise PoolDomainError(
            f"n_trials={n} above the cap {_MULTINOMIAL_CAP}: the brute-force "
            "sums grow combinatorially and lose precision"
        )
    total = 0.0
    for p in probs:
        if p < 0:
            raise PoolDomainError(f"probabilities must be >= 0, got {p}")
        total += p
    if total > 1.0 + 1e-12:
        raise PoolDomainError(f"probabilities sum to {total} > 1")
    return n


def multinomial_oracle(p, n_trials, q=None, s=None):
    """Brute-force multinomial mass of 'at least one draw in the p bin'.

    Sums the full multinomial expansion over four categories (p, q, s,
    remainder) with exact comb coefficients and fsum accumulation;
    equals 1 - (1-p)^N regardless of how the remaining mass is split
    (q and s default to an even three-way split).
    """
    if q is None:
        q = (1.0 - p) / 3.0
    if s is None:
        s = (1.0 - p) / 3.0
    n = _check_multinomial_args(n_trials, p, q, s)
    r = 1.0 - p - q - s
    terms = []
    for n1 in range(1, n + 1):
        c1 = math.comb(n, n1)
        for n2 in range(0, n - n1 + 1):
            c2 = c1 * math.comb(n - n1, n2)
            for n3 in range(0, n - n1 - n2 + 1):
                n4 = n - n1 - n2 - n3
                coef = c2 * math.comb(n - n1 - n2, n3)
                terms.append(coef * p**n1 * q**n2 * s**n3 * r**n4)
    return math.fsum(terms)


def multinomial_pm_oracle(p, q, n_trials):
    """Brute-force signed multinomial sum; equals (1-q)^N - (1-p)^N.

    The antisymmetrized double sum over occurrence/anti-occurrence
    counts, evaluated term by term with fsum.
    """
    n = _check_multinomial_args(n_trials, p, q)
    terms = []
    for n1 in range(1, n + 1):
        c1 = math.comb(n, n1)
        for n2 in range(0, n - n1 + 1):
            rest = n - n1 - n2
            coef = c1 * math.comb(n - n1, n2)
            terms.append(
                coef * (p**n1 * q**n2 - p**n2 * q**n1) * (1.0 - p - q) ** rest
            )
    return math.fsum(terms)


def sigme_maxexp_align(direction, value):
    """Convert between aligned maxexp and sigme steepness parameters.

    direction "to_sigme" maps eta -> etap; "to_maxexp" maps etap -> eta.
    The pair makes the two saturation curves agree except in a boundary
    layer near 0 that shrinks as the parameters grow; the maps are exact
    inverses of each other.
    """
    v = float(value)
    if direction == "to_sigme":
        if v < 1.0:
            raise PoolDomainError(f"eta must be >= 1, got {v}")
        return ALIGN_A / (1.0 - ALIGN_B ** (1.0 / (2.0 * v)))
    if direction == "to_maxexp":
        if v < 1.0:
            raise PoolDomainError(f"etap must be >= 1, got {v}")
        if v <= ALIGN_A:
            raise PoolDomainError(
                f"etap must exceed {ALIGN_A:.6f} for the inverse map, got {v}"
            )
        return math.log(ALIGN_B) / (2.0 * math.log(1.0 - ALIGN_A / v))
    raise ValueError(f"direction must be 'to_sigme' or 'to_maxexp', got {direction!r}")


def alignment_point(etap):
    """Abscissa where the aligned sigme and maxexp curves cross exactly.

    Both curves evaluate to 1/sqrt(3) there: tanh(A/2) with
    A = log(sqrt(3)+2) collapses to that value.
    """
    if etap <= 0:
        raise PoolDomainError(f"etap must be > 0, got {etap}")
    return ALIGN_A / float(etap)
