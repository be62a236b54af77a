"""Eigendecomposition-free spectral operators.

For a trace-normalized PSD matrix, spectral maxexp collapses to the
polynomial I - (I - M)^eta, so binary exponentiation (exponentiation by
squaring) evaluates it in O(log eta) matrix products instead of a full
eigendecomposition. The forward pass records its products on a tape;
the backward pass replays the tape in reverse, contracting the upstream
gradient through each product (standard reverse mode, never forming the
4-index Jacobian the recursion nominally describes).

Same loop with the seed matrix swapped from I - M to M computes integer
matrix powers for spectral gamma; its backward uses the closed-form
half-folded power sum, linear in the exponent.

Newton-Schulz iteration approximates the matrix square root (spectral
gamma at 1/2) as the timing baseline, at exactly 3 products per step.

Every matrix product executed is counted literally, next to the `@`
that performs it; the counts are the point of comparison with the
eigendecomposition route.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .matcore import ConvergenceError, PoolDomainError, as_sym_matrix, sym

__all__ = [
    "MMCounter",
    "FastTape",
    "fast_maxexp_forward",
    "fast_maxexp_backward",
    "maxexp_closed_derivative",
    "fast_gamma_int",
    "fast_gamma_int_backward",
    "newton_schulz_sqrt",
]

_TRACE_TOL = 1e-8


class MMCounter:
    """Tally of matrix-matrix products, split by pass."""

    def __init__(self):
        self.forward = 0
        self.backward = 0

    def __repr__(self):
        return f"MMCounter(forward={self.forward}, backward={self.backward})"


@dataclass(frozen=True)
class FastTape:
    """Recorded state of one binary-exponentiation forward pass.

    steps holds ("mul", q, G_before) entries for accumulator products
    and ("sqr", q) entries for squarings; powers holds the repeated
    squarings of the seed matrix. About 2*log2(eta) matrices in total.
    """

    op: str
    eta: int
    dim: int
    steps: Tuple[tuple, ...]
    powers: Tuple[np.ndarray, ...]
    mm_count_forward: int


def _check_exponent(value, name):
    n = int(value)
    if n != value or n < 1:
        raise PoolDomainError(f"{name} must be an integer >= 1, got {value!r}")
    return n


def _binary_power_accumulate(seed, eta):
    """Shared loop: returns (G = seed^eta, steps, powers, mm count).

    The accumulator starts at the identity; each set bit of eta
    multiplies the current power in, each remaining bit squares it.
    """
    d = seed.shape[0]
    g = np.eye(d)
    powers = [seed]
    steps = []
    mm = 0
    n = eta
    q = 0
    while n != 0:
        if n & 1:
            steps.append(("mul", q, g))
            g = g @ powers[q]
            mm += 1
            n -= 1
        n //= 2
        if n > 0:
            steps.append(("sqr", q))
            powers.append(powers[q] @ powers[q])
            mm += 1
            q += 1
    return g, steps, powers, mm


def fast_maxexp_forward(m, eta, renormalize=False, counter=None, check_trace=True):
    """I - (I - M)^eta by exponentiation by squaring.

    M must be trace-normalized to within 1e-8 (set renormalize=True to
    divide by the trace first, or check_trace=False to skip the check
    entirely, e.g. when probing derivatives off the trace-1 manifold).
    Returns (result, tape); feed the tape to fast_maxexp_backward.
    """
    eta = _check_exponent(eta, "eta")
    m = as_sym_matrix(m)
    if renormalize:
        tr = float(np.trace(m))
        if tr <= 0:
            raise PoolDomainError(f"cannot renormalize: trace {tr:.3e} <= 0")
        m = m / tr
    elif check_trace:
        tr = float(np.trace(m))
        if abs(tr - 1.0) > _TRACE_TOL:
            raise PoolDomainError(
                f"fast maxexp requires a trace-normalized input; trace is {tr!r}"
            )
    d = m.shape[0]
    g, steps, powers, mm = _binary_power_accumulate(np.eye(d) - m, eta)
    if counter is not None:
        counter.forward += mm
    tape = FastTape("maxexp", eta, d, tuple(steps), tuple(powers), mm)
    return sym(np.eye(d) - g), tape


def fast_maxexp_backward(tape, upstream, counter=None):
    """Reverse-mode gradient through a recorded fast maxexp forward.

    Replays the tape backwards: a "mul" step splits the accumulator
    adjoint between the recorded accumulator value and the power used; a
    "sqr" step folds the higher power's adjoint down through the product
    rule. All primal matrices are symmetric polynomials of M, so the
    adjoints are kept symmetric as they accumulate, which is what makes
    the per-step cost a single product each.
    """
    if tape.op != "maxexp":
        raise ValueError(f"tape records a {tape.op!r} forward, not maxexp")
    upstream = np.asarray(upstream, dtype=float)
    if upstream.shape != (tape.dim, tape.dim):
        raise ValueError(
            f"upstream shape {upstream.shape} does not match tape dim {tape.dim}"
        )
    mm = 0
    g_adj = -sym(upstream)  # output is I - G, so G's adjoint enters negated
    s_adj = [np.zeros((tape.dim, tape.dim)) for _ in tape.powers]
    for step in reversed(tape.steps):
        if step[0] == "mul":
            _, q, g_before = step
            s_adj[q] += sym(g_before.T @ g_adj)
            mm += 1
            g_adj = sym(g_adj @ tape.powers[q].T)
            mm += 1
        else:
            _, q = step
            a = s_adj[q + 1] @ tape.powers[q]
            mm += 1
            s_adj[q] += a + a.T
    if counter is not None:
        counter.backward += mm
    # seed was I - M: flip the sign back to d/dM
    return sym(-s_adj[0])


def maxexp_closed_derivative(m, upstream, eta, check_trace=True):
    """Closed-form gradient of I - (I - M)^eta, linear cost in eta.

    Evaluates the power-sum derivative sum_n S^n Sym(upstream) S^(eta-1-n)
    with S = I - M, folded to half length by transpose symmetry of the
    terms. Independent of the tape machinery, so it cross-checks it.
    """
    eta = _check_exponent(eta, "eta")
    m = as_sym_matrix(m)
    if check_trace:
        tr = float(np.trace(m))
        if abs(tr - 1.0) > _TRACE_TOL:
            raise PoolDomainError(
                f"fast maxexp requires a trace-normalized input; trace is {tr!r}"
            )
    upstream = np.asarray(upstream, dtype=float)
    if upstream.shape != m.shape:
        raise ValueError(f"upstream shape {upstream.shape} != matrix shape {m.shape}")
    d = m.shape[0]
    s = np.eye(d) - m
    g_up = -sym(upstream)
    powers = [np.eye(d)]
    for _ in range(eta - 1):
        powers.append(powers[-1] @ s)
    half = eta // 2
    total = np.zeros_like(m)
    for n in range(half):
        total += powers[n] @ g_up @ powers[eta - 1 - n]
    result = 2.0 * sym(total)
    if eta % 2 == 1:
        result = result + powers[half] @ g_up @ powers[half]
    return -result


def fast_gamma_int(m, gamma, counter=None):
    """M^gamma for integer gamma >= 1, by exponentiation by squaring.

    Returns (result, tape); the tape stores M itself as powers[0], which
    is all the closed-form backward needs.
    """
    gamma = _check_exponent(gamma, "gamma")
    m = as_sym_matrix(m)
    g, steps, powers, mm = _binary_power_accumulate(m, gamma)
    if counter is not None:
        counter.forward += mm
    tape = FastTape("gamma", gamma, m.shape[0], tuple(steps), tuple(powers), mm)
    return sym(g), tape


def fast_gamma_int_backward(tape, upstream, counter=None):
    """Gradient of M^gamma via the half-folded power sum.

    d/dM <U, M^gamma> = sum_n M^n Sym(U) M^(gamma-1-n); paired terms are
    transposes of each other, so only half are computed and the odd
    middle term is added once. Cost is linear in gamma, counted
    literally.
    """
    if tape.op != "gamma":
        raise ValueError(f"tape records a {tape.op!r} forward, not gamma")
    upstream = np.asarray(upstream, dtype=float)
    if upstream.shape != (tape.dim, tape.dim):
        raise ValueError(
            f"upstream shape {upstream.shape} does not match tape dim {tape.dim}"
        )
    gamma = tape.eta
    m = tape.powers[0]
    g_up = sym(upstream)
    mm = 0
    powers = [np.eye(tape.dim)]
    if gamma >= 2:
        powers.append(m)
        for _ in range(gamma - 2):
            powers.append(powers[-1] @ m)
            mm += 1
    half = gamma // 2
    total = np.zeros((tape.dim, tape.dim))
    for n in range(half):
        total += (powers[n] @ g_up) @ powers[gamma - 1 - n]
        mm += 2
    result = 2.0 * sym(total)
    if gamma % 2 == 1:
        mid = powers[half]
        result = result + (mid @ g_up) @ mid
        mm += 2
    if counter is not None:
        counter.backward += mm
    return result


def newton_schulz_sqrt(m, iters=20, counter=None):
    """Coupled Newton-Schulz iteration for the matrix square root.

    Pre-scales by the trace so the iteration's convergence condition
    holds for any SPD input, and multiplies the scale's square root back
    at the end. Exactly 3 matrix products per iteration. Divergence
    (non-finite values or norm blow-up, which trace pre-scaling makes
    rare outside extreme conditioning) raises ConvergenceError.
    """
    it = int(iters)
    if it != iters or it < 1:
        raise PoolDomainError(f"iters must be an integer >= 1, got {iters!r}")
    m = as_sym_matrix(m)
    tr = float(np.trace(m))
    if tr <= 0:
        raise PoolDomainError(f"newton_schulz_sqrt requires an SPD input; trace {tr:.3e}")
    a = m / tr
    d = m.shape[0]
    eye3 = 3.0 * np.eye(d)
    y = a
    z = np.eye(d)
    limit = 1e6 * max(1.0, float(np.linalg.norm(a)))
    mm = 0
    for _ in range(it):
        t = eye3 - z @ y
        mm += 1
        y = 0.5 * (y @ t)
        mm += 1
        z = 0.5 * (t @ z)
        mm += 1
        if not np.isfinite(y).all() or np.linalg.norm(y) > limit:
            raise ConvergenceError(
                "Newton-Schulz iterates diverged: the input is too ill-conditioned "
                "for the square-root iteration to contract"
            )
    if counter is not None:
        counter.forward += mm
    return sym(math.sqrt(tr) * y)
