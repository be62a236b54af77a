"""Finite-difference gradient oracle for the matrix operators.

Central differences over the symmetric perturbation basis
E_kl = (J_kl + J_lk)/2: every consumer in this package is a function of
a symmetric matrix, so probing the symmetric subspace recovers exactly
the gradients the analytic backward passes return (given a symmetric
upstream). The suite runner sweeps each route (element-wise, spectral,
both fast polynomials) over parameters and seeds and reports the
relative disagreement per case.
"""

from __future__ import annotations

import csv
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from . import elempn, fastpn, specpn
from .matcore import random_orthogonal, rng_stream, sym

__all__ = [
    "GradCase",
    "GradCheckReport",
    "fd_vjp",
    "default_suite",
    "run_suite",
    "write_report_csv",
    "REPORT_CSV_COLUMNS",
]


class GradCase(NamedTuple):
    """One gradient check: a route, an operator/parameter, a size, a seed."""

    route: str  # elementwise | spectral | fast_maxexp | fast_gamma
    op: str
    param: float
    d: int
    seed: int
    trace_normalize: bool = False


class GradCheckReport(NamedTuple):
    op: str
    d: int
    param: float
    seed: int
    max_rel_error: float
    probe_count: int
    step: float


REPORT_CSV_COLUMNS = ("op", "d", "param", "seed", "max_rel_error", "step")


def fd_vjp(forward, m, upstream, step=None):
    """Numeric gradient of m -> <upstream, forward(m)> by central differences.

    Probes the symmetric basis matrices; the default step scales with
    the input, 1e-6 * (1 + ||M||_F). Non-finite forward values abort
    with an error naming the probe.
    """
    m = np.asarray(m, dtype=float)
    upstream = np.asarray(upstream, dtype=float)
    if step is None:
        step = 1e-6 * (1.0 + float(np.linalg.norm(m)))
    if not step > 0:
        raise ValueError(f"step must be > 0, got {step}")
    d = m.shape[0]
    out = np.zeros_like(m)
    for k in range(d):
        for l in range(k, d):
            probe = np.zeros_like(m)
            if k == l:
                probe[k, k] = 1.0
            else:
                probe[k, l] = probe[l, k] = 0.5
            hi = float(np.sum(upstream * forward(m + step * probe)))
            lo = float(np.sum(upstream * forward(m - step * probe)))
            if not (np.isfinite(hi) and np.isfinite(lo)):
                raise FloatingPointError(
                    f"non-finite forward evaluation at probe ({k}, {l})"
                )
            out[k, l] = out[l, k] = (hi - lo) / (2.0 * step)
    return out


def _separated_spd(d, rng, lo=0.15, hi=1.0, normalize=False):
    # well-separated spectrum so spectral derivatives stay smooth at FD scale
    base = np.linspace(lo, hi, d)
    jitter = (hi - lo) / (4.0 * max(d - 1, 1)) * rng.uniform(-1.0, 1.0, size=d)
    vals = base + jitter
    q = random_orthogonal(d, rng)
    m = sym((q * vals) @ q.T)
    if normalize:
        m = m / float(np.trace(m))
    return m


def _nonneg_spd(d, rng):
    # entrywise-positive PSD input for the element-wise domain checks
    phi = np.abs(rng.standard_normal((d, 2 * d))) + 0.05
    m = phi @ phi.T / phi.shape[1]
    return sym(m / float(np.trace(m)))


def _case_machinery(case):
    """Returns (input matrix builder, forward, analytic-vjp) for a case."""
    if case.route == "elementwise":
        cfg = elempn.PNConfig(
            case.op, case.param, trace_normalize=case.trace_normalize
        )

        def build(rng):
            return _nonneg_spd(case.d, rng)

        def forward(m):
            return elempn.pn_forward(m, cfg)

        def analytic(m, upstream):
            return elempn.pn_backward(m, upstream, cfg)

    elif case.route == "spectral":
        cfg = elempn.PNConfig(
            case.op, case.param, trace_normalize=case.trace_normalize
        )

        def build(rng):
            return _separated_spd(case.d, rng)

        def forward(m):
            return specpn.spn_forward(m, cfg, gap=None)[0]

        def analytic(m, upstream):
            decomp = specpn.spn_forward(m, cfg, gap=None)[1]
            return specpn.spn_backward(m, upstream, cfg, decomp, gap=None)

    elif case.route == "fast_maxexp":

        def build(rng):
            return _separated_spd(case.d, rng, normalize=True)

        def forward(m):
            return fastpn.fast_maxexp_forward(m, int(case.param), check_trace=False)[0]

        def analytic(m, upstream):
            tape = fastpn.fast_maxexp_forward(
                m, int(case.param), check_trace=False
            )[1]
            return fastpn.fast_maxexp_backward(tape, upstream)

    elif case.route == "fast_gamma":

        def build(rng):
            return _separated_spd(case.d, rng, normalize=True)

        def forward(m):
            return fastpn.fast_gamma_int(m, int(case.param))[0]

        def analytic(m, upstream):
            tape = fastpn.fast_gamma_int(m, int(case.param))[1]
            return fastpn.fast_gamma_int_backward(tape, upstream)

    else:
        raise ValueError(f"unknown route {case.route!r}")
    return build, forward, analytic


def default_suite(dims=(4, 6), seeds=(0, 1, 2, 3, 4)):
    """Every route and operator over small sizes and several seeds."""
    cases = []
    elem_params = {
        "gamma": 0.5,
        "maxexp": 3.0,
        "sigme": 5.0,
        "asinhe": 4.0,
        "hdp": 0.5,
    }
    for d in dims:
        for seed in seeds:
            for op, param in elem_params.items():
                cases.append(GradCase("elementwise", op, param, d, seed))
                cases.append(GradCase("spectral", op, param, d, seed))
            # trace-normalized variants exercise the coupling terms
            cases.append(
                GradCase("elementwise", "maxexp", 3.0, d, seed, trace_normalize=True)
            )
            cases.append(
                GradCase("elementwise", "sigme", 5.0, d, seed, trace_normalize=True)
            )
            cases.append(
                GradCase("spectral", "maxexp", 3.0, d, seed, trace_normalize=True)
            )
            for eta in (2, 3, 7):
                cases.append(GradCase("fast_maxexp", "maxexp", eta, d, seed))
            for gamma in (2, 3, 5):
                cases.append(GradCase("fast_gamma", "gamma", gamma, d, seed))
    return cases


def run_suite(cases, step=None, negate_analytic=False):
    """Run gradient checks; returns reports sorted worst-first.

    negate_analytic flips the sign of every analytic gradient. It exists
    to prove the checker notices a broken backward (the relative error
    of a negated gradient is 2.0); leave it False for real checks.
    Per-case failures are swallowed into an infinite-error report so one
    bad case cannot hide the rest.
    """
    reports = []
    for case in cases:
        rng = rng_stream(case.seed)
        try:
            build, forward, analytic = _case_machinery(case)
            m = build(rng)
            upstream = sym(rng.standard_normal((case.d, case.d)))
            used_step = step
            if used_step is None:
                used_step = 1e-6 * (1.0 + float(np.linalg.norm(m)))
            numeric = fd_vjp(forward, m, upstream, used_step)
            ana = analytic(m, upstream)
            if negate_analytic:
                ana = -ana
            err = float(
                np.linalg.norm(ana - numeric)
                / max(float(np.linalg.norm(numeric)), 1e-12)
            )
        except Exception:
            err = float("inf")
            used_step = step if step is not None else float("nan")
        reports.append(
            GradCheckReport(
                op=f"{case.route}:{case.op}",
                d=case.d,
                param=case.param,
                seed=case.seed,
                max_rel_error=err,
                probe_count=case.d * (case.d + 1) // 2,
                step=used_step,
            )
        )
    reports.sort(key=lambda r: r.max_rel_error, reverse=True)
    return reports


def write_report_csv(reports, path):
    """Write reports in the documented CSV schema (UTF-8, LF)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(REPORT_CSV_COLUMNS)
        for r in reports:
            writer.writerow([r.op, r.d, r.param, r.seed, r.max_rel_error, r.step])
