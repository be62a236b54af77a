"""Benchmark and verification command line.

Subcommands
  time         forward/backward wall time plus matmul counts
  pushforward  spectrum histograms before/after an operator, top-j variance
  bounds       diffusion-time bound gaps and grid violation sweep
  pool         pool a feature file into a symmetric matrix file
  kappa        support and variance ratios over shot/co-occurrence grids
  gradcheck    finite-difference audit of every backward pass

Every subcommand accepts --seed, --out, --threads, and --plot. Output
is CSV (UTF-8, header row, LF line endings); --plot renders a PNG next
to the CSV. Exit codes: 0 success, 1 assertion-grade violation, 2
usage error.

This module imports only the standard library at load time. The BLAS
thread-count environment variables are set from --threads before numpy
is first imported, which is why the heavy imports happen inside the
subcommand bodies; library users who already imported numpy keep their
own thread configuration.
"""

from __future__ import annotations

import argparse
import csv
import os
import statistics
import sys
import time as _time

__all__ = ["build_parser", "main"]

_THREAD_ENV_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS",
)

_HIST_BINS = 50

TIME_CSV_COLUMNS = (
    "op",
    "d",
    "param",
    "reps",
    "mean_forward_s",
    "std_forward_s",
    "mean_backward_s",
    "std_backward_s",
    "mm_forward",
    "mm_backward",
)
PUSHFORWARD_CSV_COLUMNS = (
    "op",
    "param",
    "bin_index",
    "bin_lo",
    "bin_hi",
    "mass_pre",
    "mass_post",
)
VARIANCE_CSV_COLUMNS = ("op", "param", "rank", "variance")
KAPPA_CSV_COLUMNS = ("j", "n", "kappa", "variance_ratio")


class _Usage(Exception):
    """Bad flag combination or value; exit code 2."""


class _Fail(Exception):
    """Assertion-grade failure (bad file, domain violation); exit code 1."""


def _int_list(text):
    try:
        return [int(tok) for tok in str(text).split(",") if tok.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text):
    try:
        return [float(tok) for tok in str(text).split(",") if tok.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _pin_threads(n):
    for var in _THREAD_ENV_VARS:
        os.environ[var] = str(n)


def _out_path(args, default_name):
    return args.out if args.out else default_name


def _plot_path(out_path):
    root, _ = os.path.splitext(out_path)
    return root + ".png"


def _write_csv(path, columns, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        writer.writerows(rows)


def _time_reps(fn, reps, warmup):
    for _ in range(warmup):
        fn()
    samples = []
    for _ in range(reps):
        start = _time.perf_counter()
        fn()
        samples.append(_time.perf_counter() - start)
    mean = sum(samples) / reps
    std = statistics.stdev(samples) if reps > 1 else 0.0
    return mean, std


# ---------------------------------------------------------------- time


_TIME_OPS = ("maxexp-fast", "gamma-fast", "newton-schulz", "maxexp-spectral")


def cmd_time(args):
    import numpy as np

    from . import fastpn, specpn
    from .elempn import PNConfig
    from .matcore import random_spd, rng_stream, sym

    if args.reps < 1:
        raise _Usage("--reps must be >= 1")
    if args.warmup < 0:
        raise _Usage("--warmup must be >= 0")

    given = {
        "--eta": args.eta,
        "--gamma": args.gamma,
        "--iters": args.iters,
    }
    allowed = {
        "maxexp-fast": "--eta",
        "maxexp-spectral": "--eta",
        "gamma-fast": "--gamma",
        "newton-schulz": "--iters",
    }[args.op]
    for flag, value in given.items():
        if value is not None and flag != allowed:
            raise _Usage(f"{args.op} takes {allowed}, not {flag}")
    defaults = {"--eta": [8, 64, 512], "--gamma": [2, 3, 5], "--iters": [20]}
    params = given[allowed] if given[allowed] is not None else defaults[allowed]
    if any(p < 1 for p in params):
        raise _Usage(f"{allowed} values must be >= 1")

    rows = []
    for d in args.d:
        if d < 2:
            raise _Usage("--d values must be >= 2")
        rng = rng_stream(args.seed + d)
        m = random_spd(d, "uniform(0.05, 1.0)", rng)
        m = m / float(np.trace(m))
        upstream = sym(rng.standard_normal((d, d)))
        for param in params:
            if args.op == "maxexp-fast":
                _, tape = fastpn.fast_maxexp_forward(m, param)
                fwd = lambda: fastpn.fast_maxexp_forward(m, param)
                bwd = lambda: fastpn.fast_maxexp_backward(tape, upstream)
                counter = fastpn.MMCounter()
                fastpn.fast_maxexp_forward(m, param, counter=counter)
                fastpn.fast_maxexp_backward(tape, upstream, counter=counter)
                mm_f, mm_b = counter.forward, counter.backward
            elif args.op == "gamma-fast":
                _, tape = fastpn.fast_gamma_int(m, param)
                fwd = lambda: fastpn.fast_gamma_int(m, param)
                bwd = lambda: fastpn.fast_gamma_int_backward(tape, upstream)
                counter = fastpn.MMCounter()
                fastpn.fast_gamma_int(m, param, counter=counter)
                fastpn.fast_gamma_int_backward(tape, upstream, counter=counter)
                mm_f, mm_b = counter.forward, counter.backward
            elif args.op == "newton-schulz":
                fwd = lambda: fastpn.newton_schulz_sqrt(m, param)
                bwd = None
                counter = fastpn.MMCounter()
                fastpn.newton_schulz_sqrt(m, param, counter=counter)
                mm_f, mm_b = counter.forward, ""
            else:  # maxexp-spectral
                cfg = PNConfig("maxexp", float(param))
                _, decomp = specpn.spn_forward(m, cfg)
                fwd = lambda: specpn.spn_forward(m, cfg)
                bwd = lambda: specpn.spn_backward(m, upstream, cfg, decomp)
                mm_f = mm_b = ""
            mean_f, std_f = _time_reps(fwd, args.reps, args.warmup)
            if bwd is None:
                mean_b = std_b = ""
            else:
                mean_b, std_b = _time_reps(bwd, args.reps, args.warmup)
            rows.append(
                (args.op, d, param, args.reps, mean_f, std_f, mean_b, std_b, mm_f, mm_b)
            )
            back_txt = f"{mean_b:.6e}s" if mean_b != "" else "-"
            print(
                f"time op={args.op} d={d} param={param} forward={mean_f:.6e}s "
                f"backward={back_txt} mm={mm_f if mm_f != '' else '-'}"
                f"/{mm_b if mm_b != '' else '-'}"
            )

    out = _out_path(args, "timing.csv")
    _write_csv(out, TIME_CSV_COLUMNS, rows)
    print(f"time wrote {out} ({len(rows)} rows)")
    if args.plot:
        from . import plots

        dict_rows = [dict(zip(TIME_CSV_COLUMNS, r)) for r in rows]
        print(f"time wrote {plots.timing_figure(dict_rows, _plot_path(out))}")
    return 0


# ---------------------------------------------------------- pushforward


def cmd_pushforward(args):
    import numpy as np

    from . import hdp
    from .elempn import PN_OPS, scalar_profile
    from .matcore import draw_spectrum, rng_stream

    if args.op not in PN_OPS:
        raise _Usage(f"--op must be one of {', '.join(PN_OPS)}")
    if args.samples < 1 or args.trials < 1 or args.d < 1:
        raise _Usage("--samples, --trials and --d must be >= 1")
    if args.topj < 1 or args.topj > args.d:
        raise _Usage("--topj must be in [1, --d]")

    rng = rng_stream(args.seed)

    def draw(count):
        if args.law.strip() == "identity":
            return np.ones(count)
        return draw_spectrum(args.law, count, rng)

    def hist(values):
        counts, edges = np.histogram(values, bins=_HIST_BINS, range=(0.0, 1.0))
        return counts / float(values.size), edges

    samples = draw(args.samples)
    mass_pre, edges = hist(samples)
    bin_lo, bin_hi = edges[:-1], edges[1:]

    hist_rows = []
    post_series = []

    def add_hist(op, param, mass_post):
        for i in range(_HIST_BINS):
            hist_rows.append(
                (op, param, i, bin_lo[i], bin_hi[i], mass_pre[i], mass_post[i])
            )
        post_series.append((f"{op} p={param:g}", mass_post))

    for param in args.param:
        post, _ = hist(scalar_profile(args.op, param, samples))
        add_hist(args.op, param, post)

    if args.compare_hdp is not None:
        t = args.compare_hdp
        if not 0.0 < t < 1.0:
            raise _Usage("--compare-hdp takes a diffusion time in (0, 1)")
        eta = hdp.eta_of_t(t)
        mass_a, _ = hist(scalar_profile("maxexp", eta, samples))
        mass_b, _ = hist(scalar_profile("hdp", t, samples))
        add_hist("maxexp", eta, mass_a)
        add_hist("hdp", t, mass_b)
        width = 1.0 / _HIST_BINS
        l1_plain = float(np.abs(mass_a - mass_b).sum())
        l1_cum = float(np.abs(np.cumsum(mass_a - mass_b)).sum() * width)
        print(
            f"pushforward l1_cumulative t={t:g} eta={eta:.6g} "
            f"value={l1_cum:.6g} plain={l1_plain:.6g}"
        )

    # variance of the leading eigenvalues: draw whole spectra, push each
    # through the profile, track the per-rank spread across trials
    spectra = np.sort(draw(args.trials * args.d).reshape(args.trials, args.d), axis=1)[
        :, ::-1
    ]
    top = spectra[:, : args.topj]
    var_rows = []
    var_summary = []
    for param in args.param:
        pushed = scalar_profile(args.op, param, top)
        per_rank = np.var(pushed, axis=0)
        for rank in range(args.topj):
            var_rows.append((args.op, param, rank + 1, float(per_rank[rank])))
        total = float(per_rank.sum())
        var_summary.append((args.op, param, total))
        print(f"pushforward top{args.topj}_variance op={args.op} param={param:g} value={total:.6g}")

    out = _out_path(args, "pushforward.csv")
    _write_csv(out, PUSHFORWARD_CSV_COLUMNS, hist_rows)
    var_out = os.path.splitext(out)[0] + "_variance.csv"
    _write_csv(var_out, VARIANCE_CSV_COLUMNS, var_rows)
    print(f"pushforward wrote {out} and {var_out}")
    if args.plot:
        from . import plots

        path = plots.pushforward_figure(
            bin_lo, bin_hi, mass_pre, post_series, var_summary, _plot_path(out)
        )
        print(f"pushforward wrote {path}")
    return 0


# --------------------------------------------------------------- bounds


_DEFAULT_BOUND_ETAS = (1.0, 1.5, 2.0, 3.0, 5.0, 8.0, 12.0, 20.0, 35.0, 60.0, 100.0)


def cmd_bounds(args):
    import numpy as np

    from . import hdp
    from .matcore import PoolDomainError

    try:
        ts = []
        if args.eta:
            ts.extend(hdp.t_of_eta(e) for e in args.eta)
        if args.t:
            ts.extend(args.t)
        if not ts:
            ts = sorted(
                set(np.linspace(0.02, 0.98, 40).tolist())
                | {hdp.t_of_eta(e) for e in _DEFAULT_BOUND_ETAS}
            )
        if args.lambda_points < 2:
            raise _Usage("--lambda-points must be >= 2")
        lam = np.linspace(1e-4, 1.0, args.lambda_points)
        scale = 1.5 if args.inject else 1.0
        reports = hdp.verify_bounds(ts, lam, parametrization_scale=scale)
    except PoolDomainError as exc:
        raise _Usage(str(exc))

    rows = hdp.bound_report_rows(reports)
    out = _out_path(args, "bounds.csv")
    _write_csv(out, hdp.BOUND_CSV_COLUMNS, rows)
    worst = max(r.max_violation for r in reports)
    gap_ok = all(r.eps1 <= r.eps2 + 1e-12 for r in reports)
    status = "ok" if worst == 0.0 else "violation"
    print(
        f"bounds rows={len(rows)} max_violation={worst:.3e} "
        f"eps1_le_eps2={'yes' if gap_ok else 'no'} status={status}"
    )
    print(f"bounds wrote {out}")
    if args.plot:
        from . import plots

        dict_rows = [dict(zip(hdp.BOUND_CSV_COLUMNS, r)) for r in rows]
        print(f"bounds wrote {plots.bounds_figure(dict_rows, _plot_path(out))}")
    return 0 if worst == 0.0 else 1


# ----------------------------------------------------------------- pool


def cmd_pool(args):
    import numpy as np

    from . import fastpn, specpn
    from .elempn import PN_OPS, PNConfig, pn_forward
    from .matcore import load_feature_block, save_sym_matrix
    from .sop import PoolSpec, autocorrelation, coord_encoder, coordinate_grid

    if args.pnop not in PN_OPS:
        raise _Usage(f"--pnop must be one of {', '.join(PN_OPS)}")

    block = load_feature_block(args.input)

    if args.coord_pivots is not None:
        if args.width is None or args.height is None:
            raise _Usage("--coord-pivots requires --width and --height")
        if args.width * args.height != block.shape[1]:
            raise _Usage(
                f"grid {args.width}x{args.height} has {args.width * args.height} "
                f"positions but the feature file has {block.shape[1]} columns"
            )
        encoder = coord_encoder(args.coord_pivots, args.coord_bandwidth, args.coord_weight)
        pool_spec = PoolSpec(beta=args.beta, coord=encoder)
        coords = coordinate_grid(args.width, args.height)
        pooled = autocorrelation(block, pool_spec, coords)
    else:
        pooled = autocorrelation(block, PoolSpec(beta=args.beta))

    if args.pnop == "identity":
        result = pooled
    else:
        trace = float(np.trace(pooled))
        if trace <= 0.0:
            raise _Fail("pooled matrix has nonpositive trace; nothing to normalize")
        normalized = pooled / trace
        cfg = PNConfig(args.pnop, args.param, eps=args.eps)
        if args.engine == "elementwise":
            result = pn_forward(normalized, cfg)
        elif args.engine == "spectral":
            result, _ = specpn.spn_forward(normalized, cfg)
        else:  # fast
            if args.pnop not in ("maxexp", "gamma"):
                raise _Usage("--engine fast supports --pnop maxexp or gamma")
            if float(args.param) != int(args.param):
                raise _Usage("--engine fast requires an integer --param")
            if args.pnop == "maxexp":
                result, _ = fastpn.fast_maxexp_forward(normalized, int(args.param))
            else:
                result, _ = fastpn.fast_gamma_int(normalized, int(args.param))

    out = _out_path(args, os.path.splitext(args.input)[0] + ".pooled.symmat")
    save_sym_matrix(out, result)
    print(
        f"pool engine={args.engine} op={args.pnop} d={result.shape[0]} "
        f"trace={float(np.trace(result)):.6g} wrote {out}"
    )
    if args.plot:
        from . import plots

        print(f"pool wrote {plots.pool_figure(result, _plot_path(out))}")
    return 0


# ---------------------------------------------------------------- kappa


def cmd_kappa(args):
    from .hdp import support_ratio, variance_ratio
    from .matcore import PoolDomainError

    rows = []
    try:
        for n in args.n:
            vr = float(variance_ratio(n))
            for j in args.j:
                rows.append((j, n, float(support_ratio(j, n)), vr))
    except PoolDomainError as exc:
        raise _Usage(str(exc))
    for j, n, kappa, vr in rows:
        print(f"kappa j={j} n={n} value={kappa:.6g} variance_ratio={vr:.6g}")
    out = _out_path(args, "kappa.csv")
    _write_csv(out, KAPPA_CSV_COLUMNS, rows)
    print(f"kappa wrote {out} ({len(rows)} rows)")
    if args.plot:
        from . import plots

        dict_rows = [dict(zip(KAPPA_CSV_COLUMNS, r)) for r in rows]
        print(f"kappa wrote {plots.kappa_figure(dict_rows, _plot_path(out))}")
    return 0


# ------------------------------------------------------------ gradcheck


def cmd_gradcheck(args):
    from . import gradcheck as gc

    if args.tol <= 0:
        raise _Usage("--tol must be > 0")
    cases = gc.default_suite(dims=tuple(args.dims), seeds=tuple(args.seeds))
    reports = gc.run_suite(cases, step=args.step)
    out = _out_path(args, "gradcheck_report.csv")
    gc.write_report_csv(reports, out)
    worst = reports[0].max_rel_error if reports else 0.0
    status = "ok" if worst <= args.tol else "violation"
    print(f"gradcheck cases={len(reports)} worst={worst:.3e} tol={args.tol:g} status={status}")
    print(f"gradcheck wrote {out}")
    if args.plot:
        from . import plots

        print(f"gradcheck wrote {plots.gradcheck_figure(reports, _plot_path(out))}")
    return 0 if worst <= args.tol else 1


# ----------------------------------------------------------------- main


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    common.add_argument("--out", default=None, help="output CSV/matrix path")
    common.add_argument(
        "--threads",
        type=int,
        default=1,
        help="BLAS thread count, pinned before numpy loads (default 1)",
    )
    common.add_argument(
        "--plot", action="store_true", help="render a PNG figure next to the output file"
    )

    parser = argparse.ArgumentParser(
        prog="powerpool",
        description="benchmarks and checks for second-order pooling operators",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("time", parents=[common], help="time forward/backward passes")
    p.add_argument("--op", required=True, choices=_TIME_OPS)
    p.add_argument("--d", type=_int_list, default=[64], help="matrix sizes (comma list)")
    p.add_argument("--eta", type=_int_list, default=None, help="maxexp exponents")
    p.add_argument("--gamma", type=_int_list, default=None, help="integer gamma exponents")
    p.add_argument("--iters", type=_int_list, default=None, help="square-root iterations")
    p.add_argument("--reps", type=int, default=10, help="timed repetitions (>= 1)")
    p.add_argument("--warmup", type=int, default=3, help="discarded warmup repetitions")
    p.set_defaults(func=cmd_time)

    p = sub.add_parser(
        "pushforward", parents=[common], help="spectrum histograms and top-j variance"
    )
    p.add_argument("--law", default="beta(2, 5)", help="spectrum law, or 'identity'")
    p.add_argument("--op", default="maxexp", help="operator to push the law through")
    p.add_argument(
        "--param",
        "--eta",
        dest="param",
        type=_float_list,
        default=[5.0, 20.0, 80.0],
        help="operator parameter values",
    )
    p.add_argument("--samples", type=int, default=65536, help="scalar draws for histograms")
    p.add_argument("--trials", type=int, default=512, help="spectra for the variance study")
    p.add_argument("--d", type=int, default=32, help="eigenvalues per spectrum draw")
    p.add_argument("--topj", type=int, default=5, help="leading eigenvalues to track")
    p.add_argument(
        "--compare-hdp",
        type=float,
        default=None,
        metavar="T",
        help="also compare maxexp(eta(T)) against heat diffusion at time T",
    )
    p.set_defaults(func=cmd_pushforward)

    p = sub.add_parser("bounds", parents=[common], help="verify diffusion bound gaps")
    p.add_argument("--eta", type=_float_list, default=None, help="exponents to probe")
    p.add_argument("--t", type=_float_list, default=None, help="diffusion times to probe")
    p.add_argument("--lambda-points", type=int, default=400, help="eigenvalue grid size")
    p.add_argument(
        "--inject",
        action="store_true",
        help="test mode: scale the time map by 1.5 to force violations",
    )
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("pool", parents=[common], help="pool a feature file")
    p.add_argument("--input", required=True, help="feature block file")
    p.add_argument(
        "--engine", choices=("elementwise", "spectral", "fast"), default="elementwise"
    )
    p.add_argument("--pnop", default="identity", help="power normalization operator")
    p.add_argument("--param", type=float, default=1.0, help="operator parameter")
    p.add_argument("--eps", type=float, default=1e-6, help="regularizing constant")
    p.add_argument("--beta", type=float, default=0.0, help="centering strength in [0, 1]")
    p.add_argument("--coord-pivots", type=int, default=None, help="coordinate pivot count")
    p.add_argument("--coord-bandwidth", type=float, default=0.5)
    p.add_argument("--coord-weight", type=float, default=1.0)
    p.add_argument("--width", type=int, default=None, help="raster width (with coords)")
    p.add_argument("--height", type=int, default=None, help="raster height (with coords)")
    p.set_defaults(func=cmd_pool)

    p = sub.add_parser("kappa", parents=[common], help="support/variance ratio tables")
    p.add_argument("--j", type=_int_list, default=[0, 1, 2, 3, 4, 5, 10, 20], help="shot counts")
    p.add_argument("--n", type=_int_list, default=[1, 5, 25], help="co-occurrence counts")
    p.set_defaults(func=cmd_kappa)

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference audit")
    p.add_argument("--tol", type=float, default=1e-4, help="max relative error allowed")
    p.add_argument("--dims", type=_int_list, default=[4, 6], help="matrix sizes")
    p.add_argument("--seeds", type=_int_list, default=[0, 1, 2, 3, 4], help="case seeds")
    p.add_argument("--step", type=float, default=None, help="finite-difference step")
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.threads < 1:
            raise _Usage("--threads must be >= 1")
        _pin_threads(args.threads)
        return args.func(args)
    except _Usage as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except _Fail as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        # library-level domain/format/convergence problems map to exit 1;
        # the import is deferred so plain parsing never pulls in numpy
        from .matcore import ConvergenceError, MatrixFormatError, PoolDomainError

        if isinstance(
            exc, (ConvergenceError, MatrixFormatError, PoolDomainError, OSError)
        ):
            print(f"error: {exc}", file=sys.stderr)
            return 1
        raise


if __name__ == "__main__":
    sys.exit(main())
