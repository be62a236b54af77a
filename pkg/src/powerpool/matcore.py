"""Symmetric-matrix foundations.

The working representation is a plain float64 numpy array. A "symmetric
matrix" in this package is a square array exactly equal to its transpose;
every constructor here (``sym``, ``random_spd``, the file loaders) returns
one, so downstream code never re-symmetrizes defensively.

Also provides the deterministic eigensolver wrapper used by every
spectral routine, a real-valued Lambert W evaluator (branches 0 and -1),
seeded SPD generation from named spectrum laws, and a bit-exact text
format for matrices and feature blocks.
"""

from __future__ import annotations

import math
import re
from typing import NamedTuple

import numpy as np

__all__ = [
    "PoolDomainError",
    "MatrixFormatError",
    "ConvergenceError",
    "SpectralDecomp",
    "rng_stream",
    "sym",
    "as_sym_matrix",
    "sym_eig",
    "lambert_w",
    "parse_spectrum_law",
    "draw_spectrum",
    "random_orthogonal",
    "spd_from_spectrum",
    "random_spd",
    "save_sym_matrix",
    "load_sym_matrix",
    "save_feature_block",
    "load_feature_block",
]


class PoolDomainError(ValueError):
    """Input violates an operator's domain precondition."""


class MatrixFormatError(ValueError):
    """Malformed matrix or feature-block text."""


class ConvergenceError(RuntimeError):
    """An iterative numerical routine failed to converge."""


def rng_stream(seed):
    """Deterministic random stream from a 64-bit seed.

    Backed by numpy's PCG64: identical seeds produce identical draw
    sequences across platforms.
    """
    return np.random.default_rng(seed)


def sym(a):
    """Symmetric part 0.5 * (A + A^T) as a float64 array."""
    a = np.asarray(a, dtype=float)
    return 0.5 * (a + a.T)


def as_sym_matrix(a, tol=1e-10):
    """Validate a square symmetric matrix and return an exact-symmetric copy.

    Parameters
    ----------
    a : array_like
        Square 2-D array with finite entries.
    tol : float
        Allowed asymmetry, relative to ``1 + max|a|``. Inputs built by
        this package are exactly symmetric; the tolerance only forgives
        rounding from outside callers.

    Raises
    ------
    MatrixFormatError
        If ``a`` is not square 2-D, has non-finite entries, or deviates
        from symmetry beyond ``tol``.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise MatrixFormatError(f"expected a square matrix, got shape {a.shape}")
    if a.shape[0] < 1:
        raise MatrixFormatError("matrix dimension must be >= 1")
    if not np.isfinite(a).all():
        raise MatrixFormatError("matrix contains non-finite entries")
    skew = np.abs(a - a.T).max()
    if skew > tol * (1.0 + np.abs(a).max()):
        raise MatrixFormatError(
            f"matrix is not symmetric (max |a - a.T| = {skew:.3e})"
        )
    return sym(a)


class SpectralDecomp(NamedTuple):
    """Eigendecomposition U diag(values) U^T with values non-increasing."""

    vectors: np.ndarray
    values: np.ndarray


def sym_eig(m):
    """Symmetric eigendecomposition with eigenvalues sorted non-increasing.

    Deterministic for a fixed input. Raises ConvergenceError if the
    underlying solver fails to converge (names the matrix dimension and
    scale, the only condition information available at that point).
    """
    m = as_sym_matrix(m)
    try:
        w, u = np.linalg.eigh(m)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(
            f"symmetric eigensolver did not converge for a {m.shape[0]}x{m.shape[0]} "
            f"matrix with Frobenius norm {np.linalg.norm(m):.3e}"
        ) from exc
    # eigh returns ascending order; the package contract is non-increasing
    return SpectralDecomp(vectors=np.ascontiguousarray(u[:, ::-1]), values=w[::-1].copy())


_INV_E = math.exp(-1.0)


def _lambert_halley(w, x, tol):
    # Halley iteration on f(w) = w e^w - x; cubic convergence from any
    # reasonable start, 50-step cap is far beyond what is ever needed.
    for _ in range(50):
        ew = math.exp(w)
        f = w * ew - x
        if abs(f) <= tol:
            return w
        wp1 = w + 1.0
        if wp1 == 0.0:
            w += 1e-8
            continue
        denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1)
        w -= f / denom
    if abs(w * math.exp(w) - x) <= tol:
        return w
    raise ConvergenceError(f"lambert_w failed to converge for x={x!r}")


def lambert_w(branch, x):
    """Real Lambert W on branch 0 or -1: solves W * exp(W) = x.

    Branch 0 needs x >= -1/e, branch -1 needs -1/e <= x < 0. The result
    satisfies |W e^W - x| <= 1e-12 * max(1, |x|).
    """
    if branch not in (0, -1):
        raise PoolDomainError(f"branch must be 0 or -1, got {branch!r}")
    x = float(x)
    if not math.isfinite(x):
        raise PoolDomainError(f"lambert_w requires finite x, got {x!r}")
    z = 1.0 + math.e * x  # distance above the branch point, up to rounding
    if z < -1e-12:
        raise PoolDomainError(f"x={x!r} is below the branch point -1/e")
    tol = 1e-13 * max(1.0, abs(x))

    if branch == 0:
        if x == 0.0:
            return 0.0
        if z <= 0.0:
            return -1.0
        p = math.sqrt(2.0 * z)
        if p < 1e-4:
            # series around the branch point; error O(p^4) is far below tol
            return -1.0 + p - p * p / 3.0 + 11.0 * p**3 / 72.0
        if x < -0.2:
            w = -1.0 + p - p * p / 3.0
        elif x < math.e:
            w = math.log1p(x) if x > -0.5 else x
        else:
            l1 = math.log(x)
            l2 = math.log(l1)
            w = l1 - l2 + l2 / l1
        return _lambert_halley(w, x, tol)

    # branch -1
    if x >= 0.0:
        raise PoolDomainError(f"branch -1 requires -1/e <= x < 0, got x={x!r}")
    if z <= 0.0:
        return -1.0
    p = math.sqrt(2.0 * z)
    if p < 1e-4:
        return -1.0 - p - p * p / 3.0 - 11.0 * p**3 / 72.0
    if x < -0.5 * _INV_E:
        w = -1.0 - p - p * p / 3.0
    else:
        # for x near 0^- the branch plunges; the double-log start is standard
        l1 = math.log(-x)
        w = l1 - math.log(-l1)
    return _lambert_halley(w, x, tol)


_LAW_RE = re.compile(r"^\s*(uniform|beta)\s*(?:\(([^)]*)\))?\s*$")


def parse_spectrum_law(law):
    """Normalize a spectrum-law description to a ('name', *params) tuple.

    Accepts "uniform", "uniform(lo,hi)", "beta(a,b)", or an
    already-normalized tuple.
    """
    if isinstance(law, tuple):
        name = law[0]
        if name == "uniform":
            lo, hi = (law[1], law[2]) if len(law) == 3 else (0.0, 1.0)
            return ("uniform", float(lo), float(hi))
        if name == "beta" and len(law) == 3:
            return ("beta", float(law[1]), float(law[2]))
        raise PoolDomainError(f"unknown spectrum law {law!r}")
    match = _LAW_RE.match(str(law))
    if not match:
        raise PoolDomainError(f"unknown spectrum law {law!r}")
    name, args = match.group(1), match.group(2)
    params = [float(v) for v in args.split(",")] if args else []
    if name == "uniform":
        if len(params) not in (0, 2):
            raise PoolDomainError("uniform law takes zero or two parameters")
        lo, hi = params if params else (0.0, 1.0)
        return ("uniform", lo, hi)
    if len(params) != 2:
        raise PoolDomainError("beta law requires two parameters, e.g. beta(2,5)")
    return ("beta", params[0], params[1])


def draw_spectrum(law, d, rng):
    """Draw d eigenvalues from a named law, floored at 1e-12.

    The floor keeps generated matrices strictly positive definite; it is
    far below every tolerance used in this package.
    """
    name, p1, p2 = parse_spectrum_law(law)
    if name == "uniform":
        vals = rng.uniform(p1, p2, size=d)
    else:
        vals = rng.beta(p1, p2, size=d)
    return np.maximum(vals, 1e-12)


def random_orthogonal(d, rng):
    """Haar-ish random orthogonal matrix via sign-fixed QR."""
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def spd_from_spectrum(values, basis):
    """Assemble basis @ diag(values) @ basis.T, exactly symmetric.

    ``basis`` should be orthogonal; ``values`` positive for an SPD
    result. No check is made, so tests can also build PSD or slightly
    indefinite matrices with known spectra.
    """
    values = np.asarray(values, dtype=float)
    basis = np.asarray(basis, dtype=float)
    return sym((basis * values) @ basis.T)


def random_spd(d, law, rng):
    """Seeded random SPD matrix with eigenvalues drawn from ``law``.

    Same (d, law, seed) always yields the same matrix.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    vals = draw_spectrum(law, d, rng)
    if d == 1:
        return np.array([[vals[0]]])
    return spd_from_spectrum(vals, random_orthogonal(d, rng))


# ---------------------------------------------------------------------------
# text I/O: SYMMAT / FEAT formats
#
# Line 1 is a header ("SYMMAT <d>" or "FEAT <K> <N>"), then one line per
# row with space-separated decimal values at 17 significant digits, which
# round-trips float64 bit-exactly. UTF-8, LF endings.


def _format_matrix_lines(header, rows):
    lines = [header]
    for row in rows:
        if not np.isfinite(row).all():
            raise MatrixFormatError("cannot serialize non-finite values")
        lines.append(" ".join(format(float(v), ".17g") for v in row))
    return "\n".join(lines) + "\n"


def _read_lines(path):
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read().split("\n")


def _parse_header(lines, tag, count):
    if not lines or not lines[0].strip():
        raise MatrixFormatError("line 1: missing header")
    toks = lines[0].split()
    if len(toks) != count + 1 or toks[0] != tag:
        raise MatrixFormatError(f"line 1: expected header '{tag}' with {count} size field(s)")
    sizes = []
    for t in toks[1:]:
        try:
            v = int(t)
        except ValueError:
            raise MatrixFormatError(f"line 1: bad size field {t!r}") from None
        if v < 1:
            raise MatrixFormatError(f"line 1: size must be >= 1, got {v}")
        sizes.append(v)
    return sizes


def _parse_rows(lines, n_rows, n_cols):
    data = np.empty((n_rows, n_cols))
    for i in range(n_rows):
        lineno = i + 2
        if i + 1 >= len(lines):
            raise MatrixFormatError(f"line {lineno}: file ends before row {i + 1} of {n_rows}")
        toks = lines[i + 1].split()
        if len(toks) != n_cols:
            raise MatrixFormatError(
                f"line {lineno}: expected {n_cols} values, found {len(toks)}"
            )
        for j, t in enumerate(toks):
            try:
                v = float(t)
            except ValueError:
                raise MatrixFormatError(f"line {lineno}: bad token {t!r}") from None
            if not math.isfinite(v):
                raise MatrixFormatError(f"line {lineno}: non-finite value {t!r}")
            data[i, j] = v
    for k in range(n_rows + 1, len(lines)):
        if lines[k].strip():
            raise MatrixFormatError(f"line {k + 1}: unexpected content after data rows")
    return data


def save_sym_matrix(path, m):
    """Write a symmetric matrix in the SYMMAT text format."""
    m = as_sym_matrix(m)
    text = _format_matrix_lines(f"SYMMAT {m.shape[0]}", m)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def load_sym_matrix(path):
    """Read a SYMMAT file; bit-exact inverse of save_sym_matrix."""
    lines = _read_lines(path)
    (d,) = _parse_header(lines, "SYMMAT", 1)
    data = _parse_rows(lines, d, d)
    mism = np.argwhere(data != data.T)
    if mism.size:
        i, j = mism[0]
        raise MatrixFormatError(
            f"line {i + 2}: matrix is not symmetric at entry ({i}, {j})"
        )
    return data


def save_feature_block(path, block):
    """Write a K x N feature block in the FEAT text format."""
    block = np.asarray(block, dtype=float)
    if block.ndim != 2 or block.shape[0] < 1 or block.shape[1] < 1:
        raise MatrixFormatError(
            f"feature block must be 2-D K x N, got shape {block.shape}"
        )
    text = _format_matrix_lines(f"FEAT {block.shape[0]} {block.shape[1]}", block)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def load_feature_block(path):
    """Read a FEAT file; bit-exact inverse of save_feature_block."""
    lines = _read_lines(path)
    k, n = _parse_header(lines, "FEAT", 2)
    return _parse_rows(lines, k, n)
