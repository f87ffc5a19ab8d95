"""Deterministic adaptive quadrature primitives.

Two flavours are used package-wide:

  * adaptive_simpson: classic recursive Simpson with Richardson correction,
    for integrals against dt (identity or density-weighted integrands).
  * adaptive_stieltjes: a Simpson-like rule in which the cell weight is the
    increment of a continuous nondecreasing G, for integrals f dG when only
    G itself (not a density) is available in closed form.

Subdivision order is fixed (left before right, midpoint bisection), so
results are reproducible bit-for-bit.  Exhausting the depth budget raises
instead of silently returning a bad value.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

from .errors import ToleranceNotMetError

MAX_DEPTH = 30


def adaptive_simpson(
    fn: Callable[[float], float],
    a: float,
    b: float,
    tol: float,
    max_depth: int = MAX_DEPTH,
) -> float:
    """Integrate fn over [a, b] to absolute tolerance tol."""
    if a == b:
        return 0.0
    fa, fb = fn(a), fn(b)
    m = 0.5 * (a + b)
    fm = fn(m)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    return _simpson_rec(fn, a, b, fa, fm, fb, whole, tol, max_depth)


def _simpson_rec(fn, a, b, fa, fm, fb, whole, tol, depth):
    m = 0.5 * (a + b)
    lm = 0.5 * (a + m)
    rm = 0.5 * (m + b)
    flm, frm = fn(lm), fn(rm)
    left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
    right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
    err = left + right - whole
    if abs(err) <= 15.0 * tol:
        return left + right + err / 15.0
    if depth <= 0:
        raise ToleranceNotMetError(a, b, abs(err) / 15.0, tol)
    half = 0.5 * tol
    return _simpson_rec(fn, a, m, fa, flm, fm, left, half, depth - 1) + _simpson_rec(
        fn, m, b, fm, frm, fb, right, half, depth - 1
    )


def adaptive_stieltjes(
    fn: Callable[[float], float],
    G: Callable[[float], float],
    a: float,
    b: float,
    tol: float,
    max_depth: int = MAX_DEPTH,
) -> float:
    """Integrate fn dG over [a, b], G continuous and nondecreasing.

    Per cell the estimate is (f(a) + 4 f(m) + f(b))/6 * (G(b) - G(a)),
    which reduces to Simpson's rule when G is linear.  The difference
    between one- and two-cell estimates is used directly as the error
    bound (no Richardson add-back: the rule's order depends on G).
    """
    if a == b:
        return 0.0
    Ga, Gb = G(a), G(b)
    if Gb == Ga:
        # G is monotone, so a flat increment means a flat stretch
        return 0.0
    return _stieltjes_rec(fn, G, a, b, fn(a), fn(0.5 * (a + b)), fn(b), Ga, Gb, tol, max_depth)


def _cellw(fa, fm, fb, dG):
    return (fa + 4.0 * fm + fb) / 6.0 * dG


def _stieltjes_rec(fn, G, a, b, fa, fm, fb, Ga, Gb, tol, depth):
    m = 0.5 * (a + b)
    Gm = G(m)
    lm = 0.5 * (a + m)
    rm = 0.5 * (m + b)
    flm, frm = fn(lm), fn(rm)
    whole = _cellw(fa, fm, fb, Gb - Ga)
    left = _cellw(fa, flm, fm, Gm - Ga)
    right = _cellw(fm, frm, fb, Gb - Gm)
    err = left + right - whole
    if abs(err) <= tol:
        return left + right
    if depth <= 0:
        raise ToleranceNotMetError(a, b, abs(err), tol)
    half = 0.5 * tol
    return _stieltjes_rec(
        fn, G, a, m, fa, flm, fm, Ga, Gm, half, depth - 1
    ) + _stieltjes_rec(fn, G, m, b, fm, frm, fb, Gm, Gb, half, depth - 1)


def with_splits(
    a: float, b: float, splits: Iterable[float]
) -> Sequence[tuple[float, float]]:
    """Pieces of [a, b] cut at the given interior points (sorted, deduped)."""
    inner = sorted({float(s) for s in splits if a < s < b})
    pts = [a, *inner, b]
    return list(zip(pts[:-1], pts[1:]))
