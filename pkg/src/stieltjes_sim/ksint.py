"""Kurzweil-Stieltjes integrals against validated drivers.

For a left-continuous nondecreasing driver the integral splits exactly into

    int_u^v f dg  =  int_u^v f dG_c  +  sum over jump times tau in [u, v)
                                        of f(tau) * jump size,

and the code keeps the two parts separate: jump contributions are plain
products (exact to the last bit), the continuous part goes through
adaptive quadrature with subdivision at declared kinks.  A jump sitting
exactly at v is excluded; one at u is included.  This half-open convention
is what makes indefinite integrals left-continuous.

Integrands may be expression ASTs, regulated grids, plain callables, or an
Integrand wrapper carrying one-sided evaluation plus known discontinuity
points (needed when a trajectory composed with a field is integrated).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import expr as ex
from ._quadrature import adaptive_simpson, adaptive_stieltjes, with_splits
from .errors import MeshMissingJumpError, ReversedIntervalError
from .integrator import Integrator
from .regulated import RegulatedGrid

__all__ = ["Integrand", "ks_integrate", "indefinite_integral", "hake_check", "HakeReport"]


class Integrand:
    """Evaluator with one-sided semantics and declared discontinuities.

    call(t) is the function value (left limit at discontinuities), right(t)
    the right limit; splits lists times where the integrand may jump or
    kink, so the quadrature can cut there.
    """

    def __init__(
        self,
        call: Callable[[float], float],
        right: Callable[[float], float] | None = None,
        splits: Sequence[float] = (),
    ):
        self._call = call
        self._right = right if right is not None else call
        self.splits = tuple(float(s) for s in splits)

    def __call__(self, t: float) -> float:
        return self._call(t)

    def right(self, t: float) -> float:
        return self._right(t)


def as_integrand(f) -> Integrand:
    """Normalise expression / grid / callable inputs to an Integrand."""
    if isinstance(f, Integrand):
        return f
    if isinstance(f, RegulatedGrid):
        disc = [float(t) for t, v, p in zip(f.nodes, f.values, f.posts) if p != v]
        return Integrand(f.__call__, f.right, disc)
    if isinstance(f, (ex.Num, ex.Var, ex.Unary, ex.Binary, ex.Call)):
        fn = lambda t: ex.evaluate(f, {"t": t})
        return Integrand(fn)
    if callable(f):
        return Integrand(f)
    raise TypeError(f"cannot integrate object of type {type(f).__name__}")


def _piece_fn(f: Integrand, a: float, b: float) -> Callable[[float], float]:
    """Integrand restricted to [a, b] with one-sided values at the edges."""

    def fn(t: float) -> float:
        if t == a:
            return f.right(a)
        return f(t)

    return fn


def _continuous_part(
    f: Integrand, g: Integrator, u: float, v: float, tol: float
) -> float:
    """int_u^v f dG_c, splitting at kinks, jumps and integrand breaks."""
    if u == v or g.ac.kind == "none":
        return 0.0
    splits = set(g.ac.kinks) | set(g.jump_times_in(u, v)) | set(f.splits)
    pieces = with_splits(u, v, splits)
    tol_piece = tol / len(pieces)
    kind = g.ac.kind
    total = 0.0
    for a, b in pieces:
        fn = _piece_fn(f, a, b)
        if kind == "identity":
            total += adaptive_simpson(fn, a, b, tol_piece)
        elif kind == "density":
            d = g.ac.expr
            total += adaptive_simpson(
                lambda t: fn(t) * ex.evaluate(d, {"t": t}), a, b, tol_piece
            )
        else:  # primitive
            total += adaptive_stieltjes(fn, g.continuous_value, a, b, tol_piece)
    return total


def _jump_part(
    f: Integrand,
    g: Integrator,
    u: float,
    v: float,
    jump_values: Callable[[float], float] | None,
) -> float:
    jv = jump_values if jump_values is not None else f.__call__
    total = 0.0
    for tau in g.jump_times_in(u, v):
        total += jv(tau) * g.jump_at(tau)
    return total


def ks_integrate(
    f,
    g: Integrator,
    u: float,
    v: float,
    tol: float = 1e-9,
    jump_values: Callable[[float], float] | None = None,
) -> float:
    """int_u^v f dg; jumps in [u, v) enter as exact products.

    jump_values optionally overrides the evaluator used at jump times
    (solvers pass the jump branch of a field here).
    """
    g._check_domain(u)
    g._check_domain(v)
    if u > v:
        raise ReversedIntervalError(u, v)
    fi = as_integrand(f)
    return _continuous_part(fi, g, u, v, tol) + _jump_part(fi, g, u, v, jump_values)


def indefinite_integral(
    f,
    g: Integrator,
    t0: float,
    mesh: Sequence[float],
    tol: float = 1e-9,
    jump_values: Callable[[float], float] | None = None,
) -> RegulatedGrid:
    """h(t) = int_{t0}^t f dg on the given mesh, as a RegulatedGrid.

    The mesh must contain every jump time of g inside the window; at each
    such node the grid satisfies post - value = f(tau) * jump size exactly
    (a product, never quadrature), and delta_minus is identically zero.
    """
    nodes = np.unique(np.asarray(mesh, dtype=float))
    if nodes[0] != t0:
        raise ValueError(f"mesh must start at t0={t0}, got {nodes[0]}")
    node_set = set(nodes.tolist())
    for tau in g.jump_times_in(float(nodes[0]), float(nodes[-1])):
        if tau not in node_set:
            raise MeshMissingJumpError(tau)

    fi = as_integrand(f)
    jv = jump_values if jump_values is not None else fi.__call__
    m = len(nodes)
    values = np.empty(m)
    posts = np.empty(m)
    values[0] = 0.0
    tol_cell = tol / (m - 1)
    for j in range(m - 1):
        a, b = float(nodes[j]), float(nodes[j + 1])
        dg = g.jump_at(a)
        posts[j] = values[j] + (jv(a) * dg if dg != 0.0 else 0.0)
        values[j + 1] = posts[j] + _continuous_part(fi, g, a, b, tol_cell)
    posts[m - 1] = values[m - 1]
    return RegulatedGrid(nodes, values, posts)


@dataclass(frozen=True)
class HakeReport:
    approach: str
    full: float
    points: tuple[tuple[float, float, float], ...]  # (t_k, estimate, discrepancy)
    tol: float

    @property
    def passed(self) -> bool:
        return self.points[-1][2] < 10.0 * self.tol

    @property
    def final_discrepancy(self) -> float:
        return self.points[-1][2]


def hake_check(
    f,
    g: Integrator,
    u: float,
    v: float,
    approach: str = "right",
    seq_len: int = 12,
    tol: float = 1e-9,
) -> HakeReport:
    """Check the endpoint-limit characterisation of the integral.

    For approach='right' the estimates

        A_k = int_{t_k}^v f dg + f(u) (g(t_k) - g(u)),   t_k -> u+

    must converge to int_u^v f dg; symmetrically for approach='left' with
    correction f(v) (g(v) - g(t_k)) as t_k -> v-.  The report carries the
    whole sequence; it passes when the final discrepancy is below 10*tol.
    """
    if approach not in ("right", "left"):
        raise ValueError("approach must be 'right' or 'left'")
    if not v > u:
        raise ReversedIntervalError(u, v)
    fi = as_integrand(f)
    full = ks_integrate(fi, g, u, v, tol)
    span = v - u
    points = []
    for k in range(1, seq_len + 1):
        h = span * 0.5**k
        if approach == "right":
            tk = u + h
            est = ks_integrate(fi, g, tk, v, tol) + fi(u) * (g(tk) - g(u))
        else:
            tk = v - h
            est = ks_integrate(fi, g, u, tk, tol) + fi(v) * (g(v) - g(tk))
        points.append((tk, est, abs(est - full)))
    return HakeReport(approach, full, tuple(points), tol)
