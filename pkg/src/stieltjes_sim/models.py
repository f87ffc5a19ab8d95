"""Built-in bacteria-tank scenario with closed-form oracles.

An open water tank loses level to evaporation during daylight and is
refilled every second morning in proportion to the bacteria count; the
bacteria follow a logistic law whose carrying capacity N depends on the
water level.  With days on [2k, 2k+1] and nights on [2k+1, 2k+2] the
natural driver for the water component is

    g(t) = (number of refill times strictly below t)
         + integral from 0 to t of max(sin(pi s), 0) ds,

left-continuous, flat at night, steepest at midday, with unit jumps at
t = 2, 4, 6, ...  The system for y = (p, w) is

    p' = r p (N(w) - p)                (driven by the identity)
    w'_g = -c off refills              (driven by g)
    w(2k+) = w(2k) + min(floor(a p(2k)) w(2k), 2L - w(2k))

so w(2k+) = min((1 + floor(a p(2k))) w(2k), 2L) <= 2L always.

For the floor carrying capacity the exact trajectory is available in
closed form: the water level between refills is

    W(t) = anchor_k - c (S(t) - S(2k)),   S = the sin+ antiderivative,

and the population is a chain of logistic segments, one per constancy
interval of floor(W), each solvable exactly.  These oracles back the
acceptance tests; the solver never sees them.

The functional variant replaces the refill count floor(a p(2k)) by
floor(a * integral of p over the preceding cycle), read off a frozen
trajectory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import expr as ex
from ._quadrature import adaptive_simpson
from .errors import (
    InvalidParamsError,
    MissingAnchorsError,
    SegmentNotFoundError,
    StieltjesSimError,
)
from .extremal import Bracket, FunctionalField
from .integrator import AcPart, Integrator, Jump, VectorIntegrator
from .regulated import RegulatedGrid
from .solver import Field, SolveReport, solve_mde

__all__ = [
    "BacteriaParams",
    "sinplus_antiderivative",
    "bacteria_g",
    "identity_integrator",
    "bacteria_system",
    "bacteria_build",
    "bacteria_W",
    "bacteria_W_right",
    "bacteria_p_closed_form",
    "bacteria_level_crossings",
    "bacteria_functional_build",
    "bacteria_reference",
    "BacteriaReference",
    "run_bacteria",
]

TWO_OVER_PI = 2.0 / math.pi

# expression form of the driver's continuous part; day/night kinks at integers
_G_PRIMITIVE = "(2/pi)*floor(t/2) + (1 - cos(pi*min(t - 2*floor(t/2), 1)))/pi"
_G_DENSITY = "max(sin(pi*t), 0)"


@dataclass(frozen=True)
class BacteriaParams:
    """Tank and population parameters.

    N_spec selects the carrying-capacity map of the water level:
    "floor" (the piecewise-constant headline case), ("linear", slope),
    an expression string in the variable w, or any callable.  It must be
    nondecreasing; that is sampled at construction.
    """

    L: float = 10.0
    c: float = math.pi
    a: float = 1.0 / 7.0
    r: float = 1.0
    p0: float = 5.0
    T: float = 14.0
    N_spec: object = "floor"

    def __post_init__(self):
        for name in ("L", "c", "r", "p0", "T"):
            if not getattr(self, name) > 0:
                raise InvalidParamsError(f"{name} must be positive")
        if self.a < 0:
            raise InvalidParamsError(
                "a must be nonnegative (refill monotonicity needs it)"
            )
        fn = resolve_N(self.N_spec)
        samples = np.linspace(0.0, 2.0 * self.L, 256)
        vals = [fn(float(w)) for w in samples]
        if any(b < a - 1e-12 for a, b in zip(vals, vals[1:])):
            raise InvalidParamsError("carrying capacity N must be nondecreasing")


def resolve_N(spec) -> Callable[[float], float]:
    if spec == "floor":
        return lambda w: float(math.floor(w))
    if isinstance(spec, tuple) and len(spec) == 2 and spec[0] == "linear":
        slope = float(spec[1])
        return lambda w: slope * w
    if isinstance(spec, str):
        ast = ex.parse(spec)
        return lambda w: ex.evaluate(ast, {"w": w})
    if callable(spec):
        return spec
    raise InvalidParamsError(f"cannot interpret carrying capacity spec {spec!r}")


def _is_floor(spec) -> bool:
    return spec == "floor"


def sinplus_antiderivative(t: float) -> float:
    """S(t) = integral of max(sin(pi s), 0) from 0 to t, exactly."""
    if t < 0:
        raise ValueError("model time starts at 0")
    cycles = math.floor(t / 2.0)
    s = t - 2.0 * cycles
    partial = (1.0 - math.cos(math.pi * min(s, 1.0))) / math.pi
    return cycles * TWO_OVER_PI + partial


def identity_integrator(t0: float, t1: float) -> Integrator:
    return Integrator(t0, t1, AcPart.identity())


def bacteria_g(T: float) -> Integrator:
    """The water driver on [0, T]: sin+ primitive plus unit refill jumps."""
    kinks = [float(k) for k in range(1, math.ceil(T))]
    jumps = [Jump(2.0 * k, 1.0) for k in range(1, int(math.floor(T / 2.0)) + 1)]
    ac = AcPart.from_primitive(_G_PRIMITIVE, kinks=kinks, density=_G_DENSITY)
    return Integrator(0.0, T, ac, jumps)


def bacteria_system(params: BacteriaParams) -> tuple[Field, VectorIntegrator, list]:
    """Field, drivers and initial state for the plain (non-functional) model."""
    N_fn = resolve_N(params.N_spec)
    r, c, a, L = params.r, params.c, params.a, params.L

    def f_pop(t, y):
        return r * y[0] * (N_fn(y[1]) - y[0])

    def f_water(t, y):
        return -c

    def f_refill(t, y):
        return min(math.floor(a * y[0]) * y[1], 2.0 * L - y[1])

    field = Field([f_pop, f_water], [None, f_refill])
    vg = VectorIntegrator([identity_integrator(0.0, params.T), bacteria_g(params.T)])
    return field, vg, [params.p0, params.L]


# --- water-level oracle -------------------------------------------------------


def _cycle_index(t: float) -> int:
    """k with t in (2k, 2k+2]; the first cycle [0, 2] is k = 0."""
    return max(0, math.ceil(t / 2.0) - 1)


def _w_anchors(
    params: BacteriaParams, k: int, p_at_refills: Sequence[float]
) -> list[float]:
    """Post-refill anchors a_0 .. a_k; a_j needs p((2j)) for j >= 1."""
    if len(p_at_refills) < k:
        raise MissingAnchorsError(2.0 * k, k)
    anchors = [params.L]
    for j in range(1, k + 1):
        w_left = anchors[j - 1] - params.c * TWO_OVER_PI
        refill = (1.0 + math.floor(params.a * p_at_refills[j - 1])) * w_left
        anchors.append(min(refill, 2.0 * params.L))
    return anchors


def bacteria_W(
    params: BacteriaParams, t: float, p_at_refills: Sequence[float] = ()
) -> float:
    """Exact water level at time t.

    Continuous between refills: W(t) = anchor_k - c (S(t) - S(2k)), which
    drops by 2c/pi per day and is constant at night.  For t beyond the
    first cycle the refill recursion needs the population at the refill
    times, supplied as p_at_refills = [p(2), p(4), ...].
    """
    if not 0.0 <= t <= params.T:
        raise ValueError(f"t={t} outside [0, {params.T}]")
    k = _cycle_index(t)
    anchors = _w_anchors(params, k, p_at_refills)
    return anchors[k] - params.c * (
        sinplus_antiderivative(t) - sinplus_antiderivative(2.0 * k)
    )


def bacteria_W_right(
    params: BacteriaParams, t: float, p_at_refills: Sequence[float] = ()
) -> float:
    """Right limit of the water level; differs from W only at refill times."""
    value = bacteria_W(params, t, p_at_refills)
    if t < params.T and t > 0 and t == 2.0 * round(t / 2.0):
        k = int(round(t / 2.0))
        anchors = _w_anchors(params, k, p_at_refills)
        return anchors[k]
    return value


# --- population oracle --------------------------------------------------------


def _logistic_step(p_i: float, N: float, r: float, dt: float) -> float:
    """Exact solution of p' = r p (N - p) after time dt from p_i.

    Algebraically identical to the quotient-of-exponentials closed form;
    the N = 0 degenerate case solves p' = -r p^2 instead.
    """
    if dt == 0.0:
        return p_i
    if N == 0.0:
        return p_i / (1.0 + r * p_i * dt)
    return N / (1.0 + (N / p_i - 1.0) * math.exp(-N * r * dt))


def bacteria_p_closed_form(
    params: BacteriaParams, segments: Sequence[tuple[float, float]], t: float
) -> float:
    """Segment-wise exact population for the floor carrying capacity.

    segments lists (t_i, N_i) with N_i the constant value of floor(W) on
    (t_i, t_{i+1}]; anchors p_i are propagated left to right from p0, so
    the value is continuous across segment joins.
    """
    if not segments:
        raise SegmentNotFoundError(t)
    starts = [s[0] for s in segments]
    if t < starts[0] or t > params.T:
        raise SegmentNotFoundError(t)
    p = params.p0
    for i, (t_i, N_i) in enumerate(segments):
        if t == t_i:
            return p
        t_next = segments[i + 1][0] if i + 1 < len(segments) else params.T
        if t <= t_next:
            return _logistic_step(p, N_i, params.r, t - t_i)
        p = _logistic_step(p, N_i, params.r, t_next - t_i)
    raise SegmentNotFoundError(t)


# --- level crossings ------------------------------------------------------------


def _bisect_level(fn, lo: float, hi: float, level: float, tol: float = 1e-10) -> float:
    """Bisection for fn(t) = level on [lo, hi]; fn continuous, sign change given."""
    f_lo = fn(lo) - level
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        f_mid = fn(mid) - level
        if (f_mid > 0) == (f_lo > 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def bacteria_level_crossings(
    params: BacteriaParams, w_grid: RegulatedGrid, tol: float = 1e-10
) -> list[float]:
    """All times where floor(w) changes, located to tol between grid nodes.

    Nodes whose jump crosses one or more integer levels (refills) count
    once; inside each cell the continuous interpolation is bisected for
    every integer level it passes through, including an exact touch at
    the cell's right end.
    """
    out: set[float] = set()
    nodes, values, posts = w_grid.nodes, w_grid.values, w_grid.posts
    for j in range(len(nodes)):
        if math.floor(values[j]) != math.floor(posts[j]):
            out.add(float(nodes[j]))
    for j in range(len(nodes) - 1):
        a, b = float(posts[j]), float(values[j + 1])
        if a == b:
            continue
        lo_t, hi_t = float(nodes[j]), float(nodes[j + 1])
        if a > b:  # decreasing: crossings at integers n with b <= n < a
            n = math.floor(a) if math.floor(a) < a else int(a) - 1
            while n >= b:
                out.add(_bisect_level(w_grid.right, lo_t, hi_t, float(n), tol))
                n -= 1
        else:  # increasing: integers n with a < n <= b
            n = math.floor(a) + 1
            while n <= b:
                out.add(_bisect_level(w_grid.right, lo_t, hi_t, float(n), tol))
                n += 1
    return sorted(out)


# --- closed-form trajectory reference (floor capacity) ---------------------------


def _day_crossings(anchor: float, c: float, day_start: float) -> list[tuple[float, int]]:
    """Times in (day_start, day_start + 1] where W passes integer levels.

    During a day W drops from anchor by 2c/pi; the crossing of level n
    solves (1 - cos(pi x)) / pi = (anchor - n) / c on the day, inverted
    with arccos.  The anchor level itself is excluded (the segment starts
    there); an exact touch at the day's end is included.
    """
    out = []
    drop = 2.0 * c / math.pi
    n = math.floor(anchor) if math.floor(anchor) < anchor else int(anchor) - 1
    lowest = anchor - drop
    while n >= lowest - 1e-13:
        x = (anchor - n) / c
        arg = min(1.0, max(-1.0, 1.0 - math.pi * x))
        out.append((day_start + math.acos(arg) / math.pi, n))
        n -= 1
    return out


@dataclass(frozen=True)
class BacteriaReference:
    """Closed-form trajectory for the floor carrying capacity.

    boundaries/segment_N describe the constancy intervals of floor(W);
    p_anchors holds the exact population at each boundary; refill_p the
    population at the refill times (the anchors the W recursion needs).
    """

    params: BacteriaParams
    boundaries: tuple[float, ...]
    segment_N: tuple[float, ...]
    p_anchors: tuple[float, ...]
    refill_p: tuple[float, ...]
    w_anchors: tuple[float, ...]
    crossings: tuple[float, ...]

    @property
    def segments(self) -> list[tuple[float, float]]:
        return list(zip(self.boundaries[:-1], self.segment_N))

    def W(self, t: float) -> float:
        return bacteria_W(self.params, t, self.refill_p)

    def W_right(self, t: float) -> float:
        return bacteria_W_right(self.params, t, self.refill_p)

    def p(self, t: float) -> float:
        return bacteria_p_closed_form(self.params, self.segments, t)


def bacteria_reference(params: BacteriaParams) -> BacteriaReference:
    """March the exact solution cycle by cycle (floor capacity only)."""
    if not _is_floor(params.N_spec):
        raise InvalidParamsError(
            "the closed-form trajectory needs the floor carrying capacity"
        )
    L, c, a, r, T = params.L, params.c, params.a, params.r, params.T
    boundaries: list[float] = [0.0]
    segment_N: list[float] = []
    p_anchors: list[float] = [params.p0]
    refill_p: list[float] = []
    w_anchors: list[float] = [L]
    crossings: list[float] = []

    k = 0
    anchor = L
    while 2.0 * k < T:
        start = 2.0 * k
        end = min(start + 2.0, T)
        cuts = [t for t, _n in _day_crossings(anchor, c, start) if start < t < end]
        crossings.extend(cuts)
        for b in [*cuts, end]:
            mid = 0.5 * (boundaries[-1] + b)
            w_mid = anchor - c * (
                sinplus_antiderivative(mid) - sinplus_antiderivative(start)
            )
            N_i = float(math.floor(w_mid))
            p_next = _logistic_step(p_anchors[-1], N_i, r, b - boundaries[-1])
            segment_N.append(N_i)
            p_anchors.append(p_next)
            boundaries.append(b)
        if end == start + 2.0 and end < T:
            p_refill = p_anchors[-1]
            refill_p.append(p_refill)
            w_left = anchor - c * TWO_OVER_PI
            anchor = min((1.0 + math.floor(a * p_refill)) * w_left, 2.0 * L)
            w_anchors.append(anchor)
        k += 1

    return BacteriaReference(
        params,
        tuple(boundaries),
        tuple(segment_N),
        tuple(p_anchors),
        tuple(refill_p),
        tuple(w_anchors),
        tuple(crossings),
    )


# --- upper-solution construction and the full build --------------------------------


@dataclass(frozen=True)
class _BetaReference:
    """Water/population data for the exponential comparison trajectory.

    The population solves p' = r p N(W), i.e. p = p0 exp(r * cum(t)) with
    cum the running integral of N along the water level; refills use this
    faster-growing population, so the water path differs from the
    solution oracle's.
    """

    params: BacteriaParams
    piece_start: tuple[float, ...]
    piece_end: tuple[float, ...]
    piece_N: tuple[float, ...]  # nan when N is not piecewise constant
    piece_cum: tuple[float, ...]  # integral of N(W) up to piece start
    refill_p: tuple[float, ...]
    crossings: tuple[float, ...]

    def cum(self, t: float) -> float:
        idx = int(np.searchsorted(np.array(self.piece_start), t, side="right")) - 1
        idx = max(0, min(idx, len(self.piece_start) - 1))
        t_i = self.piece_start[idx]
        base = self.piece_cum[idx]
        if t == t_i:
            return base
        if not math.isnan(self.piece_N[idx]):
            return base + self.piece_N[idx] * (t - t_i)
        N_fn = resolve_N(self.params.N_spec)
        return base + adaptive_simpson(
            lambda s: N_fn(bacteria_W(self.params, s, self.refill_p)),
            t_i,
            t,
            tol=1e-12,
        )

    def p(self, t: float) -> float:
        return self.params.p0 * math.exp(self.params.r * self.cum(t))

    def W(self, t: float) -> float:
        return bacteria_W(self.params, t, self.refill_p)

    def W_right(self, t: float) -> float:
        return bacteria_W_right(self.params, t, self.refill_p)


def _beta_reference(params: BacteriaParams) -> _BetaReference:
    L, c, a, r, T = params.L, params.c, params.a, params.r, params.T
    floor_N = _is_floor(params.N_spec)
    N_fn = resolve_N(params.N_spec)

    piece_start: list[float] = []
    piece_end: list[float] = []
    piece_N: list[float] = []
    piece_cum: list[float] = []
    refill_p: list[float] = []
    crossings: list[float] = []

    cum = 0.0
    anchor = L
    k = 0
    while 2.0 * k < T:
        start = 2.0 * k
        end = min(start + 2.0, T)
        if floor_N:
            cuts = [t for t, _n in _day_crossings(anchor, c, start) if start < t < end]
            crossings.extend(cuts)
        else:
            # no level structure; just keep the day/night boundary as a piece cut
            cuts = [t for t in (start + 1.0,) if start < t < end]
        prev = start
        for b in [*cuts, end]:
            piece_start.append(prev)
            piece_end.append(b)
            piece_cum.append(cum)
            mid = 0.5 * (prev + b)
            w_mid = anchor - c * (
                sinplus_antiderivative(mid) - sinplus_antiderivative(start)
            )
            if floor_N:
                N_i = float(math.floor(w_mid))
                cum += N_i * (b - prev)
            else:
                N_i = float("nan")
                cum += adaptive_simpson(
                    lambda s: N_fn(
                        anchor
                        - c * (sinplus_antiderivative(s) - sinplus_antiderivative(start))
                    ),
                    prev,
                    b,
                    tol=1e-12,
                )
            piece_N.append(N_i)
            prev = b
        if end == start + 2.0 and end < T:
            p_refill = params.p0 * math.exp(r * cum)
            refill_p.append(p_refill)
            w_left = anchor - c * TWO_OVER_PI
            anchor = min((1.0 + math.floor(a * p_refill)) * w_left, 2.0 * L)
        k += 1

    return _BetaReference(
        params,
        tuple(piece_start),
        tuple(piece_end),
        tuple(piece_N),
        tuple(piece_cum),
        tuple(refill_p),
        tuple(crossings),
    )


def bacteria_build(
    params: BacteriaParams, mesh: int = 2000
) -> tuple[Field, VectorIntegrator, list, Bracket]:
    """Field, drivers, initial state and the bracket (alpha, beta) as grids.

    alpha is identically (0, 0).  beta couples the exponential population
    bound p0 exp(r int N(W)) with its own water path W; both are evaluated
    from closed forms on the solver mesh (union of a uniform mesh, the
    refill events, the day/night kinks and beta's level crossings).
    """
    field, vg, y0 = bacteria_system(params)
    beta_ref = _beta_reference(params)
    T = params.T
    pieces = [
        np.linspace(0.0, T, mesh + 1),
        np.array(vg.merged_events(0.0, T)),
        np.array([k for k in vg.all_kinks() if 0.0 < k < T]),
        np.array([t for t in beta_ref.crossings if 0.0 < t < T]),
    ]
    nodes = np.unique(np.concatenate([p for p in pieces if p.size]))

    beta_p_vals = np.array([beta_ref.p(float(t)) for t in nodes])
    beta_w_vals = np.array([beta_ref.W(float(t)) for t in nodes])
    beta_w_posts = np.array([beta_ref.W_right(float(t)) for t in nodes])
    beta_w_posts[-1] = beta_w_vals[-1]

    zeros = RegulatedGrid(nodes, np.zeros(len(nodes)))
    alphas = (zeros, zeros)
    betas = (
        RegulatedGrid(nodes, beta_p_vals),
        RegulatedGrid(nodes, beta_w_vals, beta_w_posts),
    )
    return field, vg, y0, Bracket(alphas, betas)


def bacteria_functional_build(params: BacteriaParams) -> FunctionalField:
    """Refill size driven by the frozen population's integral over the cycle.

    At t = 2n the refill factor is floor(a * integral of the frozen p over
    [2(n-1), 2n]) (trapezoid rule on the frozen grid); off refills the
    water just evaporates.  Requires a >= 0 so that bigger frozen
    trajectories never shrink the refill.
    """
    N_fn = resolve_N(params.N_spec)
    r, c, a, L = params.r, params.c, params.a, params.L

    def f_pop(t, y, gamma):
        return r * y[0] * (N_fn(y[1]) - y[0])

    def f_water(t, y, gamma):
        return -c

    def f_refill(t, y, gamma):
        n = int(round(t / 2.0))
        day_integral = gamma[0].trapezoid(2.0 * (n - 1), 2.0 * n)
        return min(math.floor(a * day_integral) * y[1], 2.0 * L - y[1])

    return FunctionalField([f_pop, f_water], [None, f_refill])


# --- solve wrapper with oracle-guided event injection --------------------------------


def run_bacteria(
    params: BacteriaParams,
    scheme: str = "rk4_density",
    mesh: int = 4000,
    tol: float = 1e-9,
    with_residual: bool = False,
) -> tuple[SolveReport, BacteriaReference | None]:
    """Solve the tank system; for the floor capacity, inject level crossings.

    The crossing times come from the closed-form reference so every mesh
    cell sees a smooth right-hand side; the reference is also returned for
    oracle comparisons (None for non-floor capacities).  Water bounds
    0 <= w <= 2L are asserted on the result.
    """
    field, vg, y0 = bacteria_system(params)
    ref = bacteria_reference(params) if _is_floor(params.N_spec) else None
    extra = ref.crossings if ref is not None else ()
    report = solve_mde(
        field,
        vg,
        y0,
        (0.0, params.T),
        scheme=scheme,
        mesh=mesh,
        extra_events=extra,
        tol=tol,
        with_residual=with_residual,
    )
    w = report.solution[1]
    lo = min(float(np.min(w.values)), float(np.min(w.posts)))
    hi = max(float(np.max(w.values)), float(np.max(w.posts)))
    if lo < -1e-9 or hi > 2.0 * params.L + 1e-9:
        raise StieltjesSimError(
            f"water level left [0, 2L]: range [{lo}, {hi}] with 2L={2 * params.L}"
        )
    return report, ref
