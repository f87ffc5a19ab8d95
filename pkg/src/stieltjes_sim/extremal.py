"""Lower/upper solution verification and extremal-solution approximation.

A bracket is a pair of trajectory tuples alpha <= beta.  Candidates are
verified against the defining integral inequalities on adjacent grid
cells (interval additivity extends the check to every subinterval with
grid endpoints) plus the one-sided jump corollaries at events.  The
structural conditions of the comparison theory (quasimonotonicity,
jump-map monotonicity, integrable domination) are spot-checked by seeded
sampling; they are not proven symbolically.

Extremal solutions inside a verified bracket are approximated by Picard
iteration of the truncated problem

    y^{k+1} = y0 + int f(s, clamp(y^k(s), alpha(s), beta(s))) dg,

starting from beta (greatest) or alpha (least), with every iterate
clamped back into the bracket.  The iteration is an approximation scheme;
its output is evidenced a posteriori by the residual of the final iterate
and by domination of independently verified lower/upper solutions.  The
functional variant freezes the trajectory argument and re-solves until
the frozen trajectory is a fixed point.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import expr as ex
from .errors import BracketViolationError, MeshMissingJumpError
from .integrator import VectorIntegrator
from .ksint import indefinite_integral, ks_integrate
from .regulated import RegulatedGrid
from .solver import Field, residual_norm, trajectory_integrand

__all__ = [
    "Bracket",
    "VerifyReport",
    "DominatingBound",
    "verify_lower",
    "verify_upper",
    "check_quasimonotone",
    "check_jump_monotone",
    "check_domination",
    "truncate_field",
    "extremal_solve",
    "ExtremalReport",
    "IterationStep",
    "FunctionalField",
    "functional_extremal",
    "FunctionalReport",
    "check_functional_monotone",
]

DEFAULT_VERIFY_TOL = 1e-8
DEFAULT_ITER_TOL = 1e-6


class Bracket:
    """Well-ordered pair of trajectory tuples on one shared node set."""

    def __init__(
        self,
        alphas: Sequence[RegulatedGrid],
        betas: Sequence[RegulatedGrid],
    ):
        alphas = tuple(alphas)
        betas = tuple(betas)
        if len(alphas) != len(betas) or not alphas:
            raise ValueError("alpha and beta must have the same positive length")
        nodes = alphas[0].nodes
        for g in (*alphas, *betas):
            if not np.array_equal(g.nodes, nodes):
                raise ValueError("all bracket grids must share one node set")
        for a, b in zip(alphas, betas):
            if np.any(a.values > b.values) or np.any(a.posts > b.posts):
                raise ValueError("bracket is not well ordered (alpha > beta somewhere)")
        self.alphas = alphas
        self.betas = betas
        self.nodes = nodes

    @property
    def n(self) -> int:
        return len(self.alphas)

    @property
    def t0(self) -> float:
        return float(self.nodes[0])

    @property
    def t1(self) -> float:
        return float(self.nodes[-1])

    def resample(self, new_nodes) -> "Bracket":
        nn = np.asarray(new_nodes, dtype=float)
        if np.array_equal(nn, self.nodes):
            return self
        return Bracket(
            [a.resample(nn) for a in self.alphas],
            [b.resample(nn) for b in self.betas],
        )

    def box_at(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array([a(t) for a in self.alphas])
        hi = np.array([b(t) for b in self.betas])
        return lo, hi

    def is_degenerate(self) -> bool:
        return all(a.sup_distance(b) == 0.0 for a, b in zip(self.alphas, self.betas))


@dataclass(frozen=True)
class VerifyReport:
    passed: bool
    worst_violation: float
    location: tuple | None  # (check kind, time or (u, v), component)
    samples_checked: int
    tolerance: float

    def as_dict(self) -> dict:
        return {
            "passed": self.passed,
            "worst_violation": self.worst_violation,
            "location": list(self.location) if self.location else None,
            "samples_checked": self.samples_checked,
            "tolerance": self.tolerance,
        }


@dataclass(frozen=True)
class DominatingBound:
    """Per-component nonnegative bounds M_i used by the domination check."""

    components: tuple  # callables t -> float

    @classmethod
    def from_exprs(cls, texts: Sequence[str]) -> "DominatingBound":
        asts = [ex.parse(t) for t in texts]
        return cls(tuple((lambda t, a=a: ex.evaluate(a, {"t": t})) for a in asts))

    @classmethod
    def from_constants(cls, values: Sequence[float]) -> "DominatingBound":
        return cls(tuple((lambda t, v=float(v): v) for v in values))

    def integrand(self, i: int) -> Callable[[float], float]:
        return self.components[i]


def _check_event_coverage(
    cand: Sequence[RegulatedGrid], vg: VectorIntegrator, nodes: np.ndarray
) -> list[float]:
    events = vg.merged_events(float(nodes[0]), float(nodes[-1]))
    node_set = set(nodes.tolist())
    for tau in events:
        if tau not in node_set:
            raise MeshMissingJumpError(tau)
    return events


class _Worst:
    """Track the largest violation and where it happened."""

    def __init__(self):
        self.value = float("-inf")
        self.location: tuple | None = None
        self.count = 0

    def update(self, violation: float, location: tuple) -> None:
        self.count += 1
        if violation > self.value:
            self.value = violation
            self.location = location

    def report(self, tol: float) -> VerifyReport:
        worst = 0.0 if self.count == 0 else self.value
        return VerifyReport(worst <= tol, worst, self.location, self.count, tol)


def _verify(cand, field, vg, y0, sign, tol, quad_tol):
    """sign=+1 for lower solutions, -1 for upper (flips every inequality)."""
    cand = tuple(cand)
    nodes = cand[0].nodes
    for g in cand[1:]:
        if not np.array_equal(g.nodes, nodes):
            raise ValueError("candidate grids must share one node set")
    _check_event_coverage(cand, vg, nodes)

    worst = _Worst()
    n = len(cand)
    t0 = float(nodes[0])
    for i in range(n):
        worst.update(sign * (cand[i](t0) - float(y0[i])), ("initial", t0, i))

    for i in range(n):
        gi = vg.components[i]
        integrand, jump_values = trajectory_integrand(field, i, cand)
        for j in range(len(nodes) - 1):
            u, v = float(nodes[j]), float(nodes[j + 1])
            lhs = float(cand[i].values[j + 1] - cand[i].values[j])
            rhs = ks_integrate(integrand, gi, u, v, quad_tol, jump_values=jump_values)
            worst.update(sign * (lhs - rhs), ("interval", (u, v), i))
            dg = gi.jump_at(u)
            if dg > 0.0:
                state = [c(u) for c in cand]
                jump_rhs = field.eval_jump(i, u, state) * dg
                worst.update(
                    sign * (cand[i].delta_plus(u) - jump_rhs), ("jump", u, i)
                )
    return worst.report(tol)


def verify_lower(
    cand: Sequence[RegulatedGrid],
    field: Field,
    vg: VectorIntegrator,
    y0: Sequence[float],
    tol: float = DEFAULT_VERIFY_TOL,
    quad_tol: float = 1e-9,
) -> VerifyReport:
    """Check alpha(t0) <= y0 and the increment inequalities of a lower solution.

    Adjacent-cell increments must not exceed the integral of the field
    along the candidate, and at every event the candidate's jump must not
    exceed the field's exact jump product.
    """
    return _verify(cand, field, vg, y0, +1, tol, quad_tol)


def verify_upper(
    cand: Sequence[RegulatedGrid],
    field: Field,
    vg: VectorIntegrator,
    y0: Sequence[float],
    tol: float = DEFAULT_VERIFY_TOL,
    quad_tol: float = 1e-9,
) -> VerifyReport:
    """Mirror of verify_lower with every inequality reversed."""
    return _verify(cand, field, vg, y0, -1, tol, quad_tol)


def check_quasimonotone(
    field: Field,
    bracket: Bracket,
    samples: int = 10_000,
    rng_seed: int = 0,
    tol: float = DEFAULT_VERIFY_TOL,
    vg: VectorIntegrator | None = None,
) -> VerifyReport:
    """Sampled quasimonotonicity: x <= y with x_i = y_i implies f_i(x) <= f_i(y).

    Draws times and ordered state pairs inside the bracket box.  When vg
    is supplied, the jump branches are additionally sampled at the event
    times where they fire.
    """
    if samples < 1:
        raise ValueError("samples must be at least 1")
    rng = np.random.default_rng(rng_seed)
    worst = _Worst()
    n = bracket.n
    t0, t1 = bracket.t0, bracket.t1

    def draw_pair(lo, hi, i):
        y = lo + rng.random(n) * (hi - lo)
        x = lo + rng.random(n) * (y - lo)
        x[i] = y[i]
        return x, y

    for _ in range(samples):
        t = t0 + rng.random() * (t1 - t0)
        lo, hi = bracket.box_at(t)
        i = int(rng.integers(n))
        x, y = draw_pair(lo, hi, i)
        worst.update(field.eval(i, t, x) - field.eval(i, t, y), ("sample", t, i))

    if vg is not None:
        per_event = max(8, samples // 100)
        for tau in vg.merged_events(t0, t1):
            lo, hi = bracket.box_at(tau)
            for i in range(n):
                if vg.components[i].jump_at(tau) <= 0.0:
                    continue
                for _ in range(per_event):
                    x, y = draw_pair(lo, hi, i)
                    worst.update(
                        field.eval_jump(i, tau, x) - field.eval_jump(i, tau, y),
                        ("event-sample", tau, i),
                    )
    return worst.report(tol)


def check_jump_monotone(
    field: Field,
    vg: VectorIntegrator,
    bracket: Bracket,
    u_samples: int = 64,
    eta_samples: int = 16,
    rng_seed: int = 0,
    tol: float = DEFAULT_VERIFY_TOL,
) -> VerifyReport:
    """At every event, u + f_i(tau, eta + (u - eta_i) e_i) * dg must be nondecreasing.

    phi is evaluated on a uniform u-grid spanning [alpha_i(tau), beta_i(tau)]
    for sampled eta inside the bracket box; adjacent decreases beyond tol
    are violations.  Vacuously passes without events.
    """
    rng = np.random.default_rng(rng_seed)
    worst = _Worst()
    n = bracket.n
    for tau in vg.merged_events(bracket.t0, bracket.t1):
        lo, hi = bracket.box_at(tau)
        for i in range(n):
            dg = vg.components[i].jump_at(tau)
            if dg <= 0.0:
                continue
            us = np.linspace(lo[i], hi[i], max(2, u_samples))
            for _ in range(max(1, eta_samples)):
                eta = lo + rng.random(n) * (hi - lo)
                phi = []
                for u in us:
                    state = eta.copy()
                    state[i] = u
                    phi.append(u + field.eval_jump(i, tau, state) * dg)
                for k in range(len(phi) - 1):
                    worst.update(phi[k] - phi[k + 1], ("event", tau, i))
    return worst.report(tol)


def check_domination(
    field: Field,
    vg: VectorIntegrator,
    bracket: Bracket,
    M: DominatingBound,
    tol: float = DEFAULT_VERIFY_TOL,
    eta_samples: int = 8,
    rng_seed: int = 0,
    quad_tol: float = 1e-9,
) -> VerifyReport:
    """|int f_i(t, eta(t)) dg_i| <= int M_i dg_i on adjacent cells, sampled eta.

    eta trajectories are nodewise convex combinations of the bracket
    endpoints (always including alpha and beta themselves).
    """
    rng = np.random.default_rng(rng_seed)
    nodes = bracket.nodes
    n = bracket.n

    for i in range(n):
        mi = M.integrand(i)
        for t in nodes[:: max(1, len(nodes) // 32)]:
            if mi(float(t)) < 0.0:
                raise ValueError(f"dominating bound M_{i + 1} is negative at t={t}")

    def combo(lam_row) -> list[RegulatedGrid]:
        out = []
        for k in range(n):
            a, b = bracket.alphas[k], bracket.betas[k]
            vals = a.values + lam_row * (b.values - a.values)
            posts = a.posts + lam_row * (b.posts - a.posts)
            posts[-1] = vals[-1]
            out.append(RegulatedGrid(nodes, vals, posts))
        return out

    etas = [list(bracket.alphas), list(bracket.betas)]
    for _ in range(max(0, eta_samples - 2)):
        etas.append(combo(rng.random(len(nodes))))

    worst = _Worst()
    for eta in etas:
        for i in range(n):
            gi = vg.components[i]
            integrand, jump_values = trajectory_integrand(field, i, eta)
            for j in range(len(nodes) - 1):
                u, v = float(nodes[j]), float(nodes[j + 1])
                lhs = abs(
                    ks_integrate(integrand, gi, u, v, quad_tol, jump_values=jump_values)
                )
                rhs = ks_integrate(M.integrand(i), gi, u, v, quad_tol)
                worst.update(lhs - rhs, ("interval", (u, v), i))
    return worst.report(tol)


def truncate_field(field: Field, bracket: Bracket) -> Field:
    """Clamped-argument field: f~(t, x) = f(t, clamp(x, alpha(t), beta(t))).

    Identical to f whenever x already lies inside the bracket, idempotent
    under repeated truncation.
    """
    alphas, betas = bracket.alphas, bracket.betas

    def clamp(t: float, y: Sequence[float]) -> list[float]:
        return [
            min(max(float(y[k]), alphas[k](t)), betas[k](t))
            for k in range(len(alphas))
        ]

    def make(fn):
        if fn is None:
            return None
        return lambda t, y: fn(t, clamp(t, y))

    return Field(
        [make(c) for c in field.components],
        [make(c) for c in field.jump_components],
    )


@dataclass(frozen=True)
class IterationStep:
    change: float
    escape: float
    ordered: bool


@dataclass(frozen=True)
class ExtremalReport:
    direction: str
    solution: tuple[RegulatedGrid, ...]
    iterations: int
    converged: bool
    trace: tuple[IterationStep, ...]
    monotone: bool
    residual: float
    node_count: int


def _escape(new_vals, new_posts, a: RegulatedGrid, b: RegulatedGrid) -> float:
    over = max(
        float(np.max(new_vals - b.values)), float(np.max(new_posts - b.posts))
    )
    under = max(
        float(np.max(a.values - new_vals)), float(np.max(a.posts - new_posts))
    )
    return max(0.0, over, under)


def extremal_solve(
    field: Field,
    vg: VectorIntegrator,
    y0: Sequence[float],
    bracket: Bracket,
    direction: str,
    mesh: int | None = None,
    tol: float = DEFAULT_ITER_TOL,
    max_iter: int = 60,
    quad_tol: float = 1e-9,
    with_residual: bool = True,
) -> ExtremalReport:
    """Approximate the greatest or least solution inside the bracket.

    Callers are responsible for the structural preconditions (verified
    lower/upper solutions, quasimonotonicity, jump monotonicity); the
    iteration itself only assumes a well-ordered bracket.  Non-convergence
    within max_iter is reported, not raised; an unclamped final iterate
    escaping the bracket by more than tol raises BracketViolationError.
    """
    if direction not in ("greatest", "least"):
        raise ValueError("direction must be 'greatest' or 'least'")
    t0, t1 = bracket.t0, bracket.t1
    pieces = [bracket.nodes, np.array(vg.merged_events(t0, t1))]
    pieces.append(np.array([k for k in vg.all_kinks() if t0 < k < t1]))
    if mesh is not None:
        pieces.append(np.linspace(t0, t1, mesh + 1))
    nodes = np.unique(np.concatenate([p for p in pieces if p.size]))
    bracket = bracket.resample(nodes)
    alphas, betas = bracket.alphas, bracket.betas
    n = bracket.n

    if bracket.is_degenerate():
        cur = list(alphas)
        residual = (
            residual_norm(field, vg, cur, tol=quad_tol)
            if with_residual
            else float("nan")
        )
        return ExtremalReport(
            direction, tuple(cur), 0, True, (), True, residual, len(nodes)
        )

    cur = list(betas if direction == "greatest" else alphas)
    trace: list[IterationStep] = []
    converged = False
    for _ in range(max_iter):
        new_vals = []
        new_posts = []
        escape = 0.0
        for i in range(n):
            integrand, jump_values = trajectory_integrand(
                field, i, cur, clamp=(alphas, betas)
            )
            h = indefinite_integral(
                integrand,
                vg.components[i],
                t0,
                nodes,
                tol=quad_tol,
                jump_values=jump_values,
            )
            vals = float(y0[i]) + h.values
            posts = float(y0[i]) + h.posts
            escape = max(escape, _escape(vals, posts, alphas[i], betas[i]))
            new_vals.append(vals)
            new_posts.append(posts)

        clamped = []
        change = 0.0
        ordered = True
        for i in range(n):
            vals = np.minimum(np.maximum(new_vals[i], alphas[i].values), betas[i].values)
            posts = np.minimum(np.maximum(new_posts[i], alphas[i].posts), betas[i].posts)
            g = RegulatedGrid(nodes, vals, posts)
            change = max(change, g.sup_distance(cur[i]))
            if direction == "greatest":
                if np.any(vals > cur[i].values + tol) or np.any(posts > cur[i].posts + tol):
                    ordered = False
            else:
                if np.any(vals < cur[i].values - tol) or np.any(posts < cur[i].posts - tol):
                    ordered = False
            clamped.append(g)
        trace.append(IterationStep(change, escape, ordered))
        cur = clamped
        if change < tol:
            converged = True
            break

    residual = (
        residual_norm(field, vg, cur, tol=quad_tol) if with_residual else float("nan")
    )
    final_escape = trace[-1].escape if trace else 0.0
    if final_escape > tol:
        raise BracketViolationError(final_escape, tol)
    return ExtremalReport(
        direction,
        tuple(cur),
        len(trace),
        converged,
        tuple(trace),
        all(s.ordered for s in trace),
        residual,
        len(nodes),
    )


class FunctionalField:
    """Right-hand side f(t, y(t), gamma) with a whole-trajectory argument."""

    def __init__(
        self,
        components: Sequence[Callable],
        jump_components: Sequence[Callable | None] | None = None,
    ):
        self.components = tuple(components)
        if jump_components is None:
            jump_components = (None,) * len(self.components)
        self.jump_components = tuple(jump_components)

    @property
    def n(self) -> int:
        return len(self.components)

    def freeze(self, gamma: tuple[RegulatedGrid, ...]) -> Field:
        comps = [
            (lambda t, y, fn=fn: fn(t, y, gamma)) for fn in self.components
        ]
        jumps = [
            (lambda t, y, fn=fn: fn(t, y, gamma)) if fn is not None else None
            for fn in self.jump_components
        ]
        return Field(comps, jumps)


@dataclass(frozen=True)
class OuterStep:
    change: float
    ordered: bool
    inner_iterations: int
    inner_converged: bool


@dataclass(frozen=True)
class FunctionalReport:
    direction: str
    solution: tuple[RegulatedGrid, ...]
    outer_iterations: int
    converged: bool
    trace: tuple[OuterStep, ...]
    monotone: bool
    residual: float


def functional_extremal(
    ffield: FunctionalField,
    vg: VectorIntegrator,
    y0: Sequence[float],
    bracket: Bracket,
    direction: str,
    outer_tol: float = DEFAULT_ITER_TOL,
    outer_max: int = 30,
    inner_tol: float | None = None,
    inner_max_iter: int = 60,
    mesh: int | None = None,
    quad_tol: float = 1e-9,
) -> FunctionalReport:
    """Outer fixed-point loop over the frozen-trajectory operator.

    Each outer step freezes gamma, computes the extremal solution of the
    frozen problem, and feeds it back; the iteration starts from beta for
    the greatest solution (alpha for the least) and stops when the frozen
    trajectory moves less than outer_tol.  Ordered-input/unordered-output
    steps are recorded as monotonicity breaches but do not abort.
    """
    if direction not in ("greatest", "least"):
        raise ValueError("direction must be 'greatest' or 'least'")
    inner_tol = outer_tol / 4.0 if inner_tol is None else inner_tol
    t0, t1 = bracket.t0, bracket.t1
    pieces = [bracket.nodes, np.array(vg.merged_events(t0, t1))]
    pieces.append(np.array([k for k in vg.all_kinks() if t0 < k < t1]))
    if mesh is not None:
        pieces.append(np.linspace(t0, t1, mesh + 1))
    nodes = np.unique(np.concatenate([p for p in pieces if p.size]))
    bracket = bracket.resample(nodes)

    cur = list(bracket.betas if direction == "greatest" else bracket.alphas)
    trace: list[OuterStep] = []
    converged = False
    for _ in range(outer_max):
        frozen = ffield.freeze(tuple(cur))
        inner = extremal_solve(
            frozen,
            vg,
            y0,
            bracket,
            direction,
            mesh=None,
            tol=inner_tol,
            max_iter=inner_max_iter,
            quad_tol=quad_tol,
            with_residual=False,
        )
        sol = list(inner.solution)
        change = max(s.sup_distance(c) for s, c in zip(sol, cur))
        if direction == "greatest":
            ordered = all(
                np.all(s.values <= c.values + outer_tol)
                and np.all(s.posts <= c.posts + outer_tol)
                for s, c in zip(sol, cur)
            )
        else:
            ordered = all(
                np.all(s.values >= c.values - outer_tol)
                and np.all(s.posts >= c.posts - outer_tol)
                for s, c in zip(sol, cur)
            )
        trace.append(
            OuterStep(change, ordered, inner.iterations, inner.converged)
        )
        cur = sol
        if change < outer_tol:
            converged = True
            break
    # fixed-point residual: the final trajectory against the field frozen at it
    residual = residual_norm(ffield.freeze(tuple(cur)), vg, cur, tol=quad_tol)
    return FunctionalReport(
        direction,
        tuple(cur),
        len(trace),
        converged,
        tuple(trace),
        all(s.ordered for s in trace),
        residual,
    )


def check_functional_monotone(
    ffield: FunctionalField,
    bracket: Bracket,
    samples: int = 200,
    rng_seed: int = 0,
    tol: float = DEFAULT_VERIFY_TOL,
    vg: VectorIntegrator | None = None,
) -> VerifyReport:
    """Sampled monotonicity of gamma -> f(t, x, gamma) on ordered pairs."""
    rng = np.random.default_rng(rng_seed)
    nodes = bracket.nodes
    n = bracket.n
    worst = _Worst()
    t0, t1 = bracket.t0, bracket.t1

    def combo(base, top, lam_row):
        out = []
        for k in range(n):
            vals = base[k].values + lam_row * (top[k].values - base[k].values)
            posts = base[k].posts + lam_row * (top[k].posts - base[k].posts)
            posts[-1] = vals[-1]
            out.append(RegulatedGrid(nodes, vals, posts))
        return tuple(out)

    for _ in range(samples):
        lo = combo(bracket.alphas, bracket.betas, rng.random(len(nodes)))
        hi = combo(lo, bracket.betas, rng.random(len(nodes)))
        t = t0 + rng.random() * (t1 - t0)
        blo, bhi = bracket.box_at(t)
        x = blo + rng.random(n) * (bhi - blo)
        for i in range(n):
            worst.update(
                ffield.components[i](t, x, lo) - ffield.components[i](t, x, hi),
                ("sample", t, i),
            )
        if vg is not None:
            for tau in vg.merged_events(t0, t1):
                for i in range(n):
                    if vg.components[i].jump_at(tau) <= 0.0:
                        continue
                    fn = ffield.jump_components[i] or ffield.components[i]
                    blo_e, bhi_e = bracket.box_at(tau)
                    xe = blo_e + rng.random(n) * (bhi_e - blo_e)
                    worst.update(
                        fn(tau, xe, lo) - fn(tau, xe, hi), ("event-sample", tau, i)
                    )
    return worst.report(tol)
