"""Drivers g: nondecreasing, left-continuous, continuous part plus jumps.

An Integrator represents one scalar driver

    g(t) = G_c(t) + sum of jump sizes over jump times strictly BELOW t,

where the strict inequality forces left-continuity by construction.  The
continuous part G_c comes in four kinds:

    none      G_c = 0            (pure jumps)
    identity  G_c(t) = t
    density   G_c(t) = integral of a nonnegative density from t0
    primitive G_c given in closed form (preferred when one exists)

A primitive part may optionally carry the matching density so that
density-based stepping schemes can run on it.

Monotonicity is validated at construction on 1024 uniform samples plus
all jump times; violations fail fast instead of corrupting a solve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from . import expr as ex
from ._quadrature import adaptive_simpson, with_splits
from .errors import OutOfDomainError, ReversedIntervalError
from .regulated import RegulatedGrid

__all__ = ["Jump", "AcPart", "Integrator", "VectorIntegrator", "GValue"]

_VALIDATION_SAMPLES = 1024
_MONOTONE_SLACK = 1e-12


@dataclass(frozen=True)
class Jump:
    time: float
    size: float

    def __post_init__(self):
        if not self.size > 0:
            raise ValueError(f"jump size must be positive, got {self.size}")


@dataclass(frozen=True)
class AcPart:
    """Continuous part descriptor.

    kinks are times where the density (or primitive) is non-smooth; the
    quadrature and the solver mesh split there.
    """

    kind: str  # none | identity | density | primitive
    expr: ex.Expr | None = None
    kinks: tuple[float, ...] = ()
    density: ex.Expr | None = None  # optional hint for primitive kind

    def __post_init__(self):
        if self.kind not in ("none", "identity", "density", "primitive"):
            raise ValueError(f"unknown continuous-part kind '{self.kind}'")
        if self.kind in ("density", "primitive") and self.expr is None:
            raise ValueError(f"kind '{self.kind}' needs an expression")
        object.__setattr__(self, "kinks", tuple(float(k) for k in self.kinks))

    @classmethod
    def none(cls) -> "AcPart":
        return cls("none")

    @classmethod
    def identity(cls) -> "AcPart":
        return cls("identity")

    @classmethod
    def from_density(cls, text: str, kinks: Sequence[float] = ()) -> "AcPart":
        return cls("density", ex.parse(text), tuple(kinks))

    @classmethod
    def from_primitive(
        cls, text: str, kinks: Sequence[float] = (), density: str | None = None
    ) -> "AcPart":
        d = ex.parse(density) if density is not None else None
        return cls("primitive", ex.parse(text), tuple(kinks), d)


class GValue(NamedTuple):
    value: float
    right_limit: float


class Integrator:
    """One validated scalar driver on [t0, t1]."""

    def __init__(self, t0: float, t1: float, ac: AcPart, jumps: Sequence[Jump] = ()):
        if not t1 > t0:
            raise ValueError(f"empty domain [{t0}, {t1}]")
        jumps = tuple(sorted(jumps, key=lambda j: j.time))
        times = [j.time for j in jumps]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("jump times must be strictly increasing")
        if times and (times[0] < t0 or times[-1] > t1):
            raise ValueError("jump times must lie within the domain")
        self.t0 = float(t0)
        self.t1 = float(t1)
        self.ac = ac
        self.jumps = jumps
        self._jump_times = np.array(times, dtype=float)
        self._jump_cumsum = np.concatenate(
            [[0.0], np.cumsum([j.size for j in jumps])]
        )
        self._gc_cache: dict[float, float] = {}
        self._validate()

    def __repr__(self) -> str:
        return (
            f"Integrator([{self.t0}, {self.t1}], ac={self.ac.kind}, "
            f"{len(self.jumps)} jumps)"
        )

    # -- continuous part -----------------------------------------------------

    def continuous_value(self, t: float) -> float:
        """G_c(t); for the density kind this integrates (and memoises)."""
        kind = self.ac.kind
        if kind == "none":
            return 0.0
        if kind == "identity":
            return float(t)
        if kind == "primitive":
            return ex.evaluate(self.ac.expr, {"t": t})
        # density: accumulate from t0, splitting at kinks
        cached = self._gc_cache.get(t)
        if cached is not None:
            return cached
        d = self.ac.expr
        total = 0.0
        for a, b in with_splits(self.t0, t, self.ac.kinks):
            total += adaptive_simpson(
                lambda s: ex.evaluate(d, {"t": s}), a, b, tol=1e-12
            )
        self._gc_cache[t] = total
        return total

    def density_fn(self):
        """Density callable for schemes that need one, or None."""
        kind = self.ac.kind
        if kind == "none":
            return lambda t: 0.0
        if kind == "identity":
            return lambda t: 1.0
        if kind == "density":
            d = self.ac.expr
            return lambda t: ex.evaluate(d, {"t": t})
        if self.ac.density is not None:
            d = self.ac.density
            return lambda t: ex.evaluate(d, {"t": t})
        return None

    # -- evaluation -------------------------------------------------------------

    def _check_domain(self, t: float) -> None:
        if t < self.t0 or t > self.t1:
            raise OutOfDomainError(t, self.t0, self.t1)

    def jump_sum_below(self, t: float) -> float:
        """Sum of sizes over jump times strictly less than t."""
        idx = int(np.searchsorted(self._jump_times, t, side="left"))
        return float(self._jump_cumsum[idx])

    def jump_at(self, t: float) -> float:
        """Delta+ g(t): the jump size sitting exactly at t, 0 otherwise.

        A jump at the right endpoint is inert (convention g(b+) = g(b)).
        """
        if t >= self.t1:
            return 0.0
        idx = int(np.searchsorted(self._jump_times, t, side="left"))
        if idx < len(self._jump_times) and self._jump_times[idx] == t:
            return self.jumps[idx].size
        return 0.0

    def g_eval(self, t: float) -> GValue:
        """(g(t), g(t+)) with g(t) = G_c(t) + jumps strictly below t."""
        self._check_domain(t)
        value = self.continuous_value(t) + self.jump_sum_below(t)
        return GValue(value, value + self.jump_at(t))

    def __call__(self, t: float) -> float:
        return self.g_eval(t).value

    def measure_interval(self, u: float, v: float) -> float:
        """mu_g([u, v)) = g(v) - g(u); includes a jump sitting exactly at u."""
        self._check_domain(u)
        self._check_domain(v)
        if u > v:
            raise ReversedIntervalError(u, v)
        return self.g_eval(v).value - self.g_eval(u).value

    def jump_times_in(self, u: float, v: float) -> list[float]:
        """Jump times in the half-open window [u, v)."""
        lo = int(np.searchsorted(self._jump_times, u, side="left"))
        hi = int(np.searchsorted(self._jump_times, v, side="left"))
        return [float(t) for t in self._jump_times[lo:hi]]

    def as_grid(self, nodes: Sequence[float]) -> RegulatedGrid:
        """Sample the driver into a RegulatedGrid (nodes should cover jumps)."""
        vals, posts = [], []
        for t in nodes:
            gv = self.g_eval(float(t))
            vals.append(gv.value)
            posts.append(gv.right_limit)
        posts[-1] = vals[-1]
        return RegulatedGrid(np.asarray(nodes, dtype=float), vals, posts)

    # -- construction-time validation ---------------------------------------------

    def _validate(self) -> None:
        mesh = np.linspace(self.t0, self.t1, _VALIDATION_SAMPLES)
        kind = self.ac.kind
        if kind == "density":
            d = self.ac.expr
            pts = np.unique(np.concatenate([mesh, self._jump_times]))
            for t in pts:
                if ex.evaluate(d, {"t": float(t)}) < -_MONOTONE_SLACK:
                    raise ValueError(
                        f"density is negative at t={float(t)}; "
                        "the driver would not be nondecreasing"
                    )
        elif kind == "primitive":
            prev = None
            for t in mesh:
                cur = ex.evaluate(self.ac.expr, {"t": float(t)})
                if prev is not None and cur < prev - _MONOTONE_SLACK:
                    raise ValueError(
                        f"continuous part decreases near t={float(t)}; "
                        "the driver would not be nondecreasing"
                    )
                prev = cur


class VectorIntegrator:
    """n drivers sharing one domain; component i drives state component i."""

    def __init__(self, components: Sequence[Integrator]):
        comps = tuple(components)
        if not comps:
            raise ValueError("need at least one component")
        t0, t1 = comps[0].t0, comps[0].t1
        for c in comps[1:]:
            if c.t0 != t0 or c.t1 != t1:
                raise ValueError("components must share one domain")
        self.components = comps
        self.t0 = t0
        self.t1 = t1

    def __len__(self) -> int:
        return len(self.components)

    def merged_events(self, u: float, v: float) -> list[float]:
        """Sorted union of all components' jump times in [u, v)."""
        times: set[float] = set()
        for c in self.components:
            times.update(c.jump_times_in(u, v))
        return sorted(times)

    def all_kinks(self) -> list[float]:
        out: set[float] = set()
        for c in self.components:
            out.update(c.ac.kinks)
        return sorted(out)
