"""Regulated, left-continuous functions on a finite grid.

A RegulatedGrid stores, at every node t_j, the function value (left-limit
convention: the stored value IS the left limit) and the right limit
post[j].  Between nodes the function is linear from post[j] to
value[j+1], which pins the representation to be left-continuous
everywhere and makes suprema and oscillations exactly computable.

The one-sided jump operators are

    delta_plus(t)  = f(t+) - f(t)   (post - value at a node, else 0)
    delta_minus(t) = f(t)  - f(t-)  (identically 0 here, by construction)

Grids are immutable after construction and safe to share.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DomainMismatchError, OutOfDomainError

__all__ = ["RegulatedGrid", "pointwise_sup", "grids_close"]

# nodewise tolerance used by grid equality in tests
GRID_EQ_TOL = 1e-12


def _freeze(a) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


class RegulatedGrid:
    """Piecewise-linear, left-continuous function on strictly increasing nodes."""

    __slots__ = ("nodes", "values", "posts")

    def __init__(self, nodes, values, posts=None):
        nodes = _freeze(nodes)
        values = _freeze(values)
        posts = _freeze(values if posts is None else posts)
        if nodes.ndim != 1 or nodes.size < 2:
            raise ValueError("a grid needs at least two nodes")
        if not (values.shape == nodes.shape == posts.shape):
            raise ValueError("nodes, values and posts must have equal shape")
        if not np.all(np.diff(nodes) > 0):
            raise ValueError("nodes must be strictly increasing")
        if posts[-1] != values[-1]:
            raise ValueError(
                "post value at the right endpoint must equal the value "
                "(convention f(b+) = f(b))"
            )
        self.nodes = nodes
        self.values = values
        self.posts = posts

    def __repr__(self) -> str:
        return (
            f"RegulatedGrid([{self.t0}, {self.t1}], {len(self.nodes)} nodes, "
            f"{int(np.sum(self.posts != self.values))} jumps)"
        )

    # -- constructors ------------------------------------------------------

    @classmethod
    def from_function(
        cls, fn: Callable[[float], float], nodes: Sequence[float]
    ) -> "RegulatedGrid":
        """Sample a continuous function; posts equal values."""
        vals = np.array([fn(float(t)) for t in nodes], dtype=float)
        return cls(np.asarray(nodes, dtype=float), vals)

    @classmethod
    def constant(cls, c: float, t0: float, t1: float) -> "RegulatedGrid":
        return cls(np.array([t0, t1]), np.array([c, c]))

    # -- basic queries -------------------------------------------------------

    @property
    def t0(self) -> float:
        return float(self.nodes[0])

    @property
    def t1(self) -> float:
        return float(self.nodes[-1])

    def _check_domain(self, t: float) -> None:
        if t < self.nodes[0] or t > self.nodes[-1]:
            raise OutOfDomainError(t, self.t0, self.t1)

    def _node_index(self, t: float) -> int | None:
        """Index of an exact node match, else None."""
        j = int(np.searchsorted(self.nodes, t))
        if j < len(self.nodes) and self.nodes[j] == t:
            return j
        return None

    def _cell(self, t: float) -> int:
        """Index j with nodes[j] <= t < nodes[j+1] (clamped for t == t1)."""
        j = int(np.searchsorted(self.nodes, t, side="right")) - 1
        return min(j, len(self.nodes) - 2)

    def _interp(self, j: int, t: float) -> float:
        a, b = self.nodes[j], self.nodes[j + 1]
        w = (t - a) / (b - a)
        return float((1.0 - w) * self.posts[j] + w * self.values[j + 1])

    def __call__(self, t: float) -> float:
        """Function value at t (left-limit convention at nodes)."""
        self._check_domain(t)
        j = self._node_index(t)
        if j is not None:
            return float(self.values[j])
        return self._interp(self._cell(t), t)

    def right(self, t: float) -> float:
        """Right limit at t; differs from __call__ only at jump nodes."""
        self._check_domain(t)
        j = self._node_index(t)
        if j is not None:
            return float(self.posts[j])
        return self._interp(self._cell(t), t)

    # -- one-sided jumps ------------------------------------------------------

    def delta_plus(self, t: float) -> float:
        """f(t+) - f(t); nonzero only at nodes carrying a jump."""
        self._check_domain(t)
        j = self._node_index(t)
        if j is not None:
            return float(self.posts[j] - self.values[j])
        return 0.0

    def delta_minus(self, t: float) -> float:
        """f(t) - f(t-); identically 0 for this left-continuous representation."""
        self._check_domain(t)
        return 0.0

    # -- oscillation and divisions ---------------------------------------------

    def _osc_candidates(self, u: float, v: float) -> np.ndarray:
        """One-sided limits bounding f on the open interval (u, v)."""
        out = [self.right(u), self(v)]
        lo = int(np.searchsorted(self.nodes, u, side="right"))
        hi = int(np.searchsorted(self.nodes, v, side="left"))
        for j in range(lo, hi):
            out.append(float(self.values[j]))
            out.append(float(self.posts[j]))
        return np.array(out)

    def oscillation(self, u: float, v: float) -> float:
        """Exact sup - inf of the representation on the open interval (u, v)."""
        c = self._osc_candidates(u, v)
        return float(c.max() - c.min())

    def eps_division(self, eps: float, max_depth: int = 60) -> list[float]:
        """Division a = a_0 < ... < a_nu = b with oscillation < eps per open cell.

        Splits preferentially at interior jump nodes (removing their
        contribution), otherwise bisects; the result always contains both
        endpoints.
        """
        if eps <= 0:
            raise ValueError("eps must be positive")
        pts = [self.t0]

        def split(u: float, v: float, depth: int) -> None:
            if self.oscillation(u, v) < eps:
                pts.append(v)
                return
            if depth <= 0:
                raise ValueError(
                    f"could not achieve oscillation < {eps} on ({u}, {v})"
                )
            # a jump strictly inside is the one oscillation source plain
            # bisection can never remove, so cut there first
            lo = int(np.searchsorted(self.nodes, u, side="right"))
            hi = int(np.searchsorted(self.nodes, v, side="left"))
            jump_js = [j for j in range(lo, hi) if self.posts[j] != self.values[j]]
            if jump_js:
                mid = float(self.nodes[jump_js[len(jump_js) // 2]])
            else:
                mid = 0.5 * (u + v)
            split(u, mid, depth - 1)
            split(mid, v, depth - 1)

        split(self.t0, self.t1, max_depth)
        return pts

    # -- helpers used across the package ---------------------------------------

    def resample(self, new_nodes: Sequence[float]) -> "RegulatedGrid":
        """Re-express the grid on a different node set within the same domain."""
        nn = np.asarray(new_nodes, dtype=float)
        vals = np.array([self(float(t)) for t in nn])
        posts = np.array([self.right(float(t)) for t in nn])
        posts[-1] = vals[-1]
        return RegulatedGrid(nn, vals, posts)

    def shift(self, c: float) -> "RegulatedGrid":
        return RegulatedGrid(self.nodes, self.values + c, self.posts + c)

    def sup_distance(self, other: "RegulatedGrid") -> float:
        """Max nodewise |difference| over values and posts (same node set)."""
        if not np.array_equal(self.nodes, other.nodes):
            raise DomainMismatchError("grids live on different node sets")
        return float(
            max(
                np.max(np.abs(self.values - other.values)),
                np.max(np.abs(self.posts - other.posts)),
            )
        )

    def trapezoid(self, u: float, v: float) -> float:
        """Trapezoid-rule integral of the grid over [u, v] (dt, not dg).

        Jumps contribute nothing (t-measure zero); each cell uses its
        interior linear interpolation.
        """
        self._check_domain(u)
        self._check_domain(v)
        if v < u:
            u, v = v, u
        cuts = [u] + [float(t) for t in self.nodes if u < t < v] + [v]
        total = 0.0
        for a, b in zip(cuts[:-1], cuts[1:]):
            total += 0.5 * (self.right(a) + self(b)) * (b - a)
        return total


def pointwise_sup(grids: Iterable[RegulatedGrid]) -> RegulatedGrid:
    """Pointwise supremum of grids sharing one domain.

    The node set of the result is the union of the inputs' nodes; values
    and posts are nodewise maxima, and the interior is the maximum of the
    interpolants sampled on that merged lattice.
    """
    gs = list(grids)
    if not gs:
        raise ValueError("pointwise_sup of an empty collection")
    t0, t1 = gs[0].t0, gs[0].t1
    for g in gs[1:]:
        if g.t0 != t0 or g.t1 != t1:
            raise DomainMismatchError(f"grids on [{g.t0}, {g.t1}] vs [{t0}, {t1}]")
    nodes = np.unique(np.concatenate([g.nodes for g in gs]))
    values = np.array([max(g(float(t)) for g in gs) for t in nodes])
    posts = np.array([max(g.right(float(t)) for g in gs) for t in nodes])
    posts[-1] = values[-1]
    return RegulatedGrid(nodes, values, posts)


def grids_close(a: RegulatedGrid, b: RegulatedGrid, tol: float = GRID_EQ_TOL) -> bool:
    """Nodewise equality within absolute tolerance (same node set required)."""
    return (
        np.array_equal(a.nodes, b.nodes)
        and bool(np.all(np.abs(a.values - b.values) <= tol))
        and bool(np.all(np.abs(a.posts - b.posts) <= tol))
    )
