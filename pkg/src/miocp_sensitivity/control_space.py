"""Piecewise-constant control paths, mixed constraints and dwell-time bounds."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

from .dynamics import TimeGrid

FEAS_TOL = 1e-9
ENUMERATION_BUDGET = 2**16


class EnumerationBudgetError(ValueError):
    def __init__(self, count: int, budget: int):
        super().__init__(
            f"{count} integer control paths exceed the enumeration budget {budget}; "
            "cap max_switches or min_dwell_cells"
        )
        self.count = count
        self.budget = budget


@dataclass(frozen=True, eq=False)
class IntegerControlPath:
    grid: TimeGrid
    values: tuple
    n_modes: int

    def __post_init__(self):
        vals = tuple(int(x) for x in np.asarray(self.values).reshape(-1))
        if len(vals) != self.grid.n_cells:
            raise ValueError(f"need one mode per cell ({self.grid.n_cells}), got {len(vals)}")
        if self.n_modes < 1:
            raise ValueError("n_modes must be >= 1")
        bad = [x for x in vals if not 0 <= x < self.n_modes]
        if bad:
            raise ValueError(f"mode values {bad} outside 0..{self.n_modes - 1}")
        object.__setattr__(self, "values", vals)

    def __eq__(self, other):
        return (
            isinstance(other, IntegerControlPath)
            and self.grid == other.grid
            and self.values == other.values
            and self.n_modes == other.n_modes
        )

    def __hash__(self):
        return hash((self.grid, self.values, self.n_modes))

    @property
    def n_switches(self) -> int:
        return sum(a != b for a, b in zip(self.values, self.values[1:]))

    def encode(self) -> str:
        return "".join(str(x) if self.n_modes <= 10 else f"{x}." for x in self.values)

    @classmethod
    def constant(cls, grid: TimeGrid, mode: int, n_modes: int) -> "IntegerControlPath":
        return cls(grid, (mode,) * grid.n_cells, n_modes)


@dataclass(frozen=True, eq=False)
class OrdinaryControlPath:
    grid: TimeGrid
    values: np.ndarray  # (n_cells, m)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals.reshape(self.grid.n_cells, -1) if vals.size else np.zeros((self.grid.n_cells, 0))
        if vals.ndim != 2 or vals.shape[0] != self.grid.n_cells:
            raise ValueError(f"need shape ({self.grid.n_cells}, m), got {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("ordinary control has non-finite entries")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def sup_norm(self) -> float:
        if self.values.size == 0:
            return 0.0
        return float(np.max(np.linalg.norm(self.values, axis=1)))

    @classmethod
    def constant(cls, grid: TimeGrid, value) -> "OrdinaryControlPath":
        value = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(grid, np.tile(value, (grid.n_cells, 1)))

    @classmethod
    def empty(cls, grid: TimeGrid) -> "OrdinaryControlPath":
        return cls(grid, np.zeros((grid.n_cells, 0)))


@dataclass(frozen=True, eq=False)
class MixedConstraint:
    """One mixed constraint ``g_k^v(lam, u, t) <= 0`` for a fixed integer path.

    ``bounds(lam)`` (optional) returns per-cell arrays ``(lower, upper)`` of
    shape (n_cells, m) describing ``{u : g <= 0}`` as a box; entries may be
    infinite. Box-representable constraints can be handled exactly by the
    inner solver and the dual machinery.

    ``kind`` is ``"esssup"`` (value constant in t, a max over all cells) or
    ``"pointwise"`` (value at t read off the cell containing t).
    """

    index: int
    evaluator: Callable
    lipschitz_Lg: Callable[[float], float]
    kind: str = "esssup"
    bounds: Optional[Callable] = None
    convex: bool = True

    def __call__(self, lam, u: OrdinaryControlPath, t: float) -> float:
        return float(self.evaluator(lam, u, t))

    def node_values(self, lam, u: OrdinaryControlPath) -> np.ndarray:
        grid = u.grid
        if self.kind == "esssup":
            return np.full(grid.n_nodes, self(lam, u, grid.t0))
        return np.array([self(lam, u, t) for t in grid.nodes])


def box_constraint(
    index: int,
    grid: TimeGrid,
    bounds: Callable,
    lipschitz_Lg: Callable[[float], float],
    kind: str = "esssup",
) -> MixedConstraint:
    """Constraint whose zero sublevel set is the box ``bounds(lam)``.

    The value is ``max(u - upper, lower - u)`` over the finite bound entries,
    either over all cells (``esssup``) or over the cell containing ``t``.
    """
    if kind not in ("esssup", "pointwise"):
        raise ValueError(f"unknown constraint kind {kind!r}")

    def evaluator(lam, u, t):
        lo, hi = bounds(lam)
        vals = u.values
        with np.errstate(invalid="ignore"):
            excess = np.maximum(np.where(np.isfinite(hi), vals - hi, -np.inf),
                                np.where(np.isfinite(lo), lo - vals, -np.inf))
        if kind == "pointwise":
            cell = min(int(np.searchsorted(grid.nodes, t, side="right")) - 1, grid.n_cells - 1)
            excess = excess[max(cell, 0)]
        value = np.max(excess)
        if value == -np.inf:
            raise ValueError(f"constraint {index} has no finite bound to evaluate")
        return value

    return MixedConstraint(index, evaluator, lipschitz_Lg, kind=kind, bounds=bounds)


@dataclass(frozen=True)
class AdmissibilityReport:
    admissible: bool
    max_violation: float
    worst_constraint: Optional[int]
    worst_time: Optional[float]
    unconstrained: bool = False


def check_admissible(
    constraints: Sequence[MixedConstraint],
    lam,
    u: OrdinaryControlPath,
    v: IntegerControlPath | None = None,
    tol: float = FEAS_TOL,
) -> AdmissibilityReport:
    """Evaluate every constraint at every grid node and report the worst value."""
    if not constraints:
        return AdmissibilityReport(True, 0.0, None, None, unconstrained=True)
    worst = (-np.inf, None, None)
    nodes = u.grid.nodes
    for c in constraints:
        vals = c.node_values(lam, u)
        bad = ~np.isfinite(vals)
        if np.any(bad):
            i = int(np.argmax(bad))
            raise ValueError(f"constraint {c.index} is not finite at t={nodes[i]}")
        i = int(np.argmax(vals))
        if vals[i] > worst[0]:
            worst = (float(vals[i]), c.index, float(nodes[i]))
    return AdmissibilityReport(worst[0] <= tol, worst[0], worst[1], worst[2])


def dwell_bound(v: IntegerControlPath, delta: float, eps: float) -> np.ndarray:
    """Per-cell upper bound for the ordinary control after switches of ``v``.

    A cell gets ``1 + eps`` when ``v`` is constant on the look-back window
    ``[t - delta, t]`` (truncated at t0) for a.e. t in the cell, else ``eps``.
    """
    grid = v.grid
    if delta < 0:
        raise ValueError("dwell time must be nonnegative")
    if eps <= 0:
        raise ValueError("eps must be positive")
    ratio = delta / grid.dt
    lag = int(round(ratio))
    if abs(ratio - lag) > 1e-12 * max(1.0, ratio):
        raise ValueError(
            f"dwell time {delta} is not a multiple of the cell width {grid.dt}; "
            f"use a grid with dt = {delta}/k for an integer k"
        )
    vals = np.asarray(v.values)
    out = np.empty(grid.n_cells)
    for c in range(grid.n_cells):
        window = vals[max(0, c - lag): c + 1]
        out[c] = 1.0 + eps if np.all(window == window[0]) else eps
    return out


def _count_paths(n_cells, n_modes, max_switches, min_dwell):
    # DP over (switches used, current run length capped at min_dwell)
    cap = max(min_dwell or 1, 1)
    smax = n_cells if max_switches is None else max_switches
    # state: (switches, run) -> count, mode symmetry handled by n_modes factors
    states = {(0, 1, True): n_modes}  # third flag: still in the first run
    for _ in range(n_cells - 1):
        nxt = {}
        for (s, run, first), cnt in states.items():
            key = (s, min(run + 1, cap), first)
            nxt[key] = nxt.get(key, 0) + cnt
            if n_modes > 1 and s < smax and (first or min_dwell is None or run >= min_dwell):
                key = (s + 1, 1, False)
                nxt[key] = nxt.get(key, 0) + cnt * (n_modes - 1)
        states = nxt
    return sum(states.values())


def count_modes(grid: TimeGrid, n_modes: int, max_switches=None, min_dwell_cells=None) -> int:
    if max_switches is None and min_dwell_cells is None:
        return n_modes ** grid.n_cells
    return _count_paths(grid.n_cells, n_modes, max_switches, min_dwell_cells)


def enumerate_modes(
    grid: TimeGrid,
    n_modes: int,
    max_switches: Optional[int] = None,
    min_dwell_cells: Optional[int] = None,
    budget: int = ENUMERATION_BUDGET,
    start: int = 0,
    stop: Optional[int] = None,
) -> Iterator[IntegerControlPath]:
    """Yield integer paths in lexicographic order, respecting optional caps.

    ``min_dwell_cells`` requires every run that starts at a switch and is not
    cut off by the horizon to last at least that many cells. ``start``/``stop``
    select a slice of the ordering for splitting work across consumers.
    """
    if n_modes < 1:
        raise ValueError("n_modes must be >= 1")
    total = count_modes(grid, n_modes, max_switches, min_dwell_cells)
    if total > budget:
        raise EnumerationBudgetError(total, budget)
    return itertools.islice(_generate(grid, n_modes, max_switches, min_dwell_cells), start, stop)


def _generate(grid, n_modes, max_switches, min_dwell):
    n = grid.n_cells
    if max_switches is None and min_dwell is None:
        for vals in itertools.product(range(n_modes), repeat=n):
            yield IntegerControlPath(grid, vals, n_modes)
        return
    smax = n if max_switches is None else max_switches
    prefix: list[int] = []

    def rec(switches, run, first):
        if len(prefix) == n:
            yield IntegerControlPath(grid, tuple(prefix), n_modes)
            return
        last = prefix[-1]
        can_switch = switches < smax and (first or min_dwell is None or run >= min_dwell)
        for m in range(n_modes):
            if m == last:
                prefix.append(m)
                yield from rec(switches, run + 1, first)
                prefix.pop()
            elif can_switch:
                prefix.append(m)
                yield from rec(switches + 1, 1, False)
                prefix.pop()

    for m in range(n_modes):
        prefix.append(m)
        yield from rec(0, 1, True)
        prefix.pop()


def path_index_ranges(total: int, n_parts: int) -> list[tuple[int, int]]:
    """Split ``range(total)`` into ``n_parts`` contiguous pieces."""
    n_parts = max(1, min(n_parts, total)) if total else 1
    step = math.ceil(total / n_parts) if total else 0
    return [(i, min(i + step, total)) for i in range(0, total, step)] if total else [(0, 0)]
