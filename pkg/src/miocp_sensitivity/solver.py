"""Optimal value by enumeration of integer paths plus a convex inner solve."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .control_space import (
    ENUMERATION_BUDGET,
    FEAS_TOL,
    IntegerControlPath,
    OrdinaryControlPath,
    check_admissible,
    enumerate_modes,
)
from .dynamics import adjoint_gradient
from .instances import ParametricInstance, ValueSample, evaluate_cost


class EmptyAdmissibleSetError(RuntimeError):
    pass


@dataclass(frozen=True)
class InnerSolveSettings:
    max_iters: int = 5000
    grad_tol: float = 1e-10
    armijo_c1: float = 1e-4
    backtrack: float = 0.5
    feas_tol: float = FEAS_TOL

    def __post_init__(self):
        if self.grad_tol <= 0 or self.feas_tol <= 0 or self.armijo_c1 <= 0:
            raise ValueError("tolerances must be positive")
        if not 0 < self.backtrack < 1:
            raise ValueError("backtrack factor must lie in (0, 1)")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass(frozen=True)
class EnumerationCaps:
    max_switches: Optional[int] = None
    min_dwell_cells: Optional[int] = None
    budget: int = ENUMERATION_BUDGET

    def paths(self, inst: ParametricInstance) -> list:
        return list(enumerate_modes(inst.grid, inst.n_modes, self.max_switches, self.min_dwell_cells, self.budget))


@dataclass
class InnerSolveResult:
    v: IntegerControlPath
    u: Optional[OrdinaryControlPath]
    value: float
    iterations: int
    status: str  # converged | iter-cap | infeasible
    pg_norm: float = 0.0
    history: list = field(default_factory=list, repr=False)


def cost_of(inst: ParametricInstance, lam, u, v) -> float:
    return evaluate_cost(inst, lam, inst.trajectory(lam, u, v), u, v)


def reduced_gradient(inst: ParametricInstance, lam, v: IntegerControlPath, u) -> np.ndarray:
    """Gradient of ``u -> phi(lam, y(u, v), u, v)`` per cell, via the discrete adjoint."""
    return _value_and_gradient(inst, lam, v, u)[1]


def _value_and_gradient(inst, lam, v, u):
    if inst.cost_grad is None:
        raise ValueError(f"instance {inst.name!r} has no cost gradient")
    traj = inst.trajectory(lam, u, v)
    value = evaluate_cost(inst, lam, traj, u, v)
    ds, du = inst.cost_grad(lam, traj, u, v)
    grad = adjoint_gradient(inst.gen, inst.f, traj, u, v, ds, du, scheme=inst.scheme)
    return value, grad


def _initial_control(inst, v, lo, hi):
    if inst.slater is not None:
        u0 = np.array(inst.slater.point(v).values, dtype=float)
    else:
        u0 = np.where(np.isfinite(lo) & np.isfinite(hi), 0.5 * (lo + hi), 0.0)
    return np.clip(u0, lo, hi)


def inner_solve(
    inst: ParametricInstance,
    lam,
    v: IntegerControlPath,
    settings: InnerSolveSettings = InnerSolveSettings(),
    use_bounds: bool = True,
) -> InnerSolveResult:
    """Minimize the reduced cost over the per-cell box for a fixed integer path.

    Projected gradient with Barzilai-Borwein trial steps and Armijo
    backtracking along the projection arc. ``use_bounds=False`` drops the
    constraints (unconstrained minimum of the cost).
    """
    if not inst.convex and inst.constraints_depend_on_lambda:
        raise ValueError("lambda-dependent constraints need a convex instance")
    grid = inst.grid
    n, m = grid.n_cells, inst.control_dim
    if m == 0:
        u = OrdinaryControlPath.empty(grid)
        if use_bounds and not check_admissible(inst.constraints(v), lam, u, v, settings.feas_tol).admissible:
            return InnerSolveResult(v, None, np.inf, 0, "infeasible")
        return InnerSolveResult(v, u, cost_of(inst, lam, u, v), 0, "converged")

    if use_bounds:
        lo, hi = inst.box(lam, v)
    else:
        lo, hi = np.full((n, m), -np.inf), np.full((n, m), np.inf)
    if np.any(lo > hi + settings.feas_tol):
        return InnerSolveResult(v, None, np.inf, 0, "infeasible")
    hi = np.maximum(hi, lo)

    def project(x):
        return np.clip(x, lo, hi)

    u = project(_initial_control(inst, v, lo, hi))
    J, g = _value_and_gradient(inst, lam, v, u)
    history = [J]
    step = 1.0
    status = "iter-cap"
    pg_norm = np.inf
    it = 0
    flat = 0
    for it in range(settings.max_iters):
        pg_norm = float(np.max(np.abs(u - project(u - g)))) if u.size else 0.0
        if pg_norm <= settings.grad_tol:
            status = "converged"
            break
        t = step
        accepted = False
        while t > 1e-16:
            u_new = project(u - t * g)
            J_new = cost_of(inst, lam, u_new, v)
            if J_new <= J + settings.armijo_c1 * float(np.sum(g * (u_new - u))):
                accepted = True
                break
            t *= settings.backtrack
        if not accepted:
            # no representable decrease left; the iterate is optimal to rounding
            status = "converged" if pg_norm <= 1e3 * settings.grad_tol else "iter-cap"
            break
        J_new, g_new = _value_and_gradient(inst, lam, v, u_new)
        s = u_new - u
        y = g_new - g
        sy = float(np.sum(s * y))
        step = float(np.sum(s * s)) / sy if sy > 0 else 2.0 * t
        # value stationary to rounding: further progress is not measurable
        flat = flat + 1 if abs(J_new - J) <= 4e-16 * max(1.0, abs(J)) else 0
        u, J, g = u_new, J_new, g_new
        history.append(J)
        if flat >= 5 and pg_norm <= 1e3 * settings.grad_tol:
            status = "converged"
            break
    else:
        it = settings.max_iters
    return InnerSolveResult(v, OrdinaryControlPath(grid, u), J, it, status, pg_norm, history)


def solve_value(
    inst: ParametricInstance,
    lam,
    caps: EnumerationCaps = EnumerationCaps(),
    settings: InnerSolveSettings = InnerSolveSettings(),
    jobs: int = 1,
    paths: Optional[list] = None,
) -> ValueSample:
    """``nu(lam)``: min over enumerated integer paths of the inner optimal values.

    Ties go to the first path in lexicographic order, independent of ``jobs``.
    """
    if paths is None:
        paths = caps.paths(inst)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(lambda v: inner_solve(inst, lam, v, settings), paths))
    else:
        results = [inner_solve(inst, lam, v, settings) for v in paths]
    best = None
    for r in results:
        if r.status == "infeasible":
            continue
        if best is None or r.value < best.value:
            best = r
    if best is None:
        raise EmptyAdmissibleSetError(
            f"no enumerated integer path admits a feasible control at lambda={lam!r}"
        )
    worst_status = "converged" if all(r.status != "iter-cap" for r in results) else "iter-cap"
    return ValueSample(
        lam=lam,
        value=best.value,
        best_v=best.v,
        best_u=best.u,
        status=worst_status if best.status == "converged" else best.status,
        iterations=sum(r.iterations for r in results),
        path_results=results,
    )


def verify_sample(inst: ParametricInstance, sample: ValueSample, tol: float = 1e-10) -> bool:
    """Recheck admissibility of the reported controls and the reported value."""
    rep = check_admissible(inst.constraints(sample.best_v), sample.lam, sample.best_u, sample.best_v)
    if not rep.admissible:
        return False
    value = cost_of(inst, sample.lam, sample.best_u, sample.best_v)
    return abs(value - sample.value) <= tol * max(1.0, abs(value))
