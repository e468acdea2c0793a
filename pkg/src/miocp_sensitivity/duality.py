"""Lagrangian duality for the per-mode convex problems.

Multipliers are nonnegative atoms on the grid nodes, one row per mixed
constraint. For an ess-sup constraint the value does not depend on t, so only
the row mass enters the Lagrangian; a pointwise constraint pairs each node
weight with the value on the cell containing that node.

For instances whose reduced cost is quadratic in u and whose constraints are
boxes, the dual function is evaluated by maximizing its concave dual over
products of scaled simplices. That value is a certified lower bound on
``h_v`` and the gap to the Lagrangian at the recovered control bounds the
error. Other instances fall back to Armijo descent on the Lagrangian.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .control_space import IntegerControlPath, OrdinaryControlPath
from .dynamics import TimeGrid
from .instances import ParametricInstance
from .solver import _value_and_gradient, cost_of, inner_solve

NEG_INF = -math.inf
DIVERGENCE_FLOOR = -1e12


class NoSlaterMarginError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class MultiplierMeasure:
    grid: TimeGrid
    weights: np.ndarray  # (M, n_nodes)

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim == 1 and w.size == 0:
            w = w.reshape(0, self.grid.n_nodes)
        if w.ndim != 2 or w.shape[1] != self.grid.n_nodes:
            raise ValueError(f"need weights of shape (M, {self.grid.n_nodes}), got {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ValueError("multiplier weights must be finite")
        if np.any(w < 0):
            raise ValueError("multiplier weights must be nonnegative")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def n_constraints(self) -> int:
        return self.weights.shape[0]

    @property
    def masses(self) -> np.ndarray:
        return self.weights.sum(axis=1)

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    def pair(self, node_values: np.ndarray) -> float:
        """``sum_k sum_i g_k(t_i) w_{k,i}``."""
        return float(np.sum(np.asarray(node_values) * self.weights))

    @classmethod
    def zeros(cls, grid: TimeGrid, n_constraints: int) -> "MultiplierMeasure":
        return cls(grid, np.zeros((n_constraints, grid.n_nodes)))


@dataclass(frozen=True)
class DualSettings:
    max_iters: int = 200
    step_scale: Optional[float] = None  # defaults to the Slater margin
    inner_tol: float = 1e-10
    inner_max_iters: int = 2000
    floor: float = DIVERGENCE_FLOOR
    divergence_window: int = 100
    max_retries: int = 5
    shrink: float = 0.5

    def __post_init__(self):
        if self.max_iters < 1 or self.inner_max_iters < 1:
            raise ValueError("iteration counts must be >= 1")
        if self.inner_tol <= 0:
            raise ValueError("inner_tol must be positive")
        if self.step_scale is not None and self.step_scale <= 0:
            raise ValueError("step_scale must be positive")
        if not 0 < self.shrink < 1:
            raise ValueError("shrink must lie in (0, 1)")


@dataclass
class DualEvaluation:
    value: float  # lower bound on h_v, or -inf
    u: Optional[OrdinaryControlPath]
    upper: float  # Lagrangian at u, an upper bound on h_v
    status: str  # ok | unbounded | inexact
    iterations: int = 0


def constraint_node_values(inst: ParametricInstance, lam, u: OrdinaryControlPath, v) -> np.ndarray:
    cons = inst.constraints(v)
    if not cons:
        return np.zeros((0, inst.grid.n_nodes))
    return np.array([c.node_values(lam, u) for c in cons])


def lagrangian(inst: ParametricInstance, lam, u, v: IntegerControlPath, mu: MultiplierMeasure) -> float:
    """Cost plus the multiplier pairing of the constraint node values."""
    cost = cost_of(inst, lam, u, v)
    if mu.n_constraints == 0:
        return cost
    return cost + mu.pair(constraint_node_values(inst, lam, u, v))


# ---------------------------------------------------------------------------
# quadratic model of the reduced cost


@dataclass(frozen=True, eq=False)
class QuadraticModel:
    """``phi(u) = 0.5 u'Hu + b'u + c`` in the flattened control, Cholesky-factored."""

    H: np.ndarray
    b: np.ndarray
    c: float
    factor: tuple

    def value(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.H @ x + self.b @ x + self.c)

    def solve(self, r: np.ndarray) -> np.ndarray:
        return cho_solve(self.factor, r)


def quadratic_model(inst: ParametricInstance, lam, v: IntegerControlPath) -> Optional[QuadraticModel]:
    """Probe the reduced gradient at 0 and the unit vectors.

    Returns None unless the instance is flagged quadratic in u and the probed
    Hessian is positive definite.
    """
    if not inst.quadratic_in_u or inst.control_dim == 0:
        return None
    n, m = inst.grid.n_cells, inst.control_dim
    size = n * m
    zero = np.zeros((n, m))
    c, b = _value_and_gradient(inst, lam, v, zero)
    b = np.asarray(b, dtype=float).reshape(size)
    H = np.empty((size, size))
    for j in range(size):
        e = np.zeros(size)
        e[j] = 1.0
        H[:, j] = np.asarray(_value_and_gradient(inst, lam, v, e.reshape(n, m))[1]).reshape(size) - b
    H = 0.5 * (H + H.T)
    try:
        factor = cho_factor(H)
    except LinAlgError:
        return None
    return QuadraticModel(H, b, float(c), factor)


@dataclass(frozen=True, eq=False)
class _Pieces:
    """Affine pieces ``a_p * u[idx_p] - beta_p`` grouped into scaled simplices."""

    idx: np.ndarray
    sign: np.ndarray
    beta: np.ndarray
    groups: list  # list of index arrays into the pieces
    group_rows: list  # (constraint row, node or None) per group

    def B(self, size: int) -> np.ndarray:
        out = np.zeros((size, len(self.idx)))
        out[self.idx, np.arange(len(self.idx))] = self.sign
        return out


def _box_pieces(inst: ParametricInstance, lam, v) -> Optional[_Pieces]:
    grid = inst.grid
    n, m = grid.n_cells, inst.control_dim
    idx, sign, beta, groups, rows = [], [], [], [], []
    for k, c in enumerate(inst.constraints(v)):
        if c.bounds is None:
            return None
        lo, hi = (np.broadcast_to(np.asarray(a, dtype=float), (n, m)) for a in c.bounds(lam))

        def cell_pieces(cell):
            out = []
            for j in range(m):
                flat = cell * m + j
                if np.isfinite(hi[cell, j]):
                    out.append((flat, 1.0, hi[cell, j]))
                if np.isfinite(lo[cell, j]):
                    out.append((flat, -1.0, -lo[cell, j]))
            return out

        if c.kind == "esssup":
            blocks = [(sum((cell_pieces(cell) for cell in range(n)), []), None)]
        else:
            blocks = [(cell_pieces(grid.cell_of_node(i)), i) for i in range(grid.n_nodes)]
        for pieces, node in blocks:
            start = len(idx)
            for flat, s, bt in pieces:
                idx.append(flat)
                sign.append(s)
                beta.append(bt)
            groups.append(np.arange(start, len(idx)))
            rows.append((k, node))
    return _Pieces(np.array(idx, dtype=int), np.array(sign), np.array(beta), groups, rows)


def _project_simplex(x: np.ndarray, mass: float) -> np.ndarray:
    if mass <= 0:
        return np.zeros_like(x)
    s = np.sort(x)[::-1]
    css = np.cumsum(s) - mass
    k = np.arange(1, len(x) + 1)
    pos = np.nonzero(s - css / k > 0)[0]
    rho = pos[-1] if pos.size else 0  # only reachable for subnormal masses
    return np.maximum(x - css[rho] / (rho + 1), 0.0)


class _BoxDual:
    """Dual function evaluator for a quadratic model with box constraints."""

    def __init__(self, inst, lam, v, model: QuadraticModel, pieces: _Pieces):
        self.inst, self.lam, self.v = inst, lam, v
        self.model = model
        self.pieces = pieces
        size = model.b.size
        self.B = pieces.B(size)
        self.HinvB = model.solve(self.B) if self.B.size else self.B
        curv = self.B.T @ self.HinvB
        self.lipschitz = float(np.max(np.linalg.eigvalsh(0.5 * (curv + curv.T)))) if curv.size else 0.0
        self.eta = np.zeros(len(pieces.idx))

    def group_masses(self, mu: MultiplierMeasure) -> np.ndarray:
        w = mu.weights
        return np.array([w[k].sum() if node is None else w[k, node] for k, node in self.pieces.group_rows])

    def _project(self, eta, masses):
        out = np.empty_like(eta)
        for g, s in zip(self.pieces.groups, masses):
            out[g] = _project_simplex(eta[g], s)
        return out

    def _theta(self, eta):
        r = self.model.b + self.B @ eta
        x = -self.model.solve(r)
        theta = self.model.c - self.pieces.beta @ eta + 0.5 * r @ x
        grad = self.B.T @ x - self.pieces.beta
        return theta, grad, x

    def _upper(self, x, masses):
        pen = 0.0
        vals = self.pieces.sign * x[self.pieces.idx] - self.pieces.beta
        for g, s in zip(self.pieces.groups, masses):
            if s > 0 and len(g):
                pen += s * float(np.max(vals[g]))
        return self.model.value(x) + pen

    def evaluate(self, mu: MultiplierMeasure, tol: float, max_iters: int) -> DualEvaluation:
        masses = self.group_masses(mu)
        n, m = self.inst.grid.n_cells, self.inst.control_dim
        if len(self.eta) == 0 or self.lipschitz <= 0 or not np.any(masses > 0):
            theta, _, x = self._theta(np.zeros(len(self.eta)))
            return DualEvaluation(theta, OrdinaryControlPath(self.inst.grid, x.reshape(n, m)), theta, "ok")
        # warm start from the previous maximizer, rescaled to the new masses
        eta = self._project(self.eta, masses)
        y, t = eta.copy(), 1.0
        step = 1.0 / self.lipschitz
        best = (NEG_INF, None, np.inf)
        it = 0
        for it in range(1, max_iters + 1):
            theta_y, grad_y, _ = self._theta(y)
            eta_new = self._project(y + step * grad_y, masses)
            theta, _, x = self._theta(eta_new)
            upper = self._upper(x, masses)
            if theta > best[0] or upper - theta <= tol * max(1.0, abs(theta)):
                best = (theta, x, upper, eta_new)
            if upper - theta <= tol * max(1.0, abs(theta)):
                break
            t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            y = eta_new + ((t - 1.0) / t_new) * (eta_new - eta)
            if theta < theta_y:
                # restart the momentum when it stops paying off
                y, t_new = eta_new.copy(), 1.0
            eta, t = eta_new, t_new
        theta, x, upper, eta_best = best
        self.eta = eta_best
        status = "ok" if upper - theta <= tol * max(1.0, abs(theta)) else "inexact"
        return DualEvaluation(theta, OrdinaryControlPath(self.inst.grid, x.reshape(n, m)), upper, status, it)


def _descent_dual(inst, lam, v, mu: MultiplierMeasure, settings: DualSettings) -> DualEvaluation:
    """Armijo descent on the Lagrangian with divergence detection.

    Uses a subgradient of the constraint pairing, so the returned value is an
    upper estimate of ``h_v``; exact only when no multiplier mass is present.
    """
    grid = inst.grid
    n, m = grid.n_cells, inst.control_dim
    if m == 0:
        val = lagrangian(inst, lam, OrdinaryControlPath.empty(grid), v, mu)
        return DualEvaluation(val, OrdinaryControlPath.empty(grid), val, "ok")
    cons = inst.constraints(v)
    has_mass = mu.total_mass > 0

    def value_grad(x):
        uo = OrdinaryControlPath(grid, x)
        J, g = _value_and_gradient(inst, lam, v, x)
        g = np.array(g, dtype=float).reshape(n, m)
        if has_mass:
            J += mu.pair(constraint_node_values(inst, lam, uo, v))
            for k, c in enumerate(cons):
                g += _pairing_subgradient(c, lam, x, mu.weights[k], grid)
        return J, g

    x = np.zeros((n, m))
    J, g = value_grad(x)
    values = [J]
    step = 1.0
    for it in range(settings.inner_max_iters):
        gnorm = float(np.max(np.abs(g)))
        if gnorm <= 1e-10:
            return DualEvaluation(J, OrdinaryControlPath(grid, x), J, "ok", it)
        t = step
        while t > 1e-16:
            x_new = x - t * g
            J_new, g_new = value_grad(x_new)
            if J_new <= J - 1e-4 * t * float(np.sum(g * g)):
                break
            t *= 0.5
        else:
            return DualEvaluation(J, OrdinaryControlPath(grid, x), J, "inexact", it)
        step = 2.0 * t
        x, J, g = x_new, J_new, g_new
        values.append(J)
        if J < settings.floor or _linear_decrease(values, settings.divergence_window):
            return DualEvaluation(NEG_INF, None, NEG_INF, "unbounded", it)
    return DualEvaluation(J, OrdinaryControlPath(grid, x), J, "inexact", settings.inner_max_iters)


def _linear_decrease(values, window) -> bool:
    if len(values) <= window:
        return False
    tail = np.diff(values[-window - 1:])
    if np.any(tail >= 0):
        return False
    # steady or growing decrements with a large cumulative drop
    return bool(tail[-1] <= tail[0] and values[-window - 1] - values[-1] > 1e6)


def _pairing_subgradient(c, lam, x, w_row, grid):
    out = np.zeros_like(x)
    if c.bounds is None:
        return out
    n, m = x.shape
    lo, hi = (np.broadcast_to(np.asarray(a, dtype=float), (n, m)) for a in c.bounds(lam))
    with np.errstate(invalid="ignore"):
        up = np.where(np.isfinite(hi), x - hi, -np.inf)
        dn = np.where(np.isfinite(lo), lo - x, -np.inf)

    def add(cells, weight):
        # minimum-norm choice: spread the weight over all active pieces
        sub_up, sub_dn = up[cells], dn[cells]
        top = max(np.max(sub_up), np.max(sub_dn))
        act_up = sub_up >= top - 1e-12 * max(1.0, abs(top))
        act_dn = sub_dn >= top - 1e-12 * max(1.0, abs(top))
        share = weight / (act_up.sum() + act_dn.sum())
        out[cells] += share * (act_up.astype(float) - act_dn.astype(float))

    if c.kind == "esssup":
        if w_row.sum() > 0:
            add(np.arange(n), float(w_row.sum()))
    else:
        for i, w in enumerate(w_row):
            if w > 0:
                add(np.array([grid.cell_of_node(i)]), float(w))
    return out


class DualFunction:
    """``mu -> h_v(lam, mu)`` for one (instance, lam, v), reusing setup work."""

    def __init__(self, inst: ParametricInstance, lam, v: IntegerControlPath, settings: DualSettings = DualSettings()):
        if not inst.convex:
            raise ValueError("dual functions are only defined here for convex instances")
        self.inst, self.lam, self.v, self.settings = inst, lam, v, settings
        self.n_constraints = len(inst.constraints(v))
        self._box = None
        model = quadratic_model(inst, lam, v)
        if model is not None:
            pieces = _box_pieces(inst, lam, v)
            if pieces is not None:
                self._box = _BoxDual(inst, lam, v, model, pieces)

    @property
    def exact(self) -> bool:
        return self._box is not None

    def evaluate(self, mu: MultiplierMeasure) -> DualEvaluation:
        if mu.n_constraints != self.n_constraints:
            raise ValueError(f"measure has {mu.n_constraints} rows, path has {self.n_constraints} constraints")
        if self._box is not None:
            return self._box.evaluate(mu, self.settings.inner_tol, self.settings.inner_max_iters)
        return _descent_dual(self.inst, self.lam, self.v, mu, self.settings)


def dual_function(inst, lam, v, mu: MultiplierMeasure, settings: DualSettings = DualSettings()) -> float:
    """``h_v(lam, mu)``; ``-inf`` marks a multiplier outside the effective domain."""
    return DualFunction(inst, lam, v, settings).evaluate(mu).value


# ---------------------------------------------------------------------------
# ascent


@dataclass
class AscentResult:
    v: IntegerControlPath
    mu: MultiplierMeasure
    value: float
    history: list  # best-so-far value after each iteration
    mass_history: list  # total mass of the best-so-far measure
    accepted: list = field(default_factory=list, repr=False)  # measures that improved the best value
    iterations: int = 0
    retries: int = 0
    status: str = "ok"  # ok | target | unbounded


def dual_ascent(
    inst: ParametricInstance,
    lam,
    v: IntegerControlPath,
    settings: DualSettings = DualSettings(),
    target: Optional[float] = None,
    target_tol: float = 1e-12,
) -> AscentResult:
    """Projected subgradient ascent on the node weights with step ``c / sqrt(k)``.

    ``target`` (typically the primal per-mode value) stops the run once the
    best dual value is within ``target_tol`` of it.
    """
    grid = inst.grid
    n_cons = len(inst.constraints(v))
    fn = DualFunction(inst, lam, v, settings)
    zero = MultiplierMeasure.zeros(grid, n_cons)
    if n_cons == 0:
        ev = fn.evaluate(zero) if inst.control_dim else None
        if ev is None:
            value = cost_of(inst, lam, OrdinaryControlPath.empty(grid), v)
        else:
            value = ev.value
        return AscentResult(v, zero, value, [value], [0.0], [zero], 1)
    if settings.step_scale is not None:
        c = settings.step_scale
    elif inst.slater is not None and inst.slater.omega > 0:
        c = inst.slater.omega
    else:
        raise NoSlaterMarginError("dual ascent needs a Slater margin or an explicit step_scale")

    # an ess-sup row only pairs through its mass, so its atom sits at t0
    support = np.ones((n_cons, grid.n_nodes))
    for k, con in enumerate(inst.constraints(v)):
        if con.kind == "esssup":
            support[k, 1:] = 0.0
    W = np.zeros((n_cons, grid.n_nodes))
    best_val, best_mu = NEG_INF, zero
    history, masses, accepted = [], [], []
    retries = 0
    status = "ok"
    k = 0
    while k < settings.max_iters:
        mu = MultiplierMeasure(grid, W)
        ev = fn.evaluate(mu)
        if ev.status == "unbounded":
            if retries >= settings.max_retries:
                status = "unbounded"
                break
            retries += 1
            W = best_mu.weights * settings.shrink
            continue
        k += 1
        if ev.value > best_val:
            best_val, best_mu = ev.value, mu
            accepted.append(mu)
        history.append(best_val)
        masses.append(best_mu.total_mass)
        if target is not None and best_val >= target - target_tol * max(1.0, abs(target)):
            status = "target"
            break
        G = constraint_node_values(inst, lam, ev.u, v)
        W = np.maximum(0.0, W + (c / math.sqrt(k)) * G * support)
    return AscentResult(v, best_mu, best_val, history, masses, accepted, k, retries, status)


@dataclass
class DualPoint:
    """Per-path multiplier measures, keyed by the path's enumeration index."""

    measures: dict
    values: dict


@dataclass
class DualValue:
    value: float
    worst_index: Optional[int]
    worst_v: Optional[IntegerControlPath]
    point: DualPoint


def dual_value(inst: ParametricInstance, lam, results: Sequence[AscentResult]) -> DualValue:
    """Minimum of the per-mode dual values (the separable dual point)."""
    if not results:
        raise ValueError("need one ascent result per enumerated path")
    measures = {i: r.mu for i, r in enumerate(results)}
    values = {i: r.value for i, r in enumerate(results)}
    worst = min(range(len(results)), key=lambda i: (results[i].value, i))
    return DualValue(results[worst].value, worst, results[worst].v, DualPoint(measures, values))


def ascend_all(
    inst: ParametricInstance,
    lam,
    paths: Sequence[IntegerControlPath],
    settings: DualSettings = DualSettings(),
    targets: Optional[Sequence[float]] = None,
    jobs: int = 1,
) -> list:
    """Run ``dual_ascent`` on every path; output order follows ``paths``."""
    targets = list(targets) if targets is not None else [None] * len(paths)

    def one(i):
        return dual_ascent(inst, lam, paths[i], settings, target=targets[i])

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(one, range(len(paths))))
    return [one(i) for i in range(len(paths))]


# ---------------------------------------------------------------------------
# multiplier mass bound


@dataclass(frozen=True)
class MassBound:
    value: float
    diameter: float
    sup_phi: float
    omega: float
    alpha_lower: float
    n_samples: int


def multiplier_mass_bound(
    inst: ParametricInstance,
    paths: Sequence[IntegerControlPath],
    lam_samples: Optional[Sequence] = None,
    omega: Optional[float] = None,
    alpha_lower: Optional[float] = None,
) -> MassBound:
    """``(diam^2 + sup phi(lam, y(u_v, v), u_v, v) - alpha) / omega`` on sampled lam and v."""
    if inst.slater is None and omega is None:
        raise NoSlaterMarginError(f"instance {inst.name!r} carries no Slater data")
    omega = inst.slater.omega if omega is None else omega
    if not omega > 0:
        raise NoSlaterMarginError(f"Slater margin must be positive, got {omega}")
    if alpha_lower is None:
        alpha_lower = inst.slater.alpha_lower if inst.slater and inst.slater.alpha_lower is not None else inst.cost_lower_bound
    if alpha_lower is None:
        raise ValueError("no lower bound on the cost is known")
    if lam_samples is None:
        lam_samples = inst.space.samples(n_lowdisc=0)
    sup_phi = NEG_INF
    for v in paths:
        u_bar = inst.slater.point(v)
        for lam in lam_samples:
            sup_phi = max(sup_phi, cost_of(inst, lam, u_bar, v))
    diam = inst.space.diameter
    value = (diam**2 + sup_phi - alpha_lower) / omega
    return MassBound(float(value), diam, float(sup_phi), float(omega), float(alpha_lower), len(lam_samples) * len(paths))


def weak_duality_holds(dual: float, primal: float, tol: float = 1e-8) -> bool:
    return dual <= primal + tol


def inner_unconstrained(inst, lam, v):
    """Unconstrained minimum of the cost for ``v`` (the dual function at zero)."""
    return inner_solve(inst, lam, v, use_bounds=False)


# ---------------------------------------------------------------------------
# gap study


@dataclass
class DualityStudy:
    lam: object
    nu: float
    nu_per_path: list
    levels: list
    dual_by_level: list  # min over paths of the best-so-far value at each level
    rel_gap_by_level: list
    weak_duality: bool  # every best-so-far value of every path stays below its primal
    max_mass: float
    results: list = field(repr=False, default_factory=list)

    @property
    def dual(self) -> float:
        return self.dual_by_level[-1]

    @property
    def gap_nonincreasing(self) -> bool:
        g = self.rel_gap_by_level
        return all(b <= a for a, b in zip(g, g[1:]))


def duality_study(
    inst: ParametricInstance,
    lam,
    paths: Sequence[IntegerControlPath],
    levels: Sequence[int] = (50, 200, 800),
    settings: DualSettings = DualSettings(),
    jobs: int = 1,
    tol: float = 1e-8,
) -> DualityStudy:
    """Primal value against the dual value after each ascent budget in ``levels``.

    One ascent per path runs to the largest budget (stopping early once it
    meets the primal per-path value); the value at a smaller budget is read
    from the best-so-far history.
    """
    from .solver import solve_value

    levels = sorted(int(x) for x in levels)
    if not levels or levels[0] < 1:
        raise ValueError("levels must be positive iteration budgets")
    sample = solve_value(inst, lam, paths=list(paths))
    primal = [r.value for r in sample.path_results]
    run = DualSettings(**{**settings.__dict__, "max_iters": levels[-1]})
    feasible = [i for i, r in enumerate(sample.path_results) if r.status != "infeasible"]
    results = ascend_all(inst, lam, [paths[i] for i in feasible], run, [primal[i] for i in feasible], jobs)
    weak = all(h <= primal[i] + tol for i, r in zip(feasible, results) for h in r.history)
    duals, gaps = [], []
    for lvl in levels:
        d = min(r.history[min(lvl, len(r.history)) - 1] for r in results)
        duals.append(d)
        gaps.append((sample.value - d) / abs(sample.value) if sample.value else sample.value - d)
    max_mass = max((max(m.total_mass for m in r.accepted) for r in results if r.accepted), default=0.0)
    return DualityStudy(lam, sample.value, primal, levels, duals, gaps, weak, max_mass, results)
