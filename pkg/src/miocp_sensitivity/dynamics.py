"""Finite-dimensional semilinear control systems and their mild solutions.

The state space is R^d; the semigroup generated by ``A`` is the matrix
exponential. Trajectories live on a uniform time grid and controls are
piecewise constant on its cells.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.linalg import expm, lu_factor, lu_solve

# max-node error target on the closed-form calibration instances
INTEGRATOR_TOL = 1e-6

SCHEMES = ("exponential", "exp-euler", "implicit-euler")


class PropagationError(RuntimeError):
    """Raised when a propagated state stops being finite."""

    def __init__(self, message: str, cell: Optional[int] = None):
        super().__init__(message)
        self.cell = cell


class UnboundedGrowthError(RuntimeError):
    pass


@dataclass(frozen=True)
class TimeGrid:
    t0: float
    tf: float
    n_cells: int

    def __post_init__(self):
        if not (np.isfinite(self.t0) and np.isfinite(self.tf)) or not self.t0 < self.tf:
            raise ValueError(f"need finite t0 < tf, got t0={self.t0}, tf={self.tf}")
        if int(self.n_cells) != self.n_cells or self.n_cells < 1:
            raise ValueError(f"n_cells must be a positive integer, got {self.n_cells}")
        object.__setattr__(self, "n_cells", int(self.n_cells))

    @property
    def dt(self) -> float:
        return (self.tf - self.t0) / self.n_cells

    @property
    def nodes(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_cells + 1)

    @property
    def n_nodes(self) -> int:
        return self.n_cells + 1

    def trapezoid_weights(self) -> np.ndarray:
        w = np.full(self.n_nodes, self.dt)
        w[0] = w[-1] = 0.5 * self.dt
        return w

    def cumulative_trapezoid(self, values) -> np.ndarray:
        """Running trapezoid integral of node values, starting at 0."""
        values = np.asarray(values, dtype=float)
        out = np.zeros(self.n_nodes)
        out[1:] = np.cumsum(0.5 * self.dt * (values[1:] + values[:-1]))
        return out

    def cell_of_node(self, i: int) -> int:
        # the last node belongs to the last cell
        return min(i, self.n_cells - 1)

    def refined(self, factor: int = 2) -> "TimeGrid":
        return TimeGrid(self.t0, self.tf, self.n_cells * factor)


@dataclass(frozen=True, eq=False)
class GeneratorMatrix:
    """Dense generator ``A`` of the linear part."""

    entries: np.ndarray

    def __post_init__(self):
        a = np.array(self.entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"generator must be square, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("generator has non-finite entries")
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @classmethod
    def zeros(cls, dim: int) -> "GeneratorMatrix":
        return cls(np.zeros((dim, dim)))


Affine = Callable[[float, int], tuple]


@dataclass(frozen=True, eq=False)
class SemilinearTerm:
    """Nonlinear part ``f(t, y, u, v)`` of the control system.

    ``modulus`` is the function ``k`` bounding both the y-Lipschitz constant
    and ``|f(t, 0, u, v)|`` over admissible controls. When ``affine`` is given,
    ``affine(t, v)`` returns ``(J, G, c)`` with ``f = J y + G u + c``; the
    propagator then folds ``J`` into the exponential. ``jac`` may supply
    ``(df/dy, df/du)`` for nonlinear terms so that reduced gradients exist.
    """

    evaluator: Callable[[float, np.ndarray, np.ndarray, int], np.ndarray]
    modulus: Callable[[float], float]
    affine: Optional[Affine] = None
    jac: Optional[Callable] = None

    @property
    def linear_in_yu(self) -> bool:
        return self.affine is not None

    def __call__(self, t, y, u, v):
        return self.evaluator(t, y, u, v)

    def jacobians(self, t, y, u, v):
        if self.affine is not None:
            J, G, _ = self.affine(t, v)
            return J, G
        if self.jac is None:
            raise ValueError("semilinear term provides neither an affine form nor jacobians")
        return self.jac(t, y, u, v)

    @classmethod
    def zero(cls, dim: int, control_dim: int = 0) -> "SemilinearTerm":
        J = np.zeros((dim, dim))
        G = np.zeros((dim, control_dim))
        c = np.zeros(dim)
        return cls(
            evaluator=lambda t, y, u, v: np.zeros(dim),
            modulus=lambda t: 0.0,
            affine=lambda t, v: (J, G, c),
        )


@dataclass(frozen=True, eq=False)
class Trajectory:
    grid: TimeGrid
    states: np.ndarray  # (n_nodes, d)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def norms(self, weight: float = 1.0) -> np.ndarray:
        return np.sqrt(weight) * np.linalg.norm(self.states, axis=1)


@dataclass(frozen=True)
class GronwallData:
    gamma: float
    w0: float
    k_integral: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        if not (np.isfinite(self.gamma) and np.isfinite(self.w0)):
            raise ValueError("gamma and w0 must be finite")
        if self.gamma < 0 or self.w0 < 0:
            raise ValueError(f"gamma, w0 must be nonnegative, got {self.gamma}, {self.w0}")

    def with_modulus(self, modulus, grid: TimeGrid) -> "GronwallData":
        k_vals = np.array([float(modulus(t)) for t in grid.nodes])
        return GronwallData(self.gamma, self.w0, grid.cumulative_trapezoid(k_vals))


# ---------------------------------------------------------------------------
# exponential building blocks


@functools.lru_cache(maxsize=256)
def _exp_pair_cached(key: bytes, dim: int, h: float):
    a = np.frombuffer(key, dtype=float).reshape(dim, dim)
    aug = np.zeros((2 * dim, 2 * dim))
    aug[:dim, :dim] = a * h
    aug[:dim, dim:] = np.eye(dim) * h
    big = expm(aug)
    E = big[:dim, :dim].copy()
    P = big[:dim, dim:].copy()  # integral_0^h exp(a s) ds
    E.setflags(write=False)
    P.setflags(write=False)
    return E, P


def exp_pair(a: np.ndarray, h: float):
    """Return ``(exp(a h), int_0^h exp(a s) ds)`` via one augmented exponential."""
    a = np.ascontiguousarray(a, dtype=float)
    return _exp_pair_cached(a.tobytes(), a.shape[0], float(h))


@functools.lru_cache(maxsize=64)
def _implicit_lu(key: bytes, dim: int, h: float):
    a = np.frombuffer(key, dtype=float).reshape(dim, dim)
    return lu_factor(np.eye(dim) - h * a)


def propagate(
    gen: GeneratorMatrix,
    f: SemilinearTerm,
    y0,
    u,
    v,
    grid: TimeGrid,
    scheme: str = "exponential",
) -> Trajectory:
    """Numerical mild solution on ``grid``.

    ``u`` and ``v`` are control paths (or raw per-cell arrays). Schemes:

    - ``exponential``: if ``f`` is affine in ``(y, u)`` the cell problem is
      solved exactly with ``exp((A + J) dt)``; otherwise falls back to
      ``exp-euler``.
    - ``exp-euler``: ``exp(A dt)`` for the linear part, frozen ``f`` with one
      trapezoidal corrector pass.
    - ``implicit-euler``: ``(I - dt A) y+ = y + dt f(t, y, u, v)``.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")
    a = gen.entries
    d = gen.dim
    y0 = np.asarray(y0, dtype=float).reshape(-1)
    if y0.shape != (d,):
        raise ValueError(f"initial state has dimension {y0.shape[0]}, generator has {d}")
    u_vals, v_vals = _check_controls(u, v, grid)

    n = grid.n_cells
    h = grid.dt
    nodes = grid.nodes
    states = np.empty((n + 1, d))
    states[0] = y0
    use_affine = scheme == "exponential" and f.affine is not None
    if scheme == "exponential" and not use_affine:
        scheme = "exp-euler"
    if scheme == "exp-euler":
        E, P = exp_pair(a, h)
    elif scheme == "implicit-euler":
        lu = _implicit_lu(np.ascontiguousarray(a).tobytes(), d, h)

    y = y0
    for i in range(n):
        ui, vi = u_vals[i], int(v_vals[i])
        if use_affine:
            J, G, c = f.affine(nodes[i] + 0.5 * h, vi)
            Ei, Pi = exp_pair(a + J, h)
            y_next = Ei @ y + Pi @ (G @ ui + c)
        elif scheme == "exp-euler":
            f0 = f(nodes[i], y, ui, vi)
            y_pred = E @ y + P @ f0
            f1 = f(nodes[i + 1], y_pred, ui, vi)
            y_next = E @ y + P @ (0.5 * (f0 + f1))
        else:
            y_next = lu_solve(lu, y + h * np.asarray(f(nodes[i], y, ui, vi), dtype=float))
        states[i + 1] = y_next
        y = y_next
    finite = np.isfinite(states).all(axis=1)
    if not finite.all():
        cell = int(np.argmin(finite)) - 1
        raise PropagationError(f"non-finite state after cell {cell}", cell=cell)
    states.setflags(write=False)
    return Trajectory(grid, states)


def _check_controls(u, v, grid: TimeGrid):
    for name, path in (("u", u), ("v", v)):
        g = getattr(path, "grid", None)
        if g is not None and g != grid:
            raise ValueError(f"control {name} lives on {g}, expected {grid}")
    u_vals = np.asarray(getattr(u, "values", u), dtype=float)
    if u_vals.ndim == 1:
        u_vals = u_vals.reshape(grid.n_cells, -1)
    v_vals = np.asarray(getattr(v, "values", v), dtype=int).reshape(-1)
    if u_vals.shape[0] != grid.n_cells or v_vals.shape[0] != grid.n_cells:
        raise ValueError(
            f"controls need {grid.n_cells} cells, got u={u_vals.shape[0]}, v={v_vals.shape[0]}"
        )
    return u_vals, v_vals


def adjoint_gradient(
    gen: GeneratorMatrix,
    f: SemilinearTerm,
    traj: Trajectory,
    u,
    v,
    d_states: np.ndarray,
    d_controls: np.ndarray,
    scheme: str = "exponential",
) -> np.ndarray:
    """Pull a cost gradient back through the discrete propagator.

    ``d_states`` (n_nodes, d) and ``d_controls`` (n_cells, m) are the explicit
    partial derivatives of the cost; returns the total derivative with respect
    to the per-cell control values, exact for the scheme used in ``propagate``.
    """
    grid = traj.grid
    a = gen.entries
    d = gen.dim
    u_vals, v_vals = _check_controls(u, v, grid)
    n, h, nodes = grid.n_cells, grid.dt, grid.nodes
    grad = np.array(d_controls, dtype=float).reshape(n, -1).copy()
    use_affine = scheme == "exponential" and f.affine is not None
    if scheme == "exponential" and not use_affine:
        scheme = "exp-euler"
    if scheme == "exp-euler":
        E, P = exp_pair(a, h)
    elif scheme == "implicit-euler":
        lu = _implicit_lu(np.ascontiguousarray(a).tobytes(), d, h)

    p = np.array(d_states[n], dtype=float)
    for i in range(n - 1, -1, -1):
        ui, vi, yi = u_vals[i], int(v_vals[i]), traj.states[i]
        if use_affine:
            J, G, _ = f.affine(nodes[i] + 0.5 * h, vi)
            Ei, Pi = exp_pair(a + J, h)
            grad[i] += (Pi @ G).T @ p
            p = d_states[i] + Ei.T @ p
        elif scheme == "exp-euler":
            f0 = f(nodes[i], yi, ui, vi)
            y_pred = E @ yi + P @ f0
            Jy0, Ju0 = f.jacobians(nodes[i], yi, ui, vi)
            Jy1, Ju1 = f.jacobians(nodes[i + 1], y_pred, ui, vi)
            dpred_dy = E + P @ Jy0
            dpred_du = P @ Ju0
            dy_dy = E + 0.5 * P @ (Jy0 + Jy1 @ dpred_dy)
            dy_du = 0.5 * P @ (Ju0 + Jy1 @ dpred_du + Ju1)
            grad[i] += dy_du.T @ p
            p = d_states[i] + dy_dy.T @ p
        else:
            Jy, Ju = f.jacobians(nodes[i], yi, ui, vi)
            q = lu_solve(lu, p, trans=1)
            grad[i] += h * (np.asarray(Ju).T @ q)
            p = d_states[i] + q + h * (np.asarray(Jy).T @ q)
    return grad


# ---------------------------------------------------------------------------
# Gronwall-type bounds


def gronwall_envelope(data: GronwallData, grid: TimeGrid) -> np.ndarray:
    """``C(t_i) = gamma * exp(w0 (t_i - t0) + gamma * int_{t0}^{t_i} k)``."""
    k_int = data.k_integral
    if k_int is None:
        k_int = np.zeros(grid.n_nodes)
    k_int = np.asarray(k_int, dtype=float)
    if k_int.shape != (grid.n_nodes,):
        raise ValueError(f"k_integral must have {grid.n_nodes} entries, got {k_int.shape}")
    if not np.all(np.isfinite(k_int)):
        raise ValueError("k_integral is not finite")
    tau = grid.nodes - grid.t0
    return data.gamma * np.exp(data.w0 * tau + data.gamma * k_int)


def estimate_semigroup_bounds(gen: GeneratorMatrix, grid: TimeGrid, n_rates: int = 64) -> GronwallData:
    """Fit ``||exp(A tau)||_2 <= gamma exp(w0 tau)`` on the grid nodes.

    Rates ``w0`` are scanned on a lattice from 0 to the smallest rate with
    ``gamma = 1``; for each, ``gamma`` is the tightest feasible value, and the
    pair minimizing ``gamma exp(w0 (tf - t0))`` wins (ties to smaller gamma).
    """
    tau = grid.nodes - grid.t0
    norms = np.empty(grid.n_nodes)
    with np.errstate(over="raise", invalid="raise"):
        try:
            for i, s in enumerate(tau):
                e = expm(gen.entries * s)
                if not np.all(np.isfinite(e)):
                    raise FloatingPointError
                norms[i] = np.linalg.norm(e, 2)
        except (FloatingPointError, OverflowError, np.linalg.LinAlgError) as exc:
            raise UnboundedGrowthError(
                f"semigroup norm overflows on [{grid.t0}, {grid.tf}]"
            ) from exc
    if not np.all(np.isfinite(norms)):
        raise UnboundedGrowthError("semigroup norm overflows")
    pos = tau > 0
    rate_max = max(0.0, float(np.max(np.log(np.maximum(norms[pos], 1e-300)) / tau[pos])))
    rates = np.unique(np.concatenate([np.linspace(0.0, rate_max, n_rates), [rate_max]]))
    horizon = grid.tf - grid.t0
    best = None
    for w0 in rates:
        gamma = max(1.0, float(np.max(norms * np.exp(-w0 * tau))))
        # guard against rounding in the comparison against sampled norms
        gamma *= 1.0 + 1e-12
        score = gamma * np.exp(w0 * horizon)
        if best is None or score < best[0] * (1 - 1e-14):
            best = (score, gamma, float(w0))
    return GronwallData(gamma=best[1], w0=best[2])


@dataclass(frozen=True)
class DeviationReport:
    max_ratio: float
    passed: bool
    worst_node: int
    slack: float


def deviation_check(
    traj1: Trajectory,
    traj2: Trajectory,
    data: GronwallData,
    y0_gap: float,
    weight: float = 1.0,
    slack: float = 10 * INTEGRATOR_TOL,
) -> DeviationReport:
    """Compare ``|y1 - y2|`` with ``C(t) |y0 gap|`` node by node."""
    if traj1.grid != traj2.grid:
        raise ValueError("trajectories live on different grids")
    diff = np.sqrt(weight) * np.linalg.norm(traj1.states - traj2.states, axis=1)
    if y0_gap < 0:
        raise ValueError("y0_gap must be nonnegative")
    if y0_gap == 0:
        if np.any(diff > 0):
            raise ValueError("inconsistent input: zero initial gap but trajectories differ")
        return DeviationReport(0.0, True, 0, slack)
    env = gronwall_envelope(data, traj1.grid)
    ratios = diff / (env * y0_gap)
    worst = int(np.argmax(ratios))
    r = float(ratios[worst])
    return DeviationReport(r, r <= 1.0 + slack, worst, slack)


def check_modulus(
    f: SemilinearTerm,
    dim: int,
    grid: TimeGrid,
    controls,
    modes,
    rng: np.random.Generator,
    n_pairs: int = 50,
    scale: float = 1.0,
    weight: float = 1.0,
    rtol: float = 1e-12,
) -> bool:
    """Spot-check the Lipschitz modulus of ``f`` on random state pairs.

    ``controls`` is a list of admissible control values to try.
    """
    for _ in range(n_pairs):
        t = rng.uniform(grid.t0, grid.tf)
        u = controls[rng.integers(len(controls))]
        v = int(modes[rng.integers(len(modes))])
        y1 = scale * rng.standard_normal(dim)
        y2 = scale * rng.standard_normal(dim)
        k = f.modulus(t)
        lhs = np.linalg.norm(f(t, y1, u, v) - f(t, y2, u, v))
        if lhs > k * np.linalg.norm(y1 - y2) * (1 + rtol) + 1e-14:
            return False
        if np.sqrt(weight) * np.linalg.norm(f(t, np.zeros(dim), u, v)) > k * (1 + rtol) + 1e-14:
            return False
    return True
