"""Concrete parametric mixed-integer optimal control problems.

Two built-ins: the scalar bilinear problem with a closed-form value function
(``make_example1``) and a 1D heat equation with two switchable actuator
regions and a dwell-time restriction (``make_heat_actuator``). A small
``make_custom_linear`` covers user-supplied linear systems.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence

import numpy as np
from scipy.stats import qmc

from .control_space import (
    IntegerControlPath,
    OrdinaryControlPath,
    box_constraint,
    dwell_bound,
)
from .dynamics import GeneratorMatrix, SemilinearTerm, TimeGrid, Trajectory, propagate


class CostEvaluationError(ArithmeticError):
    pass


# ---------------------------------------------------------------------------
# parameter spaces


@dataclass(frozen=True, eq=False)
class ParameterSpace:
    """Ball ``B(center)`` of radius ``radius`` in the parameter metric.

    Points are addressed by coordinates along ``directions``:
    ``lam = center + sum_j coords[j] * directions[j]``. For the built-ins every
    direction has unit length in its own component and the metric is the max
    over components, so the coordinate box ``[-r, r]^k`` is exactly the ball.
    """

    center: Any
    radius: float
    directions: tuple
    labels: tuple
    metric: Callable[[Any, Any], float]

    @property
    def n_coords(self) -> int:
        return len(self.directions)

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius

    def point(self, coords) -> Any:
        coords = np.atleast_1d(np.asarray(coords, dtype=float))
        if coords.shape != (self.n_coords,):
            raise ValueError(f"expected {self.n_coords} coordinates, got {coords.shape}")
        lam = self.center
        for c, d in zip(coords, self.directions):
            if c != 0.0:
                lam = lam + c * d
        return lam

    def distance(self, a, b) -> float:
        return float(self.metric(a, b))

    def contains(self, lam, tol: float = 1e-12) -> bool:
        return self.distance(self.center, lam) <= self.radius * (1 + tol) + tol

    def sample_coords(self, n_lowdisc: int = 64, seed: int = 0) -> np.ndarray:
        """Center, the 2k axis points and a fixed scrambled-Sobol batch."""
        k = self.n_coords
        pts = [np.zeros(k)]
        for j in range(k):
            for s in (-1.0, 1.0):
                e = np.zeros(k)
                e[j] = s * self.radius
                pts.append(e)
        if n_lowdisc and self.radius > 0:
            sob = qmc.Sobol(k, scramble=True, seed=seed).random(n_lowdisc)
            for row in sob:
                c = (2.0 * row - 1.0) * self.radius
                dist = self.distance(self.center, self.point(c))
                if dist > self.radius:
                    c *= self.radius / dist
                pts.append(c)
        return np.array(pts)

    def samples(self, n_lowdisc: int = 64, seed: int = 0) -> list:
        return [self.point(c) for c in self.sample_coords(n_lowdisc, seed)]


@dataclass(frozen=True)
class SlaterData:
    """Strictly feasible controls ``point(v)`` with uniform margin ``omega``."""

    point: Callable[[IntegerControlPath], OrdinaryControlPath]
    omega: float
    alpha_lower: Optional[float] = None


@dataclass(frozen=True, eq=False)
class ParametricInstance:
    name: str
    grid: TimeGrid
    gen: GeneratorMatrix
    f: SemilinearTerm
    n_modes: int
    control_dim: int
    constraints: Callable[[IntegerControlPath], list]
    cost_terms: Callable  # (lam, traj, u, v) -> dict of named cost terms
    cost_grad: Optional[Callable]  # (lam, traj, u, v) -> (d_states, d_controls)
    y0: Callable[[Any], np.ndarray]
    space: ParameterSpace
    L0: float
    y0_sup: float  # K = sup over the ball of |y0(lam)|
    L_phi_on_ball: Callable[[float], float]  # radius R of the state ball -> Lphi
    L_phi_fn: Callable[[float, float], float]  # (|y|, |u|) -> lambda-modulus at fixed (y, u)
    state_weight: float = 1.0
    convex: bool = True
    constraints_depend_on_lambda: bool = False
    y0_depends_on_lambda: bool = True
    quadratic_in_u: bool = False
    slater: Optional[SlaterData] = None
    cost_lower_bound: Optional[float] = None
    scheme: str = "exponential"
    meta: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.gen.dim

    def trajectory(self, lam, u, v) -> Trajectory:
        return propagate(self.gen, self.f, self.y0(lam), u, v, self.grid, scheme=self.scheme)

    def state_norm(self, traj: Trajectory) -> float:
        """Sup over time of the (weighted) state norm."""
        return float(np.max(traj.norms(self.state_weight)))

    def zero_control(self) -> OrdinaryControlPath:
        return OrdinaryControlPath(self.grid, np.zeros((self.grid.n_cells, self.control_dim)))

    def box(self, lam, v: IntegerControlPath):
        """Intersection of the box-representable constraints for ``v``."""
        n, m = self.grid.n_cells, self.control_dim
        lo = np.full((n, m), -np.inf)
        hi = np.full((n, m), np.inf)
        for c in self.constraints(v):
            if c.bounds is None:
                raise ValueError(f"constraint {c.index} is not box-representable")
            clo, chi = c.bounds(lam)
            lo = np.maximum(lo, np.broadcast_to(clo, (n, m)))
            hi = np.minimum(hi, np.broadcast_to(chi, (n, m)))
        return lo, hi

    def L_g_sup(self, v: IntegerControlPath, u_norm: float) -> float:
        cons = self.constraints(v)
        return max((c.lipschitz_Lg(u_norm) for c in cons), default=0.0)


def evaluate_cost(inst: ParametricInstance, lam, traj: Trajectory, u, v) -> float:
    terms = inst.cost_terms(lam, traj, u, v)
    for name, val in terms.items():
        if not np.isfinite(val):
            raise CostEvaluationError(f"cost term {name!r} is not finite ({val})")
    total = float(sum(terms.values()))
    if not np.isfinite(total):
        raise CostEvaluationError("cost is not finite")
    return total


@dataclass
class ValueSample:
    lam: Any
    value: float
    best_v: Optional[IntegerControlPath]
    best_u: Optional[OrdinaryControlPath]
    status: str
    iterations: int = 0
    path_results: list = field(default_factory=list, repr=False)
    coords: Optional[np.ndarray] = None


# ---------------------------------------------------------------------------
# Example 1: minimize y(tf) with y' = v y, y(0) = lam, v in {0, 1}


def example1_oracle(lam: float, tf: float) -> float:
    return math.exp(tf) * lam if lam < 0 else float(lam)


def make_example1(tf: float = 1.0, n_cells: int = 8, center: float = 0.0, radius: float = 1.0) -> ParametricInstance:
    if tf <= 0:
        raise ValueError("tf must be positive")
    grid = TimeGrid(0.0, tf, n_cells)
    eye = np.eye(1)
    no_u = np.zeros((1, 0))
    zero = np.zeros(1)

    f = SemilinearTerm(
        evaluator=lambda t, y, u, v: v * np.asarray(y, dtype=float),
        modulus=lambda t: 1.0,
        affine=lambda t, v: (v * eye, no_u, zero),
    )

    def cost_terms(lam, traj, u, v):
        return {"terminal": float(traj.states[-1, 0])}

    def cost_grad(lam, traj, u, v):
        ds = np.zeros_like(traj.states)
        ds[-1, 0] = 1.0
        return ds, np.zeros((grid.n_cells, 0))

    space = ParameterSpace(
        center=float(center),
        radius=float(radius),
        directions=(1.0,),
        labels=("lambda",),
        metric=lambda a, b: abs(float(a) - float(b)),
    )
    return ParametricInstance(
        name="example1",
        grid=grid,
        gen=GeneratorMatrix.zeros(1),
        f=f,
        n_modes=2,
        control_dim=0,
        constraints=lambda v: [],
        cost_terms=cost_terms,
        cost_grad=cost_grad,
        y0=lambda lam: np.array([float(lam)]),
        space=space,
        L0=1.0,
        y0_sup=abs(center) + radius,
        L_phi_on_ball=lambda R: 1.0,
        L_phi_fn=lambda ynorm, unorm: 0.0,
        convex=True,
        constraints_depend_on_lambda=False,
        y0_depends_on_lambda=True,
        quadratic_in_u=True,
        slater=None,
        cost_lower_bound=None,
        meta={"tf": tf},
    )


# ---------------------------------------------------------------------------
# heat equation with a switched actuator


@dataclass(frozen=True, eq=False)
class HeatParameter:
    """``lam = (initial state, disturbance bound eps, tracking target)``."""

    y_init: np.ndarray
    eps: float
    y_target: np.ndarray  # (n_nodes, d)

    def __add__(self, other):
        return HeatParameter(self.y_init + other.y_init, self.eps + other.eps, self.y_target + other.y_target)

    def __sub__(self, other):
        return HeatParameter(self.y_init - other.y_init, self.eps - other.eps, self.y_target - other.y_target)

    def __mul__(self, s):
        s = float(s)
        return HeatParameter(s * self.y_init, s * self.eps, s * self.y_target)

    __rmul__ = __mul__


PRESETS = ("zero", "gaussian-bump", "step", "sine")


def spatial_profile(name: str, x: np.ndarray, amplitude: float = 1.0) -> np.ndarray:
    if name == "zero":
        return np.zeros_like(x)
    if name == "gaussian-bump":
        return amplitude * np.exp(-(((x - 0.5) / 0.15) ** 2))
    if name == "step":
        return amplitude * (x >= 0.5).astype(float)
    if name == "sine":
        return amplitude * np.sin(np.pi * x)
    raise ValueError(f"unknown profile preset {name!r}; choose from {PRESETS}")


def dirichlet_laplacian(nx: int) -> np.ndarray:
    """Second-difference matrix on the nx-1 interior nodes of (0, 1)."""
    dx = 1.0 / nx
    d = nx - 1
    a = -2.0 * np.eye(d) + np.eye(d, k=1) + np.eye(d, k=-1)
    return a / dx**2


def make_heat_actuator(
    nx: int = 12,
    delta: float = 0.25,
    eps: float = 0.1,
    y_init="gaussian-bump",
    y_target="sine",
    grid: Optional[TimeGrid] = None,
    radius: float = 0.02,
    perturb: Sequence[str] = ("y_init", "eps", "y_target"),
    init_amplitude: float = 1.0,
    target_amplitude: float = -1.0,
    energy_weight: float = 0.01,
) -> ParametricInstance:
    """Heat actuator positioning with a dwell-time restricted control.

    Interior nodes of a uniform mesh on (0, 1) carry the state; the two
    actuator windows are the nodes in the left and right thirds. ``v = 1``
    drives the left window, ``v = 0`` the right one. ``y_init``/``y_target``
    are preset names or arrays (``y_target`` may be a spatial profile or an
    (n_nodes, d) trajectory).
    """
    if nx < 3:
        raise ValueError("nx must be >= 3")
    if eps <= 0:
        raise ValueError("eps must be positive")
    grid = grid or TimeGrid(0.0, 1.0, 8)
    if not 0 <= delta < grid.tf - grid.t0:
        raise ValueError("need 0 <= delta < tf - t0")
    # alignment is checked once here so misconfigured instances fail early
    dwell_bound(IntegerControlPath.constant(grid, 0, 2), delta, eps)

    dx = 1.0 / nx
    d = nx - 1
    x = dx * np.arange(1, nx)
    chi1 = (x < 1.0 / 3.0).astype(float)
    chi2 = (x > 2.0 / 3.0).astype(float)
    # any 1D reduction must keep both windows nonempty and disjoint
    if not chi1.any() or not chi2.any():
        raise ValueError("mesh too coarse for two actuator windows")

    if isinstance(y_init, str):
        y_init = spatial_profile(y_init, x, init_amplitude)
    y_init = np.asarray(y_init, dtype=float).reshape(d)
    if isinstance(y_target, str):
        y_target = spatial_profile(y_target, x, target_amplitude)
    y_target = np.asarray(y_target, dtype=float)
    if y_target.shape == (d,):
        y_target = np.tile(y_target, (grid.n_nodes, 1))
    if y_target.shape != (grid.n_nodes, d):
        raise ValueError(f"target must have shape ({d},) or ({grid.n_nodes}, {d})")

    unknown = set(perturb) - {"y_init", "eps", "y_target"}
    if unknown:
        raise ValueError(f"unknown perturbation components {sorted(unknown)}")
    if "eps" in perturb and radius >= eps:
        raise ValueError("ball radius must stay below eps so that eps > 0 on the ball")

    def l2(z):
        return math.sqrt(dx) * float(np.linalg.norm(z))

    def metric(a: HeatParameter, b: HeatParameter) -> float:
        dy = l2(a.y_init - b.y_init)
        de = abs(a.eps - b.eps)
        dt_ = math.sqrt(dx) * float(np.max(np.linalg.norm(a.y_target - b.y_target, axis=1)))
        return max(dy, de, dt_)

    shape_init = spatial_profile("gaussian-bump", x)
    shape_init /= l2(shape_init)
    shape_target = spatial_profile("sine", x)
    shape_target /= l2(shape_target)
    zeros_d = np.zeros(d)
    zeros_traj = np.zeros((grid.n_nodes, d))
    dirs, labels = [], []
    if "y_init" in perturb:
        dirs.append(HeatParameter(shape_init, 0.0, zeros_traj))
        labels.append("y_init")
    if "eps" in perturb:
        dirs.append(HeatParameter(zeros_d, 1.0, zeros_traj))
        labels.append("eps")
    if "y_target" in perturb:
        dirs.append(HeatParameter(zeros_d, 0.0, np.tile(shape_target, (grid.n_nodes, 1))))
        labels.append("y_target")
    center = HeatParameter(y_init, float(eps), y_target)
    space = ParameterSpace(center, float(radius), tuple(dirs), tuple(labels), metric)

    r_eps = radius if "eps" in perturb else 0.0
    eps_min, eps_max = eps - r_eps, eps + r_eps
    G1 = -chi1.reshape(d, 1)
    G0 = -chi2.reshape(d, 1)
    J = np.zeros((d, d))
    c0 = np.zeros(d)
    window_norm = max(l2(chi1), l2(chi2))
    k_const = (1.0 + eps_max) * window_norm

    def f_eval(t, y, u, v):
        return (G1 if v == 1 else G0) @ np.atleast_1d(u)

    f = SemilinearTerm(
        evaluator=f_eval,
        modulus=lambda t: k_const,
        affine=lambda t, v: (J, G1 if v == 1 else G0, c0),
    )

    n = grid.n_cells
    w_time = grid.trapezoid_weights()
    # |g1(l1) - g1(l2)| <= |eps1 - eps2|; g2 does not see lambda
    g1_modulus = 1.0 if "eps" in perturb else 0.0

    def cost_terms(lam: HeatParameter, traj, u, v):
        resid = traj.states - lam.y_target
        tracking = float(np.sum(w_time * dx * np.sum(resid**2, axis=1)))
        uv = np.asarray(getattr(u, "values", u), dtype=float).reshape(n, -1)
        energy = float(energy_weight * grid.dt * np.sum(uv**2))
        return {"tracking": tracking, "energy": energy}

    def cost_grad(lam: HeatParameter, traj, u, v):
        resid = traj.states - lam.y_target
        ds = 2.0 * dx * w_time[:, None] * resid
        uv = np.asarray(getattr(u, "values", u), dtype=float).reshape(n, -1)
        return ds, 2.0 * energy_weight * grid.dt * uv

    def constraints(v: IntegerControlPath):
        neg = np.full((n, 1), -np.inf)
        pos = np.full((n, 1), np.inf)
        zero = np.zeros((n, 1))

        def upper(lam):
            return neg, dwell_bound(v, delta, lam.eps).reshape(n, 1)

        def lower(lam):
            return zero, pos

        return [
            box_constraint(1, grid, upper, lambda s: g1_modulus, kind="esssup"),
            box_constraint(2, grid, lower, lambda s: 0.0, kind="esssup"),
        ]

    T = grid.tf - grid.t0
    r_init = radius if "y_init" in perturb else 0.0
    r_target = radius if "y_target" in perturb else 0.0
    K = l2(y_init) + r_init
    target_sup = math.sqrt(dx) * float(np.max(np.linalg.norm(y_target, axis=1))) + r_target

    slater_value = eps_min / 2.0
    slater = SlaterData(
        point=lambda v: OrdinaryControlPath.constant(grid, [slater_value]),
        omega=eps_min / 2.0,
        alpha_lower=0.0,
    )
    return ParametricInstance(
        name="heat",
        grid=grid,
        gen=GeneratorMatrix(dirichlet_laplacian(nx)),
        f=f,
        n_modes=2,
        control_dim=1,
        constraints=constraints,
        cost_terms=cost_terms,
        cost_grad=cost_grad,
        y0=lambda lam: lam.y_init,
        space=space,
        L0=1.0 if "y_init" in perturb else 0.0,
        y0_sup=K,
        # |phi(l1, y) - phi(l2, ybar)| <= T (|a| + |b|) |a - b| with a = y - yhat1, b = ybar - yhat2
        L_phi_on_ball=lambda R: 2.0 * T * (R + target_sup),
        L_phi_fn=lambda ynorm, unorm: (2.0 * T * (ynorm + target_sup)) if r_target > 0 else 0.0,
        state_weight=dx,
        convex=True,
        constraints_depend_on_lambda="eps" in perturb,
        y0_depends_on_lambda="y_init" in perturb,
        quadratic_in_u=True,
        slater=slater,
        cost_lower_bound=0.0,
        meta={
            "nx": nx, "dx": dx, "x": x, "delta": delta, "eps": eps,
            "chi1": chi1, "chi2": chi2, "eps_min": eps_min, "eps_max": eps_max,
            "target_sup": target_sup, "energy_weight": energy_weight,
        },
    )


# ---------------------------------------------------------------------------
# user-supplied linear systems


def make_custom_linear(
    A,
    B_modes: Sequence,
    y0,
    lower,
    upper,
    target=None,
    energy_weight: float = 1.0,
    grid: Optional[TimeGrid] = None,
    radius: float = 0.1,
) -> ParametricInstance:
    """``y' = A y + B_v u`` with quadratic tracking cost and constant boxes.

    The parameter shifts the initial state along ``y0 / |y0|`` (or the first
    unit vector when ``y0 = 0``). Box bounds are ess-sup constraints and must
    be finite with ``lower < upper`` so that the box midpoint is a Slater point.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    d = A.shape[0]
    Bs = [np.asarray(B, dtype=float).reshape(d, -1) for B in B_modes]
    m = Bs[0].shape[1]
    if any(B.shape != (d, m) for B in Bs):
        raise ValueError("all input matrices must share a shape")
    grid = grid or TimeGrid(0.0, 1.0, 8)
    lower = np.broadcast_to(np.asarray(lower, dtype=float), (m,)).copy()
    upper = np.broadcast_to(np.asarray(upper, dtype=float), (m,)).copy()
    if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper)) and np.all(lower < upper)):
        raise ValueError("need finite bounds with lower < upper")
    y0 = np.asarray(y0, dtype=float).reshape(d)
    target = np.zeros(d) if target is None else np.asarray(target, dtype=float).reshape(d)
    direction = y0 / np.linalg.norm(y0) if np.linalg.norm(y0) > 0 else np.eye(d)[0]

    zero_J = np.zeros((d, d))
    c0 = np.zeros(d)
    B_norm = max(np.linalg.norm(B, 2) for B in Bs)
    u_max = float(np.linalg.norm(np.maximum(np.abs(lower), np.abs(upper))))
    f = SemilinearTerm(
        evaluator=lambda t, y, u, v: Bs[v] @ np.atleast_1d(u),
        modulus=lambda t: B_norm * u_max,
        affine=lambda t, v: (zero_J, Bs[v], c0),
    )
    n = grid.n_cells
    w_time = grid.trapezoid_weights()

    def cost_terms(lam, traj, u, v):
        resid = traj.states - target
        uv = np.asarray(getattr(u, "values", u), dtype=float).reshape(n, -1)
        return {
            "tracking": float(np.sum(w_time * np.sum(resid**2, axis=1))),
            "energy": float(energy_weight * grid.dt * np.sum(uv**2)),
        }

    def cost_grad(lam, traj, u, v):
        uv = np.asarray(getattr(u, "values", u), dtype=float).reshape(n, -1)
        return 2.0 * w_time[:, None] * (traj.states - target), 2.0 * energy_weight * grid.dt * uv

    lo_arr = np.tile(lower, (n, 1))
    hi_arr = np.tile(upper, (n, 1))

    def constraints(v):
        return [box_constraint(1, grid, lambda lam: (lo_arr, hi_arr), lambda s: 0.0)]

    mid = 0.5 * (lower + upper)
    T = grid.tf - grid.t0
    target_norm = float(np.linalg.norm(target))
    space = ParameterSpace(0.0, float(radius), (1.0,), ("y0_shift",), lambda a, b: abs(float(a) - float(b)))
    return ParametricInstance(
        name="custom-linear",
        grid=grid,
        gen=GeneratorMatrix(A),
        f=f,
        n_modes=len(Bs),
        control_dim=m,
        constraints=constraints,
        cost_terms=cost_terms,
        cost_grad=cost_grad,
        y0=lambda lam: y0 + float(lam) * direction,
        space=space,
        L0=1.0,
        y0_sup=float(np.linalg.norm(y0)) + radius,
        L_phi_on_ball=lambda R: 2.0 * T * (R + target_norm),
        L_phi_fn=lambda ynorm, unorm: 0.0,
        convex=True,
        constraints_depend_on_lambda=False,
        y0_depends_on_lambda=True,
        quadratic_in_u=True,
        slater=SlaterData(
            point=lambda v: OrdinaryControlPath.constant(grid, mid),
            omega=float(np.min(0.5 * (upper - lower))),
            alpha_lower=0.0,
        ),
        cost_lower_bound=0.0,
    )
