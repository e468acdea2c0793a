"""Sweeps of the optimal value, Lipschitz estimates and the explicit constants.

Sups over the parameter ball are taken over the deterministic sample set of
``ParameterSpace.samples``; every reported constant is therefore certified on
samples only, and the reports say so.
"""
from __future__ import annotations

import itertools
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

import numpy as np

from .control_space import OrdinaryControlPath, check_admissible
from .duality import MassBound, multiplier_mass_bound
from .dynamics import estimate_semigroup_bounds, gronwall_envelope
from .instances import ParametricInstance
from .solver import (
    EmptyAdmissibleSetError,
    EnumerationCaps,
    InnerSolveSettings,
    cost_of,
    solve_value,
)

# value accuracy of converged solves; enters the Lipschitz slack
SOLVER_VALUE_TOL = 1e-9
KINK_NOISE_FACTOR = 10.0


class SweepAborted(RuntimeError):
    def __init__(self, index: int, lam, reason: str):
        super().__init__(f"sweep aborted at sample {index} (lambda={lam!r}): {reason}")
        self.index = index
        self.lam = lam


class InconsistentSamplesError(ValueError):
    pass


class HypothesisError(ValueError):
    """An operation was called outside the hypotheses of its bound."""


@dataclass
class SweepResult:
    samples: list
    coords: Optional[np.ndarray]
    wall_times: list
    caps: EnumerationCaps
    settings: InnerSolveSettings
    paths: list = field(default_factory=list, repr=False)

    def __len__(self):
        return len(self.samples)

    @property
    def values(self) -> np.ndarray:
        return np.array([s.value for s in self.samples])


def sweep(
    inst: ParametricInstance,
    lams: Optional[Sequence] = None,
    caps: EnumerationCaps = EnumerationCaps(),
    settings: InnerSolveSettings = InnerSolveSettings(),
    jobs: int = 1,
    coords: Optional[np.ndarray] = None,
) -> SweepResult:
    """``solve_value`` at every parameter; output order follows the input.

    Pass either ``lams`` or ball ``coords`` (one row per sample).
    """
    if (lams is None) == (coords is None):
        raise ValueError("pass exactly one of lams and coords")
    if coords is not None:
        coords = np.atleast_2d(np.asarray(coords, dtype=float))
        lams = [inst.space.point(c) for c in coords]
    lams = list(lams)
    if not lams:
        raise ValueError("empty parameter list")
    for i, lam in enumerate(lams):
        if not inst.space.contains(lam):
            raise ValueError(f"sample {i} lies outside the parameter ball")
    paths = caps.paths(inst)

    def one(i):
        t = time.perf_counter()
        try:
            s = solve_value(inst, lams[i], caps, settings, paths=paths)
        except EmptyAdmissibleSetError as exc:
            raise SweepAborted(i, lams[i], str(exc)) from exc
        if coords is not None:
            s.coords = coords[i]
        return s, time.perf_counter() - t

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            out = list(pool.map(one, range(len(lams))))
    else:
        out = [one(i) for i in range(len(lams))]
    return SweepResult([s for s, _ in out], coords, [t for _, t in out], caps, settings, paths)


@dataclass(frozen=True)
class EmpiricalLipschitz:
    constant: float
    witness: Optional[tuple]  # sample indices (i, j), i < j
    n_pairs: int
    min_distance: float


def empirical_lipschitz(samples, metric, dup_tol: float = 1e-9) -> EmpiricalLipschitz:
    """Largest ``|nu_i - nu_j| / d(lam_i, lam_j)`` over all pairs."""
    if isinstance(samples, SweepResult):
        samples = samples.samples
    samples = list(samples)
    if len(samples) < 2:
        raise ValueError("need at least two samples")
    best, witness = 0.0, None
    min_dist = np.inf
    n_pairs = 0
    for i, j in itertools.combinations(range(len(samples)), 2):
        d = float(metric(samples[i].lam, samples[j].lam))
        gap = abs(samples[i].value - samples[j].value)
        if d == 0.0:
            if gap > dup_tol * max(1.0, abs(samples[i].value)):
                raise InconsistentSamplesError(
                    f"samples {i} and {j} share a parameter but differ in value by {gap:.3e}"
                )
            continue
        n_pairs += 1
        min_dist = min(min_dist, d)
        q = gap / d
        if q > best:
            best, witness = q, (i, j)
    return EmpiricalLipschitz(best, witness, n_pairs, float(min_dist))


# ---------------------------------------------------------------------------
# explicit constants


@dataclass(frozen=True)
class HatLReport:
    value: float
    L_phi: float
    L0: float
    C_tf: float
    gamma: float
    w0: float
    k_integral: float
    state_radius: float


def theoretical_hat_L(inst: ParametricInstance, joint: bool = False) -> HatLReport:
    """``L_phi * (C(tf) * L0 + 1)`` with ``C`` the Gronwall envelope.

    ``L_phi`` is evaluated on the state ball of radius
    ``sup_t C(t) (K + int k)`` that contains every trajectory started in the
    parameter ball. Unless ``joint`` is set, lambda-dependent constraints are
    rejected: the bound assumes the feasible controls do not move with lambda.
    """
    if inst.constraints_depend_on_lambda and not joint:
        raise HypothesisError(
            "the initial-data bound needs constraint functions independent of lambda; "
            "use joint=True for the combined bound"
        )
    data = estimate_semigroup_bounds(inst.gen, inst.grid).with_modulus(inst.f.modulus, inst.grid)
    env = gronwall_envelope(data, inst.grid)
    C_tf = float(env[-1])
    k_int = float(data.k_integral[-1])
    radius = float(np.max(env)) * (inst.y0_sup + k_int)
    L_phi = float(inst.L_phi_on_ball(radius))
    value = L_phi * (C_tf * inst.L0 + 1.0)
    return HatLReport(value, L_phi, float(inst.L0), C_tf, data.gamma, data.w0, k_int, radius)


@dataclass
class CQReport:
    passed: bool
    omega: float  # min over samples of -g at the Slater points
    omega_declared: Optional[float]
    witness: Optional[dict]  # worst (path, constraint, time, sample index)
    sup_phi: float  # sup over v, lam of the cost at the Slater points
    alpha_lower: Optional[float]
    alpha_ok: bool
    sbar_bounded: Optional[bool]
    unconstrained: bool
    n_paths: int
    n_lams: int
    message: str = ""


def _slater_candidate(inst, v):
    if inst.slater is not None:
        return inst.slater.point(v)
    lo, hi = inst.box(inst.space.center, v)
    mid = np.where(np.isfinite(lo) & np.isfinite(hi), 0.5 * (lo + hi), 0.0)
    return OrdinaryControlPath(inst.grid, mid)


def cq_check(
    inst: ParametricInstance,
    lam_samples: Optional[Sequence] = None,
    caps: EnumerationCaps = EnumerationCaps(),
    paths: Optional[list] = None,
    sbar_members: Optional[Sequence] = None,
) -> CQReport:
    """Check the Slater condition uniformly over sampled lam and all paths.

    ``sbar_members`` (triples ``(u, v, lam)``) feed the boundedness verdict:
    each must be admissible for its lam inside a bounded constraint box.
    """
    if lam_samples is None:
        lam_samples = inst.space.samples()
    lam_samples = list(lam_samples)
    if paths is None:
        paths = caps.paths(inst)
    alpha = inst.slater.alpha_lower if inst.slater is not None else None
    if alpha is None:
        alpha = inst.cost_lower_bound
    declared = inst.slater.omega if inst.slater is not None else None
    n_cons = max((len(inst.constraints(v)) for v in paths), default=0)

    omega = np.inf
    witness = None
    sup_phi = -np.inf
    for v in paths:
        u_bar = _slater_candidate(inst, v) if (n_cons or inst.slater) else inst.zero_control()
        for li, lam in enumerate(lam_samples):
            sup_phi = max(sup_phi, cost_of(inst, lam, u_bar, v))
            for c in inst.constraints(v):
                vals = c.node_values(lam, u_bar)
                i = int(np.argmax(vals))
                if -vals[i] < omega:
                    omega = float(-vals[i])
                    witness = {"path": v.encode(), "constraint": c.index,
                               "t": float(inst.grid.nodes[i]), "sample": li}

    sbar = None
    if sbar_members is not None:
        # members must be admissible for their own lam inside a bounded box
        sbar = True
        for u, v, lam in sbar_members:
            if n_cons:
                lo, hi = inst.box(lam, v)
                if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
                    sbar = False
                    break
                if not check_admissible(inst.constraints(v), lam, u, v).admissible:
                    sbar = False
                    break

    alpha_ok = bool(alpha is not None and np.isfinite(alpha))
    if n_cons == 0:
        return CQReport(True, np.inf, declared, None, float(sup_phi), alpha, alpha_ok, sbar, True,
                        len(paths), len(lam_samples), "no constraints")
    passed = omega > 0 and alpha_ok and (sbar is not False)
    msg = "ok" if passed else (
        f"no Slater margin: worst constraint value {-omega:.3e} at {witness}" if omega <= 0
        else "cost lower bound missing" if not alpha_ok else "S-bar surrogate leaves the box"
    )
    return CQReport(passed, float(omega), declared, witness, float(sup_phi), alpha, alpha_ok, sbar, False,
                    len(paths), len(lam_samples), msg)


def sbar_surrogate(inst: ParametricInstance, sw: SweepResult, include_slater: bool = True) -> list:
    """Retained per-path optima that satisfy the S-bar membership inequality.

    A pair ``(u, v)`` from the solve at ``lam`` qualifies when
    ``phi(lam, u, v) <= phi(lam, u_v, v) + diam^2`` with ``u_v`` the Slater
    control, and ``u`` is admissible.
    """
    diam2 = inst.space.diameter**2
    members = []
    for s in sw.samples:
        for r in s.path_results:
            if r.u is None or r.status == "infeasible":
                continue
            if not check_admissible(inst.constraints(r.v), s.lam, r.u, r.v).admissible:
                continue
            ref = cost_of(inst, s.lam, _slater_candidate(inst, r.v), r.v) if inst.control_dim else r.value
            if r.value <= ref + diam2:
                members.append((r.u, r.v, s.lam))
    if include_slater and inst.slater is not None:
        for v in sw.paths:
            members.append((inst.slater.point(v), v, inst.space.center))
    return members


@dataclass(frozen=True)
class TildeCReport:
    value: float
    sup_L_phi: float
    n_constraints: int
    sup_L_g: float
    mass_bound: float
    diameter: float
    n_members: int
    mass: Optional[MassBound] = None

    @property
    def terms(self) -> dict:
        return {
            "L_phi": self.sup_L_phi,
            "constraints": self.n_constraints * self.sup_L_g * self.mass_bound,
            "diameter": 2.0 * self.diameter,
        }


def theoretical_tilde_C(
    inst: ParametricInstance,
    sw: SweepResult,
    cq: Optional[CQReport] = None,
    lam_samples: Optional[Sequence] = None,
) -> TildeCReport:
    """``sup L_phi + M sup L_g * mass bound + 2 diam`` over the S-bar surrogate."""
    if not inst.convex:
        raise HypothesisError("the constraint-perturbation bound needs a convex instance")
    members = sbar_surrogate(inst, sw)
    if not members:
        raise HypothesisError("empty S-bar surrogate: run a sweep with retained path results first")
    paths = sw.paths
    n_cons = max((len(inst.constraints(v)) for v in paths), default=0)
    if cq is None:
        cq = cq_check(inst, lam_samples, paths=paths, sbar_members=members)
    if not cq.passed:
        raise HypothesisError(f"constraint qualification fails: {cq.message}")
    sup_lphi, sup_lg = 0.0, 0.0
    for u, v, lam in members:
        traj = inst.trajectory(lam, u, v)
        ynorm = inst.state_norm(traj)
        unorm = u.sup_norm()
        sup_lphi = max(sup_lphi, float(inst.L_phi_fn(ynorm, unorm)))
        sup_lg = max(sup_lg, float(inst.L_g_sup(v, unorm)))
    mass = None
    mass_value = 0.0
    if n_cons:
        mass = multiplier_mass_bound(inst, paths, lam_samples)
        mass_value = mass.value
    diam = inst.space.diameter
    value = sup_lphi + n_cons * sup_lg * mass_value + 2.0 * diam
    return TildeCReport(float(value), sup_lphi, n_cons, sup_lg, float(mass_value), diam, len(members), mass)


def combined_L(hat: float, tilde: float) -> float:
    return float(hat) + float(tilde)


@dataclass
class LipschitzReport:
    empirical: float
    witness: Optional[tuple]
    hat_L: Optional[float]
    tilde_C: Optional[float]
    combined: Optional[float]
    slack: float
    inputs: dict
    passed: dict
    note: str = "sups estimated on the deterministic parameter sample set"

    def to_dict(self) -> dict:
        return {
            "empirical": self.empirical,
            "witness": list(self.witness) if self.witness else None,
            "hat_L": self.hat_L,
            "tilde_C": self.tilde_C,
            "combined_L": self.combined,
            "slack": self.slack,
            "inputs": self.inputs,
            "pass": self.passed,
            "note": self.note,
        }


def lipschitz_report(
    inst: ParametricInstance,
    sw: SweepResult,
    joint: Optional[bool] = None,
    value_tol: float = SOLVER_VALUE_TOL,
) -> LipschitzReport:
    """Empirical constant against every bound whose hypotheses hold.

    The initial-data bound applies when constraints ignore lambda; the
    constraint bound needs a convex instance passing the CQ check; the
    combined bound is reported whenever both constants exist (``joint``).
    """
    emp = empirical_lipschitz(sw, inst.space.distance)
    slack = 2.0 * value_tol / emp.min_distance if np.isfinite(emp.min_distance) else 0.0
    if joint is None:
        joint = inst.constraints_depend_on_lambda
    inputs: dict[str, Any] = {"diameter": inst.space.diameter, "L0": inst.L0}
    passed: dict[str, bool] = {}
    hat = tilde = comb = None
    hat_rep = theoretical_hat_L(inst, joint=joint)
    inputs.update({"L_phi": hat_rep.L_phi, "C_tf": hat_rep.C_tf, "gamma": hat_rep.gamma, "w0": hat_rep.w0,
                   "k_integral": hat_rep.k_integral, "state_radius": hat_rep.state_radius})
    hat = hat_rep.value
    if not joint:
        passed["hat_L"] = emp.constant <= hat + slack
    has_constraints = any(inst.constraints(v) for v in sw.paths)
    if joint or has_constraints:
        try:
            t = theoretical_tilde_C(inst, sw)
        except HypothesisError as exc:
            inputs["tilde_C_error"] = str(exc)
        else:
            tilde = t.value
            inputs.update({"sup_L_phi_sbar": t.sup_L_phi, "n_constraints": t.n_constraints,
                           "sup_L_g": t.sup_L_g, "mass_bound": t.mass_bound,
                           "sbar_members": t.n_members})
            if t.mass is not None:
                inputs.update({"omega": t.mass.omega, "alpha_lower": t.mass.alpha_lower,
                               "sup_phi_slater": t.mass.sup_phi})
            if not inst.y0_depends_on_lambda:
                passed["tilde_C"] = emp.constant <= tilde + slack
    if joint and tilde is not None:
        comb = combined_L(hat, tilde)
        passed["combined_L"] = emp.constant <= comb + slack
    return LipschitzReport(emp.constant, emp.witness, hat, tilde, comb, slack, inputs, passed)


# ---------------------------------------------------------------------------
# kinks


@dataclass(frozen=True)
class KinkRow:
    coord: float
    value: float
    left: float
    right: float
    noise: float
    flagged: bool


def kink_scan(
    inst: ParametricInstance,
    a: float,
    b: float,
    n_points: int,
    h: float = 1e-4,
    direction: int = 0,
    caps: EnumerationCaps = EnumerationCaps(),
    settings: InnerSolveSettings = InnerSolveSettings(),
) -> list:
    """One-sided difference quotients along one ball coordinate.

    Noise is the change of each quotient between steps ``h`` and ``2h`` plus
    a rounding floor; a point is flagged when the two sides differ by more
    than ten times that noise.
    """
    if h <= 0 or n_points < 1:
        raise ValueError("need h > 0 and n_points >= 1")
    k = inst.space.n_coords
    if not 0 <= direction < k:
        raise ValueError(f"direction must lie in 0..{k - 1}")
    pts = np.linspace(a, b, n_points) if n_points > 1 else np.array([a])
    paths = caps.paths(inst)
    cache: dict = {}

    def nu(x):
        key = float(x)
        if key not in cache:
            c = np.zeros(k)
            c[direction] = x
            lam = inst.space.point(c)
            if not inst.space.contains(lam):
                raise ValueError(f"scan point {x} leaves the parameter ball")
            cache[key] = solve_value(inst, lam, caps, settings, paths=paths).value
        return cache[key]

    rows = []
    for x in pts:
        x = float(x)
        f0 = nu(x)
        left = (f0 - nu(x - h)) / h
        right = (nu(x + h) - f0) / h
        left2 = (f0 - nu(x - 2 * h)) / (2 * h)
        right2 = (nu(x + 2 * h) - f0) / (2 * h)
        floor = 1e-12 * (1.0 + abs(f0)) / h
        noise = max(abs(left - left2), abs(right - right2)) + floor
        rows.append(KinkRow(x, f0, left, right, noise, abs(right - left) > KINK_NOISE_FACTOR * noise))
    return rows
