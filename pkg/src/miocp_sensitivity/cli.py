"""Command-line entry point.

    miocp-sens --config run.json [--command sweep] [--jobs 4] [--out results/] [--quiet]

The config is a JSON object with keys ``instance``, ``experiment`` and
``seed``; unknown keys anywhere are rejected. See ``configs/`` for examples.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from . import __version__
from .control_space import EnumerationBudgetError
from .duality import DualSettings, duality_study, multiplier_mass_bound
from .dynamics import PropagationError, TimeGrid, UnboundedGrowthError
from .instances import CostEvaluationError, make_custom_linear, make_example1, make_heat_actuator
from .sensitivity import (
    HypothesisError,
    SweepAborted,
    cq_check,
    kink_scan,
    lipschitz_report,
    sweep,
)
from .solver import EmptyAdmissibleSetError, EnumerationCaps, InnerSolveSettings

COMMANDS = ("solve", "sweep", "lipschitz", "duality", "cq", "kink")
EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3


class ConfigError(ValueError):
    pass


INSTANCE_KEYS = {
    "example1": {"kind", "tf", "n_cells", "center", "radius"},
    "heat": {"kind", "nx", "delta", "eps", "y_init", "y_target", "tf", "n_cells", "radius", "perturb",
             "init_amplitude", "target_amplitude", "energy_weight"},
    "custom-linear": {"kind", "A", "B_modes", "y0", "lower", "upper", "target", "energy_weight", "tf",
                      "n_cells", "radius"},
}
EXPERIMENT_KEYS = {"command", "lambda", "caps", "solver", "ascent", "kink", "out"}
LAMBDA_KEYS = {"values", "coords", "linspace", "ball"}
CAPS_KEYS = {"max_switches", "min_dwell_cells", "budget"}
SOLVER_KEYS = {"max_iters", "grad_tol", "armijo_c1", "backtrack", "feas_tol"}
ASCENT_KEYS = {"max_iters", "step_scale", "inner_tol", "inner_max_iters", "levels"}
KINK_KEYS = {"a", "b", "n_points", "h", "direction"}


@dataclass
class RunConfig:
    instance: dict
    command: str
    lam: dict = field(default_factory=lambda: {"ball": {"n_lowdisc": 0}})
    caps: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    ascent: dict = field(default_factory=dict)
    kink: dict = field(default_factory=dict)
    out: Optional[str] = None
    seed: int = 0


def _strict(section: dict, allowed: set, where: str):
    if not isinstance(section, dict):
        raise ConfigError(f"{where} must be an object")
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} in {where}")


def parse_config(raw: dict) -> RunConfig:
    _strict(raw, {"instance", "experiment", "seed"}, "config")
    if "instance" not in raw or "experiment" not in raw:
        raise ConfigError("config needs 'instance' and 'experiment' sections")
    inst = raw["instance"]
    if not isinstance(inst, dict) or inst.get("kind") not in INSTANCE_KEYS:
        raise ConfigError(f"instance.kind must be one of {sorted(INSTANCE_KEYS)}")
    _strict(inst, INSTANCE_KEYS[inst["kind"]], "instance")
    exp = raw["experiment"]
    _strict(exp, EXPERIMENT_KEYS, "experiment")
    command = exp.get("command")
    if command not in COMMANDS:
        raise ConfigError(f"experiment.command must be one of {COMMANDS}")
    lam = exp.get("lambda", {"ball": {"n_lowdisc": 0}})
    _strict(lam, LAMBDA_KEYS, "experiment.lambda")
    if len(lam) != 1:
        raise ConfigError("experiment.lambda needs exactly one of " + ", ".join(sorted(LAMBDA_KEYS)))
    for key, allowed in (("caps", CAPS_KEYS), ("solver", SOLVER_KEYS), ("ascent", ASCENT_KEYS), ("kink", KINK_KEYS)):
        _strict(exp.get(key, {}), allowed, f"experiment.{key}")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError("seed must be an integer")
    return RunConfig(inst, command, lam, exp.get("caps", {}), exp.get("solver", {}), exp.get("ascent", {}),
                     exp.get("kink", {}), exp.get("out"), seed)


def build_instance(spec: dict):
    spec = dict(spec)
    kind = spec.pop("kind")
    grid_args = {k: spec.pop(k) for k in ("tf", "n_cells") if k in spec}
    if kind == "example1":
        return make_example1(**grid_args, **spec)
    grid = TimeGrid(0.0, grid_args.get("tf", 1.0), grid_args.get("n_cells", 8))
    if kind == "heat":
        if "perturb" in spec:
            spec["perturb"] = tuple(spec["perturb"])
        return make_heat_actuator(grid=grid, **spec)
    return make_custom_linear(grid=grid, **spec)


def lambda_coords(inst, spec: dict) -> np.ndarray:
    """Ball coordinates of the requested parameter samples."""
    (kind, val), = spec.items()
    space = inst.space
    if kind == "values":
        if space.n_coords != 1 or not isinstance(space.center, float):
            raise ConfigError("'values' is only available for scalar parameters; use 'coords'")
        coords = np.array([[float(x) - space.center] for x in val])
    elif kind == "coords":
        coords = np.atleast_2d(np.asarray(val, dtype=float))
    elif kind == "linspace":
        _strict(val, {"a", "b", "n", "direction"}, "experiment.lambda.linspace")
        if "n" not in val:
            raise ConfigError("experiment.lambda.linspace needs 'n'")
        n = int(val["n"])
        a, b = float(val.get("a", -space.radius)), float(val.get("b", space.radius))
        coords = np.zeros((n, space.n_coords))
        coords[:, int(val.get("direction", 0))] = np.linspace(a, b, n)
    else:
        _strict(val, {"n_lowdisc", "seed"}, "experiment.lambda.ball")
        coords = space.sample_coords(int(val.get("n_lowdisc", 64)), int(val.get("seed", 0)))
    if coords.ndim != 2 or coords.shape[1] != space.n_coords:
        raise ConfigError(f"parameter coordinates need {space.n_coords} columns")
    for i, c in enumerate(coords):
        if not space.contains(space.point(c)):
            raise ConfigError(f"parameter sample {i} lies outside the ball of radius {space.radius}")
    return coords


# ---------------------------------------------------------------------------
# output


def _num(x) -> Any:
    """JSON-safe float (shortest round-trip repr, infinities as strings)."""
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isfinite(x):
            return x
        return "inf" if x > 0 else "-inf" if x < 0 else "nan"
    if isinstance(x, dict):
        return {str(k): _num(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_num(v) for v in x]
    return x


def write_csv(path: Path, header: list, rows: list):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header + ["version"])
    for row in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row] + [__version__])
    path.write_bytes(buf.getvalue().encode("utf-8"))


def write_json(path: Path, obj: dict):
    text = json.dumps(_num({**obj, "version": __version__}), indent=2, sort_keys=True)
    path.write_bytes((text + "\n").encode("utf-8"))


# ---------------------------------------------------------------------------
# commands


def _settings(cfg: RunConfig):
    caps = EnumerationCaps(**cfg.caps)
    solver = InnerSolveSettings(**cfg.solver)
    asc = dict(cfg.ascent)
    levels = asc.pop("levels", [50, 200, 800])
    return caps, solver, DualSettings(**asc), levels


def _sample_rows(inst, sw):
    header = ["index"] + list(inst.space.labels) + ["nu", "best_v", "iterations", "status"]
    rows = []
    for i, s in enumerate(sw.samples):
        rows.append([i] + [float(c) for c in s.coords] + [float(s.value), s.best_v.encode(), s.iterations, s.status])
    return header, rows


def _summary(inst, s) -> str:
    coords = ", ".join(f"{lab}={c:+.6g}" for lab, c in zip(inst.space.labels, s.coords))
    return f"nu = {s.value:.6f}  ({coords})  v = {s.best_v.encode()}  [{s.status}]"


def execute(cfg: RunConfig, out: Path, jobs: int, quiet: bool) -> dict:
    inst = build_instance(cfg.instance)
    caps, solver, dual_settings, levels = _settings(cfg)
    say = (lambda msg: None) if quiet else print
    report: dict = {"command": cfg.command, "instance": cfg.instance["kind"], "seed": cfg.seed}
    timings: dict = {}
    t0 = time.perf_counter()

    if cfg.command == "kink":
        kc = {"a": -0.5, "b": 0.5, "n_points": 3, "h": 1e-4, "direction": 0, **cfg.kink}
        rows = kink_scan(inst, float(kc["a"]), float(kc["b"]), int(kc["n_points"]), float(kc["h"]),
                         int(kc["direction"]), caps, solver)
        write_csv(out / "samples.csv", ["coord", "nu", "left_slope", "right_slope", "noise", "kink"],
                  [[r.coord, r.value, r.left, r.right, r.noise, int(r.flagged)] for r in rows])
        for r in rows:
            say(f"coord = {r.coord:+.6g}  nu = {r.value:.6f}  left = {r.left:.6f}  right = {r.right:.6f}"
                + ("  KINK" if r.flagged else ""))
        report["rows"] = [r.__dict__ for r in rows]
        report["kinks"] = [r.coord for r in rows if r.flagged]
        timings["total"] = time.perf_counter() - t0
        return report, timings

    coords = lambda_coords(inst, cfg.lam)
    if cfg.command == "solve":
        coords = coords[:1]

    if cfg.command == "cq":
        lams = [inst.space.point(c) for c in coords]
        rep = cq_check(inst, lams, caps)
        say(f"CQ {'passed' if rep.passed else 'FAILED'}: omega = {rep.omega:.6g}  ({rep.message})")
        report["cq"] = rep.__dict__
        write_csv(out / "samples.csv", ["index"] + list(inst.space.labels),
                  [[i] + [float(x) for x in c] for i, c in enumerate(coords)])
        timings["total"] = time.perf_counter() - t0
        return report, timings

    if cfg.command == "duality":
        paths = caps.paths(inst)
        mass = multiplier_mass_bound(inst, paths) if inst.slater is not None else None
        table = []
        rows = []
        for i, c in enumerate(coords):
            lam = inst.space.point(c)
            st = duality_study(inst, lam, paths, levels, dual_settings, jobs)
            ok_mass = mass is None or st.max_mass <= mass.value
            table.append({"index": i, "coords": list(c), "nu": st.nu, "dual": st.dual,
                          "levels": st.levels, "dual_by_level": st.dual_by_level,
                          "rel_gap_by_level": st.rel_gap_by_level, "gap_nonincreasing": st.gap_nonincreasing,
                          "weak_duality": st.weak_duality, "max_mass": st.max_mass, "mass_ok": ok_mass})
            rows.append([i] + [float(x) for x in c] + [st.nu, st.dual, st.rel_gap_by_level[-1], st.max_mass])
            say(f"nu = {st.nu:.6f}  dual = {st.dual:.6f}  rel gap = {st.rel_gap_by_level[-1]:.3e}")
        write_csv(out / "samples.csv", ["index"] + list(inst.space.labels) + ["nu", "dual", "rel_gap", "max_mass"], rows)
        report["samples"] = table
        report["mass_bound"] = mass.__dict__ if mass is not None else None
        timings["total"] = time.perf_counter() - t0
        return report, timings

    sw = sweep(inst, coords=coords, caps=caps, settings=solver, jobs=jobs)
    timings["samples"] = sw.wall_times
    for s in sw.samples:
        say(_summary(inst, s))
    header, rows = _sample_rows(inst, sw)
    write_csv(out / "samples.csv", header, rows)
    report["n_samples"] = len(sw.samples)
    report["values"] = [s.value for s in sw.samples]
    if cfg.command == "lipschitz":
        rep = lipschitz_report(inst, sw)
        report["lipschitz"] = rep.to_dict()
        say(f"empirical = {rep.empirical:.6f}  hat_L = {rep.hat_L}  tilde_C = {rep.tilde_C}  "
            f"combined = {rep.combined}  pass = {rep.passed}")
    timings["total"] = time.perf_counter() - t0
    return report, timings


def run(config_path: str, command: Optional[str] = None, jobs: Optional[int] = None,
        out: Optional[str] = None, quiet: bool = False) -> int:
    try:
        text = Path(config_path).read_text(encoding="utf-8")
        raw = json.loads(text)
        if command is not None:
            if not isinstance(raw, dict) or not isinstance(raw.get("experiment"), dict):
                raise ConfigError("config needs an 'experiment' section")
            raw["experiment"]["command"] = command
        cfg = parse_config(raw)
        out_dir = Path(out or cfg.out or "results")
        out_dir.mkdir(parents=True, exist_ok=True)
        if not os.access(out_dir, os.W_OK):
            raise ConfigError(f"output directory {out_dir} is not writable")
        report, timings = execute(cfg, out_dir, jobs or os.cpu_count() or 1, quiet)
    except (ConfigError, json.JSONDecodeError, OSError, TypeError, EnumerationBudgetError, HypothesisError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (PropagationError, CostEvaluationError, EmptyAdmissibleSetError, SweepAborted,
            UnboundedGrowthError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    write_json(out_dir / "report.json", report)
    canonical = json.dumps(raw, sort_keys=True, separators=(",", ":")).encode("utf-8")
    write_json(out_dir / "meta.json", {"config_sha256": hashlib.sha256(canonical).hexdigest(),
                                       "command": cfg.command, "timings": timings})
    return EXIT_OK


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="miocp-sens", description=__doc__.splitlines()[0])
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--command", choices=COMMANDS, help="override experiment.command")
    p.add_argument("--jobs", type=int, default=None, help="worker threads (default: CPU count)")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--quiet", action="store_true")
    args = p.parse_args(argv)
    if args.jobs is not None and args.jobs < 1:
        p.error("--jobs must be >= 1")
    return run(args.config, args.command, args.jobs, args.out, args.quiet)


if __name__ == "__main__":
    sys.exit(main())
