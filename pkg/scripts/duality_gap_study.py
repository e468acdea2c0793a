"""Relative duality gap on the heat instance for growing ascent budgets."""
import argparse

from miocp_sensitivity.duality import duality_study, multiplier_mass_bound
from miocp_sensitivity.instances import make_heat_actuator
from miocp_sensitivity.solver import EnumerationCaps


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--levels", type=int, nargs="+", default=[50, 200, 800])
    p.add_argument("--max-switches", type=int, default=1)
    p.add_argument("--jobs", type=int, default=1)
    args = p.parse_args()

    inst = make_heat_actuator()
    paths = EnumerationCaps(max_switches=args.max_switches).paths(inst)
    st = duality_study(inst, inst.space.center, paths, args.levels, jobs=args.jobs)
    print(f"nu = {st.nu:.10f}  ({len(paths)} paths)")
    for lvl, d, g in zip(st.levels, st.dual_by_level, st.rel_gap_by_level):
        print(f"{lvl:6d} iterations  dual = {d:.10f}  rel gap = {g:.3e}")
    bound = multiplier_mass_bound(inst, paths)
    print(f"weak duality: {st.weak_duality}  max mass = {st.max_mass:.4g}  mass bound = {bound.value:.4g}")


if __name__ == "__main__":
    main()
