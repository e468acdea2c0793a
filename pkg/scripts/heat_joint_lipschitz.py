"""Joint perturbation of initial state, dwell bound and target on the heat instance."""
import argparse
import json

from miocp_sensitivity.instances import make_heat_actuator
from miocp_sensitivity.sensitivity import lipschitz_report, sweep
from miocp_sensitivity.solver import EnumerationCaps


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--radius", type=float, default=0.02)
    p.add_argument("--n-lowdisc", type=int, default=2)
    p.add_argument("--max-switches", type=int, default=2)
    p.add_argument("--jobs", type=int, default=1)
    args = p.parse_args()

    inst = make_heat_actuator(radius=args.radius)
    coords = inst.space.sample_coords(n_lowdisc=args.n_lowdisc)
    sw = sweep(inst, coords=coords, caps=EnumerationCaps(max_switches=args.max_switches), jobs=args.jobs)
    for c, s in zip(coords, sw.samples):
        print(" ".join(f"{x:+.4f}" for x in c), f"nu = {s.value:.8f}  v = {s.best_v.encode()}")
    print(json.dumps(lipschitz_report(inst, sw).to_dict(), indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
