"""Value function of the scalar bilinear example and its one-sided slopes."""
import argparse

import numpy as np

from miocp_sensitivity.instances import example1_oracle, make_example1
from miocp_sensitivity.sensitivity import kink_scan, sweep


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--n-cells", type=int, default=8)
    p.add_argument("--points", type=int, default=9)
    p.add_argument("--h", type=float, default=1e-4)
    args = p.parse_args()

    inst = make_example1(n_cells=args.n_cells)
    lams = np.linspace(-1.0, 1.0, args.points)
    sw = sweep(inst, list(lams))
    print(f"{'lambda':>8} {'nu':>12} {'oracle':>12}")
    for s in sw.samples:
        print(f"{s.lam:8.3f} {s.value:12.8f} {example1_oracle(s.lam, 1.0):12.8f}")
    print()
    for r in kink_scan(inst, -0.5, 0.5, 5, h=args.h):
        print(f"lambda = {r.coord:+.3f}  left = {r.left:.6f}  right = {r.right:.6f}" + ("  KINK" if r.flagged else ""))


if __name__ == "__main__":
    main()
