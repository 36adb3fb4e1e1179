"""Compare the metric evolution mapped to u(tau) against a direct Painleve III solve.

Prints one CSV row per (c, k, a0, da0) with the maximum absolute gap in u and du.
"""
import argparse
import itertools

import numpy as np

from bzpiii import bianchi as bz
from bzpiii import piii
from bzpiii.ode import StepControl


def gap(ck, a0, da0, t1, control):
    gt = bz.evolve_gamma(ck, a0, da0, (1.0, t1), control)
    tr = piii.solve_piii(piii.params_from_ck(ck), piii.transform_a_to_u(1.0, a0, da0), t1**2 / 4, control)
    hi = min(gt.span[1], 2 * np.sqrt(tr.span[1]))
    ts = np.linspace(1.0, hi, 201)
    a, da = gt.a_da(ts)
    worst = 0.0
    for t, ai, dai in zip(ts, a, da):
        s = piii.transform_a_to_u(float(t), float(ai), float(dai))
        ref = tr(s.tau)
        worst = max(worst, abs(s.u - ref[0]), abs(s.du - ref[1]))
    return hi, worst


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--t-end", type=float, default=5.0)
    ap.add_argument("--rtol", type=float, default=1e-12)
    ap.add_argument("--atol", type=float, default=1e-14)
    args = ap.parse_args()
    control = StepControl(rtol=args.rtol, atol=args.atol)
    print("c,k,a0,da0,t_reached,max_gap")
    for (c, k), (a0, da0) in itertools.product([(1, 1), (1, 0), (1, -1), (0.5, 2)], [(1.0, 0.0), (2.0, 0.5), (0.7, -0.2)]):
        hi, worst = gap(piii.CkParams(c, k), a0, da0, args.t_end, control)
        print(f"{c},{k},{a0},{da0},{hi:.6g},{worst:.3e}")


if __name__ == "__main__":
    main()
