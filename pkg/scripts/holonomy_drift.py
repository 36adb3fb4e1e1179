"""Holonomy trace along a solution orbit and along perturbed versions of it.

A flat connection keeps the loop trace constant in t, a perturbed one does not.
"""
import argparse

import numpy as np

from bzpiii import bianchi as bz
from bzpiii import laxpair as lax
from bzpiii.ode import StepControl


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--model", default="VII0", choices=[m.name for m in bz.STANDARD_MODELS])
    ap.add_argument("--a0", type=float, default=2.0)
    ap.add_argument("--da0", type=float, default=0.0)
    ap.add_argument("--t-end", type=float, default=3.0)
    ap.add_argument("--samples", type=int, default=9)
    ap.add_argument("--radii", default="1,2")
    args = ap.parse_args()
    model = next(m for m in bz.STANDARD_MODELS if m.name == args.model)
    C = bz.c_matrix(model)
    R = bz.r_from_c(C)
    gt = bz.evolve_gamma(C, args.a0, args.da0, (1.0, args.t_end), StepControl(rtol=1e-12, atol=1e-14))
    ts = np.linspace(1.0, args.t_end, args.samples)
    print("perturbation,radius,max_relative_drift,max_richardson_err")
    for eps in (0.0, 1e-4, 1e-3, 1e-2):
        src = bz.PerturbedGamma(gt, eps) if eps else gt
        for r in map(float, args.radii.split(",")):
            d = lax.holonomy_trace_drift(lax.LshConnection(src, R), ts, radius=r)
            print(f"{eps:g},{r:g},{d.max_relative_drift:.3e},{np.max(d.error):.3e}")


if __name__ == "__main__":
    main()
