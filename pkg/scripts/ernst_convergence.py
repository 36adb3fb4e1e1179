"""Ernst residual of an assembled metric under successive grid refinements.

Each row is a grid size n, the residual on n x n nodes and the observed order
against the 2n grid.
"""
import argparse
import math

import numpy as np

from bzpiii import bianchi as bz
from bzpiii.ode import StepControl


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--model", default="VII0", choices=[m.name for m in bz.STANDARD_MODELS])
    ap.add_argument("--a0", type=float, default=2.0)
    ap.add_argument("--da0", type=float, default=0.5)
    ap.add_argument("--sizes", default="16,32,64,128")
    args = ap.parse_args()
    model = next(m for m in bz.STANDARD_MODELS if m.name == args.model)
    gt = bz.evolve_gamma(model, args.a0, args.da0, (0.8, 3.2), StepControl(rtol=1e-12, atol=1e-14))
    print("n,residual,order")
    for n in map(int, args.sizes.split(",")):
        field_ = bz.assemble_metric(model, gt, np.linspace(1, 3, n), np.linspace(0, 2 * math.pi, n))
        err, order = bz.ernst_residual(field_)
        print(f"{n},{err:.4e},{order:.4f}")


if __name__ == "__main__":
    main()
