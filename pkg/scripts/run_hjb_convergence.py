"""Grid-convergence study for the backward HJB solver.

Solves the uncontrolled heat benchmark (fixed unit diffusion, zero cost,
terminal cos x, exact value e^{-1/2} cos x at t = 0) on a sequence of doubled
grids and prints the max error on the reported domain plus the observed
contraction factor between successive refinements.
"""

import argparse

import numpy as np

from levysot.serialize import cost_from_expr
from levysot.transport import (
    HJBGridConfig,
    Marginal,
    TransportInstance,
    solve_hjb,
)
from levysot.triplets import LevyTriplet, ThetaFamily


def heat_instance() -> TransportInstance:
    fam = ThetaFamily(
        parameter_box=((1.0, 1.0),),
        triplet_map=lambda p: LevyTriplet.scalar(0.0, float(p[0])),
    )
    return TransportInstance(
        mu0=Marginal.point(0.0),
        mu1=Marginal.gaussian(0.0, 1.0),
        fam=fam,
        cost=cost_from_expr("0", ("c",)),
    )


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--levels", type=int, default=4)
    ap.add_argument("--base", type=int, default=50, help="coarsest n_x = n_t")
    args = ap.parse_args()

    inst = heat_instance()
    errors = []
    for level in range(args.levels):
        n = args.base * 2**level
        cfg = HJBGridConfig(x_min=-6.0, x_max=6.0, n_x=n, n_t=n)
        vg = solve_hjb(inst, lambda x: np.cos(x), cfg)
        lo, hi = vg.report_slice
        x = vg.x_grid[lo:hi]
        exact = np.exp(-0.5) * np.cos(x)
        err = float(np.max(np.abs(vg.initial()[lo:hi] - exact)))
        errors.append(err)
        ratio = f"  ratio {errors[-1] / errors[-2]:.3f}" if level else ""
        print(f"n_x = n_t = {n:>5d}  max error {err:.3e}{ratio}")


if __name__ == "__main__":
    main()
