"""Strong error of the additive splitting on a shrinking ladder, small grid.

The error is dominated by the deterministic splitting commutator, so the
observed order is 1 even though the guaranteed order is 1/2.  Turning the
nonlinearity off removes the commutator; what is left is the left-point
quadrature of the stochastic convolution, also first order and about a
thousand times smaller.

Run: python3 demos/why_the_lie_rates_are_one.py
"""

import numpy as np

from slogs.field import make_grid
from slogs.harness.fitting import fit_slope
from slogs.noise import build_noise, sample_path
from slogs.regularization import RegFamily
from slogs.schemes import SchemeConfig, run_trajectory

T = 0.25
TAUS = [2.0**-4, 2.0**-5, 2.0**-6, 2.0**-7]
TAU_REF = 2.0**-10


def ladder(lam, paths=100):
    grid = make_grid(64, 8 * np.pi)
    model = build_noise(grid, 4, amplitude=1.0)
    path = sample_path(model, T, TAU_REF, seed=5, n_paths=paths)
    u0 = np.exp(-grid.points**2 / 2).astype(complex)

    def final(tau):
        return run_trajectory(u0, T, SchemeConfig("LieAdd", lam=lam, tau=tau, reg=RegFamily(1e-3), M_sub=1), path).final

    ref = final(TAU_REF)
    return [float(np.mean(grid.norm_l2(final(t) - ref))) for t in TAUS]


def main():
    for lam in (-1.0, 0.0):
        errs = ladder(lam)
        slope = fit_slope(TAUS, errs).slope if min(errs) > 1e-13 else float("nan")
        print(f"lambda = {lam:+.0f}: errors " + ", ".join(f"{e:.2e}" for e in errs) + f"  slope {slope:.2f}")


if __name__ == "__main__":
    main()
