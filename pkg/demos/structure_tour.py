"""Structure a splitting step keeps, measured on one noisy path.

Run: python3 demos/structure_tour.py
"""

import numpy as np

from slogs.field import make_grid
from slogs.flows import DiffusionG
from slogs.noise import Window, build_noise, sample_path
from slogs.observables import observe, symplectic_form
from slogs.regularization import RegFamily
from slogs.schemes import SchemeConfig, run_trajectory, step_tangent


def main():
    grid = make_grid(256, 16 * np.pi)
    u0 = np.exp(-grid.points**2 / 2).astype(complex)
    reg = RegFamily(1e-3)
    tau, steps = 2.0**-7, 256

    # mass: conserved pathwise by the conservative scheme, drifts by tau*TrQ per step in mean for the additive one
    real = build_noise(grid, 8, flavor="RealL2")
    cfg = SchemeConfig("LieConservative", tau=tau, reg=reg, g=DiffusionG("Saturating", (1.0, 1.0, 1.0)), M_sub=1)
    path = sample_path(real, steps * tau, tau, seed=1)
    traj = run_trajectory(u0, steps * tau, cfg, path, keep_states=True)
    masses = [observe(grid, u, reg, -1.0).M for u in traj.states]
    print(f"LieConservative  max |M(t) - M(0)| / M(0) = {np.max(np.abs(np.array(masses) / masses[0] - 1)):.2e}")

    cplx = build_noise(grid, 8, flavor="ComplexH")
    cfg = SchemeConfig("LieAdd", tau=tau, reg=reg, M_sub=1)
    path = sample_path(cplx, steps * tau, tau, seed=2, n_paths=400)
    traj = run_trajectory(u0, steps * tau, cfg, path)
    gain = np.mean(grid.norm_l2(traj.final) ** 2) - grid.norm_l2(u0) ** 2
    print(f"LieAdd           E M(T) - M(0) = {gain:.4f}   T TrQ = {steps * tau * cplx.trace():.4f}")

    # 2-form on tangent pairs through the linearized midpoint step
    cfg = SchemeConfig("MidpointSplit", tau=tau, reg=reg, M_sub=1)
    path = sample_path(cplx, 16 * tau, tau, seed=3)
    rng = np.random.default_rng(0)
    xis = np.exp(-grid.points**2 / 8) * (rng.normal(size=(2, grid.n)) + 1j * rng.normal(size=(2, grid.n)))
    u = u0
    w0 = symplectic_form(grid, xis[0], xis[1])
    for k in range(16):
        u, xis = step_tangent(u, xis, Window(path, k, k + 1), cfg)
    print(f"MidpointSplit    omega drift over 16 steps = {abs(symplectic_form(grid, xis[0], xis[1]) / w0 - 1):.2e}")


if __name__ == "__main__":
    main()
