"""Oracle gates and solver-integrity checks.

Each gate compares an implementation route against an independent route from
:mod:`slogs.oracle` (or an exact identity) and returns a :class:`GateResult`.
Rate gates follow one rule: the error of the analytic flow against the
Euler-Maruyama oracle must decay at the oracle's own self-convergence rate
(within ``rate_band``) and must not flatten out at the fine end of the ladder.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import oracle
from ..field import make_grid
from ..flows import DiffusionG, phi_A, phi_f, phi_fg_conservative, phi_M_exp_euler, phi_S_analytic, drift_correction
from ..noise import Window, build_noise, sample_path
from ..regularization import RegFamily
from ..schemes import SchemeConfig, solve_implicit, step_crank_nicolson
from .fitting import fit_slope, local_slopes

__all__ = [
    "GateResult",
    "flow_rate_gates",
    "newton_gate",
    "averaged_f_gate",
    "discrete_gradient_gate",
    "isometry_gate",
    "oracle_gates",
    "solver_integrity_gates",
]


@dataclass
class GateResult:
    name: str
    passed: bool
    observed: dict = field(default_factory=dict)
    note: str = ""

    def line(self) -> str:
        obs = ", ".join(f"{k}={_fmt(v)}" for k, v in self.observed.items())
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {obs}" + (f" ({self.note})" if self.note else "")

    def to_dict(self):
        return {"name": self.name, "pass": bool(self.passed), "observed": _jsonable(self.observed), "note": self.note}


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    return obj


# -- flows vs Euler-Maruyama ---------------------------------------------------

N_SMALL = 8
L_SMALL = 2 * np.pi
T_GATE = 0.25
DT_FINE = 2.0**-14
EM_DTS = tuple(2.0**-j for j in range(7, 12))


def _rate_gate(name, flow_value, em_run, grid, rate_band=0.2):
    """Compare ``flow_value`` against ``em_run(dt)`` over ``EM_DTS``."""
    h_norm = lambda z: np.mean(grid.norm_l2(z))  # noqa: E731
    runs = {dt: em_run(dt) for dt in EM_DTS + (EM_DTS[-1] / 2,)}
    if any(np.any(r.failed) for r in runs.values()):
        return GateResult(name, False, {}, "oracle blow-up")
    errs = np.array([h_norm(flow_value - runs[dt].final) for dt in EM_DTS])
    selfs = np.array([h_norm(runs[dt].final - runs[dt / 2].final) for dt in EM_DTS])
    s_err = fit_slope(EM_DTS, errs).slope
    s_self = fit_slope(EM_DTS, selfs).slope
    last = float(local_slopes(EM_DTS, errs)[-1])
    ok = abs(s_err - s_self) <= rate_band and last >= 0.5 * s_self
    obs = {"err_slope": s_err, "oracle_self_slope": s_self, "last_local_slope": last, "finest_err": float(errs[-1])}
    return GateResult(name, bool(ok), obs)


def _small_setup(flavor, K, amplitude, n_paths, seed):
    grid = make_grid(N_SMALL, L_SMALL)
    model = build_noise(grid, K, 4.0, amplitude, flavor) if K else build_noise(grid, 0, flavor="None")
    path = sample_path(model, T_GATE, DT_FINE, seed, n_paths=n_paths)
    system = oracle.GalerkinSystem.build(grid.n, grid.length, model.basis)
    u0 = (1.0 + 0.5 * np.cos(grid.points) + 0.3j * np.sin(2 * grid.points)).astype(complex)
    win = Window(path, 0, path.n_fine)
    return grid, model, path, system, u0, win


def flow_rate_gates(n_paths: int = 100, seed: int = 7) -> list[GateResult]:
    """Every analytic flow against Euler-Maruyama of its own sub-equation."""
    out = []
    eps, lam = 1e-3, -1.0
    reg = RegFamily(eps)
    sat = DiffusionG("Saturating", (1.0, 1.0, 1.0))

    # phase flow: deterministic ODE
    grid, model, path, system, u0, win = _small_setup("None", 0, 0.0, None, seed)
    val = phi_f(u0, T_GATE, reg, lam)
    out.append(_rate_gate("phi_f vs EM", val, lambda dt: oracle.em_reference(
        system, u0, T_GATE, dt, path.increments, DT_FINE, lam=lam, eps=eps, laplacian=False, additive=True), grid))

    # additive stochastic flow with the Laplacian (fine left-point convolution)
    grid, model, path, system, u0, win = _small_setup("ComplexH", 2, 2.0, n_paths, seed + 1)
    val = phi_A(grid, u0, win, M_sub=path.n_fine)
    out.append(_rate_gate("phi_A vs EM", val, lambda dt: oracle.em_reference(
        system, u0, T_GATE, dt, path.increments, DT_FINE, additive=True), grid))

    # exponential-Euler multiplicative flow vs the frozen-coefficient SDE
    grid, model, path, system, u0, win = _small_setup("ComplexH", 2, 2.0, n_paths, seed + 2)
    val = phi_M_exp_euler(grid, u0, win, sat, M_sub=path.n_fine)
    val = val - T_GATE * grid.free_propagator(drift_correction(u0, model, sat), T_GATE)
    out.append(_rate_gate("phi_M_exp_euler vs frozen EM", val, lambda dt: oracle.em_reference(
        system, u0, T_GATE, dt, path.increments, DT_FINE, g=sat, frozen=True, ito_drift=False), grid))

    # conservative phase flow (real noise, general g)
    grid, model, path, system, u0, win = _small_setup("RealL2", 2, 2.0, n_paths, seed + 3)
    val = phi_fg_conservative(u0, T_GATE, reg, lam, sat, win.increment())
    out.append(_rate_gate("phi_fg_conservative vs EM", val, lambda dt: oracle.em_reference(
        system, u0, T_GATE, dt, path.increments, DT_FINE, lam=lam, eps=eps, g=sat, laplacian=False), grid))

    # noise substep, case 3 (real noise, general g)
    val = phi_S_analytic(u0, win, sat)
    out.append(_rate_gate("phi_S case 3 vs EM", val, lambda dt: oracle.em_reference(
        system, u0, T_GATE, dt, path.increments, DT_FINE, g=sat, laplacian=False), grid))

    # noise substep, case 2 (complex noise, g = 1): the closed form is ours, so it gets its own gate
    grid, model, path, system, u0, win = _small_setup("ComplexH", 2, 2.0, n_paths, seed + 4)
    one = DiffusionG("One")
    val = phi_S_analytic(u0, win, one)
    out.append(_rate_gate("phi_S case 2 formula vs EM", val, lambda dt: oracle.em_reference(
        system, u0, T_GATE, dt, path.increments, DT_FINE, g=one, laplacian=False), grid))

    # noise substep, case 1: both routes are exact
    val = phi_S_analytic(u0, win, None, additive=True)
    em = oracle.em_reference(system, u0, T_GATE, EM_DTS[0], path.increments, DT_FINE, additive=True, laplacian=False)
    err = float(np.max(grid.norm_l2(val - em.final)))
    out.append(GateResult("phi_S case 1 vs EM", err <= 1e-12, {"max_err": err}, "both routes exact"))
    return out


# -- implicit solvers ----------------------------------------------------------


def newton_gate(seed: int = 11, tol: float = 1e-10) -> list[GateResult]:
    """Fixed-point vs Newton roots for the midpoint and Crank-Nicolson solves."""
    rng = np.random.default_rng(seed)
    grid = make_grid(N_SMALL, L_SMALL)
    system = oracle.GalerkinSystem.build(grid.n, grid.length, np.zeros((1, grid.n)))
    out = []
    for averaged, name in ((False, "midpoint"), (True, "Crank-Nicolson")):
        worst = 0.0
        for eps in (1e-2, 1e-3):
            reg = RegFamily(eps)
            for _ in range(5):
                v = rng.normal(size=grid.n) + 1j * rng.normal(size=grid.n)
                tau = 0.05
                fp, info = solve_implicit(grid, v, tau, reg, -1.0, tol=1e-13, max_iter=200, averaged=averaged)
                nw = oracle.newton_implicit(system, v, tau, eps, -1.0, tol=1e-13, averaged=averaged)
                worst = max(worst, float(grid.norm_l2(fp - nw)))
        out.append(GateResult(f"fixed-point vs Newton ({name})", worst <= tol, {"max_diff": worst, "tol": tol}))
    return out


def averaged_f_gate(seed: int = 5, tol: float = 1e-9) -> GateResult:
    """``averaged_f`` against graded Gauss-Legendre quadrature, including near-degenerate pairs."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for eps in (1e-2, 1e-3, 1e-4):
        reg = RegFamily(eps)
        a = np.concatenate([10.0 ** rng.uniform(-12, 3, 60), [0.0, 0.0, 1.0, 2.0]])
        gaps = np.concatenate([10.0 ** rng.uniform(-12, 3, 60), [2.0, 1e-12, 1e-12, 0.0]])
        b = a + gaps
        b[::3] = a[::3] + 1e-12
        got = reg.averaged_f(a, b)
        ref = oracle.gauss_legendre_average(eps, a, b)
        worst = max(worst, float(np.max(np.abs(got - ref))))
    return GateResult("averaged_f vs Gauss-Legendre", worst <= tol, {"max_err": worst, "tol": tol})


def discrete_gradient_gate(seed: int = 3, tol: float = 1e-10) -> GateResult:
    """Crank-Nicolson nonlinearity times the density jump equals the jump of the entropy integrand.

    Checked pointwise on the states of actual Crank-Nicolson steps.
    """
    grid = make_grid(64, 8 * np.pi)
    model = build_noise(grid, 4, flavor="ComplexH")
    path = sample_path(model, 2.0**-4, 2.0**-10, seed, n_paths=8)
    cfg = SchemeConfig("CrankNicolsonSplit", tau=2.0**-4, reg=RegFamily(1e-3))
    u = np.exp(-grid.points**2 / 2).astype(complex)
    win = Window(path, 0, path.n_fine)
    v = phi_S_analytic(u, win, None, additive=True)
    u_new, _ = step_crank_nicolson(u, win, cfg)
    ra, rb = np.abs(v) ** 2, np.abs(u_new) ** 2
    lhs = cfg.reg.averaged_f(ra, rb) * (rb - ra)
    rhs = cfg.reg.entropy_integrand(rb) - cfg.reg.entropy_integrand(ra)
    worst = float(np.max(np.abs(lhs - rhs)))
    return GateResult("discrete-gradient identity", worst <= tol, {"max_err": worst, "tol": tol})


def isometry_gate(seed: int = 9) -> list[GateResult]:
    """``||u_{k+1}|| = ||Φ_S(u_k)||`` for the implicit schemes, within 10x the solver tolerance."""
    grid = make_grid(128, 16 * np.pi)
    out = []
    for scheme in ("MidpointSplit", "CrankNicolsonSplit"):
        model = build_noise(grid, 8, flavor="ComplexH")
        path = sample_path(model, 0.25, 2.0**-10, seed, n_paths=16)
        cfg = SchemeConfig(scheme, tau=2.0**-6, reg=RegFamily(1e-3))
        u = np.exp(-grid.points**2 / 2).astype(complex)
        per = int(round(cfg.tau / path.dt_fine))
        worst = 0.0
        from ..schemes import step

        for k in range(16):
            win = Window(path, k * per, (k + 1) * per)
            v = phi_S_analytic(u, win, None, additive=True)
            u, info = step(u, win, cfg)
            rel = np.abs(grid.norm_l2(u) - grid.norm_l2(v)) / np.maximum(1.0, grid.norm_l2(v))
            worst = max(worst, float(np.max(rel)))
        bound = 10 * cfg.tol
        out.append(GateResult(f"L2 isometry ({scheme})", worst <= bound, {"max_rel": worst, "bound": bound}))
    return out


def oracle_gates(n_paths: int = 100) -> list[GateResult]:
    return flow_rate_gates(n_paths) + newton_gate()


def solver_integrity_gates() -> list[GateResult]:
    return [discrete_gradient_gate(), averaged_f_gate()] + isometry_gate()
