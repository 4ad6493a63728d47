"""Composed time-steppers and the trajectory driver.

Every step acts on a batch of fields ``(..., n)`` together with the matching
batch of noise paths.  Implicit steps freeze each path as soon as its own
fixed-point iteration has converged, so a path's result never depends on the
other paths sharing its batch.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .field import Grid
from .flows import (
    DiffusionG,
    analytic_case,
    phi_A,
    phi_f,
    phi_f_tangent,
    phi_fg_conservative,
    phi_fg_tangent,
    phi_M_exp_euler,
    phi_S_analytic,
    phi_S_euler,
    phi_S_tangent,
)
from .noise import NoisePath, Window
from .regularization import RegFamily

__all__ = [
    "SCHEMES",
    "SchemeConfig",
    "StepFailure",
    "StepInfo",
    "Trajectory",
    "step",
    "step_lie_add",
    "step_lie_mul_exp",
    "step_lie_conservative",
    "step_midpoint",
    "step_crank_nicolson",
    "solve_implicit",
    "step_tangent",
    "run_trajectory",
]

SCHEMES = ("LieAdd", "LieMulExp", "LieConservative", "MidpointSplit", "CrankNicolsonSplit")
IMPLICIT = ("MidpointSplit", "CrankNicolsonSplit")


class StepFailure(RuntimeError):
    """Implicit solve did not converge; carries the residual and partial trajectory."""

    def __init__(self, message, residual=float("nan"), trajectory=None):
        super().__init__(message)
        self.residual = residual
        self.trajectory = trajectory


@dataclass(frozen=True)
class SchemeConfig:
    """Integrator choice and solver settings.

    ``additive`` selects the noise type of the midpoint and Crank-Nicolson
    schemes (``W`` itself or ``i g(|u|^2) u ⋆ dW``).  ``LieAdd`` is always
    additive; ``LieMulExp`` and ``LieConservative`` are always multiplicative.
    """

    scheme: str = "LieAdd"
    lam: float = -1.0
    reg: RegFamily = field(default_factory=lambda: RegFamily(1e-3))
    g: DiffusionG = field(default_factory=DiffusionG)
    tau: float = 2.0**-6
    tol: float = 1e-11
    max_iter: int = 50
    M_sub: int = 8
    c0: float | None = None
    additive: bool = True
    strict: bool = False
    euler_fallback: bool = True

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; valid ids: {', '.join(SCHEMES)}")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.M_sub < 1 or self.max_iter < 1:
            raise ValueError("M_sub and max_iter must be >= 1")

    @property
    def is_additive(self) -> bool:
        if self.scheme == "LieAdd":
            return True
        if self.scheme in ("LieMulExp", "LieConservative"):
            return False
        return self.additive

    @property
    def tau_ceiling(self) -> float:
        c0 = self.c0
        if c0 is None:
            c0 = 0.5 / abs(self.lam) if self.lam else math.inf
        return c0 / self.reg.log_factor

    def with_tau(self, tau: float) -> "SchemeConfig":
        return replace(self, tau=tau)

    def check(self, path: NoisePath) -> list[str]:
        """Validate against a path; returns metadata tags (e.g. ``"phi_S_euler"``)."""
        tags = []
        ratio = self.tau / path.dt_fine
        if abs(ratio - round(ratio)) > 1e-9 * ratio:
            raise ValueError(f"tau={self.tau} is not a multiple of dt_fine={path.dt_fine}")
        if round(ratio) % self.M_sub and self.scheme in ("LieAdd", "LieMulExp"):
            raise ValueError(f"tau spans {round(ratio)} fine steps, not divisible by M_sub={self.M_sub}")
        if self.tau >= self.tau_ceiling:
            msg = f"tau={self.tau:g} is above the step ceiling {self.tau_ceiling:g} for eps={self.reg.eps:g}"
            if self.strict:
                raise ValueError(msg)
            warnings.warn(msg, stacklevel=3)
        flavor = path.model.flavor
        if self.scheme == "LieMulExp" and flavor == "RealL2":
            raise ValueError("LieMulExp needs ComplexH (or None) noise, got RealL2")
        if self.scheme == "LieConservative" and flavor == "ComplexH":
            raise ValueError("LieConservative needs real-valued RealL2 (or None) noise, got ComplexH")
        if self.scheme in IMPLICIT and analytic_case(path.model, self.g, self.is_additive) == 0:
            if not self.euler_fallback:
                raise ValueError(f"no closed-form noise substep for {flavor} with g={self.g}")
            tags.append("phi_S_euler")
        return tags


@dataclass
class StepInfo:
    iterations: np.ndarray
    residual: np.ndarray
    failed: np.ndarray


def _batch_norm(grid: Grid, u):
    return grid.norm_l2(u)


def _trivial_info(u):
    shape = np.shape(u)[:-1]
    return StepInfo(np.zeros(shape, dtype=int), np.zeros(shape), np.zeros(shape, dtype=bool))


# -- Lie-Trotter steps -------------------------------------------------------


def step_lie_add(u, window: Window, cfg: SchemeConfig):
    grid = window.model.grid
    return phi_A(grid, phi_f(u, cfg.tau, cfg.reg, cfg.lam), window, cfg.M_sub)


def step_lie_mul_exp(u, window: Window, cfg: SchemeConfig):
    grid = window.model.grid
    return phi_M_exp_euler(grid, phi_f(u, cfg.tau, cfg.reg, cfg.lam), window, cfg.g, cfg.M_sub)


def step_lie_conservative(u, window: Window, cfg: SchemeConfig):
    grid = window.model.grid
    w = phi_fg_conservative(u, cfg.tau, cfg.reg, cfg.lam, cfg.g, window.increment())
    return grid.free_propagator(w, cfg.tau)


# -- implicit steps ----------------------------------------------------------


def _nonlinear_term(v, u_new, reg: RegFamily, averaged: bool):
    m = 0.5 * (v + u_new)
    if averaged:
        return reg.averaged_f(np.abs(v) ** 2, np.abs(u_new) ** 2) * m
    return reg.f(np.abs(m) ** 2) * m


def solve_implicit(grid: Grid, v, tau, reg, lam, tol=1e-11, max_iter=50, averaged=False, guess=None):
    """Solve ``u = S_τ v + T_τ(iλτ N(v, u))`` by fixed-point iteration.

    ``N = f_eps(|m|^2) m`` with ``m = (v+u)/2`` (midpoint) or the discrete
    gradient ``averaged_f(|v|^2, |u|^2) m`` (Crank-Nicolson).  Each path stops
    once its update falls below ``tol * max(1, ||v||)``.
    Returns ``(u, StepInfo)``.
    """
    v = np.asarray(v, dtype=complex)
    Sv = grid.cayley_step(v, tau)
    if lam == 0:
        return Sv, _trivial_info(v)
    t_sym = grid.half_resolvent_symbol(tau)
    u = Sv.copy() if guess is None else np.array(guess, dtype=complex)
    batch = v.shape[:-1]
    scale = tol * np.maximum(1.0, _batch_norm(grid, v))
    iters = np.zeros(batch, dtype=int)
    resid = np.full(batch, np.inf)
    active = np.ones(batch, dtype=bool)
    u2 = u.reshape(-1, grid.n)
    v2 = v.reshape(-1, grid.n)
    Sv2 = Sv.reshape(-1, grid.n)
    act = active.reshape(-1)
    it2 = iters.reshape(-1)
    res2 = resid.reshape(-1)
    sc2 = np.broadcast_to(scale, batch).reshape(-1)
    for it in range(1, max_iter + 1):
        idx = np.flatnonzero(act)
        if idx.size == 0:
            break
        cur = u2[idx]
        nl = _nonlinear_term(v2[idx], cur, reg, averaged)
        new = Sv2[idx] + grid.ifft(grid.fft(1j * lam * tau * nl) * t_sym)
        diff = grid.norm_l2(new - cur)
        u2[idx] = new
        it2[idx] = it
        res2[idx] = diff
        act[idx[diff <= sc2[idx]]] = False
    failed = act.reshape(batch).copy()
    return u2.reshape(v.shape), StepInfo(iters, resid, failed)


def _noise_substep(u, window: Window, cfg: SchemeConfig):
    if analytic_case(window.model, cfg.g, cfg.is_additive):
        return phi_S_analytic(u, window, cfg.g, cfg.is_additive)
    if not cfg.euler_fallback:
        raise ValueError("no closed-form noise substep; enable the phi_S_euler fallback")
    return phi_S_euler(u, window, cfg.g, cfg.is_additive)


def _implicit_step(u, window, cfg, averaged):
    grid = window.model.grid
    v = _noise_substep(np.asarray(u, dtype=complex), window, cfg)
    guess = grid.cayley_step(phi_f(v, cfg.tau, cfg.reg, cfg.lam), cfg.tau)
    return solve_implicit(grid, v, cfg.tau, cfg.reg, cfg.lam, cfg.tol, cfg.max_iter, averaged, guess)


def step_midpoint(u, window: Window, cfg: SchemeConfig):
    """``u⁺`` solving the midpoint step after the noise substep; returns ``(u⁺, StepInfo)``."""
    return _implicit_step(u, window, cfg, averaged=False)


def step_crank_nicolson(u, window: Window, cfg: SchemeConfig):
    """As :func:`step_midpoint` with the discrete-gradient nonlinearity."""
    return _implicit_step(u, window, cfg, averaged=True)


_EXPLICIT = {
    "LieAdd": step_lie_add,
    "LieMulExp": step_lie_mul_exp,
    "LieConservative": step_lie_conservative,
}


def step(u, window: Window, cfg: SchemeConfig):
    """One step of the configured scheme; returns ``(u_next, StepInfo)``."""
    if cfg.scheme in _EXPLICIT:
        out = _EXPLICIT[cfg.scheme](u, window, cfg)
        return out, _trivial_info(out)
    if cfg.scheme == "MidpointSplit":
        return step_midpoint(u, window, cfg)
    return step_crank_nicolson(u, window, cfg)


# -- tangent maps ------------------------------------------------------------


def _implicit_tangent(grid, v, u_new, eta, tau, reg, lam, tol=1e-14, max_iter=200):
    """Linearization of the midpoint solve at ``(v, u⁺)`` applied to ``eta = δv``."""
    S_eta = grid.cayley_step(eta, tau)
    if lam == 0:
        return S_eta
    t_sym = grid.half_resolvent_symbol(tau)
    m = 0.5 * (v + u_new)
    rho = np.abs(m) ** 2
    f0 = reg.f(rho)
    f1 = reg.f_prime(rho)
    xi = S_eta.copy()
    scale = tol * np.maximum(1.0, np.max(grid.norm_l2(eta)))
    for _ in range(max_iter):
        dm = 0.5 * (eta + xi)
        dn = f0 * dm + f1 * 2.0 * (np.conj(m) * dm).real * m
        new = S_eta + grid.ifft(grid.fft(1j * lam * tau * dn) * t_sym)
        done = np.max(grid.norm_l2(new - xi)) <= scale
        xi = new
        if done:
            break
    return xi


def step_tangent(u, xis, window: Window, cfg: SchemeConfig):
    """Propagate tangent vectors ``xis`` (stacked on the leading axis) through one step.

    Noise increments are frozen.  Supported: ``LieAdd``, ``LieConservative``
    and ``MidpointSplit`` (closed-form noise cases).  Returns
    ``(u_next, xis_next)``.
    """
    u = np.asarray(u, dtype=complex)
    xis = np.asarray(xis, dtype=complex)
    grid = window.model.grid
    tau, reg, lam = cfg.tau, cfg.reg, cfg.lam
    if cfg.scheme == "LieAdd":
        out = step_lie_add(u, window, cfg)
        return out, grid.free_propagator(phi_f_tangent(u, xis, tau, reg, lam), tau)
    if cfg.scheme == "LieConservative":
        dW = window.increment()
        out = step_lie_conservative(u, window, cfg)
        return out, grid.free_propagator(phi_fg_tangent(u, xis, tau, reg, lam, cfg.g, dW), tau)
    if cfg.scheme == "MidpointSplit":
        v = phi_S_analytic(u, window, cfg.g, cfg.is_additive)
        etas = phi_S_tangent(u, xis, window, cfg.g, cfg.is_additive)
        out, info = step_midpoint(u, window, cfg)
        if np.any(info.failed):
            raise StepFailure("implicit solve failed inside tangent propagation", float(np.max(info.residual)))
        return out, _implicit_tangent(grid, v, out, etas, tau, reg, lam)
    raise NotImplementedError(f"no tangent map for scheme {cfg.scheme}")


# -- trajectories ------------------------------------------------------------


@dataclass
class Trajectory:
    """Times, (optionally) all states, and per-step solver diagnostics."""

    times: np.ndarray
    states: list
    final: np.ndarray
    iterations: np.ndarray  # (N, *batch)
    residuals: np.ndarray
    failed: np.ndarray  # (*batch,) paths aborted by a solver failure
    failed_step: np.ndarray  # first failing step per path, -1 if none
    tags: list = field(default_factory=list)

    @property
    def n_failed(self) -> int:
        return int(np.sum(self.failed))


def run_trajectory(u0, T: float, cfg: SchemeConfig, path: NoisePath, keep_states=False, callback=None, t0=0.0):
    """Advance ``u0`` from ``t0`` to ``t0 + T`` with ``N = T/τ`` steps on ``path``.

    ``u0`` is broadcast against the path batch.  ``callback(k, t_k, u_k)`` is
    called for ``k = 0..N``.  A path whose implicit solve fails is set to NaN
    from then on; with a single unbatched path a :class:`StepFailure`
    carrying the partial trajectory is raised instead.
    """
    N = int(round(T / cfg.tau))
    if N < 0 or abs(N * cfg.tau - T) > 1e-9 * max(1.0, T):
        raise ValueError(f"T={T} is not a multiple of tau={cfg.tau}")
    tags = cfg.check(path)
    grid = path.model.grid
    u = np.broadcast_to(np.asarray(u0, dtype=complex), path.batch_shape + (grid.n,)).copy()
    batch = u.shape[:-1]
    i0 = path.index(t0)
    per = int(round(cfg.tau / path.dt_fine))
    if i0 + N * per > path.n_fine:
        raise ValueError("path is shorter than the requested trajectory")
    times = t0 + cfg.tau * np.arange(N + 1)
    states = [u.copy()] if keep_states else []
    iters = np.zeros((N,) + batch, dtype=int)
    resid = np.zeros((N,) + batch)
    failed = np.zeros(batch, dtype=bool)
    failed_step = np.full(batch, -1)
    if callback is not None:
        callback(0, times[0], u)
    for k in range(N):
        win = Window(path, i0 + k * per, i0 + (k + 1) * per)
        u, info = step(u, win, cfg)
        iters[k], resid[k] = info.iterations, info.residual
        new_fail = info.failed & ~failed
        if np.any(new_fail):
            failed_step[new_fail] = k
            failed |= new_fail
            if not batch:
                partial = Trajectory(
                    times[: k + 1], states, states[-1] if states else None, iters[: k + 1], resid[: k + 1],
                    failed, failed_step, tags,
                )
                raise StepFailure(
                    f"implicit solve did not converge at step {k} (t={times[k]:g}) within {cfg.max_iter} iterations",
                    float(np.max(info.residual[new_fail])),
                    partial,
                )
        if np.any(failed):
            u[failed] = np.nan
        if keep_states:
            states.append(u.copy())
        if callback is not None:
            callback(k + 1, times[k + 1], u)
    return Trajectory(times, states, u, iters, resid, failed, failed_step, tags)
