"""Brute-force references used to check the flows and the implicit solvers.

Nothing here calls the spectral machinery it is meant to check: the Laplacian
is a dense matrix assembled from explicit Fourier sums, ``f_eps`` is written
out again, and the averaged nonlinearity is computed by Gauss-Legendre
quadrature.  Everything is sized for small grids (``n <= 16``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "MAX_ORACLE_N",
    "BLOWUP_CAP",
    "GalerkinSystem",
    "dense_laplacian",
    "em_reference",
    "EMResult",
    "newton_implicit",
    "gauss_legendre_average",
]

MAX_ORACLE_N = 16
BLOWUP_CAP = 1e6


def dense_laplacian(n: int, L: float) -> np.ndarray:
    """Real ``n x n`` matrix of the spectral Laplacian on ``n`` periodic points."""
    j = np.arange(n)
    diff = (j[:, None] - j[None, :]) * (L / n)
    modes = np.arange(-(n // 2), n - n // 2)
    k = 2 * np.pi * modes / L
    mat = np.zeros((n, n), dtype=complex)
    for km in k:
        mat += -(km**2) * np.exp(1j * km * diff)
    mat /= n
    return mat.real.copy()


def _f(eps, rho):
    return np.log(eps + rho) - np.log(1.0 + eps * rho)


def _f_prime(eps, rho):
    return 1.0 / (eps + rho) - eps / (1.0 + eps * rho)


def gauss_legendre_average(eps, rho_a, rho_b, order: int = 64):
    """``∫_0^1 f_eps(θ rho_a + (1-θ) rho_b) dθ`` by Gauss-Legendre quadrature.

    ``f_eps`` varies on the scale ``eps + min(rho)``, so the density interval
    is split into panels that grow geometrically (factor 4) away from the
    smaller density; each panel gets ``order`` nodes.
    """
    nodes, weights = np.polynomial.legendre.leggauss(order)
    a = np.asarray(rho_a, dtype=float)
    b = np.asarray(rho_b, dtype=float)
    out = np.empty(np.broadcast(a, b).shape)
    for idx in np.ndindex(out.shape):
        lo, hi = sorted((float(np.broadcast_to(a, out.shape)[idx]), float(np.broadcast_to(b, out.shape)[idx])))
        if hi - lo <= eps + lo:
            mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
            out[idx] = 0.5 * np.sum(weights * _f(eps, mid + half * nodes))
            continue
        edges = [lo]
        step = eps + lo
        while edges[-1] + step < hi:
            edges.append(edges[-1] + step)
            step *= 4.0
        edges.append(hi)
        total = 0.0
        for left, right in zip(edges[:-1], edges[1:]):
            mid, half = 0.5 * (left + right), 0.5 * (right - left)
            total += half * np.sum(weights * _f(eps, mid + half * nodes))
        out[idx] = total / (hi - lo)
    return out if out.shape else float(out)


@dataclass(frozen=True)
class GalerkinSystem:
    """Small periodic system: grid size, length, dense Laplacian and noise basis ``(K, n)``."""

    n: int
    L: float
    basis: np.ndarray
    laplacian: np.ndarray

    @classmethod
    def build(cls, n, L, basis):
        if n > MAX_ORACLE_N:
            raise ValueError(f"oracle grids are limited to n <= {MAX_ORACLE_N}")
        basis = np.atleast_2d(np.asarray(basis, dtype=complex))
        if basis.shape[-1] != n:
            raise ValueError("basis must be sampled on the oracle grid")
        return cls(int(n), float(L), basis, dense_laplacian(n, L))

    def project(self, u):
        """Drop the unpaired Nyquist mode (an idempotent truncation), via an explicit DFT sum."""
        j = np.arange(self.n)
        kept = [m for m in range(-(self.n // 2), self.n - self.n // 2) if abs(m) < self.n // 2]
        modes = np.exp(2j * np.pi * np.outer(j, kept) / self.n)  # (n, modes)
        coef = np.asarray(u, dtype=complex) @ modes.conj() / self.n
        return coef @ modes.T

    @property
    def mu(self):
        return np.sum(np.abs(self.basis) ** 2, axis=0)

    @property
    def nu(self):
        return np.sum(self.basis.imag * self.basis, axis=0)


@dataclass
class EMResult:
    final: np.ndarray
    failed: np.ndarray
    steps: int


def em_reference(
    system: GalerkinSystem,
    u0,
    T: float,
    dt: float,
    increments,
    dt_increments: float,
    *,
    lam: float = 0.0,
    eps: float = 1e-3,
    g=None,
    additive: bool = False,
    laplacian: bool = True,
    frozen: bool = False,
    ito_drift: bool = True,
):
    """Explicit Euler-Maruyama on the Itô form of the regularized equation.

    ``u⁺ = u + dt (iΔu + iλ f_eps(|u|^2) u + D(u)) + i g(|u|^2) u ΔW`` (or
    ``+ ΔW`` when ``additive``), with the Itô drift
    ``D = -1/2 μ g^2 u - i ν g g' |u|^2 u``.  ``increments`` holds Brownian
    increments ``(..., n_fine, K)`` on a lattice of step ``dt_increments``;
    ``dt`` must be an integer multiple.  ``frozen=True`` evaluates drift and
    diffusion at ``u0`` throughout (the frozen-coefficient SDE);
    ``ito_drift=False`` drops ``D``.
    Paths whose norm exceeds ``BLOWUP_CAP`` are flagged and stop.
    """
    increments = np.asarray(increments, dtype=float)
    ratio = dt / dt_increments
    per = int(round(ratio))
    if per < 1 or abs(per - ratio) > 1e-9 * ratio:
        raise ValueError("dt must be a positive integer multiple of the increment lattice")
    steps = int(round(T / dt))
    if abs(steps * dt - T) > 1e-9 * max(T, 1.0):
        raise ValueError("T must be a multiple of dt")
    if steps * per > increments.shape[-2]:
        raise ValueError("increments do not cover [0, T]")
    batch = increments.shape[:-2]
    u = np.broadcast_to(np.asarray(u0, dtype=complex), batch + (system.n,)).copy()
    lap = system.laplacian if laplacian else np.zeros((system.n, system.n))
    mu, nu = system.mu, system.nu
    failed = np.zeros(batch, dtype=bool)
    if g is None and not additive:
        g_val = lambda x: np.ones_like(x)  # noqa: E731
        g_der = lambda x: np.zeros_like(x)  # noqa: E731
    elif g is not None:
        g_val, g_der = g, g.prime

    def coefficients(w):
        rho = np.abs(w) ** 2
        if additive:
            return np.zeros_like(w), None
        gv = g_val(rho)
        drift = -0.5 * mu * gv**2 * w - 1j * nu * gv * g_der(rho) * rho * w
        if not ito_drift:
            drift = np.zeros_like(w)
        return drift, 1j * gv * w

    frozen_coef = coefficients(u) if frozen else None
    for s in range(steps):
        dbeta = increments[..., s * per : (s + 1) * per, :].sum(axis=-2)
        dW = dbeta @ system.basis
        drift, diff = frozen_coef if frozen else coefficients(u)
        rhs = 1j * (u @ lap.T)
        if lam:
            rhs = rhs + 1j * lam * _f(eps, np.abs(u) ** 2) * u
        new = u + dt * (rhs + drift)
        new = new + (dW if additive else diff * dW)
        norm = np.sqrt(np.sum(np.abs(new) ** 2, axis=-1) * system.L / system.n)
        blow = ~np.isfinite(norm) | (norm > BLOWUP_CAP)
        failed |= blow
        u = np.where(failed[..., None], np.nan, new)
    return EMResult(u, failed, steps)


def _to_real(z):
    return np.concatenate([z.real, z.imag])


def _to_complex(x):
    n = x.size // 2
    return x[:n] + 1j * x[n:]


def newton_implicit(system: GalerkinSystem, v, tau, eps, lam, tol=1e-12, max_iter=50, averaged=False):
    """Newton's method in real coordinates for one midpoint / Crank-Nicolson solve.

    Residual ``R(u) = u - v - iτΔ(v+u)/2 - iλτ N(v, u)`` with ``N = f(|m|^2) m``
    or ``N = avg_f(|v|^2, |u|^2) m`` and ``m = (v+u)/2``.  Midpoint uses the
    analytic Jacobian, Crank-Nicolson a central-difference Jacobian.
    Returns the root; raises ``RuntimeError`` on a singular Jacobian or if
    ``||R|| <= tol`` is not reached.
    """
    v = np.asarray(v, dtype=complex)
    n = system.n
    lap = system.laplacian
    h = system.L / n

    def nonlinear(u):
        m = 0.5 * (v + u)
        if averaged:
            return gauss_legendre_average(eps, np.abs(v) ** 2, np.abs(u) ** 2) * m
        return _f(eps, np.abs(m) ** 2) * m

    def residual(u):
        return u - v - 0.5j * tau * (lap @ (v + u)) - 1j * lam * tau * nonlinear(u)

    def jacobian(u):
        if averaged:
            x0 = _to_real(u)
            J = np.empty((2 * n, 2 * n))
            step = 1e-7 * max(1.0, np.max(np.abs(x0)))
            for c in range(2 * n):
                e = np.zeros(2 * n)
                e[c] = step
                J[:, c] = (_to_real(residual(_to_complex(x0 + e))) - _to_real(residual(_to_complex(x0 - e)))) / (
                    2 * step
                )
            return J
        m = 0.5 * (v + u)
        rho = np.abs(m) ** 2
        f0, f1 = _f(eps, rho), _f_prime(eps, rho)
        # d/du of iλτ f(|m|^2) m, with dm = du/2, as a real 2n x 2n block
        a, b = m.real, m.imag
        # N = f m ; dN = f dm + f' (2 a da + 2 b db) m
        dNr_da = f0 + f1 * 2 * a * a
        dNr_db = f1 * 2 * b * a
        dNi_da = f1 * 2 * a * b
        dNi_db = f0 + f1 * 2 * b * b
        # multiply by iλτ: Re(i z) = -Im z, Im(i z) = Re z; and dm = du/2
        c = 0.5 * lam * tau
        J = np.eye(2 * n)
        A = 0.5 * tau * lap
        J[:n, n:] += A  # Re(-iτΔu/2) = τΔ Im(u)/2
        J[n:, :n] -= A
        J[:n, :n] += c * np.diag(dNi_da)
        J[:n, n:] += c * np.diag(dNi_db)
        J[n:, :n] -= c * np.diag(dNr_da)
        J[n:, n:] -= c * np.diag(dNr_db)
        return J

    u = v.copy()
    for _ in range(max_iter):
        R = residual(u)
        if np.sqrt(h * np.sum(np.abs(R) ** 2)) <= tol:
            return u
        J = jacobian(u)
        try:
            delta = np.linalg.solve(J, -_to_real(R))
        except np.linalg.LinAlgError as exc:
            raise RuntimeError("singular Jacobian in Newton oracle") from exc
        u = u + _to_complex(delta)
    R = residual(u)
    if np.sqrt(h * np.sum(np.abs(R) ** 2)) <= tol:
        return u
    raise RuntimeError(f"Newton oracle did not converge (residual {np.sqrt(h * np.sum(np.abs(R) ** 2)):.3e})")
