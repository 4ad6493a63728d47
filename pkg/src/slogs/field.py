"""Periodic 1-D grid, spectral transforms and the linear propagators.

Fields are plain complex numpy arrays whose trailing axis runs over the grid
points.  Any leading axes are treated as a batch (e.g. Monte Carlo paths), so
every routine here works on a single field of shape ``(n,)`` or on a stack of
shape ``(..., n)``.

Transform convention: unnormalised forward FFT, ``1/n`` inverse, modes in
numpy's ``fftfreq`` order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["Grid", "make_grid"]


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform periodic mesh on the torus ``[-L/2, L/2)``."""

    n: int
    length: float
    points: np.ndarray = field(repr=False)
    wavenumbers: np.ndarray = field(repr=False)

    @property
    def spacing(self) -> float:
        return self.length / self.n

    @property
    def laplacian_symbol(self) -> np.ndarray:
        return -self.wavenumbers**2

    # -- transforms -------------------------------------------------------
    def fft(self, u):
        return np.fft.fft(self._check(u), axis=-1)

    def ifft(self, u_hat):
        return np.fft.ifft(u_hat, axis=-1)

    def _check(self, u):
        u = np.asarray(u)
        if u.shape[-1:] != (self.n,):
            raise ValueError(
                f"field has trailing length {u.shape[-1:]} but grid has n={self.n}"
            )
        return u

    def apply_symbol(self, u, symbol):
        """Multiply the spectrum of ``u`` by ``symbol`` and transform back."""
        return self.ifft(self.fft(u) * symbol)

    # -- quadrature -------------------------------------------------------
    def integrate(self, values):
        """Rectangle rule over the periodic grid (last axis)."""
        return self.spacing * np.sum(self._check(values), axis=-1)

    def inner(self, u, v):
        """Real inner product ``Re ∫ u conj(v) dx``."""
        u, v = self._check(u), self._check(v)
        return self.spacing * np.sum((u * np.conj(v)).real, axis=-1)

    def gradient(self, u):
        return self.apply_symbol(u, 1j * self.wavenumbers)

    def norm_l2(self, u):
        u = self._check(u)
        return np.sqrt(self.spacing * np.sum(np.abs(u) ** 2, axis=-1))

    def grad_norm_sq(self, u):
        # Parseval: h * sum |grad u_j|^2 = (h / n) * sum k^2 |u_hat|^2
        u_hat = self.fft(u)
        return self.spacing / self.n * np.sum(
            self.wavenumbers**2 * np.abs(u_hat) ** 2, axis=-1
        )

    def norm_h1(self, u):
        return np.sqrt(self.norm_l2(u) ** 2 + self.grad_norm_sq(u))

    def weight(self, alpha: float) -> np.ndarray:
        """Pointwise weight ``(1 + |x|^2)^alpha`` (the square of the norm weight)."""
        _check_alpha(alpha)
        return (1.0 + self.points**2) ** alpha

    def norm_weighted(self, u, alpha: float):
        """``||u||_{L^2_alpha}`` with weight ``(1+|x|^2)^{alpha/2}``."""
        u = self._check(u)
        return np.sqrt(self.spacing * np.sum(self.weight(alpha) * np.abs(u) ** 2, axis=-1))

    def boundary_mass_fraction(self, u, margin: float = 0.1):
        """Fraction of the mass within ``margin * L`` of the torus edge."""
        u = self._check(u)
        edge = np.abs(self.points) >= (0.5 - margin) * self.length
        rho = np.abs(u) ** 2
        return np.sum(rho[..., edge], axis=-1) / np.sum(rho, axis=-1)

    # -- propagators ------------------------------------------------------
    def free_propagator(self, u, t: float):
        """``exp(i Δ t) u``; the exact free Schrödinger flow."""
        return self.apply_symbol(u, np.exp(1j * self.laplacian_symbol * t))

    def cayley_symbol(self, tau: float) -> np.ndarray:
        half = 0.5j * tau * self.laplacian_symbol
        return (1.0 + half) / (1.0 - half)

    def half_resolvent_symbol(self, tau: float) -> np.ndarray:
        return 1.0 / (1.0 - 0.5j * tau * self.laplacian_symbol)

    def cayley_step(self, u, tau: float):
        """``S_tau u = (I + i tau Δ/2)(I - i tau Δ/2)^{-1} u``."""
        return self.apply_symbol(u, self.cayley_symbol(tau))

    def half_resolvent(self, u, tau: float):
        """``T_tau u = (I - i tau Δ/2)^{-1} u``."""
        return self.apply_symbol(u, self.half_resolvent_symbol(tau))

    def sample(self, func) -> np.ndarray:
        return np.asarray(func(self.points), dtype=complex)


def _check_alpha(alpha):
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")


def make_grid(n: int, L: float) -> Grid:
    """Build a periodic grid with ``n`` points (power of two, >= 4) on length ``L``."""
    n_int = int(n)
    if n_int != n or n_int < 4 or n_int & (n_int - 1):
        raise ValueError(f"n must be a power of two >= 4, got {n}")
    if not L > 0:
        raise ValueError(f"L must be positive, got {L}")
    L = float(L)
    points = np.arange(n_int) * (L / n_int) - 0.5 * L
    wavenumbers = 2.0 * np.pi * np.fft.fftfreq(n_int, d=L / n_int)
    points.setflags(write=False)
    wavenumbers.setflags(write=False)
    return Grid(n_int, L, points, wavenumbers)
