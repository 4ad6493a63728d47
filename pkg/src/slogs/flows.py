"""Sub-flows that compose the splitting schemes, plus their tangent maps.

All flows act pointwise or spectrally on arrays of shape ``(..., n)``; noise
enters through a :class:`~slogs.noise.Window` so that every flow of one step
reads the same Brownian increments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .field import Grid
from .noise import NoiseModel, Window
from .regularization import RegFamily

__all__ = [
    "DiffusionG",
    "UnsupportedCase",
    "drift_correction",
    "phi_f",
    "phi_f_tangent",
    "phi_fg_conservative",
    "phi_fg_tangent",
    "phi_A",
    "phi_M_exp_euler",
    "phi_S_analytic",
    "phi_S_tangent",
    "phi_S_euler",
    "analytic_case",
]


class UnsupportedCase(ValueError):
    """The stochastic substep has no closed form for this noise/diffusion pair."""


_G_PARAMS = {
    "Constant": ("a",),
    "RationalInv": ("a", "b"),
    "Saturating": ("a", "b", "c"),
    "SaturatingSq": ("a", "b", "c"),
    "One": (),
}


@dataclass(frozen=True)
class DiffusionG:
    """Real diffusion profile ``g`` in the multiplicative noise ``i g(|u|^2) u dW``.

    Families: ``Constant(a)``, ``RationalInv(a, b) = a/(b+x)``,
    ``Saturating(a, b, c) = a x/(b + c x)``, ``SaturatingSq(a, b, c) =
    a x/(b + c x^2)`` and ``One`` (``g = 1``, i.e. linear noise ``i u dW``).
    """

    kind: str = "One"
    params: tuple = ()

    def __post_init__(self):
        if self.kind not in _G_PARAMS:
            raise ValueError(f"unknown diffusion family {self.kind!r}; expected one of {list(_G_PARAMS)}")
        names = _G_PARAMS[self.kind]
        if len(self.params) != len(names):
            raise ValueError(f"{self.kind} takes parameters {names}, got {self.params}")
        p = dict(zip(names, self.params))
        if any(p.get(k, 1.0) <= 0 for k in ("b", "c")):
            raise ValueError("parameters b and c must be positive")

    @classmethod
    def parse(cls, text: str) -> "DiffusionG":
        """``"Saturating(1, 1, 1)"`` or ``"One"``."""
        text = text.strip()
        if "(" not in text:
            return cls(text)
        name, rest = text.split("(", 1)
        args = tuple(float(a) for a in rest.rstrip(")").split(",") if a.strip())
        return cls(name.strip(), args)

    def __str__(self):
        if not self.params:
            return self.kind
        return f"{self.kind}({', '.join(repr(float(p)) for p in self.params)})"

    @property
    def is_constant(self) -> bool:
        return self.kind in ("One", "Constant")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        k, p = self.kind, self.params
        if k == "One":
            return np.ones_like(x)
        if k == "Constant":
            return np.full_like(x, p[0])
        if k == "RationalInv":
            return p[0] / (p[1] + x)
        if k == "Saturating":
            return p[0] * x / (p[1] + p[2] * x)
        return p[0] * x / (p[1] + p[2] * x**2)

    def prime(self, x):
        x = np.asarray(x, dtype=float)
        k, p = self.kind, self.params
        if k in ("One", "Constant"):
            return np.zeros_like(x)
        if k == "RationalInv":
            return -p[0] / (p[1] + x) ** 2
        if k == "Saturating":
            return p[0] * p[1] / (p[1] + p[2] * x) ** 2
        return p[0] * (p[1] - p[2] * x**2) / (p[1] + p[2] * x**2) ** 2

    def second(self, x):
        x = np.asarray(x, dtype=float)
        k, p = self.kind, self.params
        if k in ("One", "Constant"):
            return np.zeros_like(x)
        if k == "RationalInv":
            return 2 * p[0] / (p[1] + x) ** 3
        if k == "Saturating":
            return -2 * p[0] * p[1] * p[2] / (p[1] + p[2] * x) ** 3
        a, b, c = p
        return 2 * a * c * x * (c * x**2 - 3 * b) / (b + c * x**2) ** 3

    def growth_constant(self, x_max: float = 1e8, n: int = 20001) -> float:
        """Observed ``sup |g| + sup |g' x| + sup |g'' x^2|`` on a log grid."""
        x = np.concatenate(([0.0], np.geomspace(1e-10, x_max, n)))
        return float(
            np.max(np.abs(self(x))) + np.max(np.abs(self.prime(x) * x)) + np.max(np.abs(self.second(x) * x**2))
        )


def _density(u):
    return np.abs(u) ** 2


def drift_correction(u, model: NoiseModel, g: DiffusionG):
    """Itô drift of the multiplicative noise ``i g(|u|^2) u ⋆ dW``.

    ``-1/2 mu g^2 u - i nu g g' |u|^2 u`` with ``mu = sum |b_i|^2`` and
    ``nu = sum Im(b_i) b_i``.
    """
    u = np.asarray(u, dtype=complex)
    if model.K == 0:
        return np.zeros_like(u)
    rho = _density(u)
    gv = g(rho)
    out = -0.5 * model.mu * gv**2 * u
    if not g.is_constant and np.any(model.nu):
        out = out - 1j * model.nu * gv * g.prime(rho) * rho * u
    return out


# -- logarithmic phase flow --------------------------------------------------


def phi_f(u, tau: float, reg: RegFamily, lam: float):
    """Exact flow of ``du = i lam f_eps(|u|^2) u dt``; preserves ``|u|`` pointwise."""
    u = np.asarray(u, dtype=complex)
    if lam == 0:
        return u.copy()
    return u * np.exp(1j * lam * tau * reg.f(_density(u)))


def phi_f_tangent(u, xi, tau: float, reg: RegFamily, lam: float):
    """Derivative of :func:`phi_f` at ``u`` in direction ``xi``."""
    u = np.asarray(u, dtype=complex)
    xi = np.asarray(xi, dtype=complex)
    if lam == 0:
        return xi.copy()
    rho = _density(u)
    phase = np.exp(1j * lam * tau * reg.f(rho))
    drho = 2.0 * (np.conj(u) * xi).real
    return phase * (xi + 1j * lam * tau * reg.f_prime(rho) * drho * u)


def _real_increment(dW):
    dW = np.asarray(dW)
    if np.iscomplexobj(dW):
        if np.any(dW.imag != 0):
            raise ValueError("the conservative flow needs a real-valued noise increment")
        dW = dW.real
    return dW


def phi_fg_conservative(u, tau: float, reg: RegFamily, lam: float, g: DiffusionG, dW):
    """``u exp(i lam f_eps(|u|^2) tau + i g(|u|^2) ΔW)`` for real noise."""
    u = np.asarray(u, dtype=complex)
    dW = _real_increment(dW)
    rho = _density(u)
    angle = g(rho) * dW
    if lam != 0:
        angle = angle + lam * tau * reg.f(rho)
    return u * np.exp(1j * angle)


def phi_fg_tangent(u, xi, tau: float, reg: RegFamily, lam: float, g: DiffusionG, dW):
    u = np.asarray(u, dtype=complex)
    xi = np.asarray(xi, dtype=complex)
    dW = _real_increment(dW)
    rho = _density(u)
    angle = g(rho) * dW
    dangle = g.prime(rho) * dW
    if lam != 0:
        angle = angle + lam * tau * reg.f(rho)
        dangle = dangle + lam * tau * reg.f_prime(rho)
    drho = 2.0 * (np.conj(u) * xi).real
    return np.exp(1j * angle) * (xi + 1j * dangle * drho * u)


# -- linear stochastic flows -------------------------------------------------


def phi_A(grid: Grid, u, window: Window, M_sub: int = 8):
    """Additive-noise flow ``exp(iΔτ) u + ∫ exp(iΔ(τ-s)) dW(s)``.

    The stochastic convolution is the left-point sum over ``M_sub`` sub-steps.
    """
    if window.model.flavor not in ("ComplexH", "RealL2", "None"):
        raise ValueError(f"additive flow cannot use flavor {window.model.flavor!r}")
    return grid.free_propagator(u, window.tau) + window.convolution(M_sub)


def phi_M_exp_euler(grid: Grid, u, window: Window, g: DiffusionG, M_sub: int = 8):
    """Exponential-Euler step of ``dv = iΔv dt + i g(|v|^2) v ⋆ dW`` with frozen coefficients.

    ``exp(iΔτ)(u + τ D(u)) + sum_j exp(iΔ(τ - s_j)) i g(|u|^2) u ΔW_j`` where
    ``D`` is :func:`drift_correction`.
    """
    model = window.model
    if model.flavor == "RealL2":
        raise ValueError("the exponential-Euler multiplicative flow expects ComplexH noise")
    u = np.asarray(u, dtype=complex)
    tau = window.tau
    if model.K == 0:
        return grid.free_propagator(u, tau)
    rho = _density(u)
    head = u + tau * drift_correction(u, model, g)
    head_hat = grid.fft(head) * np.exp(1j * grid.laplacian_symbol * tau)
    dW = window.sub_increments(M_sub)  # (..., M, n)
    coef = 1j * g(rho) * u
    noise_hat = np.fft.fft(coef[..., None, :] * dW, axis=-1)
    delta = tau / M_sub
    lags = (M_sub - np.arange(M_sub)) * delta
    phases = np.exp(1j * lags[:, None] * grid.laplacian_symbol[None, :])
    return grid.ifft(head_hat + np.sum(phases * noise_hat, axis=-2))


# -- pure-noise substep of the midpoint / Crank-Nicolson schemes -------------


def analytic_case(model: NoiseModel, g: DiffusionG | None, additive: bool) -> int:
    """Closed-form case of the pure-noise substep (1, 2 or 3), or 0 if none."""
    if additive:
        return 1
    if model.flavor in ("RealL2", "None"):
        return 3
    if g is not None and g.kind == "One":
        return 2
    return 0


def phi_S_analytic(u, window: Window, g: DiffusionG | None, additive: bool = False):
    """Exact solution of ``du = g~(u) ⋆ dW`` over one window.

    Case 1 (additive): ``u + ΔW``.  Case 2 (``ComplexH``, ``g = One``):
    ``u exp(iΔW + (sigma - mu) τ/2)``, the Itô exponential with complex
    quadratic variation ``sigma = sum b_i^2``.  Case 3 (real noise):
    ``u exp(i g(|u|^2) ΔW)``, which keeps ``|u|`` pointwise.
    """
    u = np.asarray(u, dtype=complex)
    model = window.model
    case = analytic_case(model, g, additive)
    dW = window.increment()
    if case == 1:
        return u + dW
    if case == 3:
        return u * np.exp(1j * g(_density(u)) * dW.real)
    if case == 2:
        return u * np.exp(1j * dW + 0.5 * (model.sigma - model.mu) * window.tau)
    raise UnsupportedCase(
        f"no closed form for {model.flavor} noise with g={g}; use phi_S_euler instead"
    )


def phi_S_tangent(u, xi, window: Window, g: DiffusionG | None, additive: bool = False):
    """Tangent map of :func:`phi_S_analytic` (noise increments frozen)."""
    u = np.asarray(u, dtype=complex)
    xi = np.asarray(xi, dtype=complex)
    model = window.model
    case = analytic_case(model, g, additive)
    if case == 1:
        return xi.copy()
    dW = window.increment()
    if case == 2:
        return xi * np.exp(1j * dW + 0.5 * (model.sigma - model.mu) * window.tau)
    if case == 3:
        dW = dW.real
        rho = _density(u)
        drho = 2.0 * (np.conj(u) * xi).real
        return np.exp(1j * g(rho) * dW) * (xi + 1j * g.prime(rho) * dW * drho * u)
    raise UnsupportedCase(f"no closed form for {model.flavor} noise with g={g}")


def phi_S_euler(u, window: Window, g: DiffusionG | None, additive: bool = False):
    """One Euler-Maruyama step ``u + τ D(u) + i g(|u|^2) u ΔW`` (or ``u + ΔW``)."""
    u = np.asarray(u, dtype=complex)
    dW = window.increment()
    if additive:
        return u + dW
    return u + window.tau * drift_correction(u, window.model, g) + 1j * g(_density(u)) * u * dW
