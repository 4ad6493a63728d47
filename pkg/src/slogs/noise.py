"""Truncated Q-Wiener noise: models, seeded paths and path refinement.

The noise is ``W(t) = sum_i b_i(x) beta_i(t)`` with ``b_i = Q^{1/2} e_i`` a
smooth Fourier mode scaled by ``q_i = amplitude * i**(-r)`` and ``beta_i``
independent real Brownian motions.  Paths store the Brownian increments on a
fine lattice ``dt_fine``; every coarser step is a sum of fine increments, so
schemes run with different step sizes on the same path see the same noise.
"""

from __future__ import annotations

import functools
import warnings
from dataclasses import dataclass, field

import numpy as np

from .field import Grid

__all__ = [
    "FLAVORS",
    "NoiseModel",
    "NoisePath",
    "build_noise",
    "noise_from_basis",
    "sample_path",
    "coarse_increment",
    "stochastic_convolution",
    "Window",
]

FLAVORS = ("ComplexH", "RealL2", "None")


@dataclass(frozen=True, eq=False)
class NoiseModel:
    grid: Grid
    flavor: str
    basis: np.ndarray = field(repr=False)  # (K, n): the functions Q^{1/2} e_i on the grid
    r: float = float("nan")
    amplitude: float = float("nan")

    def __post_init__(self):
        if self.flavor not in FLAVORS:
            raise ValueError(f"unknown noise flavor {self.flavor!r}; expected one of {FLAVORS}")
        if self.flavor == "RealL2" and np.any(self.basis.imag != 0):
            raise ValueError("RealL2 noise needs real-valued basis functions")

    @property
    def K(self) -> int:
        return self.basis.shape[0]

    @functools.cached_property
    def basis_hat(self) -> np.ndarray:
        return np.fft.fft(self.basis, axis=-1)

    @functools.cached_property
    def mu(self) -> np.ndarray:
        """``sum_i |b_i(x)|^2``."""
        return np.sum(np.abs(self.basis) ** 2, axis=0)

    @functools.cached_property
    def nu(self) -> np.ndarray:
        """``sum_i Im(b_i(x)) b_i(x)``; identically zero for real noise."""
        return np.sum(self.basis.imag * self.basis, axis=0)

    @functools.cached_property
    def sigma(self) -> np.ndarray:
        """``sum_i b_i(x)^2``, the complex quadratic variation density."""
        return np.sum(self.basis**2, axis=0)

    @property
    def is_zero(self) -> bool:
        return self.K == 0 or not np.any(self.basis)

    def trace(self) -> float:
        """``sum_i ||b_i||^2``."""
        return float(np.sum(self.grid.norm_l2(self.basis) ** 2)) if self.K else 0.0

    def trace_weighted(self, alpha: float) -> float:
        if not self.K:
            return 0.0
        return float(np.sum(self.grid.norm_weighted(self.basis, alpha) ** 2))

    def trace_h1(self) -> float:
        if not self.K:
            return 0.0
        return float(np.sum(self.grid.norm_h1(self.basis) ** 2))

    def trace_w1inf(self) -> float:
        if not self.K:
            return 0.0
        grad = self.grid.gradient(self.basis)
        return float(np.sum((np.max(np.abs(self.basis), axis=-1) + np.max(np.abs(grad), axis=-1)) ** 2))

    def field_from_coefficients(self, dbeta):
        """Map Brownian increments ``(..., K)`` to the noise field ``(..., n)``."""
        if not self.K:
            return np.zeros(np.shape(dbeta)[:-1] + (self.grid.n,), dtype=complex)
        # einsum keeps BLAS out so per-path results do not depend on batch size
        return np.einsum("...k,kn->...n", np.asarray(dbeta), self.basis)


def _mode_sequence(K: int):
    """Wavenumber indices 0, 1, -1, 2, -2, ... for complex modes."""
    seq = [0]
    m = 1
    while len(seq) < K:
        seq.extend([m, -m])
        m += 1
    return seq[:K]


def build_noise(
    grid: Grid,
    K: int,
    r: float = 4.0,
    amplitude: float = 1.0,
    flavor: str = "ComplexH",
    allow_slow_decay: bool = False,
) -> NoiseModel:
    """Smooth Fourier-mode noise with coefficients ``amplitude * i**(-r)``.

    The basis is L^2-orthonormal: ``exp(i k x)/sqrt(L)`` for ``ComplexH``
    (modes ordered 0, 1, -1, 2, ...), and ``1/sqrt(L)``, ``sqrt(2/L) cos``,
    ``sqrt(2/L) sin`` pairs for ``RealL2``.  Hence ``trace() == sum q_i**2``.
    """
    if flavor not in FLAVORS:
        raise ValueError(f"unknown noise flavor {flavor!r}; expected one of {FLAVORS}")
    if flavor == "None":
        return NoiseModel(grid, flavor, np.zeros((0, grid.n), dtype=complex), r, 0.0)
    K = int(K)
    if K < 1:
        raise ValueError("K must be >= 1")
    if K > grid.n // 2:
        raise ValueError(f"K={K} exceeds the n/2={grid.n // 2} resolvable modes")
    if r <= 3:
        if not allow_slow_decay:
            raise ValueError(f"decay r={r} <= 3 breaks the H^1 / W^{{1,inf}} trace condition")
        warnings.warn(f"noise decay r={r} <= 3: trace-class hypotheses may fail", stacklevel=2)

    x = grid.points
    L = grid.length
    q = amplitude * np.arange(1, K + 1, dtype=float) ** (-float(r))
    rows = []
    if flavor == "ComplexH":
        for m in _mode_sequence(K):
            rows.append(np.exp(1j * (2 * np.pi * m / L) * x) / np.sqrt(L))
    else:
        rows.append(np.full(grid.n, 1.0 / np.sqrt(L)))
        m = 1
        while len(rows) < K:
            k = 2 * np.pi * m / L
            rows.append(np.sqrt(2.0 / L) * np.cos(k * x))
            if len(rows) < K:
                rows.append(np.sqrt(2.0 / L) * np.sin(k * x))
            m += 1
    basis = q[:, None] * np.array(rows, dtype=complex)
    if flavor == "RealL2":
        basis = basis.real.astype(complex)
    return NoiseModel(grid, flavor, basis, float(r), float(amplitude))


def noise_from_basis(grid: Grid, basis, flavor: str = "ComplexH") -> NoiseModel:
    """Noise model from explicit basis functions ``(K, n)``; used by tests and the oracle."""
    basis = np.atleast_2d(np.asarray(basis, dtype=complex))
    if basis.shape[-1] != grid.n:
        raise ValueError("basis functions must live on the grid")
    return NoiseModel(grid, flavor, basis)


@dataclass(frozen=True, eq=False)
class NoisePath:
    """Fine-lattice Brownian increments ``(..., n_fine, K)`` for one or many paths."""

    model: NoiseModel
    dt_fine: float
    increments: np.ndarray = field(repr=False)
    seed: int = 0
    first_path: int = 0

    @property
    def n_fine(self) -> int:
        return self.increments.shape[-2]

    @property
    def T(self) -> float:
        return self.n_fine * self.dt_fine

    @property
    def batch_shape(self):
        return self.increments.shape[:-2]

    def index(self, t: float) -> int:
        """Fine-lattice index of time ``t``; rejects off-lattice times."""
        i = int(round(t / self.dt_fine))
        if abs(i * self.dt_fine - t) > 1e-9 * max(1.0, abs(t)) or not 0 <= i <= self.n_fine:
            raise ValueError(f"time {t} is not on the fine lattice (dt_fine={self.dt_fine})")
        return i

    def window_sums(self, i_a: int, i_b: int, blocks: int = 1):
        """Brownian increments over ``blocks`` equal sub-windows of ``[i_a, i_b)``.

        Sub-windows of power-of-two length are reduced by pairwise addition,
        so the sum over a window equals the sum of its two halves bit for bit.
        Returns shape ``(..., blocks, K)``.
        """
        span = i_b - i_a
        if span < 0 or span % blocks:
            raise ValueError(f"window of {span} fine steps is not divisible into {blocks} sub-steps")
        if span == 0:
            return np.zeros(self.batch_shape + (blocks, self.model.K))
        width = span // blocks
        x = self.increments[..., i_a:i_b, :]
        x = x.reshape(self.batch_shape + (blocks, width, self.model.K))
        if width & (width - 1) == 0:
            while x.shape[-2] > 1:
                x = x[..., 0::2, :] + x[..., 1::2, :]
            return x[..., 0, :]
        return np.sum(x, axis=-2)

    def checksum(self) -> str:
        import hashlib

        return hashlib.sha256(np.ascontiguousarray(self.increments).tobytes()).hexdigest()[:16]


def path_rng(master_seed: int, path_index: int) -> np.random.Generator:
    """Independent generator for path ``path_index`` under ``master_seed``."""
    return np.random.default_rng(np.random.SeedSequence(int(master_seed), spawn_key=(int(path_index),)))


def sample_path(
    model: NoiseModel,
    T: float,
    dt_fine: float,
    seed: int,
    n_paths: int | None = None,
    first_path: int = 0,
) -> NoisePath:
    """Draw Brownian increments on ``[0, T]`` with step ``dt_fine``.

    ``n_paths=None`` gives a single path; otherwise paths ``first_path ...
    first_path + n_paths - 1`` are stacked along a leading axis.  Path ``p`` is
    generated from its own substream, so it does not depend on how paths are
    batched.
    """
    n_fine = int(round(T / dt_fine))
    if n_fine < 0 or abs(n_fine * dt_fine - T) > 1e-9 * max(1.0, T):
        raise ValueError(f"T={T} is not a multiple of dt_fine={dt_fine}")
    sd = np.sqrt(dt_fine)

    def one(p):
        return sd * path_rng(seed, p).standard_normal((n_fine, model.K))

    if n_paths is None:
        inc = one(first_path)
    else:
        inc = np.stack([one(first_path + p) for p in range(n_paths)]) if n_paths else np.zeros(
            (0, n_fine, model.K)
        )
    return NoisePath(model, float(dt_fine), inc, int(seed), int(first_path))


def coarse_increment(path: NoisePath, t_a: float, t_b: float):
    """``W(t_b) - W(t_a)`` as a field (or stack of fields)."""
    i_a, i_b = path.index(t_a), path.index(t_b)
    if i_b < i_a:
        raise ValueError("t_b must not precede t_a")
    return path.model.field_from_coefficients(path.window_sums(i_a, i_b, 1)[..., 0, :])


@functools.lru_cache(maxsize=128)
def _convolution_phases(grid: Grid, delta: float, M_sub: int):
    lags = (M_sub - np.arange(M_sub)) * delta
    return np.exp(1j * lags[:, None] * grid.laplacian_symbol[None, :])


def convolution_from_indices(path: NoisePath, i_a: int, i_b: int, M_sub: int):
    """Left-point Itô sum ``sum_j exp(iΔ(t_b - s_j)) ΔW_j`` over ``M_sub`` sub-steps."""
    model = path.model
    grid = model.grid
    if not model.K:
        return np.zeros(path.batch_shape + (grid.n,), dtype=complex)
    dbeta = path.window_sums(i_a, i_b, M_sub)  # (..., M, K)
    delta = (i_b - i_a) / M_sub * path.dt_fine
    dw_hat = np.einsum("...k,kn->...n", dbeta, model.basis_hat)  # (..., M, n)
    conv_hat = np.sum(_convolution_phases(grid, delta, M_sub) * dw_hat, axis=-2)
    return grid.ifft(conv_hat)


def stochastic_convolution(path: NoisePath, t_a: float, t_b: float, M_sub: int = 8):
    """Discretized ``∫_{t_a}^{t_b} exp(iΔ(t_b - s)) dW(s)``."""
    return convolution_from_indices(path, path.index(t_a), path.index(t_b), M_sub)


@dataclass(frozen=True, eq=False)
class Window:
    """One scheme step ``[t_a, t_b)`` of a path, addressed by fine indices."""

    path: NoisePath
    i_a: int
    i_b: int

    @classmethod
    def from_times(cls, path: NoisePath, t_a: float, t_b: float) -> "Window":
        return cls(path, path.index(t_a), path.index(t_b))

    @property
    def tau(self) -> float:
        return (self.i_b - self.i_a) * self.path.dt_fine

    @property
    def model(self) -> NoiseModel:
        return self.path.model

    def dbeta(self, blocks: int = 1):
        return self.path.window_sums(self.i_a, self.i_b, blocks)

    def increment(self):
        """``W(t_b) - W(t_a)`` as a field."""
        return self.model.field_from_coefficients(self.dbeta(1)[..., 0, :])

    def sub_increments(self, M_sub: int):
        """Fields of the ``M_sub`` sub-step increments, shape ``(..., M_sub, n)``."""
        return self.model.field_from_coefficients(self.dbeta(M_sub))

    def convolution(self, M_sub: int):
        return convolution_from_indices(self.path, self.i_a, self.i_b, M_sub)
