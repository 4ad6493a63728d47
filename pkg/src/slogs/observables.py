"""Mass, weighted mass, entropy, energy, the symplectic form and mass-law residuals."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .field import Grid
from .noise import NoiseModel
from .regularization import RegFamily

__all__ = [
    "ObservableRecord",
    "observe",
    "symplectic_form",
    "MassLawAccumulator",
    "MassLawResult",
    "mass_law_residual",
    "weighted_drift_density",
    "write_records_csv",
    "CSV_COLUMNS",
]

CSV_COLUMNS = ("t", "M", "M_alpha", "F_eps", "H_eps")


@dataclass(frozen=True)
class ObservableRecord:
    t: float
    M: float
    M_alpha: float
    F_eps: float
    H_eps: float
    omega: tuple = ()

    def row(self):
        return [self.t, self.M, self.M_alpha, self.F_eps, self.H_eps]


def observe(grid: Grid, u, reg: RegFamily, lam: float, alpha: float = 1.0, t: float = 0.0):
    """Structure functionals of a single field."""
    u = np.asarray(u, dtype=complex)
    if u.ndim != 1:
        raise ValueError("observe takes one field; map it over a batch")
    return ObservableRecord(
        t=float(t),
        M=float(grid.norm_l2(u) ** 2),
        M_alpha=float(grid.norm_weighted(u, alpha) ** 2),
        F_eps=float(reg.entropy(grid, u)),
        H_eps=float(reg.energy(grid, u, lam)),
    )


def symplectic_form(grid: Grid, xi, eta):
    """``ω(ξ, η) = Im ∫ conj(ξ) η dx``, i.e. ``∫ dP ∧ dQ`` on the grid."""
    xi, eta = grid._check(xi), grid._check(eta)
    return grid.spacing * np.sum((np.conj(xi) * eta).imag, axis=-1)


def weighted_drift_density(grid: Grid, u, alpha: float):
    """Lebesgue drift ``d M_α/dt`` of the free flow ``du = iΔu dt``.

    Equals ``4 α Im ∫ (1+|x|^2)^{α-1} x conj(u) ∇u dx``, which is
    ``-4 α <(1+|x|^2)^{α-1} x u, i ∇u>`` with ``<u, v> = Re ∫ u conj(v)``.
    The nonlinear phase term contributes nothing.
    """
    w = (1.0 + grid.points**2) ** (alpha - 1.0) * grid.points
    return -4.0 * alpha * grid.inner(w * u, 1j * grid.gradient(u))


def _pairwise_sum(x, axis=0):
    """Sum along ``axis`` in a fixed pairwise order (independent of chunking)."""
    x = np.moveaxis(np.asarray(x, dtype=float), axis, 0)
    while x.shape[0] > 1:
        if x.shape[0] % 2:
            x = np.concatenate([x, np.zeros((1,) + x.shape[1:])])
        x = x[0::2] + x[1::2]
    return x[0] if x.shape[0] else np.zeros(x.shape[1:])


@dataclass
class MassLawResult:
    """Per-step residual statistics of the mass (and weighted-mass) evolution laws."""

    tau: float
    n_paths: int
    mean: np.ndarray
    stderr: np.ndarray
    weighted_mean: np.ndarray
    weighted_stderr: np.ndarray
    expected: float
    expected_weighted_noise: float

    def z_scores(self, weighted=False):
        m, s = (self.weighted_mean, self.weighted_stderr) if weighted else (self.mean, self.stderr)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.abs(m) / s
        return np.where((s == 0) & (m == 0), 0.0, z)

    def within(self, n_se=3.0, weighted=False) -> bool:
        return bool(np.all(self.z_scores(weighted) <= n_se))


class MassLawAccumulator:
    """Streaming collector of per-step ``ΔM`` and ``ΔM_α`` residuals, fed by ``run_trajectory`` callbacks.

    Residual at step ``k``: ``ΔM - τ TrQ χ_add`` and ``ΔM_α - τ(D_α + TrQ_α χ_add)``,
    with ``D_α`` the trapezoid average of :func:`weighted_drift_density` at
    ``t_k`` and ``t_{k+1}``.
    """

    def __init__(self, grid: Grid, model: NoiseModel, tau: float, additive: bool, alpha: float = 1.0):
        self.grid, self.tau, self.alpha = grid, tau, alpha
        self.chi = 1.0 if additive and not model.is_zero else 0.0
        self.trq = model.trace() if model.K else 0.0
        self.trq_alpha = model.trace_weighted(alpha) if model.K else 0.0
        self._prev = None
        self.rows = []  # per step: (res_M, res_Malpha) arrays over the batch

    def __call__(self, k, t, u):
        g = self.grid
        cur = (g.norm_l2(u) ** 2, g.norm_weighted(u, self.alpha) ** 2, weighted_drift_density(g, u, self.alpha))
        if self._prev is not None:
            dm = cur[0] - self._prev[0] - self.tau * self.trq * self.chi
            drift = 0.5 * (cur[2] + self._prev[2])
            dma = cur[1] - self._prev[1] - self.tau * (drift + self.trq_alpha * self.chi)
            self.rows.append((np.atleast_1d(dm), np.atleast_1d(dma)))
        self._prev = cur

    def reset_path_chunk(self):
        self._prev = None

    def result(self, chunks) -> MassLawResult:
        """Combine a list of per-chunk ``rows`` (in path order) into statistics."""
        res = np.concatenate([np.stack([r[0] for r in rows]) for rows in chunks], axis=1)
        wres = np.concatenate([np.stack([r[1] for r in rows]) for rows in chunks], axis=1)
        return _stats(res, wres, self.tau, self.trq * self.chi, self.trq_alpha * self.chi)


def _stats(res, wres, tau, expected, expected_w):
    n = res.shape[1]
    if n < 2:
        raise ValueError("need at least two paths for a standard error")
    mean = _pairwise_sum(res, axis=1) / n
    var = _pairwise_sum((res - mean[:, None]) ** 2, axis=1) / (n - 1)
    wmean = _pairwise_sum(wres, axis=1) / n
    wvar = _pairwise_sum((wres - wmean[:, None]) ** 2, axis=1) / (n - 1)
    return MassLawResult(tau, n, mean, np.sqrt(var / n), wmean, np.sqrt(wvar / n), tau * expected, tau * expected_w)


def mass_law_residual(grid: Grid, states, model: NoiseModel, tau: float, additive: bool, alpha=1.0, min_paths=100):
    """Mass-law residual statistics from stored states ``(N+1, n_paths, n)``."""
    states = np.asarray(states)
    if states.ndim != 3 or states.shape[1] < min_paths:
        raise ValueError(f"need at least {min_paths} trajectories, got shape {states.shape}")
    acc = MassLawAccumulator(grid, model, tau, additive, alpha)
    for k, u in enumerate(states):
        acc(k, k * tau, u)
    return acc.result([acc.rows])


def write_records_csv(records, fh=None) -> str:
    """Write records with the fixed header and ``repr`` floats; returns the text."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for rec in records:
        w.writerow([repr(float(x)) for x in rec.row()])
    text = buf.getvalue()
    if fh is not None:
        fh.write(text)
    return text
