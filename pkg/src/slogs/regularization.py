"""Regularized logarithm, its entropy density and the assumption audit.

The canonical family is

    f_eps(rho) = log((eps + rho) / (1 + eps * rho)),

a bounded smooth surrogate for ``log(rho)`` that removes the singularity at
vacuum.  ``RegFamily(eps=0.0)`` is the plain logarithm and is only defined for
strictly positive densities; it exists for limit checks.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .field import Grid

__all__ = [
    "RegFamily",
    "ValidationEntry",
    "ValidationReport",
    "DEFAULT_CEILINGS",
    "SampleSpec",
    "validate_assumptions",
]

# relative gap below which the difference quotient is replaced by a
# second-order midpoint expansion (see averaged_f)
THETA_TOL = 1e-3


@dataclass(frozen=True)
class RegFamily:
    """Regularization ``f_eps`` of ``log``.

    ``kind="canonical"`` is ``log((eps+rho)/(1+eps*rho))``.  ``kind="shifted"``
    is ``log(eps + rho)``, which is unbounded and kept as a negative fixture
    for the audit.
    """

    eps: float
    kind: str = "canonical"

    def __post_init__(self):
        if not 0.0 <= self.eps <= 1.0:
            raise ValueError(f"eps must lie in [0, 1], got {self.eps}")
        if self.kind not in ("canonical", "shifted"):
            raise ValueError(f"unknown regularization kind {self.kind!r}")
        if self.kind == "shifted" and self.eps == 0.0:
            raise ValueError("the shifted fixture needs eps > 0")

    @property
    def log_factor(self) -> float:
        """``1 + |log eps|``; the scale of ``sup |f_eps|``."""
        return 1.0 + abs(math.log(self.eps)) if self.eps > 0 else math.inf

    def _rho(self, rho):
        rho = np.asarray(rho, dtype=float)
        if np.any(rho < 0):
            raise ValueError("densities must be non-negative")
        if self.eps == 0.0 and np.any(rho == 0):
            raise ValueError("log is undefined at zero density (eps = 0)")
        return rho

    def f(self, rho):
        rho = self._rho(rho)
        e = self.eps
        if e == 0.0:
            return np.log(rho)
        if self.kind == "shifted":
            return np.log(e + rho)
        # near rho = 1 the ratio minus one is (rho-1)(1-e)/(1+e rho): exact zero at rho = 1
        near = np.abs(rho - 1.0) < 0.5
        split = np.log(e + rho) - np.log1p(e * rho)
        return np.where(near, np.log1p((rho - 1.0) * (1.0 - e) / (1.0 + e * rho)), split)

    def f_prime(self, rho):
        """Derivative of ``f_eps`` with respect to the density."""
        rho = self._rho(rho)
        e = self.eps
        if e == 0.0:
            return 1.0 / rho
        if self.kind == "shifted":
            return 1.0 / (e + rho)
        return 1.0 / (e + rho) - e / (1.0 + e * rho)

    def f_second(self, rho):
        rho = self._rho(rho)
        e = self.eps
        if e == 0.0:
            return -1.0 / rho**2
        if self.kind == "shifted":
            return -1.0 / (e + rho) ** 2
        return -1.0 / (e + rho) ** 2 + e**2 / (1.0 + e * rho) ** 2

    def entropy_integrand(self, rho):
        """Antiderivative ``F~(rho) = ∫_0^rho f_eps(s) ds``.

        For the canonical family this equals
        ``rho log((rho+eps)/(1+rho eps)) + eps log(rho+eps) - log(eps rho+1)/eps
        - eps log eps``; the two eps-logs are merged into ``eps*log1p(rho/eps)``.
        """
        rho = self._rho(rho)
        e = self.eps
        if e == 0.0:
            safe = np.where(rho > 0, rho, 1.0)
            return np.where(rho > 0, rho * np.log(safe) - rho, 0.0)
        if self.kind == "shifted":
            return (e + rho) * np.log(e + rho) - rho - e * math.log(e)
        return rho * self.f(rho) + e * np.log1p(rho / e) - np.log1p(e * rho) / e

    def entropy_limit_integrand(self, rho):
        """``rho log rho - rho`` with the value 0 at vacuum."""
        rho = np.asarray(rho, dtype=float)
        safe = np.where(rho > 0, rho, 1.0)
        return np.where(rho > 0, rho * np.log(safe) - rho, 0.0)

    def averaged_f(self, rho_a, rho_b):
        """``∫_0^1 f_eps(θ rho_a + (1-θ) rho_b) dθ``, the discrete gradient of F~.

        Uses the difference quotient of ``F~`` unless the gap is small on the
        local scale ``eps + min(rho_a, rho_b)``, where a midpoint expansion with
        the ``f''`` correction is both exact to roundoff and cancellation-free.
        """
        if self.eps == 0.0:
            raise ValueError("averaged_f needs eps > 0")
        a = self._rho(rho_a)
        b = self._rho(rho_b)
        a, b = np.broadcast_arrays(a, b)
        gap = b - a
        scale = self.eps + np.minimum(a, b)
        degenerate = np.abs(gap) <= THETA_TOL * scale
        mid = 0.5 * (a + b)
        out = self.f(mid) + self.f_second(mid) * gap**2 / 24.0
        if not np.all(degenerate):
            safe_gap = np.where(degenerate, 1.0, gap)
            quotient = (self.entropy_integrand(b) - self.entropy_integrand(a)) / safe_gap
            out = np.where(degenerate, out, quotient)
        return out

    # -- functionals ------------------------------------------------------
    def entropy(self, grid: Grid, u):
        return grid.integrate(self.entropy_integrand(np.abs(u) ** 2))

    def energy(self, grid: Grid, u, lam: float):
        return 0.5 * grid.grad_norm_sq(u) - 0.5 * lam * self.entropy(grid, u)


# ---------------------------------------------------------------------------
# assumption audit


DEFAULT_CEILINGS = {
    "A1": 1.0,
    "A2": 2.0,
    "A3": 0.0,
    "A4_small": 2.0,
    "A4_large": 2.0,
    "A4_integrated": 2.0,
    "A5": 2.0,
    "con-f": 2.0,
    "add-f": 2.0,
}


@dataclass
class SampleSpec:
    """Sample sets for the audit.

    Densities are log-spaced on ``[rho_min, rho_max]``; complex pairs are drawn
    with modulus up to ``pair_radius``, half of them as close pairs so that the
    Lipschitz-type ratios are probed at small separations too.
    """

    rho_min: float = 1e-12
    rho_max: float = 1e6
    n_rho: int = 4001
    n_pairs: int = 10_000
    pair_radius: float = 10.0
    seed: int = 20240601
    a3_eps_ladder: tuple = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6)

    def densities(self) -> np.ndarray:
        return np.concatenate(([0.0], np.geomspace(self.rho_min, self.rho_max, self.n_rho)))

    def pairs(self):
        rng = np.random.default_rng(self.seed)
        m = self.n_pairs
        r = self.pair_radius * np.sqrt(rng.random(m))
        x = r * np.exp(2j * np.pi * rng.random(m))
        far = self.pair_radius * np.sqrt(rng.random(m)) * np.exp(2j * np.pi * rng.random(m))
        near = x + 10.0 ** rng.uniform(-6, 0, m) * np.exp(2j * np.pi * rng.random(m))
        y = np.where(np.arange(m) % 2 == 0, far, near)
        keep = np.abs(x - y) > 0
        return x[keep], y[keep]


@dataclass
class ValidationEntry:
    condition: str
    observed_sup: float
    ceiling: float
    passed: bool
    note: str = ""

    def to_dict(self):
        return {
            "condition": self.condition,
            "observed_sup": self.observed_sup,
            "ceiling": self.ceiling,
            "pass": self.passed,
            "note": self.note,
        }


@dataclass
class ValidationReport:
    eps: float
    kind: str
    entries: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def __getitem__(self, condition) -> ValidationEntry:
        for e in self.entries:
            if e.condition == condition:
                return e
        raise KeyError(condition)

    def to_json(self) -> str:
        return json.dumps(
            {"eps": self.eps, "kind": self.kind, "entries": [e.to_dict() for e in self.entries]},
            indent=2,
        )


def _sup(values) -> float:
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        return math.inf
    return float(np.max(values))


def validate_assumptions(reg: RegFamily, sample: SampleSpec | None = None, ceilings=None):
    """Report observed constants of (A1)-(A5), (con-f) and (add-f).

    Each entry stores the empirical supremum of the ratio between the left-
    and right-hand sides of the condition (constant ``C`` set to one) over the
    sample sets, and whether it stays below the configured ceiling.
    """
    if reg.eps <= 0:
        raise ValueError("the audit needs eps > 0")
    sample = sample or SampleSpec()
    ceil = dict(DEFAULT_CEILINGS)
    ceil.update(ceilings or {})
    report = ValidationReport(reg.eps, reg.kind)
    eps = reg.eps
    lf = reg.log_factor

    def add(name, value, note=""):
        report.entries.append(ValidationEntry(name, value, ceil[name], bool(value <= ceil[name]), note))

    rho = sample.densities()
    f = reg.f(rho)
    fp = reg.f_prime(rho)

    add("A1", _sup(np.abs(f) / lf), "sup |f(rho)| / (1 + |log eps|)")

    x, y = sample.pairs()
    fx, fy = reg.f(np.abs(x) ** 2), reg.f(np.abs(y) ** 2)
    diff2 = np.abs(x - y) ** 2
    a2 = np.abs(((fx * x - fy * y) * np.conj(x - y)).imag) / diff2
    add("A2", _sup(a2), "sup |Im[(f(|x|^2)x - f(|y|^2)y)(conj(x-y))]| / |x-y|^2")

    # (A3): distance to log on [0.5, 2] must shrink monotonically as eps -> 0
    probe = np.linspace(0.5, 2.0, 301)
    dists = [
        float(np.max(np.abs(RegFamily(e, reg.kind).f(probe) - np.log(probe))))
        for e in sample.a3_eps_ladder
    ]
    monotone = all(b < a for a, b in zip(dists, dists[1:]))
    entry = ValidationEntry("A3", dists[-1], ceil["A3"], monotone,
                            "max |f - log| on [0.5, 2] along the eps ladder: "
                            + ", ".join(f"{d:.3e}" for d in dists))
    report.entries.append(entry)

    pos = rho > 0
    r_pos = rho[pos]
    dev = np.abs(f[pos] - np.log(r_pos))
    small = r_pos <= 1.0
    add("A4_small", _sup(dev[small] / (eps / (eps + r_pos[small]) + eps)),
        "|x| <= 1: sup |f - log| / (eps/(eps+|x|^2) + eps)")
    add("A4_large", _sup(dev[~small] / (eps + eps * r_pos[~small])),
        "|x| >= 1, delta = 1: sup |f - log| / (eps + eps|x|^2)")

    add("A4_integrated", _sup(entropy_gap_bound_ratio(reg, r_pos[small])),
        "|x| <= 1, integrated: |F~_eps - F~_0| / (eps (1 + log(1+rho/eps) + rho))")

    # d f(|x|^2) / d|x| = 2 |x| f'(rho); dividing by |x|/(eps+rho) leaves 2 f'(rho)(eps+rho)
    add("A5", _sup(2.0 * np.abs(fp) * (eps + rho)), "sup |d f(|x|^2)/d|x|| (eps+|x|^2) / |x|")

    conf = np.abs(fx * x - fy * y) / (lf * np.abs(x - y))
    add("con-f", _sup(conf), "sup |f(|x|^2)x - f(|y|^2)y| / ((1+|log eps|)|x-y|)")

    addf = np.abs(1.0 - fp[pos] * r_pos) * (eps + r_pos) * (1 + eps * r_pos) / (
        eps * (1 + eps * r_pos + r_pos**2)
    )
    add("add-f", _sup(addf), "sup |1 - f'(x)x| (eps+x)(1+eps x) / (eps(1+eps x+x^2))")
    return report


def entropy_gap_bound_ratio(reg: RegFamily, rho):
    """Integrated small-density check: ``|F~_eps - F~_0| / (eps (1 + log(1 + rho/eps) + rho))``.

    Integrating the pointwise bound over ``[0, rho]`` gives
    ``eps log(1 + rho/eps) + eps rho``; near vacuum the true gap behaves like
    ``rho log(eps/rho) <= eps``, so an additive ``eps`` is needed for the
    ratio to stay bounded.
    """
    rho = np.asarray(rho, dtype=float)
    eps = reg.eps
    gap = np.abs(reg.entropy_integrand(rho) - reg.entropy_limit_integrand(rho))
    return gap / (eps * (1.0 + np.log1p(rho / eps) + rho))
