"""INI experiment files.

Layout (all sections optional except ``[experiment]``)::

    [experiment]
    kind = StrongOrder        ; StrongOrder | RegularizationError | EntropyConvergence
                              ; EnergyGap | MassLaw | SymplecticCheck | AssumptionAudit
    name = lie_add_order      ; file stem of the CSV / JSON outputs
    seed = 20240611
    paths = 200
    T = 0.5
    error_norm = terminal     ; terminal | sup (max over the coarse steps), StrongOrder only

    [grid]
    n = 256
    L = 50.26548245743669     ; 16 pi; expressions such as 16*pi are accepted

    [scheme]
    id = LieAdd
    lambda = -1
    eps = 1e-3
    g = One                   ; Constant(a) | RationalInv(a,b) | Saturating(a,b,c) | SaturatingSq(a,b,c) | One
    additive = true
    tol = 1e-11
    max_iter = 50
    M_sub = 8
    c0 =                      ; empty means 0.5/|lambda|

    [noise]
    flavor = ComplexH         ; ComplexH | RealL2 | None
    K = 8
    r = 4
    amplitude = 1
    dt_fine = 2**-14

    [initial]
    id = gaussian             ; gaussian | plane_wave | two_bump
    amplitude = 1
    width = 1
    center = 0
    momentum = 0

    [ladder]
    tau = 2**-4, 2**-5, 2**-6, 2**-7, 2**-8
    tau_ref = 2**-11
    eps = 1e-2, 1e-3, 1e-4, 1e-5

    [tolerance]
    slope_min = 0.35
    slope_max = 0.65
"""

from __future__ import annotations

import ast
import configparser
import math
import operator
import re
from dataclasses import dataclass, field, replace

import numpy as np

from ..field import make_grid
from ..flows import DiffusionG
from ..noise import build_noise
from ..regularization import RegFamily
from ..schemes import SCHEMES, SchemeConfig

__all__ = ["KINDS", "ConfigError", "ExperimentSpec", "load_spec", "parse_spec", "initial_condition"]

KINDS = (
    "StrongOrder",
    "RegularizationError",
    "EntropyConvergence",
    "EnergyGap",
    "MassLaw",
    "SymplecticCheck",
    "AssumptionAudit",
)
STATISTICAL = ("StrongOrder", "RegularizationError", "EntropyConvergence", "EnergyGap", "MassLaw")
INITIAL = ("gaussian", "plane_wave", "two_bump")


class ConfigError(ValueError):
    """Malformed experiment file; the message names the file, line and key."""


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str
    name: str
    seed: int = 20240611
    paths: int = 200
    T: float = 0.5
    n: int = 256
    L: float = 16 * math.pi
    scheme: SchemeConfig = field(default_factory=SchemeConfig)
    flavor: str = "ComplexH"
    K: int = 8
    r: float = 4.0
    amplitude: float = 1.0
    dt_fine: float = 2.0**-14
    initial: dict = field(default_factory=lambda: {"id": "gaussian"})
    taus: tuple = ()
    tau_ref: float | None = None
    eps_ladder: tuple = ()
    tolerance: dict = field(default_factory=dict)
    alpha: float = 1.0
    steps: int = 100
    chunk: int = 25
    error_norm: str = "terminal"

    def grid(self):
        return make_grid(self.n, self.L)

    def noise(self, grid=None):
        grid = grid or self.grid()
        if self.flavor == "None" or self.amplitude == 0:
            return build_noise(grid, 0, flavor="None")
        return build_noise(grid, self.K, self.r, self.amplitude, self.flavor)

    def u0(self, grid=None):
        return initial_condition(grid or self.grid(), self.initial)

    def with_paths(self, paths: int) -> "ExperimentSpec":
        return replace(self, paths=int(paths))

    def fingerprint(self) -> dict:
        from .. import __version__

        return {
            "version": __version__,
            "seed": self.seed,
            "grid": {"n": self.n, "L": self.L},
            "scheme": self.scheme.scheme,
            "noise": {"flavor": self.flavor, "K": self.K, "r": self.r, "amplitude": self.amplitude},
            "paths": self.paths,
        }


def initial_condition(grid, params: dict):
    kind = params.get("id", "gaussian")
    a = float(params.get("amplitude", 1.0))
    w = float(params.get("width", 1.0))
    c = float(params.get("center", 0.0))
    k = float(params.get("momentum", 0.0))
    x = grid.points
    if kind == "gaussian":
        return a * np.exp(-((x - c) ** 2) / (2 * w**2) + 1j * k * x)
    if kind == "plane_wave":
        m = int(params.get("mode", 1))
        return a * np.exp(2j * np.pi * m * x / grid.length).astype(complex)
    if kind == "two_bump":
        s = float(params.get("separation", 4.0))
        return a * (np.exp(-((x - s / 2) ** 2) / (2 * w**2)) + np.exp(-((x + s / 2) ** 2) / (2 * w**2))) * np.exp(
            1j * k * x
        )
    raise ValueError(f"unknown initial condition {kind!r}; expected one of {INITIAL}")


# -- value parsing -----------------------------------------------------------

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv,
           ast.Pow: operator.pow}
_NAMES = {"pi": math.pi, "e": math.e}


def _eval_number(text: str) -> float:
    """Evaluate a small arithmetic expression (numbers, pi, e, + - * / **)."""

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return node.value
        if isinstance(node, ast.Name) and node.id in _NAMES:
            return _NAMES[node.id]
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v = ev(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        raise ValueError(f"unsupported expression {text!r}")

    return float(ev(ast.parse(text.strip(), mode="eval")))


class _Reader:
    def __init__(self, cp: configparser.ConfigParser, text: str, source: str):
        self.cp, self.text, self.source = cp, text, source

    def _line(self, section, key):
        current = None
        for no, line in enumerate(self.text.splitlines(), 1):
            s = line.strip()
            m = re.match(r"\[(.+)\]", s)
            if m:
                current = m.group(1).strip()
            elif current == section and re.match(rf"{re.escape(key)}\s*[=:]", s, re.IGNORECASE):
                return no
        return None

    def fail(self, section, key, msg):
        line = self._line(section, key)
        where = f"{self.source}:{line}" if line else self.source
        raise ConfigError(f"{where}: [{section}] {key}: {msg}")

    def raw(self, section, key, default=None):
        if not self.cp.has_section(section) or not self.cp.has_option(section, key):
            return default
        value = self.cp.get(section, key).strip()
        return value if value != "" else default

    def number(self, section, key, default=None, kind=float):
        value = self.raw(section, key)
        if value is None:
            return default
        try:
            x = _eval_number(value)
        except (ValueError, SyntaxError, ZeroDivisionError) as exc:
            self.fail(section, key, f"cannot read {value!r} as a number ({exc})")
        if kind is int:
            if x != int(x):
                self.fail(section, key, f"expected an integer, got {value!r}")
            return int(x)
        return float(x)

    def numbers(self, section, key):
        value = self.raw(section, key)
        if value is None:
            return ()
        out = []
        for part in value.split(","):
            try:
                out.append(_eval_number(part))
            except (ValueError, SyntaxError, ZeroDivisionError):
                self.fail(section, key, f"cannot read {part.strip()!r} as a number")
        return tuple(out)

    def boolean(self, section, key, default):
        value = self.raw(section, key)
        if value is None:
            return default
        try:
            return self.cp.getboolean(section, key)
        except ValueError:
            self.fail(section, key, f"expected true/false, got {value!r}")

    def choice(self, section, key, options, default):
        value = self.raw(section, key, default)
        if value not in options:
            self.fail(section, key, f"unknown value {value!r}; valid ids: {', '.join(options)}")
        return value


def _check_ladder(reader, key, values, ratio_ok):
    if len(values) < 2:
        return
    ratios = [values[i] / values[i + 1] for i in range(len(values) - 1)]
    r0 = ratios[0]
    if any(abs(r - r0) > 1e-9 * r0 for r in ratios) or not any(abs(r0 - q) < 1e-9 * q for q in ratio_ok):
        reader.fail("ladder", key, f"ladder must be geometric and decreasing with ratio {' or '.join(map(str, ratio_ok))}")


def parse_spec(text: str, source: str = "<config>") -> ExperimentSpec:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    rd = _Reader(cp, text, source)
    if not cp.has_section("experiment"):
        raise ConfigError(f"{source}: missing [experiment] section")
    known = {"experiment", "grid", "scheme", "noise", "initial", "ladder", "tolerance"}
    for sec in cp.sections():
        if sec not in known:
            raise ConfigError(f"{source}: unknown section [{sec}]; expected one of {sorted(known)}")

    kind = rd.choice("experiment", "kind", KINDS, None)
    name = rd.raw("experiment", "name", kind.lower())
    defaults = ExperimentSpec(kind, name)

    lam = rd.number("scheme", "lambda", -1.0)
    eps = rd.number("scheme", "eps", 1e-3)
    g_text = rd.raw("scheme", "g", "One")
    try:
        g = DiffusionG.parse(g_text)
    except ValueError as exc:
        rd.fail("scheme", "g", str(exc))
    try:
        reg = RegFamily(eps, rd.raw("scheme", "regularization", "canonical"))
    except ValueError as exc:
        rd.fail("scheme", "eps", str(exc))
    scheme_id = rd.choice("scheme", "id", SCHEMES, "LieAdd")
    taus = rd.numbers("ladder", "tau")
    tau = rd.number("scheme", "tau", taus[-1] if taus else 2.0**-6)
    try:
        cfg = SchemeConfig(
            scheme=scheme_id,
            lam=lam,
            reg=reg,
            g=g,
            tau=tau,
            tol=rd.number("scheme", "tol", 1e-11),
            max_iter=rd.number("scheme", "max_iter", 50, int),
            M_sub=rd.number("scheme", "M_sub", 8, int),
            c0=rd.number("scheme", "c0", None),
            additive=rd.boolean("scheme", "additive", True),
        )
    except ValueError as exc:
        rd.fail("scheme", "id", str(exc))

    eps_ladder = rd.numbers("ladder", "eps")
    _check_ladder(rd, "tau", taus, (2.0,))
    _check_ladder(rd, "eps", eps_ladder, (2.0, 10.0))

    initial = {"id": rd.choice("initial", "id", INITIAL, "gaussian")}
    if cp.has_section("initial"):
        for key in cp.options("initial"):
            if key != "id":
                initial[key] = rd.number("initial", key)

    tolerance = {}
    if cp.has_section("tolerance"):
        for key in cp.options("tolerance"):
            tolerance[key] = rd.number("tolerance", key)

    spec = ExperimentSpec(
        kind=kind,
        name=name,
        seed=rd.number("experiment", "seed", defaults.seed, int),
        paths=rd.number("experiment", "paths", defaults.paths, int),
        T=rd.number("experiment", "T", defaults.T),
        n=rd.number("grid", "n", defaults.n, int),
        L=rd.number("grid", "L", defaults.L),
        scheme=cfg,
        flavor=rd.choice("noise", "flavor", ("ComplexH", "RealL2", "None"), "ComplexH"),
        K=rd.number("noise", "K", defaults.K, int),
        r=rd.number("noise", "r", defaults.r),
        amplitude=rd.number("noise", "amplitude", defaults.amplitude),
        dt_fine=rd.number("noise", "dt_fine", defaults.dt_fine),
        initial=initial,
        taus=taus,
        tau_ref=rd.number("ladder", "tau_ref", None),
        eps_ladder=eps_ladder,
        tolerance=tolerance,
        alpha=rd.number("experiment", "alpha", 1.0),
        steps=rd.number("experiment", "steps", defaults.steps, int),
        chunk=rd.number("experiment", "chunk", defaults.chunk, int),
        error_norm=rd.choice("experiment", "error_norm", ("terminal", "sup"), "terminal"),
    )
    try:
        spec.grid()
    except ValueError as exc:
        rd.fail("grid", "n", str(exc))
    if kind in STATISTICAL and spec.paths < 100:
        rd.fail("experiment", "paths", f"statistical experiments need at least 100 paths, got {spec.paths}")
    if kind == "StrongOrder":
        if len(taus) < 3:
            rd.fail("ladder", "tau", "a strong-order ladder needs at least 3 step sizes")
        if spec.tau_ref is None or spec.tau_ref > min(taus) / 8 * (1 + 1e-12):
            rd.fail("ladder", "tau_ref", "tau_ref must be at most min(tau)/8")
    if kind in ("RegularizationError", "EntropyConvergence", "EnergyGap") and len(eps_ladder) < 3:
        rd.fail("ladder", "eps", "an eps ladder needs at least 3 values")
    return spec


def load_spec(path) -> ExperimentSpec:
    with open(path, encoding="utf-8") as fh:
        return parse_spec(fh.read(), str(path))
