"""Monte Carlo experiment drivers.

Paths are processed in fixed-size chunks (``spec.chunk``) whatever the thread
count, per-path results are concatenated in path order, and statistics use a
fixed pairwise reduction, so reports are byte-identical across ``--threads``.
"""

from __future__ import annotations

import csv
import io
import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from ..noise import NoisePath, Window, sample_path
from ..observables import MassLawAccumulator, _pairwise_sum, symplectic_form
from ..regularization import DEFAULT_CEILINGS, RegFamily, validate_assumptions
from ..schemes import SchemeConfig, run_trajectory, step_tangent
from .config import ExperimentSpec
from .fitting import fit_slope, local_slopes

__all__ = ["RunReport", "run_experiment", "EXPERIMENTS", "mean_stderr"]


@dataclass
class RunReport:
    experiment: str
    name: str
    columns: tuple
    rows: list
    slope: float | None = None
    intercept: float | None = None
    passed: bool = False
    tolerances: dict = field(default_factory=dict)
    fingerprint: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([_cell(x) for x in row])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "slope": self.slope,
            "intercept": self.intercept,
            "pass": bool(self.passed),
            "tolerances": self.tolerances,
            "fingerprint": self.fingerprint,
            "details": _plain(self.extra),
        }

    def json_text(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def summary(self) -> str:
        s = "n/a" if self.slope is None else f"{self.slope:.3f}"
        return f"{'PASS' if self.passed else 'FAIL'}  {self.experiment} [{self.name}] slope={s}"


def _cell(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (np.integer,)):
        return str(int(x))
    return str(x)


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def mean_stderr(values):
    """Mean and standard error with a fixed pairwise summation order; NaNs (failed paths) dropped."""
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    n = v.size
    if n == 0:
        return float("nan"), float("nan"), 0
    mean = float(_pairwise_sum(v)) / n
    if n < 2:
        return mean, float("nan"), n
    var = float(_pairwise_sum((v - mean) ** 2)) / (n - 1)
    return mean, float(np.sqrt(var / n)), n


def _chunks(spec: ExperimentSpec):
    size = max(1, spec.chunk)
    return [(start, min(size, spec.paths - start)) for start in range(0, spec.paths, size)]


def _map_chunks(spec, fn, threads):
    """Apply ``fn(first_path, count)`` to every chunk; results in path order."""
    jobs = _chunks(spec)
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda j: fn(*j), jobs))
    return [fn(*j) for j in jobs]


def _path(spec, model, first, count, T=None) -> NoisePath:
    return sample_path(model, spec.T if T is None else T, spec.dt_fine, spec.seed, n_paths=count, first_path=first)


def _tolerances(spec, **defaults):
    tol = dict(defaults)
    tol.update(spec.tolerance)
    return tol


def _slope_band(spec):
    """``[slope_min, slope_max]``; a file giving only ``slope_min`` sets a one-sided bound."""
    if "slope_min" in spec.tolerance and "slope_max" not in spec.tolerance:
        return {"slope_min": spec.tolerance["slope_min"]}
    return _tolerances(spec, slope_min=0.35, slope_max=0.65)


def _terminal(u0, spec, cfg, path):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        traj = run_trajectory(u0, spec.T, cfg, path)
    return traj.final, traj.failed


# -- strong order in tau -------------------------------------------------------


def strong_order(spec: ExperimentSpec, threads: int = 1) -> RunReport:
    grid = spec.grid()
    model = spec.noise(grid)
    u0 = spec.u0(grid)
    taus = tuple(sorted(spec.taus, reverse=True))
    ref_cfg = replace(spec.scheme, tau=spec.tau_ref, M_sub=min(spec.scheme.M_sub, int(round(spec.tau_ref / spec.dt_fine))))
    for tau in taus + (spec.tau_ref,):
        c = replace(spec.scheme, tau=tau)
        if c.tau >= c.tau_ceiling:
            msg = f"tau={tau:g} is above the step ceiling {c.tau_ceiling:g}"
            if spec.scheme.strict:
                raise ValueError(msg)
            warnings.warn(msg, stacklevel=2)

    sup_norm = spec.error_norm == "sup"
    stride = min(taus)

    def chunk(first, count):
        path = _path(spec, model, first, count)
        ref_states = {}
        if sup_norm:
            keep = int(round(stride / spec.tau_ref))

            def grab(k, t, u):
                if k % keep == 0:
                    ref_states[k // keep] = u.copy()

            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                tr = run_trajectory(u0, spec.T, ref_cfg, path, callback=grab)
            ref, ref_failed = tr.final, tr.failed
        else:
            ref, ref_failed = _terminal(u0, spec, ref_cfg, path)
        errs, fails = [], []
        for tau in taus:
            c = replace(spec.scheme, tau=tau)
            if sup_norm:
                worst = np.zeros(path.batch_shape)
                ratio = int(round(tau / stride))

                def track(k, t, u, worst=worst, ratio=ratio):
                    np.maximum(worst, grid.norm_l2(u - ref_states[k * ratio]), out=worst)

                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    failed = run_trajectory(u0, spec.T, c, path, callback=track).failed
                e = worst
            else:
                out, failed = _terminal(u0, spec, c, path)
                e = grid.norm_l2(out - ref)
            e = np.where(failed | ref_failed, np.nan, e)
            errs.append(e)
            fails.append(failed | ref_failed)
        return np.array(errs), np.array(fails), path.checksum()

    parts = _map_chunks(spec, chunk, threads)
    errs = np.concatenate([p[0] for p in parts], axis=1)
    fails = np.concatenate([p[1] for p in parts], axis=1)
    rows, means = [], []
    for i, tau in enumerate(taus):
        m, se, n_ok = mean_stderr(errs[i])
        rows.append([tau, m, se, spec.paths, int(fails[i].sum())])
        means.append(m)
    fit = fit_slope(taus, means)
    tol = _slope_band(spec)
    ok = fit.defined and tol["slope_min"] <= fit.slope <= tol.get("slope_max", np.inf)
    extra = {
        "tau_ref": spec.tau_ref,
        "local_slopes": local_slopes(taus, means).tolist() if len(taus) > 1 else [],
        "path_checksums": [p[2] for p in parts],
        "eps": spec.scheme.reg.eps,
        "error_norm": spec.error_norm,
    }
    return RunReport("StrongOrder", spec.name, ("tau", "mean_err", "stderr", "n_paths", "n_failed"), rows,
                     fit.slope, fit.intercept, bool(ok), tol, spec.fingerprint(), extra)


# -- regularization error in eps -----------------------------------------------


def _eps_sweep(spec, threads, collect):
    """Run the scheme for every eps on shared paths; ``collect(eps, final, failed)`` gives per-path values."""
    grid = spec.grid()
    model = spec.noise(grid)
    u0 = spec.u0(grid)
    eps_list = tuple(sorted(spec.eps_ladder, reverse=True))

    def chunk(first, count):
        path = _path(spec, model, first, count)
        res = {}
        for eps in eps_list:
            cfg = replace(spec.scheme, reg=RegFamily(eps, spec.scheme.reg.kind))
            out, failed = _terminal(u0, spec, cfg, path)
            res[eps] = collect(grid, eps, out, failed)
        return res

    parts = _map_chunks(spec, chunk, threads)
    return grid, eps_list, parts


def regularization_error(spec: ExperimentSpec, threads: int = 1) -> RunReport:
    def collect(grid, eps, out, failed):
        return np.where(failed[..., None], np.nan, out)

    grid, eps_list, parts = _eps_sweep(spec, threads, collect)
    ref_eps = eps_list[-1]
    rows, means, xs = [], [], []
    for eps in eps_list[:-1]:
        e = np.concatenate([grid.norm_l2(p[eps] - p[ref_eps]) for p in parts])
        m, se, n_ok = mean_stderr(e)
        rows.append([eps, m, se, spec.paths, spec.paths - n_ok])
        means.append(m)
        xs.append(eps)
    fit = fit_slope(xs, means)
    tol = _slope_band(spec)
    ok = fit.defined and tol["slope_min"] <= fit.slope <= tol.get("slope_max", np.inf)
    extra = {"eps_ref": ref_eps, "tau": spec.scheme.tau, "local_slopes": local_slopes(xs, means).tolist()}
    return RunReport("RegularizationError", spec.name, ("eps", "mean_err", "stderr", "n_paths", "n_failed"), rows,
                     fit.slope, fit.intercept, bool(ok), tol, spec.fingerprint(), extra)


# -- entropy / energy gaps ---------------------------------------------------------


def _functional_gap(spec, threads, which):
    lam = spec.scheme.lam

    def collect(grid, eps, out, failed):
        reg = RegFamily(eps, spec.scheme.reg.kind)
        vals = reg.entropy(grid, out) if which == "entropy" else reg.energy(grid, out, lam)
        return np.where(failed, np.nan, vals)

    grid, eps_list, parts = _eps_sweep(spec, threads, collect)
    values = {eps: np.concatenate([p[eps] for p in parts]) for eps in eps_list}
    stats = {eps: mean_stderr(v) for eps, v in values.items()}
    ref = eps_list[-1]
    rows, gaps, xs = [], [], []
    for eps in eps_list[:-1]:
        gap = abs(stats[eps][0] - stats[ref][0])
        # the ladder shares its paths, so the gap's error comes from paired differences
        se = mean_stderr(values[eps] - values[ref])[1]
        rows.append([eps, stats[eps][0], stats[eps][1], gap, se, spec.paths])
        gaps.append(gap)
        xs.append(eps)
    gaps = np.array(gaps)
    monotone = bool(np.all(np.diff(gaps) < 0))
    fit = fit_slope(xs, gaps)
    extra = {"eps_ref": ref, "reference_mean": stats[ref][0], "monotone": monotone, "tau": spec.scheme.tau}
    return rows, fit, monotone, extra


def entropy_convergence(spec: ExperimentSpec, threads: int = 1) -> RunReport:
    rows, fit, monotone, extra = _functional_gap(spec, threads, "entropy")
    return RunReport("EntropyConvergence", spec.name, ("eps", "mean_F", "stderr_F", "gap", "gap_stderr", "n_paths"),
                     rows, fit.slope, fit.intercept, monotone, {"monotone": True}, spec.fingerprint(), extra)


def energy_gap(spec: ExperimentSpec, threads: int = 1) -> RunReport:
    rows, fit, monotone, extra = _functional_gap(spec, threads, "energy")
    if spec.taus:
        # fixed-eps gap along the tau ladder against tau_ref (scheme-consistency of the energy)
        grid, model, u0 = spec.grid(), spec.noise(), spec.u0()
        tau_ref = spec.tau_ref or min(spec.taus) / 8
        lam, reg = spec.scheme.lam, spec.scheme.reg

        def chunk(first, count):
            path = _path(spec, model, first, count)
            out = {}
            for tau in tuple(spec.taus) + (tau_ref,):
                fin, failed = _terminal(u0, spec, replace(spec.scheme, tau=tau), path)
                out[tau] = np.where(failed, np.nan, reg.energy(grid, fin, lam))
            return out

        parts = _map_chunks(spec, chunk, threads)
        means = {t: mean_stderr(np.concatenate([p[t] for p in parts]))[0] for t in tuple(spec.taus) + (tau_ref,)}
        tau_gaps = [abs(means[t] - means[tau_ref]) for t in spec.taus]
        extra["tau_ladder"] = list(spec.taus)
        extra["tau_gaps"] = tau_gaps
        extra["tau_gap_slope"] = fit_slope(spec.taus, tau_gaps).slope
    return RunReport("EnergyGap", spec.name, ("eps", "mean_H", "stderr_H", "gap", "gap_stderr", "n_paths"),
                     rows, fit.slope, fit.intercept, monotone, {"monotone": True}, spec.fingerprint(), extra)


# -- structure experiments -------------------------------------------------------------


def mass_law(spec: ExperimentSpec, threads: int = 1) -> RunReport:
    grid = spec.grid()
    model = spec.noise(grid)
    u0 = spec.u0(grid)
    cfg = spec.scheme
    additive = cfg.is_additive

    def chunk(first, count):
        path = _path(spec, model, first, count)
        acc = MassLawAccumulator(grid, model, cfg.tau, additive, spec.alpha)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            run_trajectory(u0, spec.T, cfg, path, callback=acc)
        return acc.rows

    parts = _map_chunks(spec, chunk, threads)
    res = MassLawAccumulator(grid, model, cfg.tau, additive, spec.alpha).result(parts)
    tol = _tolerances(spec, n_se=3.0)
    zs = res.z_scores()
    ok = res.within(tol["n_se"])
    rows = [
        [k, float(res.mean[k]), float(res.stderr[k]), float(zs[k]), float(res.weighted_mean[k]),
         float(res.weighted_stderr[k])]
        for k in range(len(res.mean))
    ]
    extra = {
        "expected_increment": res.expected,
        "trace_Q": model.trace() if model.K else 0.0,
        "max_z": float(np.max(zs)),
        "weighted_max_z": float(np.max(res.z_scores(weighted=True))),
        "additive": additive,
    }
    return RunReport("MassLaw", spec.name, ("step", "mean_residual", "stderr", "z", "weighted_mean_residual",
                                            "weighted_stderr"), rows, None, None, ok, tol, spec.fingerprint(), extra)


def symplectic_check(spec: ExperimentSpec, threads: int = 1) -> RunReport:
    """Propagate tangent pairs along one path per chunk-free run; record the per-step 2-form drift."""
    grid = spec.grid()
    model = spec.noise(grid)
    u = spec.u0(grid)
    cfg = spec.scheme
    steps = spec.steps
    T = steps * cfg.tau
    path = sample_path(model, T, spec.dt_fine, spec.seed)
    rng = np.random.default_rng(spec.seed)
    pairs = 4
    smooth = np.exp(-grid.points**2 / 8)
    xis = smooth * (rng.normal(size=(2 * pairs, grid.n)) + 1j * rng.normal(size=(2 * pairs, grid.n)))
    per = int(round(cfg.tau / path.dt_fine))
    rows = []
    worst = 0.0
    omega0 = symplectic_form(grid, xis[:pairs], xis[pairs:])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for k in range(steps):
            before = symplectic_form(grid, xis[:pairs], xis[pairs:])
            win = Window(path, k * per, (k + 1) * per)
            u, xis = step_tangent(u, xis, win, cfg)
            after = symplectic_form(grid, xis[:pairs], xis[pairs:])
            rel = float(np.max(np.abs(after - before) / np.abs(before)))
            worst = max(worst, rel)
            rows.append([k + 1, rel, float(np.max(np.abs(after - omega0) / np.abs(omega0)))])
    default = 1e-8 if cfg.scheme.startswith("Lie") else 10 * cfg.tol
    tol = _tolerances(spec, max_rel_drift=default)
    ok = worst <= tol["max_rel_drift"]
    return RunReport("SymplecticCheck", spec.name, ("step", "rel_drift", "rel_drift_total"), rows, None, None, ok, tol,
                     spec.fingerprint(), {"max_rel_drift_per_step": worst})


def assumption_audit(spec: ExperimentSpec, threads: int = 1) -> RunReport:
    eps_list = spec.eps_ladder or (1e-2, 1e-3, 1e-4)
    ceilings = dict(DEFAULT_CEILINGS)
    ceilings.update({k: v for k, v in spec.tolerance.items() if k in ceilings})
    rows = []
    ok = True
    for eps in eps_list:
        rep = validate_assumptions(RegFamily(eps), ceilings=ceilings)
        for e in rep.entries:
            rows.append(["canonical", eps, e.condition, e.observed_sup, e.ceiling, int(e.passed)])
        ok &= rep.passed
    fixture = validate_assumptions(RegFamily(eps_list[-1], "shifted"), ceilings=ceilings)
    for e in fixture.entries:
        rows.append(["shifted", eps_list[-1], e.condition, e.observed_sup, e.ceiling, int(e.passed)])
    fixture_fails = not fixture["A1"].passed
    return RunReport("AssumptionAudit", spec.name, ("family", "eps", "condition", "observed_sup", "ceiling", "pass"),
                     rows, None, None, bool(ok and fixture_fails), ceilings, spec.fingerprint(),
                     {"canonical_pass": bool(ok), "fixture_fails_A1": bool(fixture_fails)})


EXPERIMENTS = {
    "StrongOrder": strong_order,
    "RegularizationError": regularization_error,
    "EntropyConvergence": entropy_convergence,
    "EnergyGap": energy_gap,
    "MassLaw": mass_law,
    "SymplecticCheck": symplectic_check,
    "AssumptionAudit": assumption_audit,
}


def run_experiment(spec: ExperimentSpec, threads: int = 1) -> RunReport:
    return EXPERIMENTS[spec.kind](spec, threads)
