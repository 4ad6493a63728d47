"""Command line: ``slogs run | validate | report | list``.

Exit codes: 0 all checks pass, 2 a tolerance check failed, 1 usage or runtime error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from ..regularization import RegFamily, validate_assumptions
from ..schemes import SCHEMES
from .config import KINDS, ConfigError, load_spec
from .experiments import run_experiment
from .fitting import fit_slope

EXIT_PASS, EXIT_ERROR, EXIT_TOLERANCE = 0, 1, 2

CONFIG_DIR = Path(__file__).resolve().parents[3] / "configs"


def _parser():
    p = argparse.ArgumentParser(prog="slogs", description="Regularized stochastic log-Schrödinger experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment file and write CSV + JSON")
    run.add_argument("--config", required=True, help="INI experiment file")
    run.add_argument("--out", default=".", help="output directory")
    run.add_argument("--paths", type=int, help="override the path count")
    run.add_argument("--strict", action="store_true", help="step-ceiling violations are errors")
    run.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")

    val = sub.add_parser("validate", help="assumption audit plus oracle and solver gates")
    val.add_argument("--config", help="optional experiment file; its eps ladder drives the audit")
    val.add_argument("--out", help="write validate.json here")
    val.add_argument("--paths", type=int, default=100, help="Monte Carlo paths for the oracle rate gates")
    val.add_argument("--strict", action="store_true")
    val.add_argument("--threads", type=int, default=1)

    rep = sub.add_parser("report", help="re-fit the slope of a stored CSV")
    rep.add_argument("csv", help="CSV written by `run` (first column: tau or eps)")
    rep.add_argument("--column", default=None, help="error column (default mean_err, then gap)")

    sub.add_parser("list", help="list schemes, experiment kinds and shipped configs")
    return p


def _cmd_run(args) -> int:
    spec = load_spec(args.config)
    if args.paths:
        spec = spec.with_paths(args.paths)
    if args.strict:
        from dataclasses import replace

        spec = replace(spec, scheme=replace(spec.scheme, strict=True))
    report = run_experiment(spec, threads=args.threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{spec.name}.csv").write_text(report.csv_text(), encoding="utf-8", newline="")
    (out / f"{spec.name}.json").write_text(report.json_text(), encoding="utf-8", newline="")
    print(report.summary())
    return EXIT_PASS if report.passed else EXIT_TOLERANCE


def _cmd_validate(args) -> int:
    from .gates import oracle_gates, solver_integrity_gates

    eps_list = (1e-2, 1e-3, 1e-4)
    if args.config:
        spec = load_spec(args.config)
        eps_list = spec.eps_ladder or eps_list
    results = []
    ok = True
    for eps in eps_list:
        rep = validate_assumptions(RegFamily(eps))
        for e in rep.entries:
            print(f"{'PASS' if e.passed else 'FAIL'}  audit eps={eps:g} {e.condition}: "
                  f"observed={e.observed_sup:.4g} ceiling={e.ceiling:g}")
        results.append({"eps": eps, "entries": [e.to_dict() for e in rep.entries]})
        ok &= rep.passed
    fixture = validate_assumptions(RegFamily(eps_list[-1], "shifted"))
    fixture_ok = not fixture["A1"].passed
    print(f"{'PASS' if fixture_ok else 'FAIL'}  audit negative fixture log(eps+x) fails A1: "
          f"observed={fixture['A1'].observed_sup:.4g}")
    ok &= fixture_ok
    gates = oracle_gates(args.paths) + solver_integrity_gates()
    for g in gates:
        print(g.line())
        ok &= g.passed
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        payload = {"audit": results, "fixture_fails_A1": fixture_ok, "gates": [g.to_dict() for g in gates], "pass": ok}
        (out / "validate.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return EXIT_PASS if ok else EXIT_TOLERANCE


def _cmd_report(args) -> int:
    with open(args.csv, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{args.csv}: no data rows")
    xcol = next(iter(rows[0]))
    col = args.column or ("mean_err" if "mean_err" in rows[0] else "gap")
    if col not in rows[0]:
        raise ValueError(f"{args.csv}: no column {col!r}; columns are {list(rows[0])}")
    x = [float(r[xcol]) for r in rows]
    y = [float(r[col]) for r in rows]
    fit = fit_slope(x, y)
    json_path = Path(args.csv).with_suffix(".json")
    result = {"csv": str(args.csv), "x": xcol, "y": col, "slope": fit.slope, "intercept": fit.intercept,
              "n_points": fit.n_points}
    passed = None
    if json_path.exists():
        stored = json.loads(json_path.read_text(encoding="utf-8"))
        tol = stored.get("tolerances", {})
        if fit.defined and "slope_min" in tol and "slope_max" in tol:
            passed = tol["slope_min"] <= fit.slope <= tol["slope_max"]
            result["pass"] = passed
    print(json.dumps(result, indent=2, sort_keys=True))
    if fit.slope is None:
        return EXIT_TOLERANCE
    return EXIT_TOLERANCE if passed is False else EXIT_PASS


def _cmd_list(args) -> int:
    print("schemes:     " + ", ".join(SCHEMES))
    print("experiments: " + ", ".join(KINDS))
    if CONFIG_DIR.is_dir():
        print("configs:")
        for p in sorted(CONFIG_DIR.glob("*.ini")):
            print(f"  {p}")
    return EXIT_PASS


COMMANDS = {"run": _cmd_run, "validate": _cmd_validate, "report": _cmd_report, "list": _cmd_list}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    threads = getattr(args, "threads", None)
    if threads is not None and threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_ERROR
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
