"""Command-line entry point: ``spdelp {verify,convergence,bounds,properties}``.

Exit codes: 0 when every check passes, 1 when a check fails, 2 on usage or
input errors. ``SPDE_SEED`` in the environment overrides ``--seed``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import bounds
from .ito import (
    EXACT_TOL,
    ConvergenceTable,
    convergence_study,
    ito_residual,
    run_replicates,
)
from .lattice import ScalarField, bump_values
from .noise import TimeGrid, sample_noise
from .process import BlowUpError, StabilityError, integrate, weak_form_residual
from .scenario import CATALOG, ScenarioError, ScenarioSpec, load, randomized_catalog, validate

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

PART_SUM_TOL = 1e-13
WEAK_FORM_TOL = 1e-10
DEGENERATE_TOL = 1e-12
HALVING_BAND = (0.35, 0.65)  # residual ratio when dt halves: 1/2 within 30%


class UsageError(Exception):
    pass


def _fmt(x) -> str:
    """Shortest round-trip text for a float (deterministic across runs)."""
    if x is None:
        return ""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else _fmt(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def resolve_seed(flag: int | None, default: int) -> int:
    env = os.environ.get("SPDE_SEED")
    if env is not None and env.strip():
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"SPDE_SEED must be an integer, got {env!r}") from None
    return default if flag is None else flag


def load_scenario(ref: str) -> ScenarioSpec:
    """A scenario file path, or the name of a shipped scenario."""
    path = Path(ref)
    if path.exists():
        return load(path)
    if ref in CATALOG:
        return CATALOG[ref]
    raise ScenarioError(f"no scenario file or catalog entry named {ref!r}")


def _apply_dt(spec: ScenarioSpec, dt: float | None) -> ScenarioSpec:
    if dt is None:
        return spec
    try:
        tg = TimeGrid.from_dt(spec.tg.T, dt)
    except ValueError as exc:
        raise ScenarioError(str(exc)) from exc
    spec = replace(spec, tg=tg)
    validate(spec)
    return spec


def _emit(text: str, out: str | None):
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _csv_text(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) or v is None else v for v in r])
    return buf.getvalue()


# -- verify -------------------------------------------------------------------


def verify_report(spec: ScenarioSpec, replicates: int, seed: int, threads: int | None = 1) -> dict:
    """Pathwise and Monte Carlo diagnostics of the Ito formula for one scenario."""
    built = spec.build()
    noise = sample_noise(built.tg, built.K, seed, 0)
    path = integrate(built.u0, built.coeffs, noise)
    rep = ito_residual(path, noise, built.p, built.tau)
    grid = built.grid
    phi = ScalarField(grid, bump_values(grid, (0.5 * grid.length,) * grid.dim, 0.3 * grid.length))
    weak = weak_form_residual(path, noise, phi)

    checks = {
        "part_sum": {"value": rep.part_sum_error(), "tol": PART_SUM_TOL},
        "weak_form": {"value": weak, "tol": WEAK_FORM_TOL},
    }
    for c in checks.values():
        c["pass"] = c["value"] <= c["tol"]

    report = {
        "scenario": spec.to_dict(),
        "settings": {"replicates": replicates, "seed": seed, "dt": built.tg.dt, "M": built.tg.M},
        "pathwise": {
            "replicate": 0,
            "m_tau": rep.m_tau,
            "residual_max": rep.residual_max,
            "residual_max_rel": rep.residual_max_rel,
            "residual_at_T": rep.residual_at_T,
            "lhs_T": float(rep.lhs[-1]),
            "rhs_T": float(rep.rhs[-1]),
            "parts_T": {k: float(v[-1]) for k, v in rep.parts.items()},
        },
    }

    if spec.is_degenerate():
        checks["degenerate_exact"] = {
            "value": rep.residual_max,
            "tol": DEGENERATE_TOL,
            "pass": rep.residual_max <= DEGENERATE_TOL,
        }
    elif spec.is_deterministic():
        half = replace(spec, tg=spec.tg.refined(2))
        hb = half.build()
        hnoise = sample_noise(hb.tg, hb.K, seed, 0)
        r2 = ito_residual(integrate(hb.u0, hb.coeffs, hnoise), hnoise, hb.p, hb.tau).residual_max
        ratio = r2 / rep.residual_max if rep.residual_max > 0 else 0.0
        checks["dt_halving"] = {
            "value": ratio,
            "band": list(HALVING_BAND),
            "residual_half": r2,
            "pass": rep.residual_max <= EXACT_TOL or HALVING_BAND[0] <= ratio <= HALVING_BAND[1],
        }
    else:
        batch = run_replicates(built, replicates, seed, threads=threads)
        r = batch.residual_at_T
        report["monte_carlo"] = {
            "replicates": replicates,
            "mean_abs_residual_at_T": float(r.mean()),
            "std_error": float(r.std(ddof=1) / math.sqrt(r.size)) if r.size > 1 else 0.0,
            "max_residual_max": float(batch.residual_max.max()),
            "mean_m_tau": float(batch.m_tau.mean()),
        }
        if replicates >= 10:
            dts = [built.tg.dt, built.tg.dt / 2, built.tg.dt / 4]
            table = convergence_study(spec, dts, replicates, seed, threads)
            report["slope"] = _table_json(table)
            checks["slope"] = {"value": table.slope, "status": table.status, "pass": table.status != "failed"}

    report["checks"] = checks
    report["pass"] = all(c["pass"] for c in checks.values())
    return _jsonable(report)


def _table_json(table: ConvergenceTable) -> dict:
    return {
        "rows": [
            {"dt": r.dt, "mean_abs_residual": r.mean_abs_residual, "std_error": r.std_error} for r in table.rows
        ],
        "slope": table.slope,
        "status": table.status,
    }


def cmd_verify(args) -> int:
    spec = _apply_dt(load_scenario(args.scenario), args.dt_override)
    seed = resolve_seed(args.seed, spec.seed)
    report = verify_report(spec, args.replicates, seed, args.threads)
    _emit(json.dumps(report, indent=2) + "\n", args.out)
    return EXIT_OK if report["pass"] else EXIT_FAIL


# -- convergence --------------------------------------------------------------


def convergence_csv(table: ConvergenceTable) -> str:
    rows = [
        [r.dt, r.mean_abs_residual, r.std_error, s]
        for r, s in zip(table.rows, table.slopes_so_far())
    ]
    return _csv_text(["dt", "mean_abs_residual", "std_error", "slope_so_far"], rows)


def _parse_dts(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"--dts must be a comma-separated list of numbers, got {text!r}") from None


def cmd_convergence(args) -> int:
    spec = load_scenario(args.scenario)
    seed = resolve_seed(args.seed, spec.seed)
    dts = _parse_dts(args.dts) if args.dts else [spec.tg.dt, spec.tg.dt / 2, spec.tg.dt / 4]
    for dt in dts:
        _apply_dt(spec, dt)  # every level must divide T and respect the stability bound
    if args.replicates < 10:
        raise UsageError("convergence needs --replicates >= 10")
    try:
        table = convergence_study(spec, dts, args.replicates, seed, args.threads)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    _emit(convergence_csv(table), args.out)
    return EXIT_FAIL if table.status == "failed" else EXIT_OK


# -- bounds -------------------------------------------------------------------

BOUNDS_HEADER = ["scenario", "lhs_est", "lhs_std_error"] + [
    f"rhs_{k}" for k in bounds.SUP_COMPONENTS
] + ["ratio", "implied_N"]


def bounds_csv(campaign: bounds.Campaign) -> str:
    rows = []
    for r in campaign.reports:
        rows.append(
            [r.scenario, r.lhs_est.mean, r.lhs_est.std_error]
            + [float(r.rhs_components[k]) for k in bounds.SUP_COMPONENTS]
            + [r.ratio, r.implied_N]
        )
    rows.append(["max", None, None] + [None] * len(bounds.SUP_COMPONENTS) + [None, campaign.implied_N])
    return _csv_text(BOUNDS_HEADER, rows)


def cmd_bounds(args) -> int:
    if args.replicates < 50:
        raise UsageError("bounds needs --replicates >= 50")
    if args.scenario:
        specs = [load_scenario(s) for s in args.scenario]
    else:
        if args.count < 1:
            raise UsageError("--count must be >= 1")
        specs = randomized_catalog(args.count, args.master_seed)
    seed = resolve_seed(args.seed, 0)
    campaign = bounds.sup_estimate_campaign(specs, args.replicates, seed, args.n_cal, args.threads)
    _emit(bounds_csv(campaign), args.out)
    return EXIT_FAIL if campaign.violated else EXIT_OK


# -- properties ---------------------------------------------------------------


def cmd_properties(args) -> int:
    if args.draws < 100:
        raise UsageError(f"--draws must be >= 100, got {args.draws}")
    seed = resolve_seed(args.seed, 0)
    rows = bounds.property_suite(args.draws, seed)
    failures = [r for r in rows if not r.holds]
    by_check: dict[str, list[int]] = {}
    for r in rows:
        tally = by_check.setdefault(r.check, [0, 0])
        tally[0] += 1
        tally[1] += not r.holds
    out = [["check", "rows", "failures"]] + [[k, v[0], v[1]] for k, v in by_check.items()]
    text = _csv_text(out[0], out[1:])
    _emit(text, args.out)
    for r in failures:
        print(
            f"FAIL {r.check} draw={r.draw} seed={r.seed} p={_fmt(r.p)} gamma={_fmt(r.gamma)} "
            f"excess={_fmt(r.worst)} {r.detail}".rstrip(),
            file=sys.stderr,
        )
    return EXIT_FAIL if failures else EXIT_OK


# -- entry point --------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="spdelp", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, replicates):
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--replicates", type=int, default=replicates)
        sp.add_argument("--out", default=None, help="output file (default: stdout)")
        sp.add_argument("--threads", type=int, default=None, help="worker threads (default: all cores)")

    v = sub.add_parser("verify", help="Ito formula diagnostics for one scenario (JSON)")
    v.add_argument("scenario", help="scenario file or catalog name")
    v.add_argument("--dt-override", type=float, default=None)
    common(v, 100)
    v.set_defaults(func=cmd_verify)

    c = sub.add_parser("convergence", help="residual vs step size (CSV)")
    c.add_argument("scenario", help="scenario file or catalog name")
    c.add_argument("--dts", default=None, help="comma-separated, strictly decreasing")
    common(c, 100)
    c.set_defaults(func=cmd_convergence)

    b = sub.add_parser("bounds", help="sup-estimate campaign (CSV)")
    b.add_argument("--count", type=int, default=20)
    b.add_argument("--master-seed", type=int, default=2024)
    b.add_argument("--scenario", action="append", default=None, help="run on these scenarios instead")
    b.add_argument("--n-cal", type=float, default=bounds.N_CAL)
    common(b, 100)
    b.set_defaults(func=cmd_bounds)

    q = sub.add_parser("properties", help="randomized inequality and mollifier suite")
    q.add_argument("--draws", type=int, default=1000)
    q.add_argument("--seed", type=int, default=None)
    q.add_argument("--out", default=None)
    q.set_defaults(func=cmd_properties)
    return p


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except (UsageError, ScenarioError, StabilityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BlowUpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
