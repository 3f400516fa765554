"""Command line driver.

Four subcommands cover the workflow:

* ``run <config>``        march a scenario; write series/snapshot CSVs and figures
* ``correctors <config>`` solve the profile problems; write constants JSON and profiles
* ``rates <series.csv>``  fit decay laws on a saved record; write verdicts JSON
* ``oracle-check``        cross-check the stepper against the trajectory-map solver

Outputs land in ``--outdir``, else ``$NLSTEFAN_OUTDIR``, else ./nlstefan-out.
Exit codes: 0 success, 1 usage or bad input, 2 numerical failure, 3 a check
or tolerance was violated.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from .config import (
    DEFAULT_TOLERANCES,
    ScenarioConfig,
    config_hash,
    parse_config,
    parse_config_dict,
    serialize_config,
)
from .correctors import principal_eigenvalue, solve_phi, solve_psi
from .diagnostics import (
    conservation_drift,
    fit_exponential,
    fit_power_law,
    halfline_growth,
    limit_moment,
    measured_speed_level,
    monotone_flags,
    refined_speed_constant,
)
from .errors import ConfigError, NumericsError
from .kernels import (
    build_kernel,
    corrector_constants,
    radial_reduce,
    second_moment,
    unit_ball_volume,
)
from .oracle import check_comparison, compare_runs, picard_solve
from .recordio import load_record, save_record
from .state import init_from_config
from .stepper import run

_ENV_OUTDIR = "NLSTEFAN_OUTDIR"


def _jsonable(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _write_json(payload: dict, outdir: str, name: str) -> str:
    os.makedirs(outdir, exist_ok=True)
    path = os.path.join(outdir, name)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, default=_jsonable)
        fh.write("\n")
    return path


def _load_config_file(path: str) -> ScenarioConfig:
    with open(path) as fh:
        return parse_config(fh.read())


def _figures_wanted(args) -> bool:
    return not getattr(args, "no_figures", False)


# --------------------------------------------------------------------------
# run


def _cmd_run(args, outdir: str) -> int:
    cfg = _load_config_file(args.config)
    record = run(cfg)
    paths = save_record(record, outdir)
    with open(os.path.join(outdir, "config.yaml"), "w") as fh:
        fh.write(serialize_config(cfg))
    written = [paths["series"], *paths["snapshots"]]
    if _figures_wanted(args):
        from .plotting import plot_series, plot_snapshots

        written.append(plot_series(record, outdir))
        snap_fig = plot_snapshots(record, outdir)
        if snap_fig:
            written.append(snap_fig)
    final = {k: float(np.asarray(v)[-1]) for k, v in record.series.items()}
    state = ", ".join(f"{k}={final[k]:.6g}" for k in sorted(final) if k in
                      ("s", "s_minus", "s_plus", "R", "mass"))
    print(f"{cfg.variant}: t_end={record.t_end:g}, {state}")
    for path in written:
        print(f"wrote {path}")
    return 0


# --------------------------------------------------------------------------
# correctors


def _profile_csv(prof, outdir: str, name: str, meta: dict) -> str:
    path = os.path.join(outdir, name)
    with open(path, "w", newline="") as fh:
        for key, val in meta.items():
            fh.write(f"# {key}={val}\n")
        writer = csv.writer(fh)
        writer.writerow(["x", "value"])
        for x, v in zip(prof.xs, prof.values):
            writer.writerow(["%.17g" % x, "%.17g" % v])
    return path


def _cmd_correctors(args, outdir: str) -> int:
    cfg = _load_config_file(args.config)
    kernel = build_kernel(cfg.kernel.kind, cfg.kernel.d, cfg.grid.h, table=cfg.kernel.table)
    extent = cfg.correctors.extent_factor * kernel.d
    phi = solve_phi(kernel, extent=extent, tol=cfg.correctors.tol)
    psi = solve_psi(kernel, extent=extent, tol=cfg.correctors.tol)
    q = second_moment(kernel)

    # C0 integrates up to the boundary position after unit time; only the
    # half-line flow defines that, elsewhere s1 >= d already saturates C0 = C1
    if cfg.variant == "halfline":
        probe = replace(cfg, time=replace(cfg.time, t_end=1.0, snapshot_times=()))
        s1 = float(np.asarray(run(probe).series["s"])[-1])
    else:
        s1 = kernel.d
    c0, c1 = corrector_constants(kernel, psi, s1)

    lam = None
    mode = None
    if cfg.variant == "linecs":
        _, _, meta = init_from_config(cfg, kernel)
        lam, mode = principal_eigenvalue(kernel, (0.0, meta["l_inf"]))
    elif cfg.variant == "radial":
        fld, bnd, meta = init_from_config(cfg, kernel)
        matrix = radial_reduce(kernel, bnd.N, fld.grid.nodes)
        lam, mode = principal_eigenvalue(matrix, meta["R_inf"])

    payload = {
        "version": __version__,
        "config_hash": config_hash(cfg),
        "kernel": {"kind": cfg.kernel.kind, "d": kernel.d, "h": kernel.h},
        "q": q,
        "alpha": psi.min_value,
        "C0": c0,
        "C1": c1,
        "s1": s1,
        "lambda": lam,
        "phi": {
            "offset": phi.offset,
            "far_slope": phi.far_slope,
            "affine_bound": phi.affine_bound,
            "residual": phi.residual,
            "extent": phi.extent,
        },
        "psi": {
            "offset": psi.offset,
            "far_slope": psi.far_slope,
            "affine_bound": psi.affine_bound,
            "residual": psi.residual,
            "extent": psi.extent,
        },
    }
    os.makedirs(outdir, exist_ok=True)
    written = [_write_json(payload, outdir, "correctors.json")]
    csv_meta = {"version": __version__, "config_hash": payload["config_hash"]}
    written.append(_profile_csv(phi, outdir, "corrector_phi.csv", csv_meta))
    written.append(_profile_csv(psi, outdir, "corrector_psi.csv", csv_meta))
    if _figures_wanted(args):
        from .plotting import plot_correctors

        written.append(plot_correctors(phi, psi, outdir, mode=mode))
    lam_text = "n/a" if lam is None else f"{lam:.6g}"
    print(
        f"q={q:.6g} alpha={psi.min_value:.6g} C0={c0:.6g} C1={c1:.6g} lambda={lam_text}"
    )
    for path in written:
        print(f"wrote {path}")
    return 0


# --------------------------------------------------------------------------
# rates


def _fit_entry(fit, kind: str) -> dict:
    return {
        "kind": kind,
        "exponent": fit.exponent,
        "prefactor": fit.prefactor,
        "window": list(fit.window),
        "rms_residual": fit.rms_residual,
    }


def _band_check(value: float, band) -> dict:
    lo, hi = band
    return {"value": value, "band": [lo, hi], "passed": bool(lo <= value <= hi)}


def _bound_check(value: float, bound: float) -> dict:
    return {"value": value, "bound": bound, "passed": bool(value <= bound)}


def _rebuild_kernel(record, cfg):
    """Kernel for prediction checks, from the config or the record header."""
    if cfg is not None:
        return build_kernel(cfg.kernel.kind, cfg.kernel.d, cfg.grid.h, table=cfg.kernel.table)
    kind = record.meta.get("kernel_kind")
    if kind in ("triangle", "uniform"):
        return build_kernel(kind, float(record.meta["d"]), float(record.meta["h"]))
    return None


def _cmd_rates(args, outdir: str) -> int:
    record = load_record(args.record)
    cfg = _load_config_file(args.config) if args.config else None
    tolerances = dict(DEFAULT_TOLERANCES)
    if cfg is not None:
        tolerances.update(cfg.diagnostics.tolerances)
    frac = cfg.diagnostics.fit_window if cfg is not None else (0.25, 1.0)
    t = np.asarray(record.times, dtype=float)
    window = (frac[0] * float(t[-1]), frac[1] * float(t[-1]))
    kernel = _rebuild_kernel(record, cfg)

    fits: dict = {}
    checks: dict = {}
    power_plot: dict = {}
    exp_plot: dict = {}
    variant = record.variant

    if variant != "halfline":
        checks["conservation"] = _bound_check(
            conservation_drift(record), tolerances["conservation"]
        )
    for name, flag in monotone_flags(record).items():
        checks[name] = {"passed": flag}

    if variant == "line1fb":
        sup = np.asarray(record.series["sup_u"], dtype=float)
        mass = np.asarray(record.series["mass"], dtype=float)
        s = np.asarray(record.series["s"], dtype=float)
        s_inf = float(record.meta.get("s_inf", s[-1] + mass[-1]))
        gap = np.maximum(s_inf - s, 0.0)
        sup_fit = fit_power_law(t, sup, window)
        mass_fit = fit_power_law(t, mass, window)
        gap_fit = fit_power_law(t, gap, window)
        fits["sup_u"] = _fit_entry(sup_fit, "power")
        fits["mass"] = _fit_entry(mass_fit, "power")
        fits["boundary_gap"] = _fit_entry(gap_fit, "power")
        checks["sup_exponent"] = _band_check(sup_fit.exponent, tolerances["sup_exponent"])
        checks["mass_exponent"] = _band_check(mass_fit.exponent, tolerances["mass_exponent"])
        checks["gap_exponent"] = _band_check(gap_fit.exponent, tolerances["gap_exponent"])
        power_plot = {
            "sup_u": (sup, sup_fit),
            "mass": (mass, mass_fit),
            "s_inf - s": (gap, gap_fit),
        }
        if kernel is not None and "M_phi" in record.series:
            phi = solve_phi(kernel)
            q = float(record.meta.get("q", second_moment(kernel)))
            moment = limit_moment(record, phi, window=window)
            speed_pred = refined_speed_constant(kernel, phi, q, moment.value)
            speed_meas = measured_speed_level(record, window)
            fits["moment_limit"] = {
                "value": moment.value,
                "last": moment.last,
                "tail_bound": moment.tail_bound,
            }
            fits["speed"] = {"predicted": speed_pred, "measured": speed_meas}
            rel = abs(speed_pred - speed_meas) / abs(speed_pred)
            checks["speed_rel"] = _bound_check(rel, tolerances["speed_rel"])

    elif variant == "linecs":
        sup = np.asarray(record.series["sup_u"], dtype=float)
        fit = fit_exponential(t, sup, window)
        fits["sup_u"] = _fit_entry(fit, "exponential")
        exp_plot["sup_u"] = (sup, fit)
        if kernel is not None:
            mass = np.asarray(record.series["mass"], dtype=float)
            length = np.asarray(record.series["s_plus"], dtype=float) - np.asarray(
                record.series["s_minus"], dtype=float
            )
            l_inf = float(record.meta.get("l_inf", length[-1] + mass[-1]))
            lam, _ = principal_eigenvalue(kernel, (0.0, l_inf))
            fits["eigenvalue"] = {"predicted": lam, "measured": fit.exponent}
            rel = abs(fit.exponent - lam) / lam
            checks["eigenvalue_rel"] = _bound_check(rel, tolerances["eigenvalue_rel"])

    elif variant == "halfline":
        A = float(record.meta.get("A", 0.0))
        s = np.asarray(record.series["s"], dtype=float)
        mass = np.asarray(record.series["mass"], dtype=float)
        if A == 0.0:
            sup = np.asarray(record.series["sup_u"], dtype=float)
            in_window = sup[(t >= window[0]) & (t <= window[1])]
            if in_window.size and np.all(in_window > 0):
                fit = fit_exponential(t, sup, window)
                fits["sup_u"] = _fit_entry(fit, "exponential")
                exp_plot["sup_u"] = (sup, fit)
            if "M_psi" in record.series and "alpha" in record.meta:
                bound = (
                    s[0]
                    + float(record.series["M_psi"][0]) / float(record.meta["alpha"])
                    + float(record.meta["h"])
                )
                checks["localization"] = _bound_check(float(s[-1]), bound)
        else:
            d = float(record.meta["d"])
            dt_rec = np.diff(t)
            growth_bound = A * d * dt_rec + 1e-10
            worst = float(np.max(np.diff(mass) - growth_bound))
            checks["mass_growth"] = _bound_check(worst, 0.0)
            if kernel is not None:
                psi = solve_psi(kernel)
                _, c1 = corrector_constants(kernel, psi, kernel.d)
                growth = halfline_growth(record, c1, A, window=window)
                fits["growth"] = {
                    "F_infinity": growth.F_infinity,
                    "c_star_pred": growth.c_star_pred,
                    "c_star_meas": growth.c_star_meas,
                    "c_star_late": growth.c_star_late,
                    "F_worst_dip": growth.F_worst_dip,
                    "clock_worst_dip": growth.clock_worst_dip,
                }
                rel = abs(growth.c_star_pred - growth.c_star_meas) / growth.c_star_pred
                checks["cstar_rel"] = _bound_check(rel, tolerances["cstar_rel"])
                if float(record.meta.get("mass0", 1.0)) <= 1e-14:
                    checks["growth_clock_monotone"] = _bound_check(
                        growth.clock_worst_dip, 1e-10
                    )

    elif variant == "radial":
        dim = int(record.meta["N"])
        omega = unit_ball_volume(dim)
        R = np.asarray(record.series["R"], dtype=float)
        mass = np.asarray(record.series["mass"], dtype=float)
        r_inf = float(record.meta.get("R_inf", ((omega * R[-1] ** dim + mass[-1]) / omega) ** (1.0 / dim)))
        gap = abs(float(R[-1]) - r_inf)
        bound = float(mass[-1]) / (omega * dim * float(R[-1]) ** (dim - 1)) + 1e-6
        checks["limit_radius"] = _bound_check(gap, bound)

    passed = all(entry["passed"] for entry in checks.values())
    payload = {
        "version": __version__,
        "config_hash": record.meta.get("config_hash", ""),
        "variant": variant,
        "window": list(window),
        "fits": fits,
        "checks": checks,
        "passed": passed,
    }
    written = [_write_json(payload, outdir, "rates.json")]
    if _figures_wanted(args) and (power_plot or exp_plot):
        from .plotting import plot_rates

        fig = plot_rates(record, power_plot, exp_plot, outdir)
        if fig:
            written.append(fig)
    for name in sorted(checks):
        entry = checks[name]
        detail = ""
        if "value" in entry:
            limit = entry.get("bound", entry.get("band"))
            detail = f" value={entry['value']:.6g} limit={limit}"
        print(f"{'pass' if entry['passed'] else 'FAIL'} {name}{detail}")
    for path in written:
        print(f"wrote {path}")
    return 0 if passed else 3


# --------------------------------------------------------------------------
# oracle-check


def desk_suite() -> list[tuple[str, ScenarioConfig]]:
    """Small fixed scenarios, one per variant, sized for a fast cross-check.

    Grids are pinned to at most 64 nodes, so the far tails are truncated;
    both solvers apply the identical truncated operator, which is exactly
    what a solver-against-solver comparison needs.
    """
    time = {"t_end": 2.0, "dt": 0.02, "record_every": 0.02, "snapshot_times": [2.0]}
    kernel = {"kind": "triangle", "d": 1.0}
    raw = [
        (
            "line1fb",
            {
                "variant": "line1fb",
                "kernel": kernel,
                "grid": {"h": 0.05, "x_min": -1.45, "x_max": 1.7},
                "time": time,
                "initial": {"kind": "bump", "amplitude": 1.0, "center": 0.0,
                            "width": 0.5, "s0": 0.5},
            },
        ),
        (
            "linecs",
            {
                "variant": "linecs",
                "kernel": kernel,
                "grid": {"h": 0.05, "x_min": -1.55, "x_max": 1.55},
                "time": time,
                "initial": {"kind": "bump", "amplitude": 0.5, "center": 0.0,
                            "width": 0.35, "s0_minus": -0.35, "s0_plus": 0.35},
            },
        ),
        (
            "halfline",
            {
                "variant": "halfline",
                "kernel": kernel,
                "grid": {"h": 0.05, "x_max": 3.15},
                "time": time,
                "initial": {"kind": "trivial", "s0": 0.5},
                "halfline": {"A": 0.5},
            },
        ),
        (
            "radial",
            {
                "variant": "radial",
                "kernel": kernel,
                "grid": {"h": 0.05, "x_max": 3.15},
                "time": time,
                "initial": {"kind": "bump", "amplitude": 1.0, "center": 0.0,
                            "width": 0.5, "R0": 1.0},
                "radial": {"N": 2},
            },
        ),
    ]
    return [(name, parse_config_dict(d)) for name, d in raw]


def _ordered_partner(cfg: ScenarioConfig) -> ScenarioConfig:
    """A strictly smaller scenario for the order-preservation check."""
    if cfg.variant == "halfline" and cfg.initial.kind == "trivial":
        return replace(cfg, halfline=replace(cfg.halfline, A=0.4 * cfg.halfline.A))
    return replace(cfg, initial=replace(cfg.initial, amplitude=0.6 * cfg.initial.amplitude))


def _cmd_oracle_check(args, outdir: str) -> int:
    if args.suite is None:
        suite = desk_suite()
    else:
        names = sorted(
            n for n in os.listdir(args.suite) if n.endswith((".yaml", ".yml"))
        )
        if not names:
            raise ConfigError(f"{args.suite}: no .yaml scenario files")
        suite = [
            (os.path.splitext(n)[0], _load_config_file(os.path.join(args.suite, n)))
            for n in names
        ]

    results = []
    all_ok = True
    for name, cfg in suite:
        sol = picard_solve(cfg)
        record = run(cfg)
        disc = compare_runs(sol.record, record)
        bound = 10.0 * (cfg.dt + cfg.grid.h)
        ratio = max(sol.contraction_ratios, default=0.0)
        report = check_comparison(_ordered_partner(cfg), cfg)
        ok = disc.boundary_gap <= bound and ratio <= 0.5 and report.ordered
        all_ok &= ok
        results.append(
            {
                "scenario": name,
                "config_hash": config_hash(cfg),
                "boundary_gap": disc.boundary_gap,
                "l1_gap": disc.l1_gap,
                "gap_bound": bound,
                "contraction_ratio": ratio,
                "sweeps": sol.sweeps,
                "ordered": report.ordered,
                "order_violation": max(
                    report.worst_field_violation, report.worst_boundary_violation
                ),
                "passed": ok,
            }
        )
        print(
            f"{'pass' if ok else 'FAIL'} {name}: gap={disc.boundary_gap:.3e} "
            f"(bound {bound:g}) ratio={ratio:.3f} ordered={report.ordered}"
        )
    payload = {"version": __version__, "results": results, "passed": bool(all_ok)}
    print(f"wrote {_write_json(payload, outdir, 'oracle_check.json')}")
    return 0 if all_ok else 3


# --------------------------------------------------------------------------
# entry point


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nlstefan",
        description="Nonlocal-diffusion Stefan problems: solver and diagnostics",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--outdir",
        help=f"output directory (default ${_ENV_OUTDIR} or ./nlstefan-out)",
    )
    common.add_argument(
        "--no-figures", action="store_true", help="skip rendering PNG figures"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", parents=[common], help="march a scenario to t_end")
    p_run.add_argument("config", help="scenario YAML file")
    p_run.set_defaults(func=_cmd_run)

    p_cor = sub.add_parser(
        "correctors", parents=[common], help="solve profile problems and constants"
    )
    p_cor.add_argument("config", help="scenario YAML file")
    p_cor.set_defaults(func=_cmd_correctors)

    p_rat = sub.add_parser(
        "rates", parents=[common], help="fit decay laws on a saved series"
    )
    p_rat.add_argument("record", help="series CSV written by the run command")
    p_rat.add_argument("--config", help="scenario YAML for tolerances and kernel")
    p_rat.set_defaults(func=_cmd_rates)

    p_orc = sub.add_parser(
        "oracle-check", parents=[common], help="stepper vs trajectory-map cross-check"
    )
    p_orc.add_argument(
        "--suite", help="directory of scenario YAMLs (default: built-in desk suite)"
    )
    p_orc.set_defaults(func=_cmd_oracle_check)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    outdir = args.outdir or os.environ.get(_ENV_OUTDIR) or "nlstefan-out"
    try:
        return args.func(args, outdir)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except IsADirectoryError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericsError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
