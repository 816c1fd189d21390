"""Command-line runner.

    smfdroplet run --config FILE [--override key=value]...
    smfdroplet predict --config FILE
    smfdroplet convergence --config FILE

Exit codes: 0 ok, 2 configuration error, 3 physics-validity abort,
4 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import analysis
from .config import RunConfig, fmt_float
from .dynamics import convergence_probe, evolve, relax
from .errors import (BoundaryViolation, ConfigError, ConvergenceError, HeatingBudgetExceeded,
                     NoDropletSolution, SimulationError)
from .io import (OutputLock, SnapshotWriter, emit_plot_data, write_report, write_snapshot,
                 write_timeseries)
from .sensing import sense
from .stability import bracket_zero_crossing, threshold_scan

log = logging.getLogger("smfdroplet")

FORMULAS = {
    "derived.chi0": "b0/(2*delta)",
    "derived.p_th": "2*omega_r_bar/(b0*mirror_R)",
    "derived.p0_over_p_th": "p0/p_th",
    "derived.predicted_width": "(p0/p_th)^(-1/4), valid for p0 >> p_th",
    "derived.scatter_rate_over_gamma": "(1+mirror_R)*p0/2",
    "derived.t_limit": "2/((1+mirror_R)*p0)",
    "derived.heating_ok": "t_final < t_limit",
    "derived.expected_displacement": "omega_r_bar*a_bar*t_final^2",
    "derived.expected_gradient": "omega_r_bar*a_bar/(2*pi), slope of x/Lambda_c vs t^2",
    "derived.q_c": "sqrt(pi*k0/(2*d_mirror)), k0 = 2*pi/lambda0 [1/m]",
    "derived.Lambda_c": "2*pi/q_c [m]",
    "derived.omega_r_bar_from_anchors": "hbar*q_c^2/(2*mass*gamma)",
    "derived.a_unit": "hbar*q_c*gamma/mass [m/s^2 per unit a_bar]",
    "formula.a_bar_hat": "c2/omega_r_bar for x(t) = c0 + c1*t + c2*t^2",
    "formula.gradient": "c2/(2*pi)",
    "formula.a_bar_min": "dx/(omega_r_bar*t_max^2)",
}


def derived_quantities(config: RunConfig) -> dict:
    params = config.params()
    t_final = config["evolution.t_final"]
    out = {"derived.chi0": params.chi0}
    p_th = analysis.pump_threshold(params)
    out["derived.p_th"] = p_th
    out["derived.p0_over_p_th"] = params.p0 / p_th if math.isfinite(p_th) else 0.0
    if params.p0 > p_th:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            out["derived.predicted_width"] = analysis.predicted_width(params)
    rate, t_limit, ok = analysis.heating_budget(params, t_final)
    out["derived.scatter_rate_over_gamma"] = rate
    out["derived.t_limit"] = t_limit
    out["derived.heating_ok"] = ok
    out["derived.expected_displacement"] = params.omega_r_bar * params.a_bar * t_final**2
    out["derived.expected_gradient"] = params.omega_r_bar * params.a_bar / (2 * math.pi)
    anchors = config.anchors()
    if anchors is not None:
        q_c, lam = analysis.critical_wavenumber(anchors)
        out["derived.q_c"] = q_c
        out["derived.Lambda_c"] = lam
        out["derived.omega_r_bar_from_anchors"] = anchors.omega_r_bar
        out["derived.a_unit"] = analysis.to_physical(params, anchors, 0.0, 0.0, 1.0)[2]
    return out


def write_manifest(directory: Path, config: RunConfig, extra: dict | None = None) -> Path:
    items = {}
    for key, value in derived_quantities(config).items():
        items[key] = (value, FORMULAS[key])
    for key in ("formula.a_bar_hat", "formula.gradient", "formula.a_bar_min"):
        items[key] = FORMULAS[key]
    for key, value in (extra or {}).items():
        items[key] = value
    issues = config.params().validity_warnings()
    items["validity.warnings"] = issues if issues else "none"
    path = directory / "manifest.txt"
    with open(path, "w") as fh:
        fh.write("# canonical configuration\n")
        fh.write(config.canonical())
    tmp = directory / "manifest.derived"
    write_report(tmp, items, header="derived quantities")
    with open(path, "a") as fh:
        fh.write(tmp.read_text())
    tmp.unlink()
    return path


def _choose_dt(config: RunConfig, psi0, params, grid, extra: dict) -> float:
    if config["evolution.dt"] != "auto":
        return config["evolution.dt"]
    base = config.evolution(1.0)
    prior = float(grid.x_values[np.argmax(psi0.density)])
    dt, history = convergence_probe(psi0, params, grid, base, start_dt=1.0,
                                    rel_tol=config["evolution.probe_tol"], prior_position=prior)
    extra["derived.dt_probe"] = [f"dt={fmt_float(h.dt)}: change={fmt_float(h.relative_change)}"
                                 for h in history]
    return dt


def _check_heating(config: RunConfig, params) -> None:
    _, t_limit, ok = analysis.heating_budget(params, config["evolution.t_final"])
    if ok:
        return
    msg = (f"evolution.t_final = {config['evolution.t_final']:g} exceeds the heating limit "
           f"t_limit = {t_limit:.4g}")
    if config["evolution.strict_heating"]:
        raise HeatingBudgetExceeded(msg)
    log.warning(msg)


def _prepare_state(config: RunConfig, params, grid, extra: dict, force_relax: bool = False):
    psi = config.seed(grid)
    if config["seed.relax"] or force_relax:
        result = relax(psi, params, grid, tol=config["ground_state.tol"],
                       dt=config["ground_state.dt"], max_steps=config["ground_state.max_steps"])
        if analysis.density_contrast(result.state.density) < 0.05:
            raise NoDropletSolution("relaxation reached the homogeneous state; no droplet solution")
        if not result.converged:
            raise ConvergenceError("imaginary-time relaxation did not converge",
                                   step=result.steps)
        extra["derived.relaxation_steps"] = result.steps
        psi = result.state
    return psi


def _run_predict(config, out, extra):
    # Everything predict reports is a derived quantity; the manifest carries it.
    d = derived_quantities(config)
    log.info("p_th = %.6g, t_limit = %.6g", d["derived.p_th"], d["derived.t_limit"])


def _run_ground_state(config, out, extra):
    params, grid = config.params(), config.grid()
    psi = _prepare_state(config, params, grid, extra, force_relax=True)
    from .dynamics import optical_snapshot
    snap = optical_snapshot(0, 0.0, psi.psi, params, grid)
    write_snapshot(out / "ground_state.dat", snap, grid)
    fit = analysis.fit_gaussian(psi.density, grid)
    report = {"fit.center": fit.center, "fit.width": fit.width, "fit.amplitude": fit.amplitude,
              "fit.residual": fit.residual}
    if "derived.predicted_width" in (d := derived_quantities(config)):
        report["fit.width_over_predicted"] = fit.width / d["derived.predicted_width"]
    write_report(out / "ground_state.txt", report)
    log.info("ground state width %.6g", fit.width)


def _run_evolve(config, out, extra):
    params, grid = config.params(), config.grid()
    _check_heating(config, params)
    psi = _prepare_state(config, params, grid, extra)
    dt = _choose_dt(config, psi, params, grid, extra)
    extra["derived.dt_used"] = dt
    writer = SnapshotWriter(out / "snapshots", grid)
    try:
        ev = evolve(psi, params, grid, config.evolution(dt), sink=writer)
    except BoundaryViolation as exc:
        if exc.partial is not None:
            write_timeseries(out / "timeseries.csv", exc.partial)
        raise
    finally:
        writer.close()
    write_timeseries(out / "timeseries.csv", ev.record)
    emit_plot_data(out / "plot", ev.snapshots, grid)


def _run_sense(config, out, extra):
    params, grid = config.params(), config.grid()
    _check_heating(config, params)
    initial = None
    if config["seed.profile"] != "gaussian" or config["seed.relax"]:
        initial = _prepare_state(config, params, grid, extra)
    dt = config["evolution.dt"]
    if dt == "auto":
        if initial is None:
            initial = _prepare_state(config, params, grid, extra,
                                     force_relax=params.p0 > analysis.pump_threshold(params))
        dt = _choose_dt(config, initial, params, grid, extra)
    extra["derived.dt_used"] = dt
    writer = SnapshotWriter(out / "snapshots", grid)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", analysis.ValidityWarning)
            result = sense(params, grid, config.evolution(dt), initial=initial,
                           seed_center=config["seed.center"], seed_width=config["seed.width"],
                           relax_dt=config["ground_state.dt"], relax_tol=config["ground_state.tol"],
                           relax_max_steps=config["ground_state.max_steps"], sink=writer)
    except BoundaryViolation as exc:
        if exc.partial is not None:
            write_timeseries(out / "timeseries.csv", exc.partial)
        raise
    finally:
        writer.close()
    write_timeseries(out / "timeseries.csv", result.record)
    est = result.estimate
    report = {"reliable": result.reliable}
    if est is not None:
        report.update({
            "a_bar_hat": (est.a_bar_hat, FORMULAS["formula.a_bar_hat"]),
            "a_bar_sigma": est.a_bar_sigma,
            "gradient": (est.gradient, FORMULAS["formula.gradient"]),
            "velocity_term": est.velocity_term,
            "offset": est.offset,
            "rms_residual": est.rms_residual,
            "a_bar_min": (est.a_bar_min, FORMULAS["formula.a_bar_min"]),
            "t_max": est.t_max,
            "displacement": est.displacement,
            "n_samples": est.n_samples,
            "baseline_resolved": est.baseline_resolved,
        })
        anchors = config.anchors()
        if anchors is not None:
            report["a_physical"] = (analysis.to_physical(params, anchors, 0, 0, est.a_bar_hat)[2], "m/s^2")
    report["issues"] = result.issues if result.issues else "none"
    write_report(out / "estimate.txt", report, header=f"tracked {result.record.intensity_kind}")
    emit_plot_data(out / "plot", result.evolution.snapshots, grid, result.record, est)
    if est is not None:
        log.info("a_bar_hat = %.6g (reliable: %s)", est.a_bar_hat, result.reliable)
    else:
        log.warning("no acceleration estimate: %s", "; ".join(result.issues))


def _run_threshold_scan(config, out, extra):
    params = config.params()
    p_th = analysis.pump_threshold(params)
    if not math.isfinite(p_th):
        raise ConfigError("params.mirror_R = 0: no instability without feedback, nothing to scan")
    values = [f * p_th for f in config["scan.p0_factors"]]
    scan = threshold_scan(params, values, config.scan_grid(), config["scan.probe_amplitude"],
                          config["scan.dt"], config["scan.t_max"])
    with open(out / "threshold_scan.csv", "w") as fh:
        fh.write("p0,p0_over_p_th,growth_rate\n")
        for s in scan:
            fh.write(f"{fmt_float(s.p0)},{fmt_float(s.p0 / p_th)},{fmt_float(s.growth_rate)}\n")
    try:
        lo, hi = bracket_zero_crossing(scan)
        extra["derived.threshold_bracket"] = f"[{fmt_float(lo / p_th)}, {fmt_float(hi / p_th)}] * p_th"
    except ValueError as exc:
        extra["derived.threshold_bracket"] = str(exc)


MODES = {
    "predict": _run_predict,
    "ground_state": _run_ground_state,
    "evolve": _run_evolve,
    "sense": _run_sense,
    "threshold_scan": _run_threshold_scan,
}


def run(config: RunConfig) -> Path:
    """Execute the configured mode; returns the output directory."""
    out = Path(config["output_dir"])
    with OutputLock(out):
        extra: dict = {}
        status = "ok"
        try:
            MODES[config["mode"]](config, out, extra)
        except SimulationError as exc:
            status = f"{type(exc).__name__}: {exc}"
            raise
        finally:
            extra["status"] = status
            write_manifest(out, config, extra)
    return out


def run_convergence(config: RunConfig) -> Path:
    out = Path(config["output_dir"])
    params, grid = config.params(), config.grid()
    with OutputLock(out):
        extra: dict = {}
        force = config["mode"] == "sense" and params.p0 > analysis.pump_threshold(params)
        psi = _prepare_state(config, params, grid, extra, force_relax=force)
        prior = float(grid.x_values[np.argmax(psi.density)])
        dt, history = convergence_probe(psi, params, grid, config.evolution(1.0), start_dt=1.0,
                                        rel_tol=config["evolution.probe_tol"], prior_position=prior)
        with open(out / "convergence.csv", "w") as fh:
            fh.write("dt,relative_change\n")
            for h in history:
                fh.write(f"{fmt_float(h.dt)},{fmt_float(h.relative_change)}\n")
                print(f"dt = {h.dt:g}: trajectory change {h.relative_change:.3e}")
        print(f"accepted dt = {dt:g}")
        extra["derived.dt_used"] = dt
        write_manifest(out, config, extra)
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="smfdroplet", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("run", "execute the configured mode"),
                        ("predict", "closed-form predictions only, no simulation"),
                        ("convergence", "dt-halving probe of the tracked trajectory")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="key = value configuration file")
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    logging.captureWarnings(True)
    try:
        config = RunConfig.from_file(args.config, args.override)
        if args.command == "predict":
            config = config.replace(mode="predict")
            out = run(config)
            print((out / "manifest.txt").read_text(), end="")
        elif args.command == "convergence":
            run_convergence(config)
        else:
            run(config)
    except SimulationError as exc:
        log.error("%s", exc)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
