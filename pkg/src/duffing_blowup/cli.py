"""Command-line entry point: build-chart, construct, verify, stability, sweep.

Every command reads one JSON config (``--config``), applies ``--set
section.key=value`` overrides, validates the result before doing any work,
writes its outputs plus ``manifest-<command>.json`` into the output
directory and exits 0 (ok), 2 (infeasible), 3 (numerical) or 4 (config).
"""
import argparse
import json
import logging
import math
import os
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict

import numpy as np

from . import _accel, config as _config
from .action_angle import ActionAngleChart, estimate_bounds, verify_chart_lemmas
from .errors import (EXIT_CONFIG, ConfigError, DuffingError, InfeasibleError,
                     InsufficientData, InvariantViolation, LemmaViolation)
from .escape_analysis import (estimate_blowup_time, fit_loglog, run_single_cycle, save_json,
                              verify_cycle_scaling, verify_quarter_lemmas, verify_sigma_prefactor,
                              verify_stage_growth, write_fits_csv)
from .forcing_builder import ConstructionLog, build_profile, validate_profile
from .origin_stability import exit_time, find_subharmonic, stability_scan
from .potential import check_growth_bounds
from .profile import ForcingProfile

log = logging.getLogger("duffing_blowup")


def _versions():
    import numba
    import scipy
    try:
        from importlib.metadata import version
        pkg = version("artifact")
    except Exception:
        pkg = "unknown"
    return {"python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__, "artifact": pkg,
            "backend": _accel.backend_name()}


def _out(cfg, name):
    return os.path.join(cfg.output_dir, name)


def _write_manifest(cfg, command, started, outputs, status):
    man = {"command": command, "config": cfg.to_dict(), "versions": _versions(),
           "wall_time_s": time.time() - started, "exit_code": status, "outputs": sorted(outputs)}
    save_json(_out(cfg, f"manifest-{command}.json"), man)


def _chart(cfg, model):
    c = cfg.chart
    return ActionAngleChart(model, tuple(c.I_range), c.nodes_per_decade, c.I_chart_min)


# commands: each returns (exit code, list of output file names)

def cmd_build_chart(cfg, model, args):
    chart = _chart(cfg, model)
    outs = ["chart.npz", "chart_lemmas.json", "chart_lemmas.csv", "growth_bounds.json",
            "chart_bounds.json"]
    chart.save(_out(cfg, "chart.npz"))
    c = cfg.chart
    rep = verify_chart_lemmas(chart, np.logspace(math.log10(c.h_min), math.log10(c.h_max),
                                                 c.h_count),
                              c.slope_tolerance, _out(cfg, "chart_lemmas.csv"), strict=False)
    save_json(_out(cfg, "chart_lemmas.json"), rep.to_dict())
    save_json(_out(cfg, "growth_bounds.json"), check_growth_bounds(model).to_dict())
    top = min(chart.I_max, cfg.integrator.I_cap)
    I_grid = np.geomspace(c.I_chart_min, top, 6)
    bounds = estimate_bounds(chart, I_grid, np.linspace(0, 1, 33)[:-1])
    save_json(_out(cfg, "chart_bounds.json"), bounds.to_dict())
    for f in rep.fits:
        print(f"{f.name:10s} slope {f.slope:+.4f} expected {f.expected:+.4f} "
              f"({'ok' if f.passed else 'FAIL'})")
    print(f"|I''| constant {rep.second_derivative_constant:.4g}")
    if not rep.passed:
        raise LemmaViolation("chart power laws out of tolerance", rep)
    return 0, outs


def cmd_construct(cfg, model, args):
    chart = _chart(cfg, model)
    outs = ["profile.json", "cycles.csv", "stages.csv", "construction.json"]
    try:
        profile, clog = build_profile(model.params, cfg.schedule, chart, cfg.integrator)
    except InfeasibleError as exc:
        if exc.log is not None:
            exc.log.write_cycles_csv(_out(cfg, "cycles.csv"))
            exc.log.write_stages_csv(_out(cfg, "stages.csv"))
        raise
    profile.save(_out(cfg, "profile.json"))
    clog.write_cycles_csv(_out(cfg, "cycles.csv"))
    clog.write_stages_csv(_out(cfg, "stages.csv"))
    report = validate_profile(profile, cfg.schedule.tau, clog.stages)
    acts = clog.actions()
    sigma0 = cfg.schedule.sigma_override == 0
    monotone = bool(np.all(np.diff(acts) > 0))
    summary = clog.summary()
    summary.update(net_gain=float(acts[-1] - acts[0]), monotone=monotone,
                   mean_forcing=profile.integral(), segments=profile.n_segments,
                   validation=report.to_dict())
    save_json(_out(cfg, "construction.json"), summary)
    print(f"{len(clog.cycles)} cycles in {len(clog.stages)} stages; {clog.stop_reason}")
    print(f"I: {acts[0]:.6g} -> {acts[-1]:.6g} at t={clog.times()[-1]:.12g}; "
          f"integral of p = {profile.integral():.12g}")
    if not report.ok:
        raise InvariantViolation(f"profile failed validation: {report.violations[:3]}")
    if not (monotone or sigma0):
        raise InvariantViolation("action did not increase monotonically over the cycles")
    return 0, outs


def _read_log(cfg, args):
    d = args.log_dir or cfg.output_dir
    cyc, stg = os.path.join(d, "cycles.csv"), os.path.join(d, "stages.csv")
    for p in (cyc, stg):
        if not os.path.exists(p):
            raise ConfigError(f"construction log {p} not found; run construct first")
    I_0 = cfg.schedule.I_0 if args.I_0 is None else args.I_0
    clog = ConstructionLog.read_csv(cyc, stg, I_0=I_0)
    if not clog.cycles or not clog.stages:
        raise InsufficientData(f"construction log in {d} is empty")
    return clog


def cmd_verify(cfg, model, args):
    v = cfg.verify
    clog = _read_log(cfg, args)
    stage = verify_stage_growth(clog, cfg.schedule, model.params)
    blow = estimate_blowup_time(clog, cfg.schedule)
    out = {"stage_growth": stage.to_dict(), "blowup": blow.to_dict()}
    outs = ["verify.json"]
    failed = []
    if not stage.passed:
        failed.append("stage growth")
    if not (clog.escaped or blow.bound < 1):
        failed.append("escape bound")
    print(f"stage growth: c={stage.c_growth:.4g} c'={stage.c_time:.4g} "
          f"log c_floor={stage.log_c_floor:.4g} ({'ok' if stage.passed else 'FAIL'})")
    print(f"T_inf ~ {blow.T_inf:.6f}, bound c'/(tau'-1) = {blow.bound:.4f}, escaped={clog.escaped}")
    if v.quarters:
        chart = _chart(cfg, model)
        grid = [float(g) for g in v.I0_grid]
        recs = [run_single_cycle(chart, g, v.sigma, cfg.schedule.eta, cfg.integrator)
                for g in grid]
        fits = verify_quarter_lemmas(model.params, chart, v.sigma, grid, cfg.integrator,
                                     v.tolerance, records=recs)
        fits += verify_cycle_scaling(model.params, chart, v.sigma, grid, cfg.integrator,
                                     v.time_tolerance, v.tolerance, records=recs)
        sig = verify_sigma_prefactor(chart, v.sigma_check_I0, v.sigma, cfg.schedule.eta,
                                     cfg.integrator)
        write_fits_csv(_out(cfg, "fits.csv"), fits)
        outs.append("fits.csv")
        out["fits"] = [f.to_dict() for f in fits]
        out["sigma_prefactor"] = [s.to_dict() for s in sig]
        for f in fits:
            print(f"{f.name:20s} slope {f.exponent_est:+.4f} expected {f.expected:+.4f} "
                  f"r2 {f.r_squared:.5f} ({'ok' if f.passed else 'FAIL'})")
            if not f.passed:
                failed.append(f.name)
        for s in sig:
            print(f"loss ratio q{s.quarter}: {s.ratio:.4f} expected {s.expected:.4f} "
                  f"({'ok' if s.passed else 'FAIL'})")
            if not s.passed:
                failed.append(f"sigma prefactor q{s.quarter}")
    out["failed"] = failed
    save_json(_out(cfg, "verify.json"), out)
    if failed:
        raise LemmaViolation(f"failed checks: {failed}", out)
    return 0, outs


def _load_profile(cfg, args):
    if args.constant is not None:
        return ForcingProfile.constant(args.constant)
    path = args.profile or _out(cfg, "profile.json")
    if not os.path.exists(path):
        raise ConfigError(f"profile {path} not found; run construct first or pass --constant")
    try:
        return ForcingProfile.load(path)
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"cannot read profile {path}: {exc}") from None


def cmd_stability(cfg, model, args):
    s = cfg.stability
    profile = _load_profile(cfg, args)
    mean = profile.integral()
    print(f"integral of p over one period = {mean:.12g}")
    rep, orbits = stability_scan(profile, model, s.amplitudes, s.n_iter, factor=s.factor,
                                 keep_orbits=True)
    outs = ["stability.json"]
    for r, orb in zip(rep.amplitudes, orbits):
        name = f"orbit_r{r:.3e}.csv"
        orb.write_csv(_out(cfg, name))
        outs.append(name)
    out = {"mean_forcing": mean, "scan": rep.to_dict()}
    for r, mr, rho in zip(rep.amplitudes, rep.max_radius, rep.rotation):
        print(f"r={r:.3e}: max radius {mr:.4e} ({mr / r:.3f} r), rotation {rho:.6g}")
    if s.negative_control is not None:
        r = max(rep.amplitudes)
        horizon = 20.0 / r ** 2
        te = exit_time(ForcingProfile.constant(s.negative_control), model, r, horizon, s.factor)
        out["negative_control"] = {"p": s.negative_control, "r": r, "horizon": horizon,
                                   "exit_time": te, "escaped": math.isfinite(te)}
        print(f"negative control p={s.negative_control}: exit time {te:.6g} (horizon {horizon:g})")
    if s.subharmonic:
        sub = find_subharmonic(profile, model, q=s.subharmonic_q, amplitudes=s.scan_amplitudes)
        out["subharmonic"] = sub.to_dict()
        print(f"subharmonic: found={sub.found} p/q={sub.p}/{sub.q} residual={sub.residual:.3g} "
              f"minimal={sub.minimal_period}")
    save_json(_out(cfg, "stability.json"), out)
    if not rep.bounded:
        raise InvariantViolation("an orbit left its stability radius under positive mean forcing")
    if "negative_control" in out and not out["negative_control"]["escaped"]:
        raise InvariantViolation("negative control did not escape within its horizon")
    return 0, outs


def _sweep_point(job):
    cfg_dict, I0, sigma = job
    cfg = _config.from_dict(cfg_dict)
    model = cfg.potential.build()
    chart = _chart(cfg, model)
    rec = run_single_cycle(chart, I0, sigma, cfg.schedule.eta, cfg.integrator)
    return {"I_0": I0, "sigma": sigma, "duration": rec.t_end - rec.t_start, "gain": rec.gain,
            "record": asdict(rec)}


def cmd_sweep(cfg, model, args):
    sigmas = args.sigmas or [cfg.verify.sigma]
    grid = [float(g) for g in cfg.verify.I0_grid]
    jobs = [(cfg.to_dict(), g, float(s)) for s in sigmas for g in grid]
    pdir = _out(cfg, "sweep")
    os.makedirs(pdir, exist_ok=True)
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(cfg.workers) as ex:
            results = list(ex.map(_sweep_point, jobs))
    else:
        results = [_sweep_point(j) for j in jobs]
    outs = ["sweep.json"]
    for r in results:
        name = f"point_sigma{r['sigma']:.6g}_I0{r['I_0']:.6e}.json"
        save_json(os.path.join(pdir, name), r)
        outs.append(os.path.join("sweep", name))
    # merge from the per-point files in sorted key order
    merged = []
    for name in sorted(os.listdir(pdir)):
        with open(os.path.join(pdir, name)) as fh:
            merged.append(json.load(fh))
    merged.sort(key=lambda r: (r["sigma"], r["I_0"]))
    fits = []
    for s in sorted({r["sigma"] for r in merged}):
        pts = [r for r in merged if r["sigma"] == s]
        if s > 0 and len(pts) >= 3:
            x = [r["I_0"] for r in pts]
            fits.append(fit_loglog(f"cycle duration sigma={s:g}", x, [r["duration"] for r in pts],
                                   -model.params.alpha, cfg.verify.time_tolerance).to_dict())
            fits.append(fit_loglog(f"cycle gain sigma={s:g}", x, [r["gain"] for r in pts],
                                   model.params.gamma, cfg.verify.tolerance).to_dict())
    save_json(_out(cfg, "sweep.json"), {"points": merged, "fits": fits})
    for r in merged:
        print(f"sigma={r['sigma']:g} I0={r['I_0']:.3e}: duration {r['duration']:.6g} "
              f"gain {r['gain']:.6g}")
    for f in fits:
        print(f"{f['name']}: slope {f['exponent_est']:+.4f} ({'ok' if f['passed'] else 'FAIL'})")
    return 0, outs


COMMANDS = {"build-chart": cmd_build_chart, "construct": cmd_construct, "verify": cmd_verify,
            "stability": cmd_stability, "sweep": cmd_sweep}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="SECTION.KEY=VALUE", help="override a config field (repeatable)")
    common.add_argument("--output-dir", help=f"output directory (beats ${_config.OUTPUT_ENV})")
    common.add_argument("-v", "--verbose", action="store_true")
    p = argparse.ArgumentParser(prog="duffing-blowup", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("build-chart", parents=[common], help="tabulate the chart and fit its power laws")
    sub.add_parser("construct", parents=[common], help="build and validate the forcing profile")
    v = sub.add_parser("verify", parents=[common], help="scaling checks on a construction log")
    v.add_argument("--log-dir", help="directory holding cycles.csv and stages.csv")
    v.add_argument("--I0", dest="I_0", type=float, help="initial action of the logged run")
    s = sub.add_parser("stability", parents=[common], help="time-1 map scans near the origin")
    s.add_argument("--profile", help="profile JSON (default: <output-dir>/profile.json)")
    s.add_argument("--constant", type=float, help="use p(t) = CONSTANT instead of a profile")
    w = sub.add_parser("sweep", parents=[common], help="single-cycle sweep over the I_0 grid")
    w.add_argument("--sigmas", type=float, nargs="+", help="jump values (default: verify.sigma)")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    started = time.time()
    cfg = None
    outs = []
    try:
        cfg = _config.load(args.config, args.overrides, args.output_dir)
        model = cfg.validate()
        os.makedirs(cfg.output_dir, exist_ok=True)
        status, outs = COMMANDS[args.command](cfg, model, args)
    except DuffingError as exc:
        status = exc.exit_code
        print(f"error: {exc}", file=sys.stderr)
    except OSError as exc:
        # unwritable output directory, unreadable input
        status = EXIT_CONFIG
        print(f"error: {exc}", file=sys.stderr)
    if cfg is not None and os.path.isdir(cfg.output_dir):
        _write_manifest(cfg, args.command, started, outs, status)
    return status


if __name__ == "__main__":
    sys.exit(main())
