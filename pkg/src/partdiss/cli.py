"""Command-line front end: config loading, subcommand dispatch, reports.

Every experiment is driven by one YAML config tree (see README for the
key schema); command-line flags override individual keys.  Each command
that writes artifacts also drops a manifest recording the effective
config hash, seed, library versions, and wall-clock, so a run can be
reproduced bit-for-bit from the manifest alone.
"""

import argparse
import dataclasses
import hashlib
import json
import os
import sys
import time

import numpy as np
import yaml

from . import __version__
from .checker import SamplePlan, StructureReport, run_full_report
from .coords import build_chart, preprocess_linear, transform_system
from .dissipation import CompensatorK
from .fitting import default_fit_times
from .grids import Grid
from .lindecay import (
    SymbolGrid,
    linear_lp_decay_experiment,
    predicted_exponents,
    verify_pointwise_bounds,
)
from .sampling import ball_samples, sphere_samples
from .solver import SimConfig, run
from .systems import normalize_equilibrium, system_from_config
from .traces import DecayTrace, write_snapshot


@dataclasses.dataclass
class RunManifest:
    subcommand: str
    config_hash: str
    seed: int
    versions: dict
    inputs: list
    outputs: list
    wall_clock_s: float

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(dataclasses.asdict(self), fh, sort_keys=True, indent=2)
            fh.write("\n")


def _num(x):
    """Loaded artifacts carry inf/nan as strings; coerce for printing."""
    if isinstance(x, str):
        return float(x)
    return float("nan") if x is None else x


def config_hash(cfg):
    blob = json.dumps(cfg, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()


def load_config(path):
    if path is None:
        return {}
    with open(path) as fh:
        cfg = yaml.safe_load(fh)
    return cfg or {}


def _versions():
    import scipy

    return {
        "partdiss": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": "%d.%d.%d" % sys.version_info[:3],
    }


def _write_manifest(subcommand, cfg, seed, inputs, outputs, t0, path):
    RunManifest(
        subcommand=subcommand,
        config_hash=config_hash(cfg),
        seed=int(seed),
        versions=_versions(),
        inputs=[str(p) for p in inputs],
        outputs=[str(p) for p in outputs],
        wall_clock_s=round(time.time() - t0, 3),
    ).save(path)


def _system_section(cfg, args):
    sec = dict(cfg.get("system", {}))
    if getattr(args, "system", None) is not None:
        sec["system"] = args.system
    else:
        sec.setdefault("system", sec.pop("name", "damped_euler"))
    for key in ("d", "gamma", "damping"):
        val = getattr(args, key, None)
        if val is not None:
            sec[key] = val
    return sec


def build_normalized(cfg, args):
    return normalize_equilibrium(system_from_config(_system_section(cfg, args)))


def build_transformed(cfg, args):
    sys_n = preprocess_linear(build_normalized(cfg, args))
    return transform_system(sys_n, build_chart(sys_n))


def cmd_check(args):
    t0 = time.time()
    cfg = load_config(args.config)
    sec = dict(cfg.get("check", {}))
    plan = SamplePlan(
        radius=args.radius if args.radius is not None else sec.get("radius", 0.1),
        n_states=args.samples if args.samples is not None
        else sec.get("samples", 256),
        seed=args.seed if args.seed is not None else sec.get("seed", 0),
    )
    sys_n = build_normalized(cfg, args)
    report = run_full_report(sys_n, plan)
    for name in sorted(report.conditions):
        res = report.conditions[name]
        extra = "" if not res.get("note") else "  (%s)" % res["note"]
        print("%-4s %-7s residual=%-12.4g threshold=%-10.3g%s"
              % (name, res["verdict"].upper(), _num(res["residual"]),
                 _num(res["threshold"]), extra))
    print("constants:", json.dumps(report.constants, sort_keys=True,
                                   default=float))
    outputs = []
    if args.out:
        report.save(args.out)
        outputs.append(args.out)
        _write_manifest("check", {"system": _system_section(cfg, args),
                                  "check": dataclasses.asdict(plan)},
                        plan.seed, [args.config] if args.config else [],
                        outputs, t0, args.out + ".manifest.json")
    ok = report.all_pass
    print("overall:", "PASS" if ok else "FAIL")
    return 0 if ok else 1


def cmd_coords(args):
    t0 = time.time()
    cfg = load_config(args.config)
    tsys = build_transformed(cfg, args)
    chart = tsys.chart
    n = tsys.n
    rng_states = ball_samples(n, 0.1, args.samples, seed=args.seed or 0)

    j0 = chart.jacobian(np.zeros(n))
    j0_residual = float(np.max(np.abs(j0 - np.eye(n))))

    ut = rng_states.T
    round_trip = float(np.max(np.abs(chart.inverse_batch(
        chart.forward_batch(ut)) - ut)))

    omegas = sphere_samples(tsys.d, 16)
    aj1 = 0.0
    for k in range(min(128, rng_states.shape[0])):
        for om in omegas:
            col = tsys.A_dir(rng_states[k], om)[1:, 0]
            aj1 = max(aj1, float(np.max(np.abs(col))))

    checks = {
        "jacobian_identity_residual": j0_residual,
        "round_trip_residual": round_trip,
        "first_column_coupling_residual": aj1,
        "n_samples": int(rng_states.shape[0]),
        "radius": 0.1,
        "chart_radius": tsys.radius,
        "passed": bool(j0_residual < 1e-9 and round_trip < 1e-10
                       and aj1 < 1e-7),
    }
    print(json.dumps(checks, sort_keys=True, indent=2))
    outputs = []
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(checks, fh, sort_keys=True, indent=2)
            fh.write("\n")
        outputs.append(args.out)
        _write_manifest("coords", {"system": _system_section(cfg, args),
                                   "samples": args.samples},
                        args.seed or 0, [args.config] if args.config else [],
                        outputs, t0, args.out + ".manifest.json")
    return 0 if checks["passed"] else 1


def cmd_lindecay(args):
    t0 = time.time()
    cfg = load_config(args.config)
    sec = dict(cfg.get("lindecay", {}))
    p = args.p if args.p is not None else float(sec.get("p", 1.0))
    alpha = args.alpha if args.alpha is not None else float(sec.get("alpha", 0.0))
    tmin = args.tmin if args.tmin is not None else float(sec.get("tmin", 10.0))
    tmax = args.tmax if args.tmax is not None else float(sec.get("tmax", 100.0))
    component = args.component or sec.get("component", "D")

    tsys = build_transformed(cfg, args)
    sgrid = SymbolGrid.polar(tsys,
                             n_shells=int(sec.get("shells", 256)),
                             n_angles=int(sec.get("angles", 32)))
    times = default_fit_times(tmin, tmax)
    result = linear_lp_decay_experiment(sgrid, p=p, alpha=alpha, times=times)
    bounds = verify_pointwise_bounds(sgrid)
    prediction = predicted_exponents(tsys.d, p, s=alpha, component=component,
                                     regime=sec.get("regime", "Thm1"))

    print("p=%g alpha=%g: fitted C %+0.4f (predicted %+0.4f), "
          "D %+0.4f (predicted %+0.4f)"
          % (p, alpha, result.fit_C.slope, result.predicted_C,
             result.fit_D.slope, result.predicted_D))
    print("pointwise bounds: xi_c=%.4g worst_c_low=%.4g worst_c_high=%.4g %s"
          % (bounds["xi_c"], bounds["worst_c_low"], bounds["worst_c_high"],
             "pass" if bounds["passed"] else "FAIL"))

    outputs = []
    if args.out:
        result.to_csv(args.out)
        outputs.append(args.out)
        sidecar = os.path.splitext(args.out)[0] + ".json"
        payload = {
            "fits": {"C": dataclasses.asdict(result.fit_C),
                     "D": dataclasses.asdict(result.fit_D)},
            "predicted": {"C": result.predicted_C, "D": result.predicted_D},
            "prediction": dataclasses.asdict(prediction),
            "pointwise_bounds": bounds,
            "p": p, "alpha": alpha, "width": result.width,
        }
        with open(sidecar, "w") as fh:
            json.dump(payload, fh, sort_keys=True, indent=2, default=float)
            fh.write("\n")
        outputs.append(sidecar)
        _write_manifest("lindecay",
                        {"system": _system_section(cfg, args),
                         "lindecay": {"p": p, "alpha": alpha, "tmin": tmin,
                                      "tmax": tmax, "component": component}},
                        0, [args.config] if args.config else [],
                        outputs, t0, args.out + ".manifest.json")
    return 0


def cmd_simulate(args):
    t0 = time.time()
    cfg = load_config(args.config)
    gsec = dict(cfg.get("grid", {}))
    ssec = dict(cfg.get("sim", {}))
    if args.N is not None:
        gsec["N"] = args.N
    if args.L is not None:
        gsec["L"] = args.L
    for key in ("t_end", "eps", "width", "group", "mode", "family",
                "snapshot_dt"):
        val = getattr(args, key, None)
        if val is not None:
            ssec[key] = val
    for tup_key in ("norms", "fit_window", "v1_q"):
        if tup_key in ssec:
            val = ssec[tup_key]
            ssec[tup_key] = tuple(tuple(v) if isinstance(v, list) else v
                                  for v in val)

    sys_sec = _system_section(cfg, args)
    tsys = build_transformed(cfg, args)
    grid = Grid(d=tsys.d, N=int(gsec.get("N", 128)),
                L=float(gsec.get("L", 10.0)))
    sim = SimConfig(**ssec)
    trace = run(sim, tsys, grid)

    if "prediction" in cfg:
        pred = predicted_exponents(**cfg["prediction"])
        trace.prediction = dataclasses.asdict(pred)

    out_dir = args.out_dir or cfg.get("output_dir", "out")
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "trace.csv")
    json_path = os.path.join(out_dir, "trace.json")
    snaps = trace.meta.pop("snapshots", None)
    trace.save(csv_path, json_path)
    outputs = [csv_path, json_path]
    if snaps is not None:
        for tau, field in snaps:
            path = os.path.join(out_dir, "snap_t%08.3f.bin" % tau)
            write_snapshot(path, field, tau)
            outputs.append(path)

    effective = {"system": sys_sec, "grid": gsec,
                 "sim": dataclasses.asdict(sim)}
    _write_manifest("simulate", effective, 0,
                    [args.config] if args.config else [], outputs, t0,
                    os.path.join(out_dir, "manifest.json"))

    print("flags:", json.dumps(trace.flags))
    for key in sorted(trace.fits):
        fit = trace.fits[key]
        print("fit %-12s slope %+0.4f  (n=%d)"
              % (key, fit["slope"], fit["n_points"]))
    print("wrote", ", ".join(outputs[:2]))
    return 0


def _fits_from_sidecar(csv_path):
    sidecar = os.path.splitext(csv_path)[0] + ".json"
    if os.path.exists(sidecar):
        with open(sidecar) as fh:
            return json.load(fh)
    return None


def cmd_report(args):
    inputs = {"check": args.check, "compensator": args.compensator,
              "linear": args.linear, "nonlinear": args.nonlinear}
    missing = [p for p in inputs.values() if p and not os.path.exists(p)]
    required_absent = [k for k, p in inputs.items() if not p]
    if missing or required_absent:
        for path in missing:
            print("missing input artifact: %s" % path, file=sys.stderr)
        for key in required_absent:
            print("missing input artifact: --%s not given" % key,
                  file=sys.stderr)
        return 1

    lines = ["# structural dissipation report", ""]

    report = StructureReport.load(args.check)
    lines.append("## condition checks")
    for name in sorted(report.conditions):
        res = report.conditions[name]
        note = res.get("note")
        lines.append("- %-4s %s (residual %.4g, threshold %.3g)%s"
                     % (name, res["verdict"].upper(), _num(res["residual"]),
                        _num(res["threshold"]),
                        "  [%s]" % note if note else ""))
    lines.append("- constants: %s"
                 % json.dumps(report.constants, sort_keys=True, default=float))
    lines.append("")

    comp = CompensatorK.load(args.compensator)
    lines.append("## compensator")
    lines.append("- directions: %d, margin c_k = %.6g, norm bound %.3g, "
                 "variant %s, %s"
                 % (len(comp.omegas), comp.c_k, comp.norm_bound, comp.variant,
                    "pass" if comp.passed else "FAIL"))
    lines.append("")

    lin = _fits_from_sidecar(args.linear)
    lines.append("## linear decay")
    if lin is not None:
        for band in ("C", "D"):
            lines.append("- %s band: measured %+0.4f vs predicted %+0.4f"
                         % (band, lin["fits"][band]["slope"],
                            lin["predicted"][band]))
        pb = lin.get("pointwise_bounds")
        if pb:
            lines.append("- pointwise bounds: xi_c %.4g, low-band c %.4g, "
                         "high-band c %.4g" % (pb["xi_c"], pb["worst_c_low"],
                                               pb["worst_c_high"]))
    else:
        data = np.loadtxt(args.linear, delimiter=",", skiprows=1, ndmin=2)
        lines.append("- C band measured %+0.4f, D band measured %+0.4f "
                     "(no sidecar: slopes from CSV)"
                     % (data[-1, 3], data[-1, 4]))
    lines.append("")

    nl_fits = _fits_from_sidecar(args.nonlinear)
    trace = DecayTrace.from_csv(args.nonlinear)
    lines.append("## nonlinear decay")
    lines.append("- samples: %d, t range [%g, %g]"
                 % (len(trace.t), trace.t[0], trace.t[-1]))
    ent = np.asarray(trace.entropy)
    monotone = bool(np.all(np.diff(ent) <= 1e-6 * np.maximum(ent[:-1],
                                                             1e-300)))
    lines.append("- entropy non-increasing: %s" % ("yes" if monotone else "NO"))
    if nl_fits is not None:
        for key in sorted(nl_fits.get("fits", {})):
            fit = nl_fits["fits"][key]
            lines.append("- fit %s: slope %+0.4f (n=%d)"
                         % (key, fit["slope"], fit["n_points"]))
        if nl_fits.get("flags"):
            lines.append("- flags: %s" % json.dumps(nl_fits["flags"],
                                                    sort_keys=True))
        if nl_fits.get("prediction"):
            pred = nl_fits["prediction"]
            lines.append("- predicted exponent: %+0.4f (%s band, %s)"
                         % (-pred["sigma"], pred["component"], pred["regime"]))

    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    print(text, end="")
    return 0


def _add_system_flags(sub):
    sub.add_argument("--config", default=None, help="YAML config file")
    sub.add_argument("--system", default=None)
    sub.add_argument("--d", type=int, default=None)
    sub.add_argument("--gamma", type=float, default=None)
    sub.add_argument("--damping", type=float, default=None)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="partdiss",
        description="structural checks and decay measurements for partially "
                    "dissipative balance laws")
    subs = parser.add_subparsers(dest="command", required=True)

    p_check = subs.add_parser("check", help="verify structure conditions")
    _add_system_flags(p_check)
    p_check.add_argument("--radius", type=float, default=None)
    p_check.add_argument("--samples", type=int, default=None)
    p_check.add_argument("--seed", type=int, default=None)
    p_check.add_argument("--out", default=None)
    p_check.set_defaults(func=cmd_check)

    p_coords = subs.add_parser("coords", help="chart construction checks")
    _add_system_flags(p_coords)
    p_coords.add_argument("--verify", action="store_true", default=True)
    p_coords.add_argument("--samples", type=int, default=200)
    p_coords.add_argument("--seed", type=int, default=0)
    p_coords.add_argument("--out", default=None)
    p_coords.set_defaults(func=cmd_coords)

    p_lin = subs.add_parser("lindecay", help="linear semigroup decay rates")
    _add_system_flags(p_lin)
    p_lin.add_argument("--p", type=float, default=None)
    p_lin.add_argument("--alpha", type=float, default=None,
                       help="extra derivative order on the measured norm")
    p_lin.add_argument("--component", choices=("C", "D"), default=None)
    p_lin.add_argument("--tmin", type=float, default=None)
    p_lin.add_argument("--tmax", type=float, default=None)
    p_lin.add_argument("--out", default=None)
    p_lin.set_defaults(func=cmd_lindecay)

    p_sim = subs.add_parser("simulate", help="nonlinear box run")
    _add_system_flags(p_sim)
    p_sim.add_argument("--N", type=int, default=None)
    p_sim.add_argument("--L", type=float, default=None)
    p_sim.add_argument("--t-end", dest="t_end", type=float, default=None)
    p_sim.add_argument("--snapshot-dt", dest="snapshot_dt", type=float,
                       default=None)
    p_sim.add_argument("--eps", type=float, default=None)
    p_sim.add_argument("--width", type=float, default=None)
    p_sim.add_argument("--group", default=None)
    p_sim.add_argument("--family", default=None)
    p_sim.add_argument("--mode", default=None)
    p_sim.add_argument("--out-dir", dest="out_dir", default=None)
    p_sim.set_defaults(func=cmd_simulate)

    p_rep = subs.add_parser("report", help="merge artifacts into a summary")
    p_rep.add_argument("--check", default=None)
    p_rep.add_argument("--compensator", default=None)
    p_rep.add_argument("--linear", default=None)
    p_rep.add_argument("--nonlinear", default=None)
    p_rep.add_argument("--out", default=None)
    p_rep.set_defaults(func=cmd_report)
    return parser


def dispatch(argv):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1


def main():
    sys.exit(dispatch(sys.argv[1:]))
