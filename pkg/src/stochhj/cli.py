"""Command-line front end: ``stochhj <subcommand> [--config FILE] [options]``.

Exit status: 0 success, 2 validation error, 3 invariant failure, 64 usage.
Every run writes its CSV artifacts and a ``run.json`` report (effective
config, outputs, wall clock, seed provenance, warnings, code version) into
``<out>/<subcommand>/``.  The output root comes from ``--out``, then the
config's ``output_dir``, then $STOCHHJ_OUT, then ``./runs``.
"""
from __future__ import annotations

import argparse
import csv
import json
import subprocess
import sys
import time
import warnings
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig, as_point
from .env import sample_environment
from .errors import InvariantError, ParameterError, StochHJError
from .hj import fd_transformed_solve, hopf_lax_solve
from .homog import (Z95, Z95_ONE_SIDED, LatticeTemplate, SubadditiveSchedule, effective_hamiltonian, effective_table,
                    enhancement_gap, estimate_Lbar, extend_lbar, hopf_lax_effective, regularity_tails,
                    scaling_study, tent_upper_bound)
from .invariants import duality_suite
from .kernels import BACKEND
from .optimizer import descent_refine, dp_lagrangian
from .oracle import psi_mean_identity, psi_vs_dp

EXIT_OK, EXIT_VALIDATION, EXIT_INVARIANT, EXIT_USAGE = 0, 2, 3, 64


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _git_describe() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], capture_output=True,
                             text=True, timeout=5, cwd=Path(__file__).resolve().parent)
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])


def preset_path(name: str) -> Path:
    return Path(str(resources.files("stochhj") / "presets" / f"{name}.json"))


def preset_names() -> list[str]:
    return sorted(p.stem for p in Path(str(resources.files("stochhj") / "presets")).glob("*.json"))


# ---------------------------------------------------------------- commands
def cmd_sample_env(cfg: ExperimentConfig, out: Path, args) -> dict:
    lat = cfg.lattice.build()
    horizon = args.horizon or cfg.schedule.T_list[-1]
    outputs = {}
    for i in range(args.count):
        env = sample_environment(cfg.field, horizon, lat.brownian_dt, cfg.seed, i, "env")
        p = out / f"path_{i}.csv"
        _write_rows(p, ["t"] + [f"B{c}" for c in range(env.path.m)],
                    [[float(t), *map(float, b)] for t, b in zip(env.path.times, env.path.values)])
        q = out / f"field_{i}.csv"
        _write_rows(q, ["mode", "phase"], [[j, float(ph)] for j, ph in enumerate(env.field.phases)])
        outputs[f"path_{i}"], outputs[f"field_{i}"] = str(p), str(q)
    return {"outputs": outputs, "provenance": {"tag": "env", "indices": list(range(args.count))}}


def cmd_lagrangian(cfg: ExperimentConfig, out: Path, args) -> dict:
    ham = cfg.hamiltonian.build()
    lg = cfg.lagrangian
    x, y = np.array(as_point(lg.x)), np.array(as_point(lg.y))
    tmpl = cfg.lattice.build()
    lat = tmpl.box(np.vstack([x, y]))
    rows, flags = [], []
    for i in range(lg.samples):
        env = sample_environment(cfg.field, lg.t, tmpl.brownian_dt, cfg.seed, i, "lagrangian")
        est = dp_lagrangian(x, y, lg.s, lg.t, env, lat, ham)
        dp_val = est.value
        if lg.descent:
            est = descent_refine(est, env, ham, 200)
        rows.append([i, dp_val, est.value, est.breakdown.kinetic, est.breakdown.forcing,
                     int(est.flags.get("truncated", False))])
        flags.append(est.flags)
        if i == 0:
            _write_rows(out / "minimizer_0.csv", ["t"] + [f"x{j}" for j in range(len(x))],
                        [[float(t), *map(float, n)] for t, n in zip(est.minimizer.times, est.minimizer.nodes)])
    _write_rows(out / "lagrangian.csv", ["realization", "dp_value", "value", "kinetic", "forcing", "truncated"],
                rows)
    vals = np.array([r[2] for r in rows])
    return {"outputs": {"lagrangian": str(out / "lagrangian.csv"), "minimizer": str(out / "minimizer_0.csv")},
            "summary": {"mean": float(vals.mean()), "min": float(vals.min()), "max": float(vals.max())},
            "provenance": {"tag": "lagrangian", "indices": list(range(lg.samples))}}


def cmd_solve_hj(cfg: ExperimentConfig, out: Path, args) -> dict:
    ham = cfg.hamiltonian.build()
    hj = cfg.hj
    d = cfg.field.dimension
    slat = cfg.scaling_lattice.build(d)
    times = [float(t) for t in hj.times]
    outputs, summary = {}, {}
    env = sample_environment(cfg.field, max(times) / hj.eps, slat.brownian_dt, cfg.seed, hj.index, "solve-hj")
    sols = {}
    if hj.method in ("hopf-lax", "both"):
        sols["hopf-lax"] = hopf_lax_solve(cfg.datum, env, hj.eps, hj.theta, slat.for_eps(hj.eps), times, ham)
        summary["hopf_lax_flags"] = sols["hopf-lax"].flags
    if hj.method in ("fd", "both"):
        sols["fd"] = fd_transformed_solve(cfg.datum, env, hj.eps, hj.theta, hj.fd_grid(d), times, hj.cfl, ham)
    for name, sol in sols.items():
        p = out / f"solution_{name}.csv"
        sol.write_csv(p)
        outputs[name] = str(p)
    if len(sols) == 2:
        summary["sup_difference"] = crossval_difference(sols["hopf-lax"], sols["fd"], times, hj.compare_radius)
    return {"outputs": outputs, "summary": summary, "provenance": {"tag": "solve-hj", "indices": [hj.index]}}


def crossval_difference(hl, fd, times, radius: float) -> float:
    """sup over |x| <= radius (Hopf-Lax nodes) of |u_HL - u_FD| with FD linearly interpolated."""
    worst = 0.0
    if hl.points.shape[1] == 1:
        x = hl.points[:, 0]
        keep = np.abs(x) <= radius + 1e-12
        order = np.argsort(fd.points[:, 0])
        for t in times:
            ufd = np.interp(x[keep], fd.points[order, 0], fd.at(t)[order])
            worst = max(worst, float(np.max(np.abs(hl.at(t)[keep] - ufd))))
        return worst
    from scipy.interpolate import griddata
    keep = np.linalg.norm(hl.points, axis=1) <= radius + 1e-12
    for t in times:
        ufd = griddata(fd.points, fd.at(t), hl.points[keep], method="linear")
        worst = max(worst, float(np.nanmax(np.abs(hl.at(t)[keep] - ufd))))
    return worst


def _estimates(cfg: ExperimentConfig, velocities, tmpl: LatticeTemplate, schedule: SubadditiveSchedule,
               tag: str = "lbar"):
    ham = cfg.hamiltonian.build()
    return [estimate_Lbar(as_point(v), schedule, cfg.field, tmpl, cfg.seed, ham, cfg.workers, tag)
            for v in velocities]


def _write_lbar(ests, path: Path) -> None:
    d = len(np.atleast_1d(ests[0].v))
    rows = []
    for e in ests:
        for r in e.table:
            rows.append([*map(float, np.atleast_1d(e.v)), r["T"], r["mean"], r["se"], r["n"]])
    _write_rows(path, [f"v{i}" for i in range(d)] + ["T", "mean", "se", "n"], rows)


def cmd_effective(cfg: ExperimentConfig, out: Path, args) -> dict:
    ham = cfg.hamiltonian.build()
    ests = _estimates(cfg, cfg.velocities, cfg.lattice.build(), cfg.schedule.build())
    table = effective_hamiltonian(effective_table(ests, ham), [as_point(p) for p in cfg.momenta], ham)
    table.write_csv(out / "effective.csv")
    _write_lbar(ests, out / "lbar_horizons.csv")
    return {"outputs": {"effective": str(out / "effective.csv"), "horizons": str(out / "lbar_horizons.csv")},
            "summary": {"converged": [e.converged for e in ests]},
            "provenance": {"tag": "lbar", "indices": list(range(cfg.schedule.N))}, "table": table}


def cmd_enhancement(cfg: ExperimentConfig, out: Path, args) -> dict:
    ham = cfg.hamiltonian.build()
    res = cmd_effective(cfg, out, args)
    table = res.pop("table")
    gaps = [enhancement_gap(as_point(p), table, cfg.field, ham) for p in cfg.momenta]
    _write_rows(out / "gaps.csv", ["p", "gap", "half_width", "lower", "structural", "certified"],
                [[float(g.p[0]) if len(g.p) == 1 else str(g.p.tolist()), g.gap, g.half_width, g.lower,
                  g.structural, int(g.certified)] for g in gaps])
    tn = cfg.tent
    cert = tent_upper_bound(as_point(tn.v), tn.M, tn.delta, tn.N, cfg.field, cfg.seed, tn.samples, ham,
                            tn.env_dt, tn.subsamples, workers=cfg.workers)
    (out / "tent.json").write_text(json.dumps(cert.to_dict(), indent=2, sort_keys=True))
    zero = [e for e in range(len(cfg.velocities)) if np.allclose(as_point(cfg.velocities[e]), 0.0)]
    summary = {"gaps_certified": [g.certified for g in gaps], "tent_certified": cert.certified,
               "tent_bound": cert.bound, "tent_se": cert.se}
    if zero:
        i = zero[0]
        summary["Lbar0"] = float(table.Lbar[i])
        se = table.half_width[i] / Z95
        summary["Lbar0_certified"] = bool(table.Lbar[i] + Z95_ONE_SIDED * se
                                          < float(ham.H_star(np.zeros(cfg.field.dimension))))
    res["outputs"].update({"gaps": str(out / "gaps.csv"), "tent": str(out / "tent.json")})
    res["summary"].update(summary)
    return res


def hbar_reference(cfg: ExperimentConfig) -> float | None:
    """Effective Hopf-Lax value at the scaling probe from L-bar on the scaling lattice."""
    sc = cfg.scaling
    if not sc.hbar_velocities:
        return None
    sl = cfg.scaling_lattice
    tmpl = LatticeTemplate(sl.h, sl.dt, sl.v_max, sl.subsamples, 4.0, sl.env_dt)
    sched = (sc.hbar_schedule or cfg.schedule).build()
    ests = _estimates(cfg, sc.hbar_velocities, tmpl, sched, tag="scaling-lbar")
    fn = extend_lbar([float(np.ravel(e.v)[0]) for e in ests], [e.value for e in ests])
    x, t = sc.probe[:-1], sc.probe[-1]
    return hopf_lax_effective(cfg.datum, x, t, fn)


def cmd_scaling(cfg: ExperimentConfig, out: Path, args) -> dict:
    ham = cfg.hamiltonian.build()
    sc = cfg.scaling
    ref = hbar_reference(cfg)
    probe = (np.array(sc.probe[:-1], float), float(sc.probe[-1]))
    rep = scaling_study(cfg.theta_list, cfg.eps_list, probe, cfg.datum, cfg.field,
                        cfg.scaling_lattice.build(cfg.field.dimension), sc.samples, cfg.seed, ham, ref,
                        cfg.workers)
    rep.write_csv(out / "scaling.csv")
    return {"outputs": {"scaling": str(out / "scaling.csv")},
            "summary": {"classification": {repr(k): v for k, v in rep.classification.items()},
                        "hbar_solution": ref},
            "provenance": {"tag": "scaling", "indices": list(range(sc.samples))}}


def cmd_tails(cfg: ExperimentConfig, out: Path, args) -> dict:
    ham = cfg.hamiltonian.build()
    tl = cfg.tails
    rep = regularity_tails(cfg.eps_list, tl.R, tl.samples, cfg.scaling_lattice.build(cfg.field.dimension),
                           cfg.field, cfg.seed, cfg.datum, ham, tl.theta_reg, tl.spacing, cfg.workers)
    rep.write_csv(out / "tails.csv")
    return {"outputs": {"tails": str(out / "tails.csv")},
            "summary": {"slope": rep.slope, "slope_ok": rep.slope_ok, "median_excess": rep.median_excess},
            "provenance": {"tag": "tails", "indices": list(range(tl.samples))}}


def cmd_oracle_psi(cfg: ExperimentConfig, out: Path, args) -> dict:
    ps = cfg.psi
    rows, summary = [], {}
    for T in ps.T_list:
        r = psi_mean_identity(float(T), ps.samples, master_seed=cfg.seed)
        rows.append([r.T, r.n, r.mean, r.se, r.target, int(r.ok)])
    _write_rows(out / "psi_mean.csv", ["T", "n", "mean", "se", "target", "ok"], rows)
    summary["mean_ok"] = all(r[-1] for r in rows)
    outputs = {"psi_mean": str(out / "psi_mean.csv")}
    if ps.optimizer_samples:
        from .optimizer import symmetric_lattice
        lat = symmetric_lattice(ps.radius, ps.h, ps.dt, ps.v_max, 1, 1)
        rep = psi_vs_dp(ps.optimizer_T, lat, ps.optimizer_samples, cfg.seed, ps.env_dt)
        rep.write_csv(out / "psi_optimizer.csv")
        outputs["psi_optimizer"] = str(out / "psi_optimizer.csv")
        summary["fraction_within_5pct"] = rep.fraction_within(0.05)
        summary["fraction_path_within"] = rep.fraction_path_within(0.05)
    return {"outputs": outputs, "summary": summary,
            "provenance": {"tag": "psi-mean-<T>", "indices": list(range(ps.samples))}}


def invariant_reports(cfg: ExperimentConfig) -> list:
    """Duality suite for the config's Hamiltonian and its sampled L-bar."""
    ham = cfg.hamiltonian.build()
    ests = _estimates(cfg, cfg.velocities, cfg.lattice.build(), cfg.schedule.build(), tag="invariants")
    table = effective_table(ests, ham)
    return duality_suite(ham, table, cfg.field.dimension, cfg.seed)


def cmd_check_invariants(cfg: ExperimentConfig, out: Path, args) -> dict:
    reports = invariant_reports(cfg)
    data = [r.to_dict() for r in reports]
    (out / "invariants.json").write_text(json.dumps(data, indent=2, sort_keys=True))
    violations = [v for r in data for v in r["violations"]]
    res = {"outputs": {"invariants": str(out / "invariants.json")},
           "summary": {"violations": violations, "checks": [r["name"] for r in data]}}
    if violations:
        res["status"] = EXIT_INVARIANT
    return res


COMMANDS = {
    "sample-env": cmd_sample_env,
    "lagrangian": cmd_lagrangian,
    "solve-hj": cmd_solve_hj,
    "effective": cmd_effective,
    "enhancement": cmd_enhancement,
    "scaling": cmd_scaling,
    "tails": cmd_tails,
    "oracle-psi": cmd_oracle_psi,
    "check-invariants": cmd_check_invariants,
}

# per-subcommand numeric overrides: flag -> (dotted config key, type)
_OVERRIDES = {
    "sample-env": {},
    "lagrangian": {"--samples": ("lagrangian.samples", int)},
    "solve-hj": {"--eps": ("hj.eps", float), "--theta": ("hj.theta", float), "--method": ("hj.method", str)},
    "effective": {"--N": ("schedule.N", int)},
    "enhancement": {"--N": ("schedule.N", int), "--tent-samples": ("tent.samples", int)},
    "scaling": {"--samples": ("scaling.samples", int)},
    "tails": {"--samples": ("tails.samples", int)},
    "oracle-psi": {"--samples": ("psi.samples", int), "--optimizer-samples": ("psi.optimizer_samples", int)},
    "check-invariants": {"--N": ("schedule.N", int)},
}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="stochhj", description="Stochastically forced Hamilton-Jacobi experiments.")
    p.add_argument("--version", action="version", version=f"stochhj {__version__}")
    sub = p.add_subparsers(dest="command", metavar="SUBCOMMAND", parser_class=_Parser)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON config file, or preset:<name>")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out")
        sp.add_argument("--workers", type=int)
        sp.add_argument("--set", action="append", default=[], metavar="KEY=JSON",
                        help="override a dotted config key, e.g. --set tent.delta=4")
        for flag, (_, typ) in _OVERRIDES[name].items():
            sp.add_argument(flag, type=typ, dest=flag.lstrip("-").replace("-", "_"))
        if name == "oracle-psi":
            sp.add_argument("--T", type=float, action="append", dest="T_list")
        if name == "sample-env":
            sp.add_argument("--count", type=int, default=1)
            sp.add_argument("--horizon", type=float)
    return p


def resolve_config(args) -> ExperimentConfig:
    if args.config is None:
        cfg = ExperimentConfig.load(preset_path("default"))
    elif args.config.startswith("preset:"):
        name = args.config.split(":", 1)[1]
        if name not in preset_names():
            raise ParameterError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
        cfg = ExperimentConfig.load(preset_path(name))
    else:
        cfg = ExperimentConfig.load(args.config)
    over = {}
    for item in args.set:
        if "=" not in item:
            raise ParameterError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        try:
            over[k] = json.loads(v)
        except json.JSONDecodeError:
            over[k] = v
    for flag, (key, _) in _OVERRIDES[args.command].items():
        val = getattr(args, flag.lstrip("-").replace("-", "_"))
        if val is not None:
            over[key] = val
    if getattr(args, "T_list", None):
        over["psi.T_list"] = args.T_list
    for key in ("seed", "workers"):
        if getattr(args, key) is not None:
            over[key] = getattr(args, key)
    if args.out is not None:
        over["output_dir"] = args.out
    return cfg.with_overrides(over) if over else cfg


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        cfg = resolve_config(args)
    except ParameterError as exc:
        print(f"stochhj: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    out = cfg.resolved_output_dir() / args.command
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            res = COMMANDS[args.command](cfg, out, args)
        except InvariantError as exc:
            res = {"status": EXIT_INVARIANT, "summary": {"error": str(exc), "violations": exc.violations}}
        except ParameterError as exc:
            print(f"stochhj: {exc}", file=sys.stderr)
            return EXIT_VALIDATION
        except StochHJError as exc:
            res = {"status": EXIT_INVARIANT, "summary": {"error": f"{type(exc).__name__}: {exc}"}}
    status = res.pop("status", EXIT_OK)
    res.pop("table", None)
    report = {
        "command": args.command,
        "status": status,
        "config": cfg.to_dict(),
        "outputs": res.get("outputs", {}),
        "summary": res.get("summary", {}),
        "wall_clock_s": time.perf_counter() - t0,
        "seed": {"master_seed": cfg.seed, **res.get("provenance", {})},
        "version": __version__,
        "git": _git_describe(),
        "backend": BACKEND,
    }
    msgs = sorted({f"{w.category.__name__}: {w.message}" for w in caught})
    if msgs:
        report["warnings"] = msgs
    (out / "run.json").write_text(json.dumps(report, indent=2, sort_keys=True, default=_jsonable))
    print(json.dumps({"command": args.command, "status": status, "out": str(out),
                      "summary": report["summary"]}, default=_jsonable))
    return status


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    return str(x)


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
