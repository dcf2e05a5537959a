"""Command-line entry point.

Exit codes: 0 success, 1 a verdict failed, 2 configuration error,
3 numerical divergence, 4 inconclusive statistical verdict.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import analysis as an
from . import dynamics
from .errors import ConfigError, InsufficientDataError, NumericalError, UsageError
from .harness import (
    RunManifest, _clean, load_config, report, run_ensemble, seeds_for,
)
from .solvers import KINDS as SOLVER_KINDS
from .solvers import run

EXIT = {"pass": 0, "info": 0, "fail": 1, "inconclusive": 4}
ANALYSIS_FILES = {
    "descent": "descent.json",
    "energy": "energy.json",
    "lyapunov": "lyapunov.json",
    "rate_fit": "rate_fit.json",
    "criticality": "criticality.json",
    "weak_order": "weak_order.json",
}
TEST_FNS = {
    "x2": lambda problem: (lambda x: np.sum(np.asarray(x) ** 2, axis=-1)),
    "H_mu": lambda problem: problem.objective_H_mu,
}


def _out(cfg, args):
    out = Path(args.out or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(out, name, cfg, result, verdict, series=None):
    doc = {"config": cfg.to_dict(), "result": _clean(result), "verdict": verdict}
    if series is not None:
        doc["series"] = _clean(series)
    fname = out / ANALYSIS_FILES[name]
    fname.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    print(f"{name}: {verdict} -> {fname}")
    return EXIT[verdict]


def _x0(cfg, problem):
    return np.zeros(problem.n) if cfg.x0 is None else np.asarray(cfg.x0, dtype=float)


def _ensemble_size(cfg, args, minimum=1):
    M = args.seeds or cfg.ensemble
    if M < minimum:
        raise ConfigError(f"this audit needs at least {minimum} seeds (got {M})", key="ensemble")
    return M


def cmd_run(cfg, args, force_kind=None, ensemble=False):
    if force_kind:
        cfg.algorithm = force_kind
    cfg.ensemble = (args.seeds or cfg.ensemble) if ensemble else 1
    out = _out(cfg, args)
    manifest = run_ensemble(cfg, out, jobs=args.jobs)
    for f, s in zip(manifest.files, manifest.status):
        print(f"{out / f} [{s}]")
    return 0 if manifest.ok else 3


def cmd_weak_order(cfg, args):
    problem = cfg.build_problem()
    opt = cfg.analysis
    fns = {name: TEST_FNS[name](problem) for name in opt.get("test_fns", ["x2"])}
    table = dynamics.weak_error(
        problem, fns, opt.get("rho_grid", [10, 20, 40, 80]), _x0(cfg, problem),
        T=opt.get("T", 1.0), M_seeds=args.seeds or opt.get("M_seeds", 1024),
        lam=opt.get("lambda"), master_seed=cfg.master_seed, substeps=opt.get("substeps", 10),
    )
    flagged = any(any(v) for v in table.flags.values())
    return _write(_out(cfg, args), "weak_order", cfg, table, "inconclusive" if flagged else "info")


def _flow_path(cfg, problem, **override):
    fc = cfg.flow_config(noise=False, **override)
    return dynamics.simulate("flow", problem, fc, _x0(cfg, problem), mode=cfg.flow_mode, stride=cfg.stride)


def cmd_audit_descent(cfg, args):
    problem = cfg.build_problem()
    opt = cfg.analysis
    every = opt.get("every", 1)
    path = _flow_path(cfg, problem)
    residual = None
    if cfg.flow_mode == "minimal_norm":
        residual = [problem.subgrad_residual(x).achieved for x in path.x]
    audit = an.descent_audit(path, opt.get("objective", "H_mu"), residual, every)
    tol = opt.get("tol", 1e-6) * (1.0 + abs(path.H[0]))
    result = {"max_violation": audit.max_violation, "max_defect": audit.max_defect, "tolerance": tol}
    ok = audit.max_violation <= tol
    if opt.get("halve_check", False):
        fine = _flow_path(cfg, problem, dt=path.dt / 2)
        res_fine = None if residual is None else [problem.subgrad_residual(x).achieved for x in fine.x]
        half = an.descent_audit(fine, opt.get("objective", "H_mu"), res_fine, 2 * every)
        ratio = audit.max_defect / half.max_defect if half.max_defect > 0 else float("inf")
        result.update(max_defect_half_dt=half.max_defect, shrink_ratio=ratio)
        ok = ok and ratio >= 1.8
    return _write(_out(cfg, args), "descent", cfg, result, "pass" if ok else "fail",
                  {"t": audit.times, "defect": audit.defects})


def _ensemble_path(cfg, args, kind, minimum):
    problem = cfg.build_problem()
    M = _ensemble_size(cfg, args, minimum)
    seeds = np.array(seeds_for(cfg.master_seed, M), dtype=np.uint64)
    path = dynamics.simulate(kind, problem, cfg.flow_config(), _x0(cfg, problem), seeds=seeds, stride=cfg.stride)
    return problem, path


def cmd_audit_energy(cfg, args):
    _, path = _ensemble_path(cfg, args, "sde1", 64)
    opt = cfg.analysis
    gap = an.energy_identity_gap(path, opt.get("t1"), opt.get("t2"), opt.get("tol", 0.1),
                                 opt.get("n_boot", an.N_BOOT), cfg.master_seed)
    return _write(_out(cfg, args), "energy", cfg, gap, gap.verdict)


def cmd_audit_lyapunov(cfg, args):
    problem, path = _ensemble_path(cfg, args, "sde2", 1)
    opt = cfg.analysis
    series = an.lyapunov_audit(path, problem, every=opt.get("every", 1), k_se=opt.get("k_se", 2.0),
                               n_boot=opt.get("n_boot", an.N_BOOT), seed=cfg.master_seed)
    result = {
        "c": series.c, "a": series.a, "b": series.b,
        "max_excess": float(np.max(series.increments - series.k_se * series.std_errors)),
        "strictly_decreasing": series.strictly_decreasing,
    }
    return _write(_out(cfg, args), "lyapunov", cfg, result, series.verdict,
                  {"t": series.times, "L_mu": series.values})


def cmd_rate_fit(cfg, args):
    problem = cfg.build_problem()
    if cfg.algorithm in SOLVER_KINDS:
        traj = run(cfg.algorithm, problem, cfg.solver_params(), cfg.noise_spec(cfg.master_seed), cfg.x0, stride=cfg.stride)
        times, values = traj.column("t"), traj.column("H")
    else:
        path = _flow_path(cfg, problem)
        times, values = path.times, path.H
    t, gaps, H_bar = an.objective_gaps(times, values)
    fit = an.rate_fit(t, gaps, H_bar, cfg.analysis.get("window"))
    return _write(_out(cfg, args), "rate_fit", cfg, {**_clean(fit), "H_bar": H_bar},
                  "fail" if fit.regime_mismatch else "info")


def cmd_criticality(cfg, args):
    problem = cfg.build_problem()
    kind = cfg.algorithm if cfg.algorithm in SOLVER_KINDS else "lp_sadmm"
    traj = run(kind, problem, cfg.solver_params(), cfg.noise_spec(cfg.master_seed), cfg.x0, stride=max(cfg.stride, 100))
    rep = an.criticality_report(problem, traj.final.x, cfg.analysis.get("tol", 1e-6))
    return _write(_out(cfg, args), "criticality", cfg, rep, "pass" if rep.passed else "fail")


def cmd_report(cfg, args):
    out = _out(cfg, args)
    manifest = RunManifest.load(out / "manifest.json") if (out / "manifest.json").exists() else None
    analyses = {}
    for name, fname in ANALYSIS_FILES.items():
        path = out / fname
        analyses[name] = json.loads(path.read_text()) if path.exists() else None
    summary = report(manifest, analyses, out)
    print(f"report: {summary['status']} -> {out / 'summary.json'}")
    return EXIT.get(summary["status"], 0)


COMMANDS = {
    "run": cmd_run,
    "ensemble": lambda c, a: cmd_run(c, a, ensemble=True),
    "flow": lambda c, a: cmd_run(c, a, "flow"),
    "sde1": lambda c, a: cmd_run(c, a, "sde1", ensemble=True),
    "sde2": lambda c, a: cmd_run(c, a, "sde2", ensemble=True),
    "weak-order": cmd_weak_order,
    "audit-descent": cmd_audit_descent,
    "audit-energy": cmd_audit_energy,
    "audit-lyapunov": cmd_audit_lyapunov,
    "rate-fit": cmd_rate_fit,
    "criticality": cmd_criticality,
    "report": cmd_report,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="compositeflow", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="JSON run config")
    parser.add_argument("--out", help="output directory (overrides config 'out')")
    parser.add_argument("--seeds", type=int, help="ensemble size M")
    parser.add_argument("--jobs", type=int, default=1, help="worker processes")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, UsageError, InsufficientDataError, FileNotFoundError) as err:
        key = getattr(err, "key", None)
        print(f"config error{f' [{key}]' if key else ''}: {err}", file=sys.stderr)
        return 2
    except NumericalError as err:
        print(f"numerical error: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
