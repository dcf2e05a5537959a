"""Run configuration, ensemble orchestration, manifests and reports.

A run directory holds one CSV per seed, ``manifest.json`` (everything
needed to re-execute the run) and ``timing.json`` (wall clock, kept apart
so the manifest is byte-reproducible).  Per-seed streams use
``seed_i = rng.mix_seed(master_seed, i)``.
"""

import copy
import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__, rng
from .dynamics import KINDS as FLOW_KINDS
from .dynamics import FlowConfig, simulate, validate_flow
from .errors import ConfigError, DivergenceError
from .problems import PROBLEM_KEYS, NoiseSpec, from_config
from .solvers import KINDS as SOLVER_KINDS
from .solvers import SolverParams, Trajectory, run, validate

ALGORITHMS = SOLVER_KINDS + FLOW_KINDS
TOP_KEYS = {
    "problem", "algorithm", "solver", "flow", "noise", "master_seed", "ensemble",
    "stride", "state_stride", "x0", "out", "analysis",
}
SOLVER_KEYS = {f.name for f in fields(SolverParams)} - {"seed"}
FLOW_KEYS = {"lambda", "dt", "T", "rho", "alpha", "gamma", "t_min", "v0", "noise", "mode"}
NOISE_KEYS = {"mode", "scale", "batch"}
ANALYSIS_KEYS = {
    "tol", "t1", "t2", "every", "k_se", "window", "halve_check", "n_boot",
    "rho_grid", "T", "M_seeds", "lambda", "test_fns", "substeps", "objective",
}
PATH_SCHEMA_VERSION = 1
SEED_ENV = "COMPOSITEFLOW_SEED"


def _reject_unknown(section, allowed, where):
    extra = sorted(set(section) - allowed)
    if extra:
        raise ConfigError(f"unknown key {extra[0]!r} in {where}", key=extra[0])


@dataclass
class RunConfig:
    problem: dict
    algorithm: str = "lp_admm"
    solver: dict = field(default_factory=dict)
    flow: dict = field(default_factory=dict)
    noise: dict = field(default_factory=lambda: {"mode": "exact"})
    master_seed: int = 0
    ensemble: int = 1
    stride: int = 1
    state_stride: int = 100
    x0: list | None = None
    out: str = "out"
    analysis: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, raw):
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object", key="<root>")
        _reject_unknown(raw, TOP_KEYS, "config")
        if "problem" not in raw:
            raise ConfigError("config needs a problem section", key="problem")
        raw = copy.deepcopy(raw)
        _reject_unknown(raw["problem"], PROBLEM_KEYS, "problem")
        _reject_unknown(raw.get("solver", {}), SOLVER_KEYS, "solver")
        _reject_unknown(raw.get("flow", {}), FLOW_KEYS, "flow")
        _reject_unknown(raw.get("noise", {}), NOISE_KEYS, "noise")
        _reject_unknown(raw.get("analysis", {}), ANALYSIS_KEYS, "analysis")
        cfg = cls(**raw)
        if cfg.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {cfg.algorithm!r}", key="algorithm")
        for key in ("ensemble", "stride", "state_stride"):
            if int(getattr(cfg, key)) < 1:
                raise ConfigError(f"{key} must be a positive integer", key=key)
        cfg.noise = {"mode": "exact", **cfg.noise}
        return cfg

    def to_dict(self):
        return asdict(self)

    def dumps(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def build_problem(self):
        return from_config(self.problem)

    def solver_params(self, seed=None):
        return SolverParams(**self.solver, seed=self.master_seed if seed is None else seed)

    def noise_spec(self, seed):
        return NoiseSpec(master_seed=seed, **self.noise)

    def flow_config(self, seed=None, **override):
        spec = {k: v for k, v in self.flow.items() if k != "mode"}
        if "lambda" in spec:
            spec["lam"] = spec.pop("lambda")
        if "v0" in spec and spec["v0"] is not None:
            spec["v0"] = tuple(spec["v0"])
        spec.setdefault("seed", self.master_seed if seed is None else seed)
        spec.update(override)
        if "lam" not in spec or "dt" not in spec or "T" not in spec:
            raise ConfigError("flow needs lambda, dt and T", key="flow")
        return FlowConfig(**spec)

    @property
    def flow_mode(self):
        return self.flow.get("mode", "smoothed")


def check_config(cfg):
    """Build the problem and run the solver or flow validation, so that a
    config that loads is a config that can run."""
    problem = cfg.build_problem()
    if cfg.x0 is not None and len(cfg.x0) != problem.n:
        raise ConfigError(f"x0 must have length {problem.n}", key="x0")
    cfg.noise_spec(cfg.master_seed)
    if cfg.algorithm in SOLVER_KINDS or cfg.solver:
        params = cfg.solver_params()
        checked = validate(params, problem.A, problem.h)
        if cfg.algorithm == "acc_lp_sadmm" and checked.beta is None:
            raise ConfigError("the accelerated method needs gamma", key="gamma")
    if cfg.algorithm in FLOW_KINDS or cfg.flow:
        validate_flow(cfg.flow_config(), problem, smoothed=cfg.flow_mode == "smoothed")
    return problem


def load_config(path, env=None):
    """Read, schema-check and constraint-check a JSON config.

    Relative CSV paths in the problem section are taken relative to the
    config file.  ``COMPOSITEFLOW_SEED`` in ``env`` (default ``os.environ``)
    overrides ``master_seed``.
    """
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as err:
            raise ConfigError(f"invalid JSON: {err}", key="<root>") from err
    base = Path(path).resolve().parent
    for key in ("data_csv", "target_csv", "operator_csv"):
        ref = raw.get("problem", {}).get(key) if isinstance(raw, dict) else None
        if isinstance(ref, str) and not os.path.isabs(ref):
            raw["problem"][key] = str(base / ref)
    cfg = RunConfig.from_dict(raw)
    env = os.environ if env is None else env
    if env.get(SEED_ENV):
        try:
            cfg.master_seed = int(env[SEED_ENV])
        except ValueError as err:
            raise ConfigError(f"{SEED_ENV} must be an integer", key=SEED_ENV) from err
    check_config(cfg)
    return cfg


def seeds_for(master_seed, M):
    return [rng.mix_seed(master_seed, i) for i in range(M)]


PATH_HEADER = ("t", "H", "H_mu", "grad_norm", "v_norm")


def write_path_csv(path, fname):
    """Per-record diagnostics of a single path followed by the state."""
    n = path.x.shape[-1]
    vnorm = np.linalg.norm(path.v, axis=-1) if path.v is not None else np.zeros(len(path.times))
    with open(fname, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PATH_HEADER + tuple(f"x{j}" for j in range(n)))
        for i, t in enumerate(path.times):
            vals = [t, path.H[i], path.H_mu[i], path.grad_norm[i], vnorm[i], *path.x[i]]
            w.writerow([repr(float(v)) for v in vals])


def _run_one(args):
    """Worker: one seed of an ensemble.  Returns ``(index, seed, file, status)``."""
    cfg_dict, index, seed, out_dir = args
    cfg = RunConfig.from_dict(cfg_dict)
    problem = cfg.build_problem()
    fname = os.path.join(out_dir, f"seed_{index:04d}.csv")
    status = "ok"
    if cfg.algorithm in SOLVER_KINDS:
        try:
            traj = run(
                cfg.algorithm, problem, cfg.solver_params(seed), noise=cfg.noise_spec(seed),
                x0=cfg.x0, stride=cfg.stride, state_stride=cfg.state_stride,
            )
        except DivergenceError as err:
            traj, status = err.partial, "diverged"
        traj.to_csv(fname)
    else:
        x0 = np.zeros(problem.n) if cfg.x0 is None else cfg.x0
        try:
            path = simulate(cfg.algorithm, problem, cfg.flow_config(seed), x0, mode=cfg.flow_mode, stride=cfg.stride)
        except DivergenceError as err:
            path, status = err.partial, "diverged"
        write_path_csv(path, fname)
    return index, int(seed), os.path.basename(fname), status


def derived_constants(cfg, problem):
    """Every constant a verdict or step rule depends on."""
    A, h, f = problem.A, problem.h, problem.f
    out = {
        "gram_norm": A.gram_norm(),
        "lambda_min_AAt": A.min_eig_gram_adjoint(),
        "surjective": bool(A.is_surjective),
        "L_f": float(f.lipschitz),
        "L_h": float(h.lipschitz),
        "varrho": float(h.modulus),
        "mu": problem.mu,
        "L": float(problem.L),
    }
    if out["surjective"]:
        out["eps_criticality_bound"] = float(problem.eps_criticality_bound())
    if cfg.algorithm in SOLVER_KINDS or cfg.solver:
        checked = validate(cfg.solver_params(), A, h)
        out.update(tau=checked.tau, beta=checked.beta, lambda_default=checked.lam)
    if cfg.algorithm in FLOW_KINDS or cfg.flow:
        fc = cfg.flow_config()
        out.update(lambda_flow=fc.lam, dt=fc.dt, T=fc.T, t_min=fc.clamp)
    return out


@dataclass
class RunManifest:
    config: dict
    derived: dict
    code_version: str
    seeds: list
    files: list
    status: list
    csv_schema: int = PATH_SCHEMA_VERSION

    @property
    def ok(self):
        return all(s == "ok" for s in self.status)

    def dumps(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True, default=_jsonable) + "\n"

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls(**json.load(fh))


def run_ensemble(cfg, out_dir=None, jobs=1):
    """Run ``cfg.ensemble`` seeds, write per-seed CSVs and the manifest.

    With ``jobs > 1`` seeds are dispatched to a process pool; each worker
    writes only its own file, so the output does not depend on ``jobs``.
    """
    out_dir = Path(cfg.out if out_dir is None else out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    problem = check_config(cfg)
    seeds = seeds_for(cfg.master_seed, cfg.ensemble)
    tasks = [(cfg.to_dict(), i, s, str(out_dir)) for i, s in enumerate(seeds)]
    start = time.perf_counter()
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_one, tasks))
    else:
        results = [_run_one(t) for t in tasks]
    results.sort()
    manifest = RunManifest(
        config=cfg.to_dict(),
        derived=derived_constants(cfg, problem),
        code_version=__version__,
        seeds=[r[1] for r in results],
        files=[r[2] for r in results],
        status=[r[3] for r in results],
    )
    (out_dir / "manifest.json").write_text(manifest.dumps())
    (out_dir / "timing.json").write_text(json.dumps({"wall_seconds": time.perf_counter() - start}) + "\n")
    return manifest


# ---------------------------------------------------------------- reporting

def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if hasattr(obj, "to_dict"):
        return obj.to_dict()
    if hasattr(obj, "__dataclass_fields__"):
        return asdict(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _clean(obj):
    """Round-trip through JSON so NaN/inf become strings and numpy types vanish."""
    def fix(v):
        if isinstance(v, float) and not math.isfinite(v):
            return repr(v)
        if isinstance(v, dict):
            return {k: fix(x) for k, x in v.items()}
        if isinstance(v, (list, tuple)):
            return [fix(x) for x in v]
        return v
    return fix(json.loads(json.dumps(obj, default=_jsonable)))


def analysis_verdict(name, result):
    """``pass`` / ``fail`` / ``inconclusive`` / ``info`` for one analysis."""
    if isinstance(result, dict):
        return result.get("verdict", "info")
    if hasattr(result, "verdict"):
        return result.verdict
    if hasattr(result, "passed"):
        return "pass" if result.passed else "fail"
    if name == "rate_fit":
        return "fail" if result.regime_mismatch else "info"
    return "info"


def _series(result):
    """Plot-ready columns for results that carry a time series."""
    if hasattr(result, "values") and hasattr(result, "times"):
        return {"t": result.times, "L_mu": result.values}
    if hasattr(result, "defects"):
        return {"t": result.times, "defect": result.defects}
    if isinstance(result, dict) and "series" in result:
        return result["series"]
    return None


def report(manifest, analyses, out_dir=None):
    """Collate analyses into ``summary.json`` plus one plot CSV per series.

    ``analyses`` maps names to analysis results (or ``None`` for a missing
    input, which is listed under ``gaps``).  Output bytes depend only on
    the inputs.
    """
    summary = {
        "code_version": __version__,
        "manifest": None if manifest is None else _clean(asdict(manifest)),
        "analyses": {},
        "verdicts": {},
        "gaps": [],
    }
    for name in sorted(analyses):
        res = analyses[name]
        if res is None:
            summary["gaps"].append(name)
            continue
        summary["analyses"][name] = _clean(res)
        summary["verdicts"][name] = analysis_verdict(name, res)
    verdicts = set(summary["verdicts"].values())
    if not summary["verdicts"]:
        summary["status"] = "no-analyses"
    elif "fail" in verdicts:
        summary["status"] = "fail"
    elif "inconclusive" in verdicts:
        summary["status"] = "inconclusive"
    elif summary["gaps"]:
        summary["status"] = "partial"
    else:
        summary["status"] = "pass"
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        for name in sorted(analyses):
            cols = None if analyses[name] is None else _series(analyses[name])
            if cols:
                write_plot_csv(out_dir / f"plot_{name}.csv", cols)
    return summary


def write_plot_csv(fname, columns):
    """Whitespace-free CSV with a ``#``-prefixed header, readable by gnuplot
    (``set datafile separator ','``)."""
    names = list(columns)
    data = [np.asarray(columns[k], dtype=float) for k in names]
    with open(fname, "w", newline="") as fh:
        fh.write("# " + ",".join(names) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        for row in zip(*data):
            w.writerow([repr(float(v)) for v in row])
