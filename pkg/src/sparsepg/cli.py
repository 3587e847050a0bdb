"""Experiment runner: config parsing, multi-seed execution, CSV emission.

Subcommands:
  run        -- execute one experiment config across seeds
  compare    -- run several configs on the same problem and merge their curves
  warmstart  -- dense phase until a trigger, then the sparsified method
  defaults   -- print the full default config
  presets    -- list or materialize packaged study configs

All emitted CSVs carry per-seed curves plus pointwise median / interquartile
rows over the common prefix; no resampling or smoothing.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import configparser
import csv
import io
import json
import os
import sys
from dataclasses import asdict, dataclass, field

import numpy as np

from . import data, engine, metrics, problem as pb, recondition as rc
from .sparsifier import uniform_distribution

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_TARGET = 4

ALGORITHMS = ("davepg", "spy-uniform", "spy-slowdown", "reconditioned", "catalyst")
PROBLEM_KINDS = ("synthetic-lasso", "synthetic-logistic", "libsvm-lasso", "libsvm-logistic")
SCHEDULES = ("round_robin", "random_uniform", "heterogeneous")

DEFAULTS = {
    "problem": {
        "kind": "synthetic-lasso",
        "d": "1000",
        "m": "500",
        "sparsity": "0.99",
        "noise_std": "0.01",
        "data_seed": "0",
        "path": "",
        "lam1": "",
        "target_support": "12",
        "lam2": "0.001",
        "scale": "false",
    },
    "run": {
        "algorithm": "reconditioned",
        "workers": "5",
        "pi": "0.3",
        "c": "12",
        "criterion": "fixed",
        "epochs": "1",
        "delta": "0.5",
        "schedule": "random_uniform",
        "weights": "",
        "seeds": "1,2,3,4,5,6,7,8,9,10",
        "target_eps": "1e-6",
        "max_iterations": "200000",
        "outer_budget": "600",
        "log_stride": "20",
        "gamma_frac": "1.0",
        "ref_tol": "1e-12",
    },
    "warmstart": {
        "algorithm": "davepg",
        "subopt_threshold": "1e-2",
        "density_threshold": "0.01",
        "max_epochs": "2000",
    },
}


class ConfigError(ValueError):
    """Carries every validation problem found in a config at once."""

    def __init__(self, problems):
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {p}" for p in problems))
        self.problems = list(problems)


@dataclass
class ExperimentConfig:
    # problem
    kind: str = "synthetic-lasso"
    d: int = 1000
    m: int = 500
    sparsity: float = 0.99
    noise_std: float = 0.01
    data_seed: int = 0
    path: str = ""
    lam1: float | None = None
    target_support: int | None = 12
    lam2: float = 0.001
    scale: bool = False
    # run
    algorithm: str = "reconditioned"
    workers: int = 5
    pi: float = 0.3
    c: float = 12.0
    criterion: str = "fixed"
    epochs: int = 1
    delta: float = 0.5
    schedule: str = "random_uniform"
    weights: tuple = ()
    seeds: tuple = (1, 2, 3, 4, 5, 6, 7, 8, 9, 10)
    target_eps: float = 1e-6
    max_iterations: int = 200000
    outer_budget: int = 600
    log_stride: int = 20
    gamma_frac: float = 1.0
    ref_tol: float = 1e-12
    # warmstart
    warmstart: bool = False
    ws_algorithm: str = "davepg"
    ws_subopt: float = 1e-2
    ws_density: float = 0.01
    ws_max_epochs: int = 2000

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        cp["problem"] = {
            "kind": self.kind,
            "d": str(self.d),
            "m": str(self.m),
            "sparsity": repr(self.sparsity),
            "noise_std": repr(self.noise_std),
            "data_seed": str(self.data_seed),
            "path": self.path,
            "lam1": "" if self.lam1 is None else repr(self.lam1),
            "target_support": "" if self.target_support is None else str(self.target_support),
            "lam2": repr(self.lam2),
            "scale": str(self.scale).lower(),
        }
        cp["run"] = {
            "algorithm": self.algorithm,
            "workers": str(self.workers),
            "pi": repr(self.pi),
            "c": repr(self.c),
            "criterion": self.criterion,
            "epochs": str(self.epochs),
            "delta": repr(self.delta),
            "schedule": self.schedule,
            "weights": ",".join(repr(w) for w in self.weights),
            "seeds": ",".join(str(s) for s in self.seeds),
            "target_eps": repr(self.target_eps),
            "max_iterations": str(self.max_iterations),
            "outer_budget": str(self.outer_budget),
            "log_stride": str(self.log_stride),
            "gamma_frac": repr(self.gamma_frac),
            "ref_tol": repr(self.ref_tol),
        }
        if self.warmstart:
            cp["warmstart"] = {
                "algorithm": self.ws_algorithm,
                "subopt_threshold": repr(self.ws_subopt),
                "density_threshold": repr(self.ws_density),
                "max_epochs": str(self.ws_max_epochs),
            }
        out = io.StringIO()
        cp.write(out)
        return out.getvalue()


def default_config_text() -> str:
    cp = configparser.ConfigParser()
    for section, kv in DEFAULTS.items():
        cp[section] = dict(kv)
    out = io.StringIO()
    cp.write(out)
    return out.getvalue()


def parse_config(text: str) -> ExperimentConfig:
    """Parse an INI config on top of the embedded defaults, validating fully."""
    cp = configparser.ConfigParser()
    cp.read_dict({k: dict(v) for k, v in DEFAULTS.items() if k != "warmstart"})
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"malformed config: {exc}"]) from None
    problems: list[str] = []

    def get(section, key, conv, check=None, allow_empty=False):
        raw = cp.get(section, key, fallback=DEFAULTS.get(section, {}).get(key, ""))
        if raw == "":
            if allow_empty:
                return None
            problems.append(f"[{section}] {key} must be set")
            return None
        try:
            val = conv(raw)
        except Exception:
            problems.append(f"[{section}] {key}={raw!r} is not a valid {conv.__name__}")
            return None
        if check is not None and not check(val):
            problems.append(f"[{section}] {key}={raw!r} out of range")
            return None
        return val

    def boolean(raw):
        low = raw.strip().lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ValueError(raw)

    def int_list(raw):
        return tuple(int(t) for t in raw.split(",") if t.strip())

    def float_list(raw):
        return tuple(float(t) for t in raw.split(",") if t.strip())

    kind = get("problem", "kind", str, lambda v: v in PROBLEM_KINDS)
    cfg = ExperimentConfig()
    cfg.kind = kind or cfg.kind
    cfg.d = get("problem", "d", int, lambda v: v >= 1) or cfg.d
    cfg.m = get("problem", "m", int, lambda v: v >= 1) or cfg.m
    cfg.sparsity = _or(get("problem", "sparsity", float, lambda v: 0 <= v <= 1), cfg.sparsity)
    cfg.noise_std = _or(get("problem", "noise_std", float, lambda v: v >= 0), cfg.noise_std)
    cfg.data_seed = _or(get("problem", "data_seed", int), cfg.data_seed)
    cfg.path = cp.get("problem", "path", fallback="")
    cfg.lam1 = get("problem", "lam1", float, lambda v: v > 0, allow_empty=True)
    cfg.target_support = get("problem", "target_support", int, lambda v: v >= 1, allow_empty=True)
    cfg.lam2 = _or(get("problem", "lam2", float, lambda v: v >= 0), cfg.lam2)
    cfg.scale = _or(get("problem", "scale", boolean), cfg.scale)

    cfg.algorithm = get("run", "algorithm", str, lambda v: v in ALGORITHMS) or cfg.algorithm
    cfg.workers = get("run", "workers", int, lambda v: v >= 1) or cfg.workers
    cfg.pi = _or(get("run", "pi", float, lambda v: 0 < v <= 1), cfg.pi)
    cfg.c = _or(get("run", "c", float, lambda v: v > 0), cfg.c)
    cfg.criterion = get("run", "criterion", str) or cfg.criterion
    cfg.epochs = _or(get("run", "epochs", int, lambda v: v >= 1), cfg.epochs)
    cfg.delta = _or(get("run", "delta", float, lambda v: 0 < v < 1), cfg.delta)
    cfg.schedule = get("run", "schedule", str, lambda v: v in SCHEDULES) or cfg.schedule
    cfg.weights = _or(get("run", "weights", float_list, allow_empty=True), ())
    cfg.seeds = get("run", "seeds", int_list, lambda v: len(v) > 0) or cfg.seeds
    cfg.target_eps = _or(get("run", "target_eps", float, lambda v: v > 0), cfg.target_eps)
    cfg.max_iterations = _or(get("run", "max_iterations", int, lambda v: v >= 1), cfg.max_iterations)
    cfg.outer_budget = _or(get("run", "outer_budget", int, lambda v: v >= 1), cfg.outer_budget)
    cfg.log_stride = _or(get("run", "log_stride", int, lambda v: v >= 1), cfg.log_stride)
    cfg.gamma_frac = _or(get("run", "gamma_frac", float, lambda v: 0 < v <= 1), cfg.gamma_frac)
    cfg.ref_tol = _or(get("run", "ref_tol", float, lambda v: v > 0), cfg.ref_tol)

    if cp.has_section("warmstart"):
        cfg.warmstart = True
        cfg.ws_algorithm = (
            get("warmstart", "algorithm", str, lambda v: v in ("davepg", "spy-uniform"))
            or cfg.ws_algorithm
        )
        cfg.ws_subopt = _or(get("warmstart", "subopt_threshold", float, lambda v: v > 0), cfg.ws_subopt)
        cfg.ws_density = _or(get("warmstart", "density_threshold", float, lambda v: 0 < v <= 1), cfg.ws_density)
        cfg.ws_max_epochs = _or(get("warmstart", "max_epochs", int, lambda v: v >= 1), cfg.ws_max_epochs)

    # cross-field validation
    if cfg.kind.startswith("libsvm"):
        if not cfg.path:
            problems.append("[problem] path required for libsvm datasets")
        elif not os.path.exists(cfg.path):
            problems.append(f"[problem] dataset file not found: {cfg.path}")
    if cfg.kind.startswith("synthetic") and cfg.kind.endswith("lasso"):
        if cfg.lam1 is None and cfg.target_support is None:
            problems.append("[problem] set lam1 or target_support")
    elif cfg.lam1 is None:
        cfg.lam1 = 0.03  # logistic default weight when uncalibrated
    if cfg.algorithm in ("reconditioned", "catalyst"):
        valid = ("budget", "fixed", "absolute", "relative") if cfg.algorithm == "reconditioned" \
            else ("fixed", "absolute", "adaptive")
        if cfg.criterion not in valid:
            problems.append(f"[run] criterion {cfg.criterion!r} invalid for {cfg.algorithm} (use one of {valid})")
    if cfg.schedule == "heterogeneous" and len(cfg.weights) != cfg.workers:
        problems.append("[run] heterogeneous schedule needs one weight per worker")
    if problems:
        raise ConfigError(problems)
    return cfg


def _or(value, fallback):
    return fallback if value is None else value


def load_config(path: str) -> ExperimentConfig:
    if not os.path.exists(path):
        raise ConfigError([f"config file not found: {path}"])
    with open(path) as fh:
        return parse_config(fh.read())


# -- problem construction ----------------------------------------------------


def build_problem(cfg: ExperimentConfig):
    """Deterministic problem instance for a config (independent of run seeds)."""
    if cfg.kind == "synthetic-lasso":
        dataset, _ = data.generate_lasso(cfg.d, cfg.m, cfg.sparsity, cfg.noise_std, cfg.data_seed)
    elif cfg.kind == "synthetic-logistic":
        dataset, _ = data.generate_lasso(cfg.d, cfg.m, cfg.sparsity, cfg.noise_std, cfg.data_seed)
        dataset = data.Dataset(X=dataset.X, y=np.sign(dataset.y) + (dataset.y == 0))
    else:
        dataset = data.parse_libsvm(cfg.path)
    if cfg.scale:
        dataset = data.scale_features(dataset)
    plan = data.shard_even(dataset, cfg.workers, seed=cfg.data_seed)
    lasso = cfg.kind.endswith("lasso")
    if lasso and cfg.lam1 is None:
        lam_hi = _lam_max(dataset, plan)
        lam1 = metrics.calibrate_l1(
            lambda lam: data.lasso_problem(dataset, plan, lam),
            cfg.target_support, lam_hi,
        )
        cfg.lam1 = lam1
    if lasso:
        return data.lasso_problem(dataset, plan, cfg.lam1)
    return data.logistic_problem(dataset, plan, cfg.lam1, cfg.lam2)


def _lam_max(dataset, plan) -> float:
    """Smallest l1 weight giving the all-zero lasso solution."""
    prob = data.lasso_problem(dataset, plan, 1.0)
    g = pb.smooth_gradient(prob, np.zeros(dataset.d))
    return float(np.max(np.abs(g)))


def get_reference(problem, cfg: ExperimentConfig, cache_dir=None) -> metrics.ReferenceSolution:
    return metrics.reference_solution(
        problem, tol=cfg.ref_tol, cache_dir=cache_dir, assume_unique_minimizer=True
    )


# -- single-seed execution ---------------------------------------------------


def _make_schedule(cfg: ExperimentConfig, seed: int) -> engine.DelaySchedule:
    if cfg.schedule == "round_robin":
        return engine.DelaySchedule.round_robin(cfg.workers)
    if cfg.schedule == "heterogeneous":
        return engine.DelaySchedule.heterogeneous(cfg.weights, seed)
    return engine.DelaySchedule.random_uniform(cfg.workers, seed)


def run_algorithm(problem, cfg: ExperimentConfig, seed: int,
                  ref: metrics.ReferenceSolution, mode: str = "sim",
                  init: np.ndarray | None = None, algorithm: str | None = None):
    """One seed of the configured algorithm; returns an engine or outer trace."""
    algorithm = algorithm or cfg.algorithm
    d = problem.dim
    init = np.zeros(d) if init is None else init
    target = ref.f_star + cfg.target_eps
    schedule = _make_schedule(cfg, seed)
    if algorithm in ("davepg", "spy-uniform", "spy-slowdown"):
        gamma = cfg.gamma_frac * engine.gamma_max(problem)
        stop = engine.StopRule(max_iterations=cfg.max_iterations, target_objective=target)
        if algorithm == "davepg":
            return engine.run_davepg(problem, gamma, schedule, init, stop, seed=seed,
                                     dense_down=True, objective_stride=cfg.log_stride, mode=mode)
        if algorithm == "spy-uniform":
            dist = uniform_distribution(d, cfg.pi)
            return engine.run_spy(problem, gamma, dist, schedule, init, stop, seed=seed,
                                  objective_stride=cfg.log_stride, mode=mode)
        return engine.run_adaptive_spy_slowdown(problem, gamma, cfg.pi, schedule, init, stop,
                                                seed=seed, objective_stride=cfg.log_stride)
    params = rc.make_params(problem.mu, problem.lip, cfg.c, d, delta=cfg.delta)
    if algorithm == "reconditioned":
        criterion = rc.InnerCriterion(kind=cfg.criterion, epochs=cfg.epochs)
        return rc.run_reconditioned(problem, params, schedule, init, criterion=criterion,
                                    outer_budget=cfg.outer_budget, target_objective=target,
                                    seed=seed, objective_stride=cfg.log_stride, mode=mode)
    criterion = rc.MomentumCriterion(kind=cfg.criterion, epochs=cfg.epochs,
                                     f_star=ref.f_star if cfg.criterion == "absolute" else None)
    return rc.run_momentum(problem, params, schedule, init, criterion=criterion,
                           outer_budget=cfg.outer_budget, target_objective=target,
                           seed=seed, objective_stride=cfg.log_stride, mode=mode)


# -- curve extraction and CSV emission ---------------------------------------


def _subopt_curves(trace, f_star, up_offset=0, down_offset=0, iter_offset=0):
    """[(iteration, exchanged, gap)] from a trace's objective log."""
    out = []
    for point in trace.objective_log:
        if hasattr(point, "value"):
            it, up, down, value = point.k, point.cum_up, point.cum_down, point.value
        else:
            it, up, down, value = point
        out.append((max(it, 0) + iter_offset, up + up_offset + down + down_offset, value - f_star))
    return out


def _support_curve(trace, stride=1, iter_offset=0):
    """[(iteration-or-outer-step, support_size)]."""
    if hasattr(trace, "centers"):
        return [(r.ell, r.support_size) for r in trace.records]
    return [(r.k + iter_offset, r.support_size) for r in trace.records[::stride]]


def _write_curves_csv(path, header, per_seed):
    """per_seed: {label: [(x, y), ...]}; adds pointwise median/q25/q75 rows."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["seed", "point"] + header)
        for label, curve in per_seed.items():
            for idx, row in enumerate(curve):
                w.writerow([label, idx] + list(row))
        if len(per_seed) > 1:
            curves = list(per_seed.values())
            n = min(len(c) for c in curves)
            for name, q in (("median", 50), ("q25", 25), ("q75", 75)):
                for idx in range(n):
                    vals = np.array([c[idx] for c in curves], dtype=float)
                    w.writerow([name, idx] + list(np.percentile(vals, q, axis=0)))


@dataclass
class SeedResult:
    seed: int
    status: str  # ok | target-not-reached | diverged
    final_gap: float | None = None
    iterations: int = 0
    cum_up: int = 0
    cum_down: int = 0
    identification: int | None = None
    error: str = ""
    trace: object = None
    subopt: list = field(default_factory=list)
    support: list = field(default_factory=list)


def _execute_seed(problem, cfg, seed, ref, mode) -> SeedResult:
    try:
        trace = run_algorithm(problem, cfg, seed, ref, mode=mode)
    except engine.DivergenceError as exc:
        return SeedResult(seed=seed, status="diverged", error=str(exc))
    gap = pb.eval_objective(problem, trace.final_x) - ref.f_star
    status = "ok" if gap <= cfg.target_eps else "target-not-reached"
    n_iter = trace.n_iterations if hasattr(trace, "n_iterations") else trace.total_iterations
    return SeedResult(
        seed=seed, status=status, final_gap=gap, iterations=n_iter,
        cum_up=trace.cum_up, cum_down=trace.cum_down,
        identification=metrics.identification_time(trace, ref),
        trace=trace,
        subopt=_subopt_curves(trace, ref.f_star),
        support=_support_curve(trace, stride=cfg.log_stride),
    )


def _run_seeds(problem, cfg, ref, mode, jobs=None) -> list[SeedResult]:
    workers = min(len(cfg.seeds), jobs or (os.cpu_count() or 1))
    if workers <= 1:
        return [_execute_seed(problem, cfg, s, ref, mode) for s in cfg.seeds]
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_execute_seed, problem, cfg, s, ref, mode) for s in cfg.seeds]
        return [f.result() for f in futures]


def _emit_experiment(out_dir, cfg, problem, ref, results, extra_summary=None):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.ini"), "w") as fh:
        fh.write(cfg.to_ini())
    for r in results:
        if r.trace is not None:
            path = os.path.join(out_dir, f"trace_seed{r.seed}.csv")
            if hasattr(r.trace, "centers"):
                r.trace.to_csv(path, f_star=ref.f_star)
            else:
                r.trace.to_csv(path)
    ok = {str(r.seed): r for r in results if r.status != "diverged"}
    _write_curves_csv(
        os.path.join(out_dir, "support_vs_iters.csv"),
        ["iteration", "support_size"],
        {label: r.support for label, r in ok.items()},
    )
    _write_curves_csv(
        os.path.join(out_dir, "subopt_vs_iters.csv"),
        ["iteration", "gap"],
        {label: [(it, gap) for it, _, gap in r.subopt] for label, r in ok.items()},
    )
    _write_curves_csv(
        os.path.join(out_dir, "subopt_vs_exchanges.csv"),
        ["exchanged", "gap"],
        {label: [(ex, gap) for _, ex, gap in r.subopt] for label, r in ok.items()},
    )
    margin = None
    if problem.reg.kind in ("l1", "weighted_l1"):
        margin = metrics.check_nondegeneracy(problem, ref)
    summary = {
        "fingerprint": ref.fingerprint,
        "f_star": ref.f_star,
        "s_star": ref.s_star,
        "nondegeneracy_margin": margin,
        "lam1": cfg.lam1,
        "algorithm": cfg.algorithm,
        "seeds": {
            str(r.seed): {
                "status": r.status,
                "final_gap": r.final_gap,
                "iterations": r.iterations,
                "coords_up": r.cum_up,
                "coords_down": r.cum_down,
                "identification": r.identification,
                "error": r.error,
            }
            for r in results
        },
        "identification_times": [r.identification for r in results],
    }
    if extra_summary:
        summary.update(extra_summary)
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, default=float)
    return summary


def _exit_code(results) -> int:
    if all(r.status == "diverged" for r in results):
        return EXIT_DIVERGED
    if not any(r.status == "ok" for r in results):
        return EXIT_TARGET
    return EXIT_OK


# -- subcommands -------------------------------------------------------------


def cmd_run(cfg: ExperimentConfig, out_dir: str, mode: str, cache_dir=None) -> int:
    problem = build_problem(cfg)
    ref = get_reference(problem, cfg, cache_dir)
    results = _run_seeds(problem, cfg, ref, mode)
    _emit_experiment(out_dir, cfg, problem, ref, results)
    return _exit_code(results)


def cmd_compare(cfgs, labels, out_dir: str, mode: str, cache_dir=None) -> int:
    problems = [build_problem(c) for c in cfgs]
    fps = [metrics.problem_fingerprint(p) for p in problems]
    if len(set(fps)) != 1:
        print("error: compare requires identical problems in every config", file=sys.stderr)
        return EXIT_CONFIG
    problem = problems[0]
    ref = get_reference(problem, cfgs[0], cache_dir)
    os.makedirs(out_dir, exist_ok=True)
    merged = []
    codes = []
    for cfg, label in zip(cfgs, labels):
        results = _run_seeds(problem, cfg, ref, mode)
        sub = os.path.join(out_dir, label)
        _emit_experiment(sub, cfg, problem, ref, results)
        codes.append(_exit_code(results))
        for r in results:
            if r.status == "diverged":
                continue
            for idx, (it, ex, gap) in enumerate(r.subopt):
                merged.append((label, r.seed, idx, it, ex, gap))
    with open(os.path.join(out_dir, "compare_subopt.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["label", "seed", "point", "iteration", "exchanged", "gap"])
        w.writerows(merged)
    return max(codes)


def cmd_warmstart(cfg: ExperimentConfig, out_dir: str, mode: str, cache_dir=None) -> int:
    if not cfg.warmstart:
        print("error: config has no [warmstart] section", file=sys.stderr)
        return EXIT_CONFIG
    problem = build_problem(cfg)
    ref = get_reference(problem, cfg, cache_dir)
    d = problem.dim

    def triggered(x):
        gap = pb.eval_objective(problem, x) - ref.f_star
        density = np.count_nonzero(x) / d
        return gap <= cfg.ws_subopt and density <= cfg.ws_density

    results = []
    phase1_info = {}
    for seed in cfg.seeds:
        init = np.zeros(d)
        up0 = down0 = it0 = 0
        if triggered(init):
            phase1 = None  # trigger already satisfied; dense phase skipped
        else:
            gamma = cfg.gamma_frac * engine.gamma_max(problem)
            stop = engine.StopRule(
                max_epochs=cfg.ws_max_epochs,
                epoch_predicate=lambda x, m: triggered(x),
            )
            schedule = _make_schedule(cfg, seed)
            if cfg.ws_algorithm == "davepg":
                phase1 = engine.run_davepg(problem, gamma, schedule, init, stop, seed=seed,
                                           dense_down=True, objective_stride=cfg.log_stride,
                                           mode=mode)
            else:
                dist = uniform_distribution(d, cfg.pi)
                phase1 = engine.run_spy(problem, gamma, dist, schedule, init, stop, seed=seed,
                                        objective_stride=cfg.log_stride, mode=mode)
            if not triggered(phase1.final_x):
                print(f"error: seed {seed}: warmstart trigger unreachable within "
                      f"{cfg.ws_max_epochs} epochs", file=sys.stderr)
                return EXIT_TARGET
            init = phase1.final_x.copy()
            up0, down0, it0 = phase1.cum_up, phase1.cum_down, phase1.n_iterations
        try:
            trace = run_algorithm(problem, cfg, seed, ref, mode=mode, init=init)
        except engine.DivergenceError as exc:
            results.append(SeedResult(seed=seed, status="diverged", error=str(exc)))
            continue
        gap = pb.eval_objective(problem, trace.final_x) - ref.f_star
        status = "ok" if gap <= cfg.target_eps else "target-not-reached"
        n_iter = it0 + (trace.n_iterations if hasattr(trace, "n_iterations") else trace.total_iterations)
        subopt = ([] if phase1 is None else _subopt_curves(phase1, ref.f_star)) + \
            _subopt_curves(trace, ref.f_star, up_offset=up0, down_offset=down0, iter_offset=it0)
        support = ([] if phase1 is None else _support_curve(phase1, stride=cfg.log_stride)) + \
            _support_curve(trace, stride=cfg.log_stride, iter_offset=it0)
        total = up0 + down0 + trace.cum_up + trace.cum_down
        results.append(SeedResult(
            seed=seed, status=status, final_gap=gap, iterations=n_iter,
            cum_up=up0 + trace.cum_up, cum_down=down0 + trace.cum_down,
            identification=metrics.identification_time(trace, ref),
            trace=trace, subopt=subopt, support=support,
        ))
        phase1_info[str(seed)] = {
            "phase1_exchanges": up0 + down0,
            "total_exchanges": total,
            "phase1_fraction": (up0 + down0) / total if total else 0.0,
        }
    _emit_experiment(out_dir, cfg, problem, ref, results,
                     extra_summary={"warmstart": phase1_info})
    return _exit_code(results)


# -- presets -----------------------------------------------------------------


def preset_configs(name: str) -> tuple[list[ExperimentConfig], list[str]]:
    """Packaged study configs; all desk-scale and fully synthetic."""
    if name == "sm1":
        # uniform sparsification at several rates vs the dense baseline on a
        # logistic elastic-net problem (synthetic stand-in for the paper-scale
        # dataset, which is not bundled)
        base = {
            "kind": "synthetic-logistic", "d": 200, "m": 600, "sparsity": 0.9,
            "noise_std": 0.0, "data_seed": 3, "lam1": 0.005, "lam2": 0.01,
            "workers": 4, "seeds": tuple(range(1, 11)), "target_eps": 1e-6,
            "max_iterations": 300000, "log_stride": 50,
        }
        cfgs, labels = [], []
        cfgs.append(_mk(base, algorithm="davepg"))
        labels.append("davepg")
        for piv in (0.1, 0.3, 0.6):
            cfgs.append(_mk(base, algorithm="spy-uniform", pi=piv))
            labels.append(f"spy-uniform-{piv}")
        return cfgs, labels
    if name == "sm7":
        # one-epoch fixed budget vs the displacement-relative inner criterion
        base = {
            "kind": "synthetic-lasso", "d": 300, "m": 200, "sparsity": 0.96,
            "noise_std": 0.01, "data_seed": 5, "target_support": 12, "lam1": None,
            "workers": 5, "c": 12.0, "seeds": tuple(range(1, 11)),
            "target_eps": 1e-8, "outer_budget": 3000, "log_stride": 10,
        }
        return (
            [_mk(base, algorithm="reconditioned", criterion="fixed", epochs=1),
             _mk(base, algorithm="reconditioned", criterion="relative")],
            ["fixed-1-epoch", "relative"],
        )
    if name == "fig-lasso":
        # exploration budget sweep around the optimal support size
        base = {
            "kind": "synthetic-lasso", "d": 1000, "m": 500, "sparsity": 0.99,
            "noise_std": 0.01, "data_seed": 0, "target_support": 12, "lam1": None,
            "workers": 5, "seeds": tuple(range(1, 11)), "target_eps": 1e-6,
            "outer_budget": 2000, "log_stride": 50,
        }
        s_star = 12
        cfgs, labels = [], []
        for cval in (s_star / 3, s_star, 3 * s_star, 10 * s_star):
            cfgs.append(_mk(base, algorithm="reconditioned", criterion="fixed",
                            epochs=1, c=float(cval)))
            labels.append(f"c-{cval:g}")
        cfgs.append(_mk(base, algorithm="davepg"))
        labels.append("davepg")
        return cfgs, labels
    raise ConfigError([f"unknown preset {name!r} (available: sm1, sm7, fig-lasso)"])


def _mk(base: dict, **overrides) -> ExperimentConfig:
    cfg = ExperimentConfig()
    for k, v in {**base, **overrides}.items():
        setattr(cfg, k, v)
    return cfg


# -- entry point -------------------------------------------------------------


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="sparsepg",
        description="Asynchronous proximal gradient with sparsified communication",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", action="append", default=[],
                       required=False, help="experiment config file (INI)")
        p.add_argument("--out", default="experiment-out", help="output directory")
        p.add_argument("--seeds", default=None, help="comma-separated seed override")
        p.add_argument("--mode", choices=("sim", "concurrent"), default="sim")
        p.add_argument("--cache-dir", default=None,
                       help=f"reference-solution cache (default ${metrics.CACHE_ENV})")

    common(sub.add_parser("run", help="run one experiment across seeds"))
    pc = sub.add_parser("compare", help="run several configs on one problem")
    common(pc)
    pc.add_argument("--preset", default=None, help="packaged study: sm1, sm7, fig-lasso")
    common(sub.add_parser("warmstart", help="dense warmstart then sparsified phase"))
    sub.add_parser("defaults", help="print the default config")
    pp = sub.add_parser("presets", help="list packaged presets or write their configs")
    pp.add_argument("--out", default=None, help="write preset configs here")
    return parser


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    if args.seeds:
        cfg.seeds = tuple(int(s) for s in args.seeds.split(",") if s.strip())
    return cfg


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "defaults":
        print(default_config_text(), end="")
        return EXIT_OK
    if args.command == "presets":
        for name in ("sm1", "sm7", "fig-lasso"):
            cfgs, labels = preset_configs(name)
            print(f"{name}: {', '.join(labels)}")
            if args.out:
                os.makedirs(args.out, exist_ok=True)
                for cfg, label in zip(cfgs, labels):
                    with open(os.path.join(args.out, f"{name}-{label}.ini"), "w") as fh:
                        fh.write(cfg.to_ini())
        return EXIT_OK
    try:
        if args.command == "compare" and args.preset:
            cfgs, labels = preset_configs(args.preset)
            for c in cfgs:
                _apply_overrides(c, args)
        else:
            if not args.config:
                print("error: --config is required", file=sys.stderr)
                return EXIT_CONFIG
            cfgs = [_apply_overrides(load_config(p), args) for p in args.config]
            labels = [os.path.splitext(os.path.basename(p))[0] for p in args.config]
        if args.command == "run":
            if len(cfgs) != 1:
                print("error: run takes exactly one --config", file=sys.stderr)
                return EXIT_CONFIG
            return cmd_run(cfgs[0], args.out, args.mode, args.cache_dir)
        if args.command == "warmstart":
            if len(cfgs) != 1:
                print("error: warmstart takes exactly one --config", file=sys.stderr)
                return EXIT_CONFIG
            return cmd_warmstart(cfgs[0], args.out, args.mode, args.cache_dir)
        if len(cfgs) < 2:
            print("error: compare needs at least two configs or a --preset", file=sys.stderr)
            return EXIT_CONFIG
        return cmd_compare(cfgs, labels, args.out, args.mode, args.cache_dir)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
