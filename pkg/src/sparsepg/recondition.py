"""Proximally reconditioned outer loop with adaptive sparsification.

Each outer step ell solves, inexactly and with the asynchronous sparsified
engine, the reconditioned problem

    H_ell = sum_i alpha_i (f_i + (rho/2)||. - center_ell||^2) + r,

with selection probability 1 on the support of the current center and a small
exploration probability elsewhere.  Several inner stopping criteria are
provided: a fixed per-step epoch budget derived from the theory ("budget"),
a fixed constant number of epochs ("fixed"), and two validation-style rules
comparing the inner iterate to the exact proximal point ("absolute",
"relative").  A momentum (accelerated) variant centers each step at an
extrapolated point.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import direct
from . import problem as pb
from .engine import DelaySchedule, RunTrace, StopRule, run_spy
from .sparsifier import adaptive_distribution

_SEED_STRIDE = 100_003


class InnerBudgetError(RuntimeError):
    """An inner run hit its safety cap before meeting its stopping test."""


@dataclass(frozen=True)
class ReconditionParams:
    """Derived constants for the reconditioned scheme."""

    c: float
    d: int
    mu: float
    lip: float
    delta: float
    pi: float          # baseline exploration probability c/d
    alpha: float       # probability margin c/(2d)
    kappa: float       # target condition number of the reconditioned problem
    rho: float         # reconditioning weight (0 when the problem is already well conditioned)
    gamma: float       # inner stepsize

    @property
    def needs_reconditioning(self) -> bool:
        return self.rho > 0

    def inner_contraction(self, pi_ell: float) -> float:
        """Per-epoch contraction factor 1 - alpha_ell of the inner runs."""
        rate = 1.0 - self.alpha - (pi_ell - self.pi)
        return max(rate, 0.0)

    @property
    def outer_rate(self) -> float:
        """Per-step contraction of ||x_ell - x*||^2 for exact proximal steps."""
        if self.mu == 0:
            return 1.0
        return 1.0 - self.mu / (self.mu + self.rho / 2.0)


def make_params(
    mu: float,
    lip: float,
    c: float,
    d: int,
    delta: float = 0.5,
    gamma: float | None = None,
) -> ReconditionParams:
    """Choose (rho, gamma) so that exploration probability pi = c/d is safe.

    The reconditioned problem is given condition number kappa such that masks
    with p_min >= pi - alpha still contract, leaving a margin alpha = c/(2d)
    for the adaptive probabilities.
    """
    if not 0 < c <= d:
        raise ValueError("exploration budget c must lie in (0, d]")
    if not 0 <= mu <= lip:
        raise ValueError("need 0 <= mu <= L")
    if lip <= 0:
        raise ValueError("L must be positive")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    pi = c / d
    alpha = c / (2.0 * d)
    s = math.sqrt(pi - alpha)
    kappa = (1.0 - s) / (1.0 + s)
    rho = (kappa * lip - mu) / (1.0 - kappa)
    if rho <= 0:
        rho = 0.0  # already conditioned enough for this exploration level
    g_max = 2.0 / (mu + lip + 2.0 * rho)
    if gamma is None:
        gamma = g_max
    elif not 0 < gamma <= g_max * (1 + 1e-12):
        raise ValueError(f"gamma={gamma} outside (0, {g_max}]")
    return ReconditionParams(
        c=c, d=d, mu=mu, lip=lip, delta=delta,
        pi=pi, alpha=alpha, kappa=kappa, rho=rho, gamma=gamma,
    )


def epoch_budget(ell: int, params: ReconditionParams, pi_ell: float) -> int:
    """Inner epoch count guaranteeing the required outer accuracy at step ell."""
    if ell < 1:
        raise ValueError("outer steps are counted from 1")
    rate = 1.0 - params.alpha - (pi_ell - params.pi)
    if rate >= 1.0:
        raise ValueError("inner runs do not contract with these probabilities")
    rate = max(rate, 1e-300)
    log_inv = math.log(1.0 / rate)
    delta = params.delta
    mu, rho = params.mu, params.rho
    if rho <= 0:
        raise ValueError("epoch budget undefined without reconditioning (rho = 0)")
    m = (1.0 + delta) * math.log(ell) / log_inv
    m += math.log((2.0 * mu + rho) / ((1.0 - delta) * rho)) / log_inv
    return max(int(math.ceil(m)), 1)


def prox_oracle(
    problem: pb.CompositeProblem,
    rho: float,
    center: np.ndarray,
    tol: float = 1e-11,
    x0: np.ndarray | None = None,
) -> np.ndarray:
    """prox_{F/rho}(center) to distance tol, by the direct solver."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    sub = pb.reconditioned(problem, rho, np.asarray(center, dtype=float))
    x, _ = direct.solve(sub, tol=tol, x0=center if x0 is None else x0)
    return x


# -- outer trace -------------------------------------------------------------


@dataclass
class OuterRecord:
    ell: int
    pi_ell: float
    inner_epochs: int
    inner_iterations: int
    support_size: int
    cum_up: int
    cum_down: int
    objective: float


@dataclass
class OuterTrace:
    """Per-outer-step log plus the concatenated fine-grained objective log."""

    records: list = field(default_factory=list)
    centers: list = field(default_factory=list)
    inner_traces: list = field(default_factory=list)
    objective_log: list = field(default_factory=list)  # (iter, cum_up, cum_down, F)
    final_x: np.ndarray | None = None

    @property
    def n_outer(self) -> int:
        return len(self.records)

    @property
    def cum_up(self) -> int:
        return self.records[-1].cum_up if self.records else 0

    @property
    def cum_down(self) -> int:
        return self.records[-1].cum_down if self.records else 0

    @property
    def total_iterations(self) -> int:
        return sum(r.inner_iterations for r in self.records)

    def to_csv(self, path, f_star: float | None = None) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["ell", "pi_ell", "inner_epochs", "inner_iterations",
                        "support_size", "cum_up", "cum_down", "objective", "gap"])
            for r in self.records:
                gap = "" if f_star is None else r.objective - f_star
                w.writerow([r.ell, r.pi_ell, r.inner_epochs, r.inner_iterations,
                            r.support_size, r.cum_up, r.cum_down, r.objective, gap])


# -- stopping criteria -------------------------------------------------------


@dataclass(frozen=True)
class InnerCriterion:
    """How each inner run decides it is accurate enough.

    kinds:
      budget    -- run exactly the theory-derived epoch budget for step ell
      fixed     -- run a constant number of epochs (``epochs``)
      absolute  -- stop once ||x - prox||^2 falls below a step-indexed
                   absolute threshold (needs the exact proximal point)
      relative  -- stop once ||x - prox||^2 is small relative to the realized
                   displacement ||x - center||^2 (needs the proximal point)
    """

    kind: str = "budget"
    epochs: int = 1
    safety_epochs: int = 20_000
    oracle_tol: float = 1e-11

    def __post_init__(self):
        if self.kind not in ("budget", "fixed", "absolute", "relative"):
            raise ValueError(f"unknown inner criterion {self.kind!r}")
        if self.kind == "fixed" and self.epochs < 1:
            raise ValueError("fixed criterion needs epochs >= 1")


def _inner_stop(criterion, ell, params, pi_ell, problem, center):
    """Build the engine StopRule plus the proximal point when one is needed."""
    if criterion.kind == "budget":
        return StopRule(max_epochs=epoch_budget(ell, params, pi_ell)), None
    if criterion.kind == "fixed":
        return StopRule(max_epochs=criterion.epochs), None
    prox_pt = prox_oracle(problem, params.rho, center, tol=criterion.oracle_tol)
    mu, rho, delta = params.mu, params.rho, params.delta
    if criterion.kind == "absolute":
        thresh = (1.0 - delta) * rho / ((2.0 * mu + rho) * ell ** (1.0 + delta))
        thresh *= float(np.sum((center - prox_pt) ** 2))

        def pred(x, m):
            return float(np.sum((x - prox_pt) ** 2)) <= thresh
    else:  # relative
        coeff = rho / (4.0 * (2.0 * mu + rho) * ell ** (2.0 + 2.0 * delta))

        def pred(x, m):
            return float(np.sum((x - prox_pt) ** 2)) <= coeff * float(np.sum((x - center) ** 2))

    return StopRule(max_epochs=criterion.safety_epochs, epoch_predicate=pred), prox_pt


def _check_probability_chain(params: ReconditionParams, pi_ell: float):
    """The adaptive probabilities must keep the inner runs contracting."""
    floor = (1.0 - params.gamma * (params.mu + params.rho)) ** 2
    lo = params.pi - params.alpha
    if pi_ell < params.pi - 1e-12 or lo < floor - 1e-9:
        raise RuntimeError(
            f"probability chain violated: pi_ell={pi_ell}, pi={params.pi}, "
            f"pi-alpha={lo}, (1-gamma(mu+rho))^2={floor}"
        )


def _inner_run(problem, params, center, ell, criterion, schedule, seed,
               objective_fn, objective_stride, dense_down, mode="sim"):
    dist = adaptive_distribution(center, params.c)
    pi_ell = dist.p_min
    _check_probability_chain(params, pi_ell)
    sub = pb.reconditioned(problem, params.rho, center)
    stop, _ = _inner_stop(criterion, ell, params, pi_ell, problem, center)
    trace = run_spy(
        sub, params.gamma, dist, schedule, init=center, stop=stop,
        seed=seed + _SEED_STRIDE * ell, dense_down=dense_down,
        objective_stride=objective_stride, objective_fn=objective_fn, mode=mode,
        # only the first inner solve pays for the initial dense exchange;
        # later solves warm-start from worker state already in place
        charge_priming=(ell == 1),
    )
    if criterion.kind in ("absolute", "relative"):
        hit = stop.epoch_predicate(trace.final_x, trace.n_epochs)
        if not hit:
            raise InnerBudgetError(
                f"outer step {ell}: inner run exhausted {criterion.safety_epochs} "
                "epochs without meeting its accuracy test"
            )
    return trace, pi_ell


def _log_outer(trace: OuterTrace, inner: RunTrace, ell, pi_ell, objective):
    prev_up = trace.records[-1].cum_up if trace.records else 0
    prev_down = trace.records[-1].cum_down if trace.records else 0
    x = inner.final_x
    trace.records.append(OuterRecord(
        ell=ell,
        pi_ell=pi_ell,
        inner_epochs=inner.n_epochs,
        inner_iterations=inner.n_iterations,
        support_size=int(np.count_nonzero(x)),
        cum_up=prev_up + inner.cum_up,
        cum_down=prev_down + inner.cum_down,
        objective=objective,
    ))
    base_iter = sum(r.inner_iterations for r in trace.records[:-1])
    for p in inner.objective_log:
        trace.objective_log.append(
            (base_iter + max(p.k, 0), prev_up + p.cum_up, prev_down + p.cum_down, p.value)
        )
    trace.inner_traces.append(inner)


def run_reconditioned(
    problem: pb.CompositeProblem,
    params: ReconditionParams,
    schedule: DelaySchedule,
    init: np.ndarray,
    criterion: InnerCriterion = InnerCriterion(),
    outer_budget: int = 500,
    target_objective: float | None = None,
    seed: int = 0,
    objective_stride: int | None = None,
    dense_down: bool = False,
    mode: str = "sim",
) -> OuterTrace:
    """Outer proximal loop around sparsified asynchronous inner solves.

    Stops when F(x_ell) <= target_objective (checked before each step, so a
    start at the solution performs no inner work) or after outer_budget steps.
    """
    if not params.needs_reconditioning:
        raise ValueError(
            "rho = 0: the problem is already conditioned for this exploration "
            "level; run the sparsified engine directly"
        )
    x = np.asarray(init, dtype=float).copy()
    trace = OuterTrace()
    trace.centers.append(x.copy())
    for ell in range(1, outer_budget + 1):
        if target_objective is not None and pb.eval_objective(problem, x) <= target_objective:
            break
        inner, pi_ell = _inner_run(
            problem, params, x, ell, criterion, schedule, seed,
            objective_fn=lambda z: pb.eval_objective(problem, z),
            objective_stride=objective_stride, dense_down=dense_down, mode=mode,
        )
        x = inner.final_x.copy()
        trace.centers.append(x.copy())
        _log_outer(trace, inner, ell, pi_ell, pb.eval_objective(problem, x))
    trace.final_x = x
    return trace


# -- accelerated variant -----------------------------------------------------


@dataclass(frozen=True)
class MomentumCriterion:
    """Inner stopping tests for the accelerated outer loop.

    kinds:
      fixed     -- constant number of epochs
      absolute  -- inner suboptimality (on the reconditioned objective) below
                   a geometric / polynomial schedule; needs f_star
      adaptive  -- inner suboptimality below a fraction of the realized
                   displacement from the extrapolated center
    """

    kind: str = "adaptive"
    epochs: int = 1
    f_star: float | None = None
    f_init: float | None = None  # F at the first center; computed if omitted
    delta: float = 0.1
    safety_epochs: int = 20_000
    oracle_tol: float = 1e-11

    def __post_init__(self):
        if self.kind not in ("fixed", "absolute", "adaptive"):
            raise ValueError(f"unknown momentum criterion {self.kind!r}")
        if self.kind == "absolute" and self.f_star is None:
            raise ValueError("the absolute momentum criterion needs f_star")


def momentum_weight(ell: int, mu: float, rho: float) -> float:
    """Extrapolation weight beta_ell for the accelerated outer loop."""
    if mu > 0:
        q = mu / (mu + rho)
        s = math.sqrt(q)
        return (1.0 - s) / (1.0 + s)
    return (ell - 1.0) / (ell + 2.0)


def run_momentum(
    problem: pb.CompositeProblem,
    params: ReconditionParams,
    schedule: DelaySchedule,
    init: np.ndarray,
    criterion: MomentumCriterion = MomentumCriterion(),
    outer_budget: int = 500,
    target_objective: float | None = None,
    seed: int = 0,
    objective_stride: int | None = None,
    dense_down: bool = False,
    mode: str = "sim",
    beta: float | None = None,
) -> OuterTrace:
    """Accelerated outer loop: inner solves centered at an extrapolated point.

    ``beta`` overrides the extrapolation weight (0 disables momentum, which
    reduces the trajectory to the plain outer loop)."""
    if not params.needs_reconditioning:
        raise ValueError("rho = 0: nothing to accelerate; run the engine directly")
    mu, rho = params.mu, params.rho
    x = np.asarray(init, dtype=float).copy()
    y = x.copy()
    trace = OuterTrace()
    trace.centers.append(y.copy())
    gap0 = None
    if criterion.kind == "absolute":
        f1 = criterion.f_init if criterion.f_init is not None else pb.eval_objective(problem, y)
        gap0 = (2.0 / 9.0) * (f1 - criterion.f_star)
    for ell in range(1, outer_budget + 1):
        if target_objective is not None and pb.eval_objective(problem, x) <= target_objective:
            break
        dist = adaptive_distribution(y, params.c)
        pi_ell = dist.p_min
        _check_probability_chain(params, pi_ell)
        sub = pb.reconditioned(problem, rho, y)
        stop = _momentum_stop(criterion, ell, params, problem, y, sub, gap0)
        inner = run_spy(
            sub, params.gamma, dist, schedule, init=y, stop=stop,
            seed=seed + _SEED_STRIDE * ell, dense_down=dense_down,
            objective_stride=objective_stride, mode=mode,
            objective_fn=lambda z: pb.eval_objective(problem, z),
            charge_priming=(ell == 1),
        )
        if criterion.kind != "fixed" and not stop.epoch_predicate(inner.final_x, inner.n_epochs):
            raise InnerBudgetError(
                f"outer step {ell}: inner run exhausted {criterion.safety_epochs} "
                "epochs without meeting its accuracy test"
            )
        x_new = inner.final_x.copy()
        if beta is None:
            b = momentum_weight(ell + 1, mu, rho) if mu == 0 else momentum_weight(ell, mu, rho)
        else:
            b = beta
        y = x_new + b * (x_new - x)
        x = x_new
        trace.centers.append(y.copy())
        _log_outer(trace, inner, ell, pi_ell, pb.eval_objective(problem, x))
    trace.final_x = x
    return trace


def _momentum_stop(criterion, ell, params, problem, center, sub, gap0):
    if criterion.kind == "fixed":
        return StopRule(max_epochs=criterion.epochs)
    mu, rho = params.mu, params.rho
    prox_pt = prox_oracle(problem, rho, center, tol=criterion.oracle_tol)
    h_min = pb.eval_objective(sub, prox_pt)
    if criterion.kind == "absolute":
        if mu > 0:
            factor = (1.0 - math.sqrt(mu / (4.0 * (mu + rho)))) ** ell
        else:
            factor = 1.0 / ell ** (4.0 + criterion.delta)
        thresh = factor * gap0

        def pred(x, m):
            return pb.eval_objective(sub, x) - h_min <= thresh
    else:  # adaptive
        if mu > 0:
            coeff = math.sqrt(mu) / (2.0 * math.sqrt(mu + rho) - math.sqrt(mu))
        else:
            coeff = 1.0 / ell ** 2

        def pred(x, m):
            move = 0.5 * rho * float(np.sum((x - center) ** 2))
            return pb.eval_objective(sub, x) - h_min <= coeff * move

    return StopRule(max_epochs=criterion.safety_epochs, epoch_predicate=pred)
