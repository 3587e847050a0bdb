"""Asynchronous coordinator/worker execution of proximal-gradient methods.

Two modes with identical semantics:

* simulation (default): a delay schedule decides which worker's message the
  coordinator handles at each global time k.  Single-threaded, bit-identical
  for a fixed (seed, schedule, problem).
* concurrent: one thread per worker exchanging messages with a coordinator
  thread over queues; arrival order defines k, so trajectories vary between
  runs but the limit point does not.

The coordinator holds xbar (the alpha-weighted average of the workers'
points) and x = prox(xbar).  A worker, when served, applies a gradient step
on the coordinates of the mask it received with the model, and sends back
only the masked delta.
"""

from __future__ import annotations

import csv
import queue
import threading
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import problem as pb
from .rng import stream
from .sparsifier import SelectorDistribution, draw_mask

DIVERGENCE_NORM = 1e12

# when True, simulation mode re-derives xbar from the worker mirrors every
# iteration and asserts agreement (slow; meant for tests)
DEBUG_CHECK = False

_MASK_TAG = 101
_SCHED_TAG = 102


class DivergenceError(RuntimeError):
    def __init__(self, iteration: int):
        super().__init__(f"iterate blew up at iteration {iteration}")
        self.iteration = iteration


# -- delay schedules --------------------------------------------------------


@dataclass(frozen=True)
class DelaySchedule:
    """Which worker fires at each global time in simulation mode.

    Kinds: round_robin, random_uniform, fixed_trace (cycled), heterogeneous
    (categorical draw by speed weights).  Every worker fires infinitely often
    in any infinite extension.
    """

    kind: str
    M: int
    trace: tuple = ()
    weights: tuple = ()
    seed: int = 0

    @staticmethod
    def round_robin(M: int) -> "DelaySchedule":
        return DelaySchedule(kind="round_robin", M=M)

    @staticmethod
    def random_uniform(M: int, seed: int) -> "DelaySchedule":
        return DelaySchedule(kind="random_uniform", M=M, seed=seed)

    @staticmethod
    def fixed_trace(trace, M: int | None = None) -> "DelaySchedule":
        trace = tuple(int(t) for t in trace)
        if not trace:
            raise ValueError("fixed trace must be non-empty")
        M = M if M is not None else max(trace) + 1
        if set(trace) != set(range(M)):
            raise ValueError("a fixed trace must mention every worker (it is cycled)")
        return DelaySchedule(kind="fixed_trace", M=M, trace=trace)

    @staticmethod
    def heterogeneous(weights, seed: int) -> "DelaySchedule":
        weights = tuple(float(w) for w in weights)
        if any(w <= 0 for w in weights):
            raise ValueError("speed weights must be positive")
        return DelaySchedule(kind="heterogeneous", M=len(weights), weights=weights, seed=seed)

    def sequence(self):
        """Infinite iterator of worker ids."""
        if self.kind == "round_robin":
            def gen():
                k = 0
                while True:
                    yield k % self.M
                    k += 1
            return gen()
        if self.kind == "fixed_trace":
            def gen():
                while True:
                    yield from self.trace
            return gen()
        if self.kind == "random_uniform":
            def gen():
                rng = stream(self.seed, _SCHED_TAG)
                while True:
                    yield int(rng.integers(self.M))
            return gen()
        if self.kind == "heterogeneous":
            w = np.array(self.weights)
            p = w / w.sum()
            def gen():
                rng = stream(self.seed, _SCHED_TAG)
                while True:
                    yield int(rng.choice(self.M, p=p))
            return gen()
        raise ValueError(f"unknown schedule kind {self.kind!r}")


# -- epochs -----------------------------------------------------------------


def epoch_boundaries(worker_log, M: int | None = None) -> list[int]:
    """Stopping times (k_m) from a firing log (i^k for k = 0, 1, ...).

    k_0 = 0; the next boundary is the first k at which every worker's
    penultimate firing happened at or after the previous boundary.
    """
    last: dict[int, int] = {}
    penult: dict[int, int] = {}
    workers = set(range(M)) if M is not None else set(worker_log)
    boundaries = [0]
    for k, i in enumerate(worker_log):
        if i in last:
            penult[i] = last[i]
        last[i] = k
        if len(penult) == len(workers) and min(penult.values()) >= boundaries[-1] and k > 0:
            boundaries.append(k)
    return boundaries


class _EpochTracker:
    def __init__(self, M: int):
        self.last = np.full(M, -1, dtype=int)
        self.penult = np.full(M, -1, dtype=int)
        self.fired_twice = 0
        self.boundaries = [0]

    def record(self, k: int, i: int) -> bool:
        """Returns True when k starts a new epoch."""
        if self.last[i] >= 0:
            if self.penult[i] < 0:
                self.fired_twice += 1
            self.penult[i] = self.last[i]
        self.last[i] = k
        if (
            k > 0
            and self.fired_twice == self.last.size
            and self.penult.min() >= self.boundaries[-1]
        ):
            self.boundaries.append(k)
            return True
        return False


# -- traces -----------------------------------------------------------------


@dataclass
class IterRecord:
    k: int
    worker: int
    coords_up: int
    coords_down: int
    support_size: int
    epoch_m: int


@dataclass
class ObjectivePoint:
    k: int
    cum_up: int
    cum_down: int
    value: float


@dataclass
class RunTrace:
    """Complete per-iteration log of one engine run."""

    records: list = field(default_factory=list)
    epoch_starts: list = field(default_factory=lambda: [0])
    epoch_snapshots: list = field(default_factory=list)
    objective_log: list = field(default_factory=list)
    priming_up: int = 0
    priming_down: int = 0
    final_x: np.ndarray | None = None
    final_xbar: np.ndarray | None = None

    @property
    def n_iterations(self) -> int:
        return len(self.records)

    @property
    def n_epochs(self) -> int:
        return len(self.epoch_starts) - 1

    @property
    def worker_fires(self) -> list[int]:
        return [r.worker for r in self.records]

    @property
    def cum_up(self) -> int:
        return self.priming_up + sum(r.coords_up for r in self.records)

    @property
    def cum_down(self) -> int:
        return self.priming_down + sum(r.coords_down for r in self.records)

    def to_csv(self, path) -> None:
        values = {p.k: p.value for p in self.objective_log}
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "worker", "coords_up", "coords_down", "support_size", "epoch_m", "objective"])
            for r in self.records:
                obj = values.get(r.k, "")
                w.writerow([r.k, r.worker, r.coords_up, r.coords_down, r.support_size, r.epoch_m, obj])


@dataclass
class StopRule:
    """When to stop a run; accuracy-style conditions are checked at epoch
    boundaries only (matching how the convergence theory is indexed)."""

    max_epochs: int | None = None
    max_iterations: int | None = None
    target_objective: float | None = None
    epoch_predicate: object = None  # callable (x, m) -> bool

    def __post_init__(self):
        if self.max_epochs is None and self.max_iterations is None:
            raise ValueError("a stop rule needs max_epochs or max_iterations")


# -- core loop --------------------------------------------------------------


def gamma_max(problem: pb.CompositeProblem) -> float:
    return 2.0 / (problem.mu + problem.lip)


def _count_down(x, mask, dense_down, d):
    if dense_down:
        return d
    return int(np.count_nonzero(x)) + (d if mask is None else mask.size)


def _simulate(
    problem: pb.CompositeProblem,
    gamma: float,
    dist: SelectorDistribution | None,
    schedule: DelaySchedule,
    init: np.ndarray,
    stop: StopRule,
    seed: int,
    slowdown_pi: float | None = None,
    dense_down: bool = False,
    objective_stride: int | None = None,
    objective_fn=None,
    charge_priming: bool = True,
) -> RunTrace:
    M = problem.n_workers
    d = problem.dim
    if schedule.M != M:
        raise ValueError("schedule worker count does not match the problem")
    init = np.asarray(init, dtype=float)
    if init.shape != (d,):
        raise ValueError("init dimension mismatch")

    mask_rngs = [stream(seed, _MASK_TAG, i) for i in range(M)]
    adaptive = slowdown_pi is not None

    def new_mask(i, x):
        if adaptive:
            supp = np.abs(x) > 0
            u = mask_rngs[i].random(d)
            keep = supp | (u < slowdown_pi)
            return np.flatnonzero(keep)
        if dist is None:
            return None  # dense
        return draw_mask(dist, mask_rngs[i])

    trace = RunTrace()

    # synchronous priming round: x_i^0 = init - gamma * grad_i(init)
    xs = []
    xbar = np.zeros(d)
    for i in range(M):
        xi = init - gamma * pb.grad_shard(problem.shards[i], init)
        xs.append(xi)
        xbar += problem.alphas[i] * xi
        if charge_priming:
            trace.priming_down += d if dense_down else int(np.count_nonzero(init))
            trace.priming_up += d
    x = pb.prox_reg(problem.reg, gamma, xbar)
    models = []
    masks = []
    slow_sets = []
    for i in range(M):
        mask = new_mask(i, x)
        models.append(x.copy())
        masks.append(mask)
        slow_sets.append(np.flatnonzero(np.abs(x) > 0) if adaptive else None)
        if charge_priming:
            trace.priming_down += _count_down(x, mask, dense_down, d)

    tracker = _EpochTracker(M)
    trace.epoch_snapshots.append(x.copy())
    sched = schedule.sequence()
    k = 0
    cum_up = trace.priming_up
    cum_down = trace.priming_down

    obj = objective_fn if objective_fn is not None else (lambda xx: pb.eval_objective(problem, xx))

    def log_objective(kk, xx):
        trace.objective_log.append(ObjectivePoint(kk, cum_up, cum_down, obj(xx)))

    if objective_stride:
        log_objective(-1, x)

    while True:
        if stop.max_iterations is not None and k >= stop.max_iterations:
            break
        i = next(sched)
        model = models[i]
        mask = masks[i]
        u = model - gamma * pb.grad_shard(problem.shards[i], model)
        xi = xs[i]
        if mask is None:
            delta = u - xi
            xs[i] = u
            up = d
        else:
            x_plus = xi.copy()
            x_plus[mask] = u[mask]
            if adaptive and slow_sets[i].size > 0:
                A = slow_sets[i]
                x_plus[A] = slowdown_pi * x_plus[A] + (1.0 - slowdown_pi) * xi[A]
            delta = np.zeros(d)
            delta[mask] = x_plus[mask] - xi[mask]
            xs[i][mask] = x_plus[mask]
            up = int(mask.size)
        xbar = xbar + problem.alphas[i] * delta
        if DEBUG_CHECK:
            rebuilt = sum(a * xw for a, xw in zip(problem.alphas, xs))
            assert np.allclose(xbar, rebuilt, atol=1e-10), "coordinator average drifted"
        x = pb.prox_reg(problem.reg, gamma, xbar)
        if not np.all(np.isfinite(x)) or np.linalg.norm(x) > DIVERGENCE_NORM:
            raise DivergenceError(k)
        mask = new_mask(i, x)
        models[i] = x.copy()
        masks[i] = mask
        if adaptive:
            slow_sets[i] = np.flatnonzero(np.abs(x) > 0)
        down = _count_down(x, mask, dense_down, d)
        cum_up += up
        cum_down += down

        new_epoch = tracker.record(k, i)
        if new_epoch:
            trace.epoch_starts.append(k)
            trace.epoch_snapshots.append(x.copy())
        m = len(tracker.boundaries) - 1
        trace.records.append(
            IterRecord(k, i, up, down, int(np.count_nonzero(x)), m)
        )
        if objective_stride and (k % objective_stride == 0):
            log_objective(k, x)

        if new_epoch:
            if stop.max_epochs is not None and m >= stop.max_epochs:
                break
            if stop.target_objective is not None and pb.eval_objective(problem, x) <= stop.target_objective:
                break
            if stop.epoch_predicate is not None and stop.epoch_predicate(x, m):
                break
        k += 1

    trace.final_x = x
    trace.final_xbar = xbar
    return trace


# -- public entry points ----------------------------------------------------


def _check_gamma(problem, gamma):
    if not 0 < gamma <= gamma_max(problem) * (1 + 1e-12):
        raise ValueError(
            f"gamma={gamma} outside (0, 2/(mu+L)] = (0, {gamma_max(problem)}]"
        )


def run_davepg(
    problem: pb.CompositeProblem,
    gamma: float,
    schedule: DelaySchedule,
    init: np.ndarray,
    stop: StopRule,
    seed: int = 0,
    dense_down: bool = True,
    objective_stride: int | None = None,
    mode: str = "sim",
    objective_fn=None,
) -> RunTrace:
    """Asynchronous proximal gradient without sparsification (dense deltas)."""
    _check_gamma(problem, gamma)
    if mode == "concurrent":
        return _run_concurrent(problem, gamma, None, init, stop, seed, dense_down,
                               objective_stride, objective_fn)
    return _simulate(problem, gamma, None, schedule, init, stop, seed,
                     dense_down=dense_down, objective_stride=objective_stride,
                     objective_fn=objective_fn)


def run_spy(
    problem: pb.CompositeProblem,
    gamma: float,
    dist: SelectorDistribution,
    schedule: DelaySchedule,
    init: np.ndarray,
    stop: StopRule,
    seed: int = 0,
    dense_down: bool = False,
    objective_stride: int | None = None,
    mode: str = "sim",
    objective_fn=None,
    charge_priming: bool = True,
) -> RunTrace:
    """Sparsified variant: workers update and send only masked coordinates.

    ``charge_priming=False`` skips the communication charge for the synchronous
    priming round (used by warm-started inner solves, where workers already
    hold state and no fresh dense exchange takes place).
    """
    _check_gamma(problem, gamma)
    if dist.d != problem.dim:
        raise ValueError("selector dimension mismatch")
    if dist.p_min / dist.p_max < (1.0 - gamma * problem.mu) ** 2:
        warnings.warn(
            "selection probabilities violate p_min/p_max >= (1-gamma*mu)^2; "
            "linear convergence is not guaranteed",
            RuntimeWarning,
        )
    if mode == "concurrent":
        return _run_concurrent(problem, gamma, dist, init, stop, seed, dense_down,
                               objective_stride, objective_fn)
    return _simulate(problem, gamma, dist, schedule, init, stop, seed,
                     dense_down=dense_down, objective_stride=objective_stride,
                     objective_fn=objective_fn, charge_priming=charge_priming)


def run_adaptive_spy_slowdown(
    problem: pb.CompositeProblem,
    gamma: float,
    pi: float,
    schedule: DelaySchedule,
    init: np.ndarray,
    stop: StopRule,
    seed: int = 0,
    dense_down: bool = False,
    objective_stride: int | None = None,
    objective_fn=None,
) -> RunTrace:
    """Support-adaptive masks with the slowdown fix: coordinates in the
    current support are always selected but their update is damped by pi."""
    _check_gamma(problem, gamma)
    if not 0 < pi <= 1:
        raise ValueError("pi must lie in (0, 1]")
    return _simulate(problem, gamma, None, schedule, init, stop, seed,
                     slowdown_pi=pi, dense_down=dense_down,
                     objective_stride=objective_stride, objective_fn=objective_fn)


# -- concurrent mode --------------------------------------------------------


def _run_concurrent(problem, gamma, dist, init, stop, seed, dense_down,
                    objective_stride, objective_fn=None):
    """One thread per worker; the coordinator serializes message handling."""
    M = problem.n_workers
    d = problem.dim
    init = np.asarray(init, dtype=float)
    mask_rngs = [stream(seed, _MASK_TAG, i) for i in range(M)]
    to_coord: queue.Queue = queue.Queue()
    to_worker = [queue.Queue() for _ in range(M)]

    def worker_loop(i):
        shard = problem.shards[i]
        xi = np.zeros(d)
        while True:
            item = to_worker[i].get()
            if item is None:
                return
            model, mask = item
            u = model - gamma * pb.grad_shard(shard, model)
            if mask is None:
                delta = u - xi
                xi = u
                up = d
            else:
                delta = np.zeros(d)
                delta[mask] = u[mask] - xi[mask]
                xi[mask] = u[mask]
                up = int(mask.size)
            to_coord.put((i, delta, up))

    threads = [threading.Thread(target=worker_loop, args=(i,), daemon=True) for i in range(M)]
    for t in threads:
        t.start()

    trace = RunTrace()

    def new_mask(i):
        if dist is None:
            return None
        return draw_mask(dist, mask_rngs[i])

    # priming: all workers step from init synchronously
    xbar = np.zeros(d)
    for i in range(M):
        to_worker[i].put((init.copy(), None))
        trace.priming_down += d if dense_down else int(np.count_nonzero(init))
    got = 0
    while got < M:
        i, delta, up = to_coord.get()
        xbar += problem.alphas[i] * delta
        trace.priming_up += d
        got += 1
    x = pb.prox_reg(problem.reg, gamma, xbar)
    for i in range(M):
        mask = new_mask(i)
        trace.priming_down += _count_down(x, mask, dense_down, d)
        to_worker[i].put((x.copy(), mask))

    tracker = _EpochTracker(M)
    trace.epoch_snapshots.append(x.copy())
    cum_up = trace.priming_up
    cum_down = trace.priming_down
    obj = objective_fn if objective_fn is not None else (lambda xx: pb.eval_objective(problem, xx))
    if objective_stride:
        trace.objective_log.append(ObjectivePoint(-1, cum_up, cum_down, obj(x)))
    k = 0
    stopped = False
    while not stopped:
        if stop.max_iterations is not None and k >= stop.max_iterations:
            break
        i, delta, up = to_coord.get()
        xbar = xbar + problem.alphas[i] * delta
        x = pb.prox_reg(problem.reg, gamma, xbar)
        if not np.all(np.isfinite(x)) or np.linalg.norm(x) > DIVERGENCE_NORM:
            for q in to_worker:
                q.put(None)
            raise DivergenceError(k)
        mask = new_mask(i)
        down = _count_down(x, mask, dense_down, d)
        cum_up += up
        cum_down += down
        new_epoch = tracker.record(k, i)
        if new_epoch:
            trace.epoch_starts.append(k)
            trace.epoch_snapshots.append(x.copy())
        m = len(tracker.boundaries) - 1
        trace.records.append(IterRecord(k, i, up, down, int(np.count_nonzero(x)), m))
        if objective_stride and (k % objective_stride == 0):
            trace.objective_log.append(ObjectivePoint(k, cum_up, cum_down, obj(x)))
        if new_epoch:
            if stop.max_epochs is not None and m >= stop.max_epochs:
                stopped = True
            elif stop.target_objective is not None and pb.eval_objective(problem, x) <= stop.target_objective:
                stopped = True
            elif stop.epoch_predicate is not None and stop.epoch_predicate(x, m):
                stopped = True
        if not stopped:
            to_worker[i].put((x.copy(), mask))
            k += 1
    for q in to_worker:
        q.put(None)
    for t in threads:
        t.join(timeout=5.0)
    # drain any in-flight messages
    while not to_coord.empty():
        to_coord.get_nowait()
    trace.final_x = x
    trace.final_xbar = xbar
    return trace
