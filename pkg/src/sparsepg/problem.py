"""Composite objectives F = sum_i alpha_i f_i + r and their basic calculus.

A problem is a collection of data shards (one per worker), each carrying a
smooth local loss, plus a separable regularizer handled through its proximity
operator.  Everything here is a pure function over immutable inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

Array = np.ndarray

LEAST_SQUARES = "least_squares"
LOGISTIC = "logistic"

_POWER_ITERS = 1000
_POWER_RTOL = 1e-9


def _as_matrix(A):
    if sp.issparse(A):
        return sp.csr_matrix(A)
    return np.asarray(A, dtype=float)


@dataclass(frozen=True)
class LossShard:
    """One worker's share of the smooth part.

    ``kind`` is ``least_squares`` (f(x) = ||Ax-b||^2 / m) or ``logistic``
    (mean logistic loss with labels in {-1,+1} plus an l2 term of weight
    ``l2``).  ``ridge_weight``/``ridge_center`` add (w/2)||x - c||^2, used by
    proximal reconditioning.
    """

    kind: str
    A: object
    b: Array
    l2: float = 0.0
    ridge_weight: float = 0.0
    ridge_center: Array | None = None

    def __post_init__(self):
        A = _as_matrix(self.A)
        b = np.asarray(self.b, dtype=float)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        if self.kind not in (LEAST_SQUARES, LOGISTIC):
            raise ValueError(f"unknown shard kind {self.kind!r}")
        if A.ndim != 2 or A.shape[0] < 1:
            raise ValueError("shard design matrix must have at least one row")
        if b.shape != (A.shape[0],):
            raise ValueError("label vector length does not match row count")
        if self.kind == LOGISTIC:
            if not np.all(np.abs(b) == 1.0):
                raise ValueError("logistic labels must be exactly +/-1")
            if self.l2 < 0:
                raise ValueError("l2 weight must be nonnegative")
        if self.ridge_weight < 0:
            raise ValueError("ridge weight must be nonnegative")
        if self.ridge_weight > 0 and self.ridge_center is None:
            raise ValueError("ridge term needs a center")
        if self.ridge_center is not None:
            c = np.asarray(self.ridge_center, dtype=float)
            if c.shape != (A.shape[1],):
                raise ValueError("ridge center dimension mismatch")
            object.__setattr__(self, "ridge_center", c)

    @property
    def n_examples(self) -> int:
        return self.A.shape[0]

    @property
    def dim(self) -> int:
        return self.A.shape[1]


@dataclass(frozen=True)
class Regularizer:
    """Separable regularizer: none, l1(lam) or weighted l1(lam, weights > 0)."""

    kind: str = "none"
    lam: float = 0.0
    weights: Array | None = None

    def __post_init__(self):
        if self.kind not in ("none", "l1", "weighted_l1"):
            raise ValueError(f"unknown regularizer kind {self.kind!r}")
        if self.lam < 0:
            raise ValueError("regularization weight must be nonnegative")
        if self.kind == "weighted_l1":
            w = np.asarray(self.weights, dtype=float)
            if np.any(w <= 0):
                raise ValueError("l1 weights must be positive")
            object.__setattr__(self, "weights", w)


@dataclass(frozen=True)
class CompositeProblem:
    """F = sum_i alpha_i f_i + r with its strong convexity / smoothness moduli."""

    shards: tuple
    alphas: Array
    reg: Regularizer
    mu: float
    lip: float

    def __post_init__(self):
        alphas = np.asarray(self.alphas, dtype=float)
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "shards", tuple(self.shards))
        if len(self.shards) == 0:
            raise ValueError("a problem needs at least one shard")
        if alphas.shape != (len(self.shards),) or abs(alphas.sum() - 1.0) > 1e-9:
            raise ValueError("shard proportions must sum to one")
        d = self.shards[0].dim
        if any(s.dim != d for s in self.shards):
            raise ValueError("all shards must share the feature dimension")
        if not 0 <= self.mu <= self.lip:
            raise ValueError("need 0 <= mu <= L")

    @property
    def dim(self) -> int:
        return self.shards[0].dim

    @property
    def n_workers(self) -> int:
        return len(self.shards)

    @property
    def kappa(self) -> float:
        return self.mu / self.lip


def composite_problem(shards, reg: Regularizer = Regularizer()) -> CompositeProblem:
    """Assemble a problem; alpha_i = |S_i| / n and (mu, L) are computed."""
    shards = tuple(shards)
    if not shards:
        raise ValueError("a problem needs at least one shard")
    sizes = np.array([s.n_examples for s in shards], dtype=float)
    alphas = sizes / sizes.sum()
    mu, lip = _constants(shards)
    return CompositeProblem(shards=shards, alphas=alphas, reg=reg, mu=mu, lip=lip)


def reconditioned(problem: CompositeProblem, rho: float, center: Array) -> CompositeProblem:
    """Add (rho/2)||x - center||^2 to every shard; shifts (mu, L) by rho."""
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    center = np.asarray(center, dtype=float)
    shards = tuple(
        replace(s, ridge_weight=s.ridge_weight + rho, ridge_center=center)
        for s in problem.shards
    )
    return CompositeProblem(
        shards=shards,
        alphas=problem.alphas,
        reg=problem.reg,
        mu=problem.mu + rho,
        lip=problem.lip + rho,
    )


# -- smooth part ------------------------------------------------------------


def grad_shard(shard: LossShard, x: Array) -> Array:
    """Gradient of the shard's local smooth loss at x."""
    x = np.asarray(x, dtype=float)
    if x.shape != (shard.dim,):
        raise ValueError(f"expected dimension {shard.dim}, got {x.shape}")
    m = shard.n_examples
    z = shard.A @ x
    if shard.kind == LEAST_SQUARES:
        g = (2.0 / m) * (shard.A.T @ (z - shard.b))
    else:
        y = shard.b
        # d/dz log(1 + exp(-y z)) = -y * sigmoid(-y z)
        coeff = -y * expit(-y * z)
        g = (shard.A.T @ coeff) / m + shard.l2 * x
    g = np.asarray(g).ravel()
    if shard.ridge_weight > 0:
        g = g + shard.ridge_weight * (x - shard.ridge_center)
    return g


def shard_value(shard: LossShard, x: Array) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape != (shard.dim,):
        raise ValueError(f"expected dimension {shard.dim}, got {x.shape}")
    m = shard.n_examples
    z = shard.A @ x
    if shard.kind == LEAST_SQUARES:
        v = float(np.sum((z - shard.b) ** 2)) / m
    else:
        v = float(np.sum(np.logaddexp(0.0, -shard.b * z))) / m
        v += 0.5 * shard.l2 * float(x @ x)
    if shard.ridge_weight > 0:
        diff = x - shard.ridge_center
        v += 0.5 * shard.ridge_weight * float(diff @ diff)
    return v


def _gram_extreme_eigs(A) -> tuple[float, float]:
    """(lambda_min, lambda_max) of A^T A by power iteration, no eigensolver."""
    d = A.shape[1]
    rng = np.random.default_rng(0)
    v = rng.standard_normal(d)
    v /= np.linalg.norm(v)
    lam_max = 0.0
    for _ in range(_POWER_ITERS):
        w = A.T @ (A @ v)
        w = np.asarray(w).ravel()
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            return 0.0, 0.0
        est = float(v @ w)
        v = w / nrm
        if abs(est - lam_max) <= _POWER_RTOL * max(abs(est), 1.0):
            lam_max = est
            break
        lam_max = est
    lam_max = max(lam_max, 0.0)
    if A.shape[0] < d:
        return 0.0, lam_max  # rank deficient by shape
    # power iteration on lam_max * I - A^T A gives the smallest eigenvalue
    v = rng.standard_normal(d)
    v /= np.linalg.norm(v)
    shift_est = 0.0
    for _ in range(_POWER_ITERS):
        w = lam_max * v - np.asarray(A.T @ (A @ v)).ravel()
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            break
        est = float(v @ w)
        v = w / nrm
        if abs(est - shift_est) <= _POWER_RTOL * max(abs(est), 1.0):
            shift_est = est
            break
        shift_est = est
    lam_min = max(lam_max - shift_est, 0.0)
    if lam_min <= _POWER_RTOL * lam_max:
        lam_min = 0.0
    return lam_min, lam_max


def _shard_constants(shard: LossShard) -> tuple[float, float]:
    lam_min, lam_max = _gram_extreme_eigs(shard.A)
    m = shard.n_examples
    if shard.kind == LEAST_SQUARES:
        mu = 2.0 * lam_min / m
        lip = 2.0 * lam_max / m
    else:
        mu = shard.l2
        lip = lam_max / (4.0 * m) + shard.l2
    return mu + shard.ridge_weight, lip + shard.ridge_weight


def _constants(shards) -> tuple[float, float]:
    pairs = [_shard_constants(s) for s in shards]
    mu = min(p[0] for p in pairs)
    lip = max(p[1] for p in pairs)
    return mu, lip


def smoothness_constants(problem: CompositeProblem) -> tuple[float, float]:
    """Recompute (mu, L) from the shards; L is the worst shard bound."""
    return _constants(problem.shards)


# -- regularizer ------------------------------------------------------------


def prox_reg(reg: Regularizer, gamma: float, u: Array) -> Array:
    """prox_{gamma * r}(u); coordinate-wise soft-thresholding for l1 kinds."""
    if gamma <= 0:
        raise ValueError("stepsize must be positive")
    u = np.asarray(u, dtype=float)
    if reg.kind == "none":
        return u.copy()
    thr = gamma * reg.lam
    if reg.kind == "weighted_l1":
        thr = thr * reg.weights
    return np.sign(u) * np.maximum(np.abs(u) - thr, 0.0)


def reg_value(reg: Regularizer, x: Array) -> float:
    if reg.kind == "none":
        return 0.0
    if reg.kind == "weighted_l1":
        return reg.lam * float(np.sum(reg.weights * np.abs(x)))
    return reg.lam * float(np.sum(np.abs(x)))


# -- whole objective --------------------------------------------------------


def smooth_gradient(problem: CompositeProblem, x: Array) -> Array:
    """Gradient of the alpha-weighted smooth part at x."""
    g = np.zeros(problem.dim)
    for alpha, shard in zip(problem.alphas, problem.shards):
        g += alpha * grad_shard(shard, x)
    return g


def eval_objective(problem: CompositeProblem, x: Array) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape != (problem.dim,):
        raise ValueError(f"expected dimension {problem.dim}, got {x.shape}")
    v = sum(a * shard_value(s, x) for a, s in zip(problem.alphas, problem.shards))
    return float(v) + reg_value(problem.reg, x)


def support_of(x: Array, tol: float = 0.0) -> np.ndarray:
    """Indices with |x_j| > tol (tol=0 means exact nonzeros)."""
    x = np.asarray(x)
    return np.flatnonzero(np.abs(x) > tol)


def null_pattern(x: Array, tol: float = 0.0) -> np.ndarray:
    x = np.asarray(x)
    return np.flatnonzero(np.abs(x) <= tol)
