"""Datasets: synthetic generation, LibSVM ingestion, and sharding across workers."""

from __future__ import annotations

import gzip
import io
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import problem as pb
from .rng import stream


@dataclass(frozen=True)
class Dataset:
    """Design matrix (dense ndarray or CSR) plus a label/target vector."""

    X: object
    y: np.ndarray

    def __post_init__(self):
        X = self.X
        if sp.issparse(X):
            X = sp.csr_matrix(X)
            X.sort_indices()
            object.__setattr__(self, "X", X)
        else:
            object.__setattr__(self, "X", np.asarray(X, dtype=float))
        y = np.asarray(self.y, dtype=float)
        object.__setattr__(self, "y", y)
        if self.X.shape[0] < 1:
            raise ValueError("dataset needs at least one example")
        if y.shape != (self.X.shape[0],):
            raise ValueError("label count does not match example count")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class ShardingPlan:
    """Assignment of each example to one of M workers."""

    M: int
    assignment: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.assignment, dtype=int)
        object.__setattr__(self, "assignment", a)
        if self.M < 1:
            raise ValueError("need at least one worker")
        if a.min() < 0 or a.max() >= self.M:
            raise ValueError("assignment refers to an unknown worker")
        if len(np.unique(a)) != self.M:
            raise ValueError("every worker must receive at least one example")

    def indices(self, worker: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == worker)

    @property
    def alphas(self) -> np.ndarray:
        sizes = np.bincount(self.assignment, minlength=self.M).astype(float)
        return sizes / sizes.sum()


def generate_lasso(d: int, m: int, sparsity: float, noise_std: float, seed: int):
    """Random lasso instance: A ~ N(0,1), b = A x0 + noise, x0 mostly zero.

    Returns (dataset, x0) where x0 has exactly round((1-sparsity)*d) nonzeros.
    """
    if d < 1 or m < 1:
        raise ValueError("d and m must be positive")
    if not 0.0 <= sparsity <= 1.0:
        raise ValueError("sparsity must lie in [0, 1]")
    if noise_std < 0:
        raise ValueError("noise_std must be nonnegative")
    rng = stream(seed, 0)
    A = rng.standard_normal((m, d))
    k = int(round((1.0 - sparsity) * d))
    support = rng.choice(d, size=k, replace=False)
    x0 = np.zeros(d)
    x0[support] = rng.standard_normal(k)
    e = noise_std * rng.standard_normal(m)
    b = A @ x0 + e
    return Dataset(X=A, y=b), x0


class LibSVMFormatError(ValueError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


def parse_libsvm(source, n_features: int | None = None) -> Dataset:
    """Parse LibSVM text (``<label> <idx>:<val> ...``, 1-based indices).

    ``source`` may be a path (``.gz`` accepted), a str, bytes, or a text
    stream.  Labels 0 are mapped to -1.  The dimension is the largest index
    seen unless ``n_features`` overrides it.
    """
    lines = _read_lines(source)
    labels: list[float] = []
    indptr = [0]
    indices: list[int] = []
    values: list[float] = []
    d_seen = 0
    for line_no, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        try:
            label = float(tokens[0])
        except ValueError:
            raise LibSVMFormatError(line_no, f"bad label {tokens[0]!r}") from None
        labels.append(-1.0 if label == 0.0 else label)
        prev = 0
        for tok in tokens[1:]:
            try:
                idx_s, val_s = tok.split(":", 1)
                idx = int(idx_s)
                val = float(val_s)
            except ValueError:
                raise LibSVMFormatError(line_no, f"bad feature token {tok!r}") from None
            if idx < 1:
                raise LibSVMFormatError(line_no, f"index {idx} is not 1-based")
            if idx <= prev:
                raise LibSVMFormatError(line_no, f"indices not strictly increasing at {idx}")
            prev = idx
            indices.append(idx - 1)
            values.append(val)
        d_seen = max(d_seen, prev)
        indptr.append(len(indices))
    if not labels:
        raise LibSVMFormatError(0, "empty input")
    d = n_features if n_features is not None else d_seen
    if d < d_seen:
        raise ValueError(f"n_features={d} smaller than largest index {d_seen}")
    X = sp.csr_matrix(
        (np.array(values), np.array(indices, dtype=np.int32), np.array(indptr, dtype=np.int32)),
        shape=(len(labels), d),
    )
    return Dataset(X=X, y=np.array(labels))


def to_libsvm(dataset: Dataset) -> str:
    """Serialize back to LibSVM text; round-trips through parse_libsvm."""
    X = dataset.X if sp.issparse(dataset.X) else sp.csr_matrix(dataset.X)
    out = io.StringIO()
    for i in range(dataset.n):
        row = X.getrow(i)
        feats = " ".join(
            "%d:%.17g" % (j + 1, v) for j, v in zip(row.indices, row.data)
        )
        label = "%.17g" % dataset.y[i]
        out.write(label + (" " + feats if feats else "") + "\n")
    return out.getvalue()


def _read_lines(source):
    if hasattr(source, "read"):
        content = source.read()
        if isinstance(content, bytes):
            content = content.decode("utf-8")
        return content.splitlines()
    if isinstance(source, bytes):
        return source.decode("utf-8").splitlines()
    if isinstance(source, str):
        if "\n" in source:
            return source.splitlines()
        # a single line without newline is taken to be a path
        opener = gzip.open if source.endswith(".gz") else open
        with opener(source, "rt") as fh:
            return fh.read().splitlines()
    import os

    if isinstance(source, os.PathLike):
        path = os.fspath(source)
        opener = gzip.open if path.endswith(".gz") else open
        with opener(path, "rt") as fh:
            return fh.read().splitlines()
    raise TypeError(f"cannot read LibSVM data from {type(source)!r}")


def scale_features(dataset: Dataset) -> Dataset:
    """Per-feature max-abs scaling (columns with all zeros are left alone)."""
    if sp.issparse(dataset.X):
        maxabs = np.asarray(np.abs(dataset.X).max(axis=0).todense()).ravel()
        maxabs[maxabs == 0] = 1.0
        D = sp.diags(1.0 / maxabs)
        return Dataset(X=sp.csr_matrix(dataset.X @ D), y=dataset.y)
    maxabs = np.abs(dataset.X).max(axis=0)
    maxabs[maxabs == 0] = 1.0
    return Dataset(X=dataset.X / maxabs, y=dataset.y)


def shard_even(dataset: Dataset, M: int, seed: int) -> ShardingPlan:
    """Shuffle examples by seed and split as evenly as possible over M workers."""
    if not 1 <= M <= dataset.n:
        raise ValueError("need 1 <= M <= number of examples")
    perm = stream(seed, 1).permutation(dataset.n)
    assignment = np.empty(dataset.n, dtype=int)
    for w, chunk in enumerate(np.array_split(perm, M)):
        assignment[chunk] = w
    return ShardingPlan(M=M, assignment=assignment)


def make_shards(dataset: Dataset, plan: ShardingPlan, kind: str, l2: float = 0.0):
    """Cut the dataset into per-worker loss shards."""
    shards = []
    for w in range(plan.M):
        idx = plan.indices(w)
        Xw = dataset.X[idx]
        yw = dataset.y[idx]
        shards.append(pb.LossShard(kind=kind, A=Xw, b=yw, l2=l2))
    return shards


def lasso_problem(dataset: Dataset, plan: ShardingPlan, lam1: float) -> pb.CompositeProblem:
    shards = make_shards(dataset, plan, pb.LEAST_SQUARES)
    return pb.composite_problem(shards, reg=pb.Regularizer(kind="l1", lam=lam1))


def logistic_problem(
    dataset: Dataset, plan: ShardingPlan, lam1: float, lam2: float
) -> pb.CompositeProblem:
    shards = make_shards(dataset, plan, pb.LOGISTIC, l2=lam2)
    return pb.composite_problem(shards, reg=pb.Regularizer(kind="l1", lam=lam1))
