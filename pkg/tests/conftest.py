import numpy as np
import pytest

from sparsepg import problem as pb
from sparsepg.rng import stream


def strongly_convex_problem(d=10, M=3, kappa=0.1, seed=0, reg=None):
    """Least-squares problem with controlled spectrum: every shard's Gram
    matrix has eigenvalues in [kappa, 1] (so mu/L = kappa exactly)."""
    rng = stream(seed, 77)
    shards = []
    for i in range(M):
        lams = rng.uniform(kappa, 1.0, size=d)
        lams[0], lams[1] = kappa, 1.0  # pin the extremes
        Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
        A = np.diag(np.sqrt(lams * d / 2.0)) @ Q.T  # A^T A = Q diag(lams d/2) Q^T
        b = A @ rng.standard_normal(d)
        shards.append(pb.LossShard(kind=pb.LEAST_SQUARES, A=A, b=b))
    prob = pb.composite_problem(shards, reg=reg or pb.Regularizer())
    # the scaling above makes each shard's (mu, lip) equal (kappa, 1)
    assert abs(prob.mu - kappa) < 1e-6 and abs(prob.lip - 1.0) < 1e-6
    return prob


def shifted_initial_radius(problem, gamma, init, x_star):
    """max_i ||x_i^0 - x_i*||^2 with x_i^0 = init - gamma grad_i(init) and
    x_i* = x* - gamma grad_i(x*), the quantity the epoch bounds start from."""
    worst = 0.0
    for shard in problem.shards:
        xi0 = init - gamma * pb.grad_shard(shard, init)
        xis = x_star - gamma * pb.grad_shard(shard, x_star)
        worst = max(worst, float(np.sum((xi0 - xis) ** 2)))
    return worst


@pytest.fixture
def rng():
    return np.random.default_rng(0)
