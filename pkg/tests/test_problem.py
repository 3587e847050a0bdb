import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sparsepg import problem as pb


def quad_shard(a=1.0, b=0.0):
    return pb.LossShard(kind=pb.LEAST_SQUARES, A=np.array([[a]]), b=np.array([b]))


def random_problem(rng, d=6, M=3, kind=pb.LEAST_SQUARES, reg=None, l2=0.0):
    shards = []
    for _ in range(M):
        m = int(rng.integers(4, 9))
        A = rng.standard_normal((m, d))
        if kind == pb.LOGISTIC:
            b = rng.choice([-1.0, 1.0], size=m)
        else:
            b = rng.standard_normal(m)
        shards.append(pb.LossShard(kind=kind, A=A, b=b, l2=l2))
    return pb.composite_problem(shards, reg=reg or pb.Regularizer())


class TestShardValidation:
    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            pb.LossShard(kind="hinge", A=np.eye(2), b=np.zeros(2))

    def test_label_mismatch(self):
        with pytest.raises(ValueError):
            pb.LossShard(kind=pb.LEAST_SQUARES, A=np.eye(2), b=np.zeros(3))

    def test_logistic_labels_must_be_pm1(self):
        with pytest.raises(ValueError):
            pb.LossShard(kind=pb.LOGISTIC, A=np.eye(2), b=np.array([1.0, 0.5]))

    def test_ridge_needs_center(self):
        with pytest.raises(ValueError):
            pb.LossShard(kind=pb.LEAST_SQUARES, A=np.eye(2), b=np.zeros(2), ridge_weight=1.0)


class TestGradShard:
    def test_gradient_at_minimizer_is_zero(self):
        assert pb.grad_shard(quad_shard(1, 0), np.zeros(1)) == pytest.approx([0.0])

    def test_hand_derived_value(self):
        # f(x) = (x-2)^2 with m=1 => f'(0) = -4
        assert pb.grad_shard(quad_shard(1, 2), np.zeros(1)) == pytest.approx([-4.0])

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            pb.grad_shard(quad_shard(), np.zeros(2))

    @pytest.mark.parametrize("kind", [pb.LEAST_SQUARES, pb.LOGISTIC])
    def test_matches_finite_differences(self, kind):
        rng = np.random.default_rng(0)
        for trial in range(50):
            m, d = int(rng.integers(3, 8)), int(rng.integers(2, 6))
            A = rng.standard_normal((m, d))
            b = rng.choice([-1.0, 1.0], size=m) if kind == pb.LOGISTIC else rng.standard_normal(m)
            shard = pb.LossShard(kind=kind, A=A, b=b, l2=0.05 if kind == pb.LOGISTIC else 0.0)
            x = rng.standard_normal(d)
            g = pb.grad_shard(shard, x)
            h = 1e-6
            fd = np.array([
                (pb.shard_value(shard, x + h * e) - pb.shard_value(shard, x - h * e)) / (2 * h)
                for e in np.eye(d)
            ])
            assert np.linalg.norm(g - fd) <= 1e-5 * max(np.linalg.norm(g), 1.0)

    def test_ridge_term(self):
        center = np.array([1.0])
        shard = pb.LossShard(kind=pb.LEAST_SQUARES, A=np.array([[1.0]]), b=np.array([0.0]),
                             ridge_weight=3.0, ridge_center=center)
        # grad = 2x + 3(x - 1); at x=2: 4 + 3 = 7
        assert pb.grad_shard(shard, np.array([2.0])) == pytest.approx([7.0])


class TestSmoothnessConstants:
    def test_scalar_shard(self):
        prob = pb.composite_problem([quad_shard(1, 0)])
        assert pb.smoothness_constants(prob) == pytest.approx((2.0, 2.0))

    def test_logistic_mu_is_l2(self):
        rng = np.random.default_rng(1)
        A = rng.standard_normal((10, 3))
        shard = pb.LossShard(kind=pb.LOGISTIC, A=A, b=np.sign(rng.standard_normal(10)), l2=0.001)
        prob = pb.composite_problem([shard])
        assert prob.mu == pytest.approx(0.001)

    def test_two_identical_shards_match_one(self):
        rng = np.random.default_rng(2)
        A = rng.standard_normal((8, 4))
        b = rng.standard_normal(8)
        one = pb.composite_problem([pb.LossShard(kind=pb.LEAST_SQUARES, A=A, b=b)])
        two = pb.composite_problem([
            pb.LossShard(kind=pb.LEAST_SQUARES, A=A, b=b),
            pb.LossShard(kind=pb.LEAST_SQUARES, A=A, b=b),
        ])
        assert (two.mu, two.lip) == pytest.approx((one.mu, one.lip), rel=1e-6)

    def test_rank_deficient_gives_mu_zero(self):
        rng = np.random.default_rng(3)
        A = rng.standard_normal((3, 6))  # fewer rows than columns
        prob = pb.composite_problem([pb.LossShard(kind=pb.LEAST_SQUARES, A=A, b=np.zeros(3))])
        assert prob.mu == 0.0

    def test_matches_dense_eigensolver(self):
        rng = np.random.default_rng(4)
        A = rng.standard_normal((12, 5))
        prob = pb.composite_problem([pb.LossShard(kind=pb.LEAST_SQUARES, A=A, b=np.zeros(12))])
        eigs = np.linalg.eigvalsh(A.T @ A)
        assert prob.lip == pytest.approx(2 * eigs[-1] / 12, rel=1e-6)
        assert prob.mu == pytest.approx(2 * eigs[0] / 12, rel=1e-4)

    def test_empty_shards_error(self):
        with pytest.raises(ValueError):
            pb.composite_problem([])


class TestProx:
    def test_soft_threshold_example(self):
        reg = pb.Regularizer(kind="l1", lam=1.0)
        out = pb.prox_reg(reg, 1.0, np.array([2.5, -0.5, 0.3]))
        assert out == pytest.approx([1.5, 0.0, 0.0])

    def test_none_is_identity(self):
        u = np.array([3.0, -1.0])
        assert pb.prox_reg(pb.Regularizer(), 0.5, u) == pytest.approx(u)

    def test_nonpositive_gamma(self):
        with pytest.raises(ValueError):
            pb.prox_reg(pb.Regularizer(kind="l1", lam=1.0), 0.0, np.zeros(2))

    def test_against_grid_search(self):
        # brute-force argmin of lam*|y| + (y-u)^2/2 on a fine grid
        reg = pb.Regularizer(kind="l1", lam=0.7)
        u = np.array([1.0])
        grid = np.arange(-3, 3, 1e-5)
        best = grid[np.argmin(0.3 * 0.7 * np.abs(grid) + 0.5 * (grid - u[0]) ** 2)]
        assert abs(pb.prox_reg(reg, 0.3, u)[0] - best) < 1e-4

    def test_weighted_l1(self):
        reg = pb.Regularizer(kind="weighted_l1", lam=1.0, weights=np.array([0.1, 2.0]))
        out = pb.prox_reg(reg, 1.0, np.array([1.0, 1.0]))
        assert out == pytest.approx([0.9, 0.0])

    @settings(max_examples=50, deadline=None)
    @given(
        u=arrays(np.float64, 5, elements=st.floats(-50, 50)),
        v=arrays(np.float64, 5, elements=st.floats(-50, 50)),
        lam=st.floats(0.01, 10),
        gamma=st.floats(0.01, 10),
    )
    def test_nonexpansive(self, u, v, lam, gamma):
        reg = pb.Regularizer(kind="l1", lam=lam)
        pu, pv = pb.prox_reg(reg, gamma, u), pb.prox_reg(reg, gamma, v)
        assert np.linalg.norm(pu - pv) <= np.linalg.norm(u - v) + 1e-12

    @settings(max_examples=50, deadline=None)
    @given(
        u=arrays(np.float64, 5, elements=st.floats(-50, 50)),
        lam=st.floats(0.01, 10),
        gamma=st.floats(0.01, 10),
    )
    def test_shrinkage(self, u, lam, gamma):
        out = pb.prox_reg(pb.Regularizer(kind="l1", lam=lam), gamma, u)
        assert np.all(np.abs(out) <= np.abs(u) + 1e-12)
        assert np.all(np.sign(out) * np.sign(u) >= 0)


class TestObjective:
    def test_zero_point(self):
        rng = np.random.default_rng(5)
        prob = random_problem(rng, reg=pb.Regularizer(kind="l1", lam=1.0))
        smooth = sum(a * pb.shard_value(s, np.zeros(6)) for a, s in zip(prob.alphas, prob.shards))
        assert pb.eval_objective(prob, np.zeros(6)) == pytest.approx(smooth)

    def test_toy_lasso_value(self):
        prob = pb.composite_problem([quad_shard(1, 2)], reg=pb.Regularizer(kind="l1", lam=1.0))
        assert pb.eval_objective(prob, np.array([1.0])) == pytest.approx(2.0)

    def test_dimension_mismatch(self):
        prob = pb.composite_problem([quad_shard()])
        with pytest.raises(ValueError):
            pb.eval_objective(prob, np.zeros(2))


class TestSupport:
    def test_exact_zeros(self):
        assert list(pb.support_of(np.array([0.0, 1.0, 0.0]))) == [1]

    def test_tolerance(self):
        assert list(pb.support_of(np.array([1e-12, 1.0]), tol=1e-10)) == [1]

    @settings(max_examples=30, deadline=None)
    @given(x=arrays(np.float64, 8, elements=st.floats(-5, 5)))
    def test_complementarity(self, x):
        assert pb.support_of(x).size + pb.null_pattern(x).size == 8


class TestReconditioned:
    def test_shifts_constants(self):
        rng = np.random.default_rng(6)
        prob = random_problem(rng)
        sub = pb.reconditioned(prob, 2.5, np.ones(6))
        assert sub.mu == pytest.approx(prob.mu + 2.5)
        assert sub.lip == pytest.approx(prob.lip + 2.5)
        mu, lip = pb.smoothness_constants(sub)
        assert mu == pytest.approx(prob.mu + 2.5, abs=1e-6)
        assert lip == pytest.approx(prob.lip + 2.5, rel=1e-6)

    def test_value_and_gradient(self):
        rng = np.random.default_rng(7)
        prob = random_problem(rng)
        center = rng.standard_normal(6)
        x = rng.standard_normal(6)
        sub = pb.reconditioned(prob, 1.5, center)
        base = sum(a * pb.shard_value(s, x) for a, s in zip(prob.alphas, prob.shards))
        got = sum(a * pb.shard_value(s, x) for a, s in zip(sub.alphas, sub.shards))
        assert got == pytest.approx(base + 0.75 * np.sum((x - center) ** 2))
        g = pb.smooth_gradient(sub, x)
        assert g == pytest.approx(pb.smooth_gradient(prob, x) + 1.5 * (x - center))
