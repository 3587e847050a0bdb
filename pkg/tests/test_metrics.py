import math

import numpy as np
import pytest

from sparsepg import data, direct, engine, metrics, problem as pb, recondition as rc

from conftest import strongly_convex_problem


def scalar_quadratic(center=3.0):
    # f(x) = (x - center)^2 / 2 via least squares with A = 1/sqrt(2)
    a = 1 / math.sqrt(2)
    shard = pb.LossShard(kind=pb.LEAST_SQUARES, A=np.array([[a]]), b=np.array([a * center]))
    return pb.composite_problem([shard])


def small_lasso(lam=0.2, seed=11):
    ds, _ = data.generate_lasso(d=40, m=60, sparsity=0.9, noise_std=0.01, seed=seed)
    plan = data.shard_even(ds, 3, seed=seed)
    return data.lasso_problem(ds, plan, lam1=lam)


class TestReferenceSolution:
    def test_scalar_quadratic(self):
        ref = metrics.reference_solution(scalar_quadratic(), tol=1e-10)
        assert ref.x_star == pytest.approx([3.0], abs=1e-9)
        assert ref.f_star == pytest.approx(0.0, abs=1e-15)
        assert ref.s_star == 1

    def test_mu_zero_refused_without_flag(self):
        with pytest.raises(ValueError, match="strongly convex"):
            metrics.reference_solution(small_lasso())

    def test_mu_zero_allowed_with_flag(self):
        ref = metrics.reference_solution(small_lasso(), tol=1e-9, assume_unique_minimizer=True)
        assert ref.s_star > 0

    def test_resolve_reproduces_f_star(self):
        prob = strongly_convex_problem(d=8, M=2, seed=1)
        tol = 1e-9
        a = metrics.reference_solution(prob, tol=tol)
        b = metrics.reference_solution(prob, tol=tol)
        assert abs(a.f_star - b.f_star) <= 10 * tol

    def test_cache_round_trip(self, tmp_path):
        prob = strongly_convex_problem(d=8, M=2, seed=2)
        a = metrics.reference_solution(prob, tol=1e-9, cache_dir=str(tmp_path))
        files = list(tmp_path.iterdir())
        assert len(files) == 1
        b = metrics.reference_solution(prob, tol=1e-9, cache_dir=str(tmp_path))
        assert np.array_equal(a.x_star, b.x_star)
        assert list(tmp_path.iterdir()) == files

    def test_cache_env_var(self, tmp_path, monkeypatch):
        monkeypatch.setenv(metrics.CACHE_ENV, str(tmp_path))
        prob = strongly_convex_problem(d=6, M=2, seed=3)
        metrics.reference_solution(prob, tol=1e-9)
        assert len(list(tmp_path.iterdir())) == 1

    def test_fingerprint_changes_with_hyperparameters(self):
        assert metrics.problem_fingerprint(small_lasso(lam=0.2)) != \
            metrics.problem_fingerprint(small_lasso(lam=0.3))

    def test_fingerprint_deterministic(self):
        assert metrics.problem_fingerprint(small_lasso()) == \
            metrics.problem_fingerprint(small_lasso())


class TestNondegeneracy:
    def test_scalar_margin_one(self):
        # f(x) = x^2/2, lam = 1: x* = 0 and the gradient there is 0
        a = 1 / math.sqrt(2)
        shard = pb.LossShard(kind=pb.LEAST_SQUARES, A=np.array([[a]]), b=np.array([0.0]))
        prob = pb.composite_problem([shard], reg=pb.Regularizer(kind="l1", lam=1.0))
        ref = metrics.reference_solution(prob, tol=1e-10)
        assert metrics.check_nondegeneracy(prob, ref) == pytest.approx(1.0, abs=1e-8)

    def test_small_lam_degrades_margin(self):
        strong = small_lasso(lam=0.3)
        weak = small_lasso(lam=1e-4)
        ref_s = metrics.reference_solution(strong, tol=1e-10, assume_unique_minimizer=True)
        ref_w = metrics.reference_solution(weak, tol=1e-10, assume_unique_minimizer=True)
        m_s = metrics.check_nondegeneracy(strong, ref_s)
        m_w = metrics.check_nondegeneracy(weak, ref_w)
        assert m_w < m_s
        assert m_w < 1e-3

    def test_shard_permutation_invariance(self):
        prob = small_lasso()
        ref = metrics.reference_solution(prob, tol=1e-10, assume_unique_minimizer=True)
        permuted = pb.CompositeProblem(
            shards=prob.shards[::-1], alphas=prob.alphas[::-1],
            reg=prob.reg, mu=prob.mu, lip=prob.lip,
        )
        assert metrics.check_nondegeneracy(permuted, ref) == \
            pytest.approx(metrics.check_nondegeneracy(prob, ref))

    def test_requires_l1(self):
        prob = scalar_quadratic()
        ref = metrics.reference_solution(prob, tol=1e-10)
        with pytest.raises(ValueError):
            metrics.check_nondegeneracy(prob, ref)


class TestIdentificationTime:
    def ref_for(self, x_star):
        return metrics.ReferenceSolution(
            x_star=np.asarray(x_star, dtype=float), f_star=0.0,
            s_star=int(np.count_nonzero(x_star)), tol=0.0, fingerprint="t",
        )

    def test_already_identified(self):
        ref = self.ref_for([1.0, 0.0])
        assert metrics.identification_time([np.array([2.0, 0.0])], ref) == 0

    def test_oscillating_support_is_none(self):
        ref = self.ref_for([1.0, 0.0])
        pts = [np.array([1.0, 0.0]), np.array([1.0, 1.0]),
               np.array([1.0, 0.0]), np.array([0.0, 1.0])]
        assert metrics.identification_time(pts, ref) is None

    def test_stabilization_index(self):
        ref = self.ref_for([1.0, 0.0])
        pts = [np.array([0.0, 1.0]), np.array([1.0, 1.0]),
               np.array([1.0, 0.0]), np.array([2.0, 0.0])]
        assert metrics.identification_time(pts, ref) == 2

    def test_tolerance_mode(self):
        ref = self.ref_for([1.0, 0.0])
        pts = [np.array([1.0, 1e-14])]
        assert metrics.identification_time(pts, ref) is None
        assert metrics.identification_time(pts, ref, tol=1e-12) == 0

    def test_on_outer_trace(self):
        prob = small_lasso()
        ref = metrics.reference_solution(prob, tol=1e-10, assume_unique_minimizer=True)
        params = rc.make_params(prob.mu, prob.lip, c=6.0, d=40)
        trace = rc.run_reconditioned(prob, params,
                                     engine.DelaySchedule.random_uniform(3, seed=1),
                                     np.zeros(40),
                                     criterion=rc.InnerCriterion(kind="fixed", epochs=1),
                                     outer_budget=400,
                                     target_objective=ref.f_star + 1e-9, seed=2)
        lam = metrics.identification_time(trace, ref)
        assert lam is not None and 0 < lam < trace.n_outer


class TestComplexity:
    def test_balance_term_optimal_at_s_star(self):
        at = metrics.theoretical_complexity(0.1, 1.0, 100, 10, 10, 1e-6)
        off = metrics.theoretical_complexity(0.1, 1.0, 100, 10, 40, 1e-6)
        assert off == pytest.approx(at * 2.0)  # max(sqrt(4), sqrt(1/4)) = 2

    def test_sqrt_scaling_in_d(self):
        base = metrics.theoretical_complexity(0.1, 1.0, 100, 10, 10, 1e-6)
        doubled = metrics.theoretical_complexity(0.1, 1.0, 200, 10, 10, 1e-6)
        assert doubled == pytest.approx(base * math.sqrt(2))

    def test_mu_zero_error(self):
        with pytest.raises(ValueError):
            metrics.theoretical_complexity(0.0, 1.0, 100, 10, 10, 1e-6)

    def test_gain_ratio_value(self):
        kappa = 0.1
        got = metrics.complexity_gain_ratio(0.1, 1.0, 1000, 12, 12.0)
        expected = (1 + kappa) / (1 - kappa) * 1.0 * (1000 + 12) / math.sqrt(1000 * 12)
        assert got == pytest.approx(expected)


class TestEmpiricalComplexity:
    def make_run(self):
        prob = strongly_convex_problem(d=10, M=3, seed=4,
                                       reg=pb.Regularizer(kind="l1", lam=0.05))
        ref = metrics.reference_solution(prob, tol=1e-11)
        trace = engine.run_davepg(prob, engine.gamma_max(prob),
                                  engine.DelaySchedule.round_robin(3), np.zeros(10),
                                  engine.StopRule(max_iterations=2000), seed=4,
                                  objective_stride=5)
        return prob, ref, trace

    def test_large_eps_costs_at_most_priming(self):
        prob, ref, trace = self.make_run()
        eps = pb.eval_objective(prob, np.zeros(10)) - ref.f_star + 1.0
        cost = metrics.empirical_complexity(trace, ref, eps)
        assert cost <= trace.priming_up + trace.priming_down + 2 * 10

    def test_monotone_in_eps(self):
        _, ref, trace = self.make_run()
        costs = [metrics.empirical_complexity(trace, ref, e) for e in (1e-1, 1e-3, 1e-6)]
        assert costs[0] <= costs[1] <= costs[2]

    def test_unreached_target_raises_with_best(self):
        prob = strongly_convex_problem(d=10, M=3, seed=4,
                                       reg=pb.Regularizer(kind="l1", lam=0.05))
        ref = metrics.reference_solution(prob, tol=1e-11)
        trace = engine.run_davepg(prob, engine.gamma_max(prob),
                                  engine.DelaySchedule.round_robin(3), np.zeros(10),
                                  engine.StopRule(max_iterations=30), seed=4,
                                  objective_stride=5)
        with pytest.raises(metrics.TargetNotReachedError) as err:
            metrics.empirical_complexity(trace, ref, 1e-12)
        assert err.value.best > 0

    def test_requires_objective_log(self):
        prob = strongly_convex_problem(d=6, M=2, seed=5)
        ref = metrics.reference_solution(prob, tol=1e-10)
        trace = engine.run_davepg(prob, engine.gamma_max(prob),
                                  engine.DelaySchedule.round_robin(2), np.zeros(6),
                                  engine.StopRule(max_iterations=50))
        with pytest.raises(ValueError):
            metrics.empirical_complexity(trace, ref, 1e-3)


class TestCommLedger:
    def test_from_engine_trace(self):
        prob = strongly_convex_problem(d=8, M=2, seed=6)
        trace = engine.run_davepg(prob, engine.gamma_max(prob),
                                  engine.DelaySchedule.round_robin(2), np.zeros(8),
                                  engine.StopRule(max_epochs=5), seed=6)
        led = metrics.CommLedger.from_trace(trace)
        assert led.total == trace.cum_up + trace.cum_down
        assert led.n_epochs == 5
        assert led.iterations_per_epoch > 0

    def test_from_outer_trace(self):
        prob = small_lasso()
        params = rc.make_params(prob.mu, prob.lip, c=6.0, d=40)
        trace = rc.run_reconditioned(prob, params,
                                     engine.DelaySchedule.round_robin(3), np.zeros(40),
                                     criterion=rc.InnerCriterion(kind="fixed", epochs=2),
                                     outer_budget=5, seed=7)
        led = metrics.CommLedger.from_trace(trace)
        assert led.n_epochs == 10
        assert led.total == trace.cum_up + trace.cum_down

    def test_ledger_conservation(self):
        prob = strongly_convex_problem(d=8, M=2, seed=7)
        from sparsepg.sparsifier import uniform_distribution
        trace = engine.run_spy(prob, engine.gamma_max(prob), uniform_distribution(8, 0.5),
                               engine.DelaySchedule.round_robin(2), np.zeros(8),
                               engine.StopRule(max_iterations=100), seed=7)
        assert trace.cum_up == trace.priming_up + sum(r.coords_up for r in trace.records)
        cum = [p.cum_up for p in trace.objective_log]
        assert cum == sorted(cum)


class TestCalibration:
    def test_hits_target_support(self):
        ds, _ = data.generate_lasso(d=50, m=70, sparsity=0.9, noise_std=0.01, seed=8)
        plan = data.shard_even(ds, 3, seed=8)
        lam_hi = float(np.max(np.abs(pb.smooth_gradient(
            data.lasso_problem(ds, plan, 1.0), np.zeros(50)))))
        lam = metrics.calibrate_l1(lambda l: data.lasso_problem(ds, plan, l), 5, lam_hi)
        prob = data.lasso_problem(ds, plan, lam)
        ref = metrics.reference_solution(prob, tol=1e-9, assume_unique_minimizer=True)
        assert ref.s_star == 5
