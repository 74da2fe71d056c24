import math

import numpy as np
import pytest

import entgates.linalg as la
import entgates.protocol as pr
from entgates._backend import HAS_NUMBA
from entgates.optimizer import (
    EntanglementOptimizer,
    OptimizerConfig,
    baseline_cost,
    baseline_dyadic_cost,
    expected_cost,
)

H_PI8 = la.binary_entropy(math.sin(math.pi / 8) ** 2)


class TestExpectedCost:
    def test_single_deterministic_stage(self):
        sched = pr.StageSchedule(alpha=0.3, stages=(), max_stages=2,
                                 terminal=True)
        prof = expected_cost(sched)
        assert prof.expected_ebits == 1.0
        assert prof.stage_reach_probs == (1.0,)

    def test_doubling_pi_over_8(self):
        prof = expected_cost(pr.doubling_schedule(math.pi / 8))
        assert abs(prof.expected_ebits - (H_PI8 + 0.5)) < 1e-14

    def test_doubling_pi_over_4(self):
        prof = expected_cost(pr.doubling_schedule(math.pi / 4))
        assert abs(prof.expected_ebits - 1.0) < 1e-14

    def test_reach_recursion(self):
        sched = pr.doubling_schedule(0.21, max_stages=8)
        prof = expected_cost(sched)
        assert prof.stage_reach_probs[0] == 1.0
        reach = 1.0
        for st, p in zip(sched.stages, prof.stage_reach_probs):
            assert abs(p - reach) < 1e-15
            reach *= 1.0 - st.success_probability
        total = sum(p * st.ebits for st, p in
                    zip(sched.stages, prof.stage_reach_probs))
        if sched.terminal:
            total += prof.stage_reach_probs[-1]
        assert abs(prof.expected_ebits - total) < 1e-10

    def test_monte_carlo_agreement(self, rng):
        # analytic expectation within 3 standard errors of seeded runs
        for alpha in (math.pi / 8, 0.3):
            sched = pr.doubling_schedule(alpha, max_stages=8)
            prof = expected_cost(sched)
            chi = la.basis_state((2, 2), 0)
            master = np.random.default_rng(99)
            samples = [pr.run_protocol(alpha, sched, chi, master).ebits_consumed
                       for _ in range(1500)]
            mean = float(np.mean(samples))
            se = float(np.std(samples, ddof=1)) / math.sqrt(len(samples))
            assert abs(mean - prof.expected_ebits) < 3 * se + 1e-9

    def test_monte_carlo_agreement_optimized_schedule(self, opt_small):
        prof = opt_small.optimize_schedule(0.05)
        chi = la.basis_state((2, 2), 0)
        master = np.random.default_rng(123)
        samples = [pr.run_protocol(0.05, prof.schedule, chi,
                                   master).ebits_consumed
                   for _ in range(2000)]
        mean = float(np.mean(samples))
        se = float(np.std(samples, ddof=1)) / math.sqrt(len(samples))
        assert abs(mean - prof.expected_ebits) < 3 * se + 1e-9


class TestBaseline:
    def test_quarter_pi(self):
        assert abs(baseline_cost(math.pi / 4) - 1.0) < 1e-14

    def test_pi_over_8_hand_sum(self):
        assert abs(baseline_cost(math.pi / 8) - (H_PI8 + 0.5)) < 1e-14

    def test_matches_doubling_schedule_for_dyadic(self):
        for n in (3, 4, 6, 9):
            alpha = math.pi / 2 ** n
            prof = expected_cost(pr.doubling_schedule(alpha, max_stages=n + 2))
            assert abs(baseline_cost(alpha) - prof.expected_ebits) < 1e-12

    def test_limit_constant(self):
        r = baseline_dyadic_cost(24) / (math.pi / 2 ** 24)
        assert abs(r - 5.9793) < 0.0005

    def test_domain(self):
        with pytest.raises(ValueError):
            baseline_cost(0.0)
        with pytest.raises(ValueError):
            baseline_cost(math.pi)


class TestOptimizeSchedule:
    def test_never_exceeds_one(self, opt_small):
        for a in np.geomspace(1e-6, math.pi / 4, 15):
            assert opt_small.optimize_schedule(a).expected_ebits <= 1.0 + 1e-12

    def test_dominates_baseline(self, opt_small):
        for a in np.geomspace(1e-5, math.pi / 4, 12):
            prof = opt_small.optimize_schedule(a)
            assert prof.expected_ebits <= baseline_cost(a) + 1e-9

    def test_small_angle_rate(self, opt_small):
        a = math.pi / 2 ** 20 * 1.3
        r = opt_small.optimize_schedule(a).expected_ebits / a
        assert 5.55 <= r <= 5.66

    def test_schedule_is_runnable_and_exact(self, opt_small, rng):
        alpha = 0.11
        prof = opt_small.optimize_schedule(alpha)
        target = la.expm_oracle(
            la.tensor([la.OperatorMatrix((2,), la.PAULI_Z, unitary=True)] * 2),
            alpha)
        chi = la.state((2, 2), rng.normal(size=4) + 1j * rng.normal(size=4))
        # spot-check a few leaves of a long optimized chain
        for l in (0, 1, 2):
            forced = [pr.Forced("failure")] * l + [pr.Forced("success")]
            t = pr.run_protocol(alpha, prof.schedule, chi, forced)
            assert la.op_distance_phase_invariant(t.net_operator, target) < 1e-10

    def test_bellman_consistency_at_nodes(self, opt_small):
        tabs = opt_small.tables()
        idx = np.linspace(0, opt_small.a_grid.shape[0] - 1, 12, dtype=int)
        for i in idx:
            a = float(opt_small.a_grid[i])
            if a > 0.01:
                continue  # value-scale keeps refinement noise below 1e-8
            found = opt_small._best_stage(a, tabs[2])
            if found is None:
                continue
            val = found[0]
            assert abs(val - tabs[1][i]) < 1e-8

    def test_profile_matches_value(self, opt_small):
        # agreement is limited by the coarse memo grid of this fixture
        for a in (1e-4, 0.01, 0.2):
            prof = opt_small.optimize_schedule(a)
            assert abs(prof.expected_ebits - opt_small.value(a)) < 3e-5

    def test_small_angle_linearity(self, opt_small):
        rates = [opt_small.value(a) / a
                 for a in np.geomspace(math.pi / 2 ** 22, math.pi / 2 ** 20, 9)]
        assert (max(rates) - min(rates)) / min(rates) < 0.01

    def test_rejects_bad_alpha(self, opt_small):
        with pytest.raises(ValueError):
            opt_small.optimize_schedule(float("nan"))


class TestAsymptoticBound:
    def test_bound_above_value(self, opt_small):
        A = math.pi / 2 ** 20
        assert (opt_small.asymptotic_bound(A)
                >= opt_small.optimize_schedule(A).expected_ebits / A)

    def test_tail_truncation_converged(self, opt_small):
        A = math.pi / 2 ** 20 * 1.4
        assert abs(opt_small.asymptotic_bound(A, tail_tol=1e-14)
                   - opt_small.asymptotic_bound(A, tail_tol=1e-20)) < 1e-10

    def test_domain(self, opt_small):
        with pytest.raises(ValueError):
            opt_small.asymptotic_bound(0.0)


class TestSweep:
    def test_rows_and_dominance(self, opt_small):
        alphas = np.geomspace(1e-4, math.pi / 4, 10)
        rows = opt_small.sweep_entanglement_curve(alphas)
        assert len(rows) == 10
        for a, opt, base in rows:
            assert opt <= base + 1e-9
        # at pi/4 both schemes collapse to the single 1-ebit stage
        assert abs(rows[-1][1] - 1.0) < 1e-6
        assert abs(rows[-1][2] - 1.0) < 1e-6

    def test_domain(self, opt_small):
        with pytest.raises(ValueError):
            opt_small.sweep_entanglement_curve([0.0, 0.1])


class TestConfig:
    def test_refine_tol_cap(self):
        with pytest.raises(ValueError):
            OptimizerConfig(refine_tol=1e-6)

    def test_memo_span(self):
        with pytest.raises(ValueError):
            OptimizerConfig(memo_alpha_min=1e-6)

    def test_interpolation_honesty(self):
        coarse = EntanglementOptimizer(
            OptimizerConfig(memo_points_per_decade=1024, beta_grid=512))
        fine = EntanglementOptimizer(
            OptimizerConfig(memo_points_per_decade=2048, beta_grid=512))
        probes = np.geomspace(2e-8, math.pi / 4 * 0.999, 20)
        worst = max(abs(coarse.value(a) - fine.value(a)) for a in probes)
        assert worst < 1e-6


@pytest.mark.skipif(not HAS_NUMBA, reason="numba backend unavailable")
class TestBackendTwins:
    def test_sweep_agreement(self):
        from entgates import _kernels_numba as knb
        from entgates import _kernels_numpy as knp

        opt = EntanglementOptimizer(OptimizerConfig(beta_grid=256,
                                                    memo_points_per_decade=256))
        g = opt.betas
        fnext = np.ones(opt.a_grid.shape[0])
        args = (fnext, opt.a_grid, opt.x0, opt.hx,
                opt.config.memo_alpha_min, g.lnb, g.eb, g.tb, g.t2b,
                g.s2b, g.c2b)
        f_np, lb_np = knp.backward_sweep(*args)
        f_nb, lb_nb = knb.backward_sweep(*args)
        assert np.max(np.abs(f_np - f_nb)) < 1e-12
        assert np.array_equal(np.isnan(lb_np), np.isnan(lb_nb))
        both = ~np.isnan(lb_np)
        assert np.max(np.abs(lb_np[both] - lb_nb[both])) < 1e-12
