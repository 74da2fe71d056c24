import math

import numpy as np
import pytest

import entgates.linalg as la
import entgates.protocol as pr

SZ = la.OperatorMatrix((2,), la.PAULI_Z, unitary=True)


def collective_target(alpha, n):
    return la.expm_oracle(la.tensor([SZ] * n), alpha)


def random_state(rng, n):
    return la.state((2,) * n, rng.normal(size=2 ** n) + 1j * rng.normal(size=2 ** n))


class TestAngles:
    def test_fold(self):
        assert abs(pr.fold_pi(math.pi / 2) - math.pi / 2) < 1e-15
        assert abs(pr.fold_pi(math.pi / 2 + math.pi) - math.pi / 2) < 1e-12
        assert abs(pr.fold_pi(-0.2) + 0.2) < 1e-15
        assert abs(pr.fold_pi(2.0) - (2.0 - math.pi)) < 1e-15

    def test_canon(self):
        assert pr.canon_angle(0.0) == 0.0
        assert abs(pr.canon_angle(math.pi / 2)) < 1e-12
        assert abs(pr.canon_angle(0.6) - 0.6) < 1e-15
        assert abs(pr.canon_angle(1.2) - (math.pi / 2 - 1.2)) < 1e-15
        assert abs(pr.canon_angle(-0.3) - 0.3) < 1e-15

    def test_split_reassembles(self):
        for x in np.linspace(-math.pi, math.pi, 101):
            a, sigma, k = pr.split_canonical(x)
            assert 0 <= a <= math.pi / 4 + 1e-15
            assert abs(pr.fold_pi(sigma * a + k * math.pi / 2 - x)) < 1e-12


class TestGammaFor:
    def test_beta_quarter_pi(self):
        assert abs(pr.gamma_for(math.pi / 8, math.pi / 4) - math.pi / 8) < 1e-15

    def test_zero_alpha(self):
        assert pr.gamma_for(0.0, 0.7) == 0.0

    def test_gamma_equals_beta_when_tan_squared(self):
        # solve tan^2(beta) = tan(alpha) for alpha = 0.1
        alpha = 0.1
        beta = math.atan(math.sqrt(math.tan(alpha)))
        assert abs(beta - 0.30675795156643665) < 1e-12
        assert abs(pr.gamma_for(alpha, beta) - beta) < 1e-12

    def test_degenerate_beta(self):
        with pytest.raises(ValueError):
            pr.gamma_for(0.3, 0.0)


class TestStageParams:
    def test_constraint_enforced(self):
        with pytest.raises(ValueError):
            pr.StageParams(alpha=0.3, beta=0.5, gamma=0.5)

    def test_success_probability_formula(self):
        st = pr.StageParams(alpha=0.3, beta=0.5, gamma=pr.gamma_for(0.3, 0.5))
        want = (math.cos(0.5) ** 2 * math.cos(st.gamma) ** 2
                + math.sin(0.5) ** 2 * math.sin(st.gamma) ** 2)
        assert abs(st.success_probability - want) < 1e-15


class TestFailureResidual:
    def test_doubling_case_by_simulation(self, rng):
        # failure branch at beta=alpha, gamma=pi/4 applies U(-alpha)
        alpha = 0.37
        st = pr.StageParams(alpha=alpha, beta=alpha, gamma=math.pi / 4)
        assert abs(pr.failure_residual(st) + alpha) < 1e-12
        assert abs(pr.failure_next_target(st) - pr.canon_angle(2 * alpha)) < 1e-12
        chi = random_state(rng, 2)
        out = pr.run_stage(chi, st, pr.Forced("failure"))
        want = collective_target(-alpha, 2) @ chi
        assert abs(abs(np.vdot(out.state.amps, want.amps)) - 1) < 1e-12

    def test_deterministic_case(self):
        alpha = 0.4
        st = pr.StageParams(alpha=alpha, beta=math.pi / 4, gamma=alpha)
        assert abs(pr.failure_residual(st) - (alpha - math.pi / 2)) < 1e-12
        # the required correction folds to a free local layer
        assert pr.canon_angle(alpha - pr.failure_residual(st)) < 1e-12

    def test_gamma_half_pi(self):
        st = pr.StageParams(alpha=0.0, beta=0.0, gamma=math.pi / 2)
        assert pr.failure_residual(st) == 0.0


class TestRunStage:
    @pytest.mark.parametrize("n", [2, 3])
    @pytest.mark.parametrize("alpha", [0.3, math.pi / 8, -0.25])
    def test_success_branch_is_target(self, rng, n, alpha):
        beta = 0.55
        st = pr.StageParams(alpha=alpha, beta=beta,
                            gamma=pr.gamma_for(alpha, beta))
        chi = random_state(rng, n)
        out = pr.run_stage(chi, st, pr.Forced("success"))
        want = collective_target(alpha, n) @ chi
        assert abs(abs(np.vdot(out.state.amps, want.amps)) - 1) < 1e-12

    def test_probability_one_half_at_doubling_point(self, rng):
        st = pr.StageParams(alpha=0.2, beta=0.2, gamma=math.pi / 4)
        chi = random_state(rng, 2)
        out = pr.run_stage(chi, st, pr.Forced("success"))
        assert abs(out.probability - 0.5) < 1e-12

    def test_state_independent_probability(self, rng):
        st = pr.StageParams(alpha=0.17, beta=0.4,
                            gamma=pr.gamma_for(0.17, 0.4))
        want = st.success_probability
        for _ in range(100):
            chi = random_state(rng, 2)
            out = pr.run_stage(chi, st, pr.Forced("success"))
            assert abs(out.probability - want) < 1e-10

    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_parity_correction_all_patterns(self, rng, n):
        # every worker outcome pattern leaves the same branch operators
        alpha, beta = 0.29, 0.6
        st = pr.StageParams(alpha=alpha, beta=beta,
                            gamma=pr.gamma_for(alpha, beta))
        chi = random_state(rng, n)
        succ = collective_target(alpha, n) @ chi
        fail = collective_target(pr.failure_residual(st), n) @ chi
        for bits in np.ndindex(*(2,) * (n - 1)):
            out = pr.run_stage(chi, st, pr.Forced("success", bits))
            assert abs(abs(np.vdot(out.state.amps, succ.amps)) - 1) < 1e-12
            out = pr.run_stage(chi, st, pr.Forced("failure", bits))
            assert abs(abs(np.vdot(out.state.amps, fail.amps)) - 1) < 1e-12

    def test_zero_probability_branch_rejected(self):
        st = pr.StageParams(alpha=0.0, beta=0.0, gamma=0.0)
        chi = la.basis_state((2, 2), 1)
        with pytest.raises(ValueError, match="zero-probability"):
            pr.run_stage(chi, st, pr.Forced("failure"))

    def test_coupling_matches_stator_action(self, rng):
        # Step 1 as simulated (tensor + per-party CZ) equals the stator rule
        beta, n = 0.45, 3
        chi = random_state(rng, n)
        joint = la.tensor([la.resource_state(beta, n), chi])
        cz = np.diag([1, 1, 1, -1]).astype(complex)
        for j in range(n):
            joint = la.apply_local(joint, cz, [j, n + j])
        via_stator = pr.coupling_stator(beta, n).apply(chi)
        assert np.max(np.abs(joint.amps - via_stator.amps)) < 1e-14


class TestDeterministicStage:
    @pytest.mark.parametrize("alpha", [math.pi / 4, 0.3, -0.5, 0.0])
    @pytest.mark.parametrize("branch", ["success", "failure"])
    def test_both_branches_apply_target(self, rng, alpha, branch):
        chi = random_state(rng, 2)
        out = pr.run_deterministic_stage(chi, alpha, pr.Forced(branch))
        want = collective_target(alpha, 2) @ chi
        assert abs(abs(np.vdot(out.state.amps, want.amps)) - 1) < 1e-12

    def test_consumes_one_ebit(self):
        assert la.resource_entanglement(math.pi / 4) == 1.0


class TestSchedules:
    def test_doubling_dyadic(self):
        sched = pr.doubling_schedule(math.pi / 8)
        assert len(sched.stages) == 2
        assert not sched.terminal
        assert abs(sched.stages[0].beta - math.pi / 8) < 1e-15
        assert abs(sched.stages[1].alpha - math.pi / 4) < 1e-12

    def test_doubling_non_dyadic_has_terminal(self):
        sched = pr.doubling_schedule(0.3, max_stages=6)
        assert sched.terminal
        assert len(sched.stages) == 5

    def test_inconsistent_chain_rejected(self):
        sched = pr.doubling_schedule(math.pi / 8)
        bad = list(sched.stages)
        bad[1] = pr.StageParams(alpha=0.2, beta=0.2, gamma=math.pi / 4)
        with pytest.raises(ValueError):
            pr.StageSchedule(alpha=math.pi / 8, stages=tuple(bad),
                             max_stages=sched.max_stages, terminal=False)

    def test_missing_terminal_rejected(self):
        sched = pr.doubling_schedule(0.3, max_stages=6)
        with pytest.raises(ValueError):
            pr.StageSchedule(alpha=0.3, stages=sched.stages,
                             max_stages=6, terminal=False)


class TestRunProtocol:
    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_every_leaf_implements_target(self, rng, n):
        for alpha in (math.pi / 8, 0.41, 1.1):
            sched = pr.doubling_schedule(alpha, max_stages=6)
            target = collective_target(alpha, n)
            chi = random_state(rng, n)
            leaves = list(pr.enumerate_protocol_leaves(alpha, sched, chi))
            assert leaves
            for t in leaves:
                d = la.op_distance_phase_invariant(t.net_operator, target)
                assert d < 1e-10
                want = target @ chi
                assert abs(abs(np.vdot(t.final_state.amps, want.amps)) - 1) < 1e-10

    def test_empirical_operator_matches_oracle(self, rng):
        alpha, n = 0.37, 2
        sched = pr.doubling_schedule(alpha, max_stages=5)
        target = collective_target(alpha, n)
        chi = random_state(rng, n)
        for t in pr.enumerate_protocol_leaves(alpha, sched, chi):
            forced = [pr.Forced(r.branch) for r in t.outcomes]
            op = pr.empirical_net_operator(alpha, sched, n, forced)
            assert la.op_distance_phase_invariant(op, target) < 1e-10

    def test_alpha_zero_trivial(self):
        sched = pr.doubling_schedule(0.0)
        t = pr.run_protocol(0.0, sched, la.basis_state((2, 2), 0),
                            np.random.default_rng(1))
        assert t.ebits_consumed == 0.0
        assert t.bits_from_leader == 0
        assert not t.outcomes

    def test_metering_matches_executed_stages(self, rng):
        sched = pr.doubling_schedule(0.3, max_stages=6)
        t = pr.run_protocol(0.3, sched, random_state(rng, 2),
                            np.random.default_rng(7))
        total = sum(la.resource_entanglement(r.beta) for r in t.outcomes)
        assert t.ebits_consumed == total
        assert t.bits_from_leader == len(t.outcomes)
        assert t.bits_from_workers == (len(t.outcomes),)

    def test_monte_carlo_stage_one_success_rate(self, rng):
        alpha = math.pi / 8
        sched = pr.doubling_schedule(alpha)
        chi = la.basis_state((2, 2), 0)
        wins = 0
        runs = 2000
        master = np.random.default_rng(5)
        for _ in range(runs):
            t = pr.run_protocol(alpha, sched, chi, master)
            wins += t.outcomes[0].branch == "success"
        assert abs(wins / runs - 0.5) < 0.04

    def test_seeded_runs_reproduce(self):
        sched = pr.doubling_schedule(0.3, max_stages=6)
        chi = la.basis_state((2, 2), 0)
        a = pr.run_protocol(0.3, sched, chi, np.random.default_rng(11))
        b = pr.run_protocol(0.3, sched, chi, np.random.default_rng(11))
        assert [r.branch for r in a.outcomes] == [r.branch for r in b.outcomes]
        assert np.array_equal(a.final_state.amps, b.final_state.amps)
