import json

import numpy as np
import pytest

import entgates.compiler as co
import entgates.linalg as la

SZ = la.PAULI_Z
SX = la.PAULI_X
SY = la.PAULI_Y


def random_factors(rng, dims):
    out = []
    for d in dims:
        A = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        out.append((A + A.conj().T) / 2)
    return out


def oracle(spec, sign=1.0):
    return la.expm_oracle(spec.dense(), sign * spec.time)


class TestSpecValidation:
    def test_rejects_non_hermitian(self):
        with pytest.raises(co.HamiltonianFormatError, match="factor 1"):
            co.HamiltonianSpec.single([SZ, np.array([[0, 1], [0, 0]])], time=1.0)

    def test_rejects_large_factor(self):
        with pytest.raises(co.HamiltonianFormatError, match="dimension"):
            co.HamiltonianSpec.single([np.eye(5)], time=1.0)

    def test_rejects_bad_slices(self):
        with pytest.raises(co.HamiltonianFormatError):
            co.HamiltonianSpec.single([SZ, SZ], time=1.0, slices=0)

    def test_json_loader_roundtrip(self, tmp_path):
        doc = {"factors": [[[0, 0], [0, 0]], [[1, 0], [0, -1]]],
               "time": 0.5, "slices": 2}
        doc["factors"][0] = [[0.0, [0.0, -1.0]], [[0.0, 1.0], 0.0]]  # sigma_y
        path = tmp_path / "h.json"
        path.write_text(json.dumps(doc))
        spec = co.load_hamiltonian(str(path))
        assert np.allclose(spec.terms[0][0], SY)
        assert spec.time == 0.5 and spec.slices == 2

    def test_json_loader_names_offending_factor(self):
        with pytest.raises(co.HamiltonianFormatError, match="term 0 factor 1"):
            co.load_hamiltonian({"factors": [[[1, 0], [0, 1]],
                                             [[1, 0], [0]]], "time": 1.0})

    def test_json_loader_field_errors(self):
        with pytest.raises(co.HamiltonianFormatError, match="time"):
            co.load_hamiltonian({"factors": [[[1]]]})
        with pytest.raises(co.HamiltonianFormatError, match="factors"):
            co.load_hamiltonian({"time": 1.0})


class TestDiagonalize:
    def test_sigma_z(self):
        form = co.diagonalize(co.HamiltonianSpec.single([SZ, SZ], time=1.0))
        assert np.allclose(form.diagonals[0], [1, -1])
        assert form.norms == (1.0, 1.0) and form.delta == 1.0
        assert np.allclose(np.abs(form.locals_q[0]), np.eye(2))

    def test_sigma_x_hadamard_basis(self):
        form = co.diagonalize(co.HamiltonianSpec.single([SX, SX], time=1.0))
        assert np.allclose(form.diagonals[0], [1, -1])
        q = form.locals_q[0]
        assert np.allclose(q @ np.diag(form.diagonals[0]) @ q.conj().T, SX)

    def test_scaling(self):
        form = co.diagonalize(
            co.HamiltonianSpec.single([np.diag([2.0, 1.0]), SZ], time=1.0))
        assert np.allclose(form.diagonals[0], [1.0, 0.5])
        assert form.norms[0] == 2.0
        assert form.delta == 2.0

    def test_reconstruction(self, rng):
        spec = co.HamiltonianSpec.single(random_factors(rng, (3, 4)), time=1.0)
        form = co.diagonalize(spec)
        for H, q, a, nrm in zip(spec.terms[0], form.locals_q,
                                form.diagonals, form.norms):
            back = nrm * q @ np.diag(a) @ q.conj().T
            assert np.max(np.abs(back - H)) < 1e-9
            assert abs(np.max(np.abs(a)) - 1.0) < 1e-12
            assert np.all(np.diff(a) <= 1e-12)


class TestFactorStep:
    def test_all_pm_one_no_events(self):
        form = co.diagonalize(co.HamiltonianSpec.single([SX], time=1.0))
        prims = co.compile_factor_step(0, form, 0.4)
        assert len(prims) == 1
        assert isinstance(prims[0], co.ZZRotation)

    def test_zero_interval(self):
        form = co.diagonalize(co.HamiltonianSpec.single([SZ], time=1.0))
        assert co.compile_factor_step(0, form, 0.0) == []

    def test_half_level_events_at_midpoint(self):
        # spectrum (1, 0): the zero level needs events at dt/2 and dt
        form = co.diagonalize(
            co.HamiltonianSpec.single([np.diag([1.0, 0.0])], time=1.0))
        dt = 0.8
        prims = co.compile_factor_step(0, form, dt)
        rot = [p.angle for p in prims if isinstance(p, co.ZZRotation)]
        swaps = [p for p in prims if isinstance(p, co.LocalLayer)]
        assert len(rot) == 2 and len(swaps) == 2
        assert abs(rot[0] - dt / 2) < 1e-15 and abs(rot[1] - dt / 2) < 1e-15
        # dense check: phases diag(e^{i dt}, 1) on the embedded level pair
        sched = co.CompiledSchedule(
            primitives=(co.AncillaPrep(0), co.SubspaceEmbed(0, ()),
                        *prims, co.SubspaceRestrict(0, ())),
            dims=(2,), time=dt, slices=1, convention="+i")
        op, leak = co.evaluate_schedule(sched)
        assert leak < 1e-12
        want = np.diag([np.exp(1j * dt), 1.0])
        assert np.max(np.abs(op.entries - want)) < 1e-12


class TestCompile:
    def test_zz_single_rotation(self):
        spec = co.HamiltonianSpec.single([SZ, SZ], time=0.7)
        sched = co.compile(spec)
        assert sched.interior_swap_events == 0
        assert abs(sched.total_rotation - 0.7) < 1e-15
        op, leak = co.evaluate_schedule(sched)
        assert leak < 1e-12
        assert la.op_distance_phase_invariant(op, oracle(spec)) < 1e-10

    def test_xx_hadamard_conjugation(self):
        spec = co.HamiltonianSpec.single([SX, SX], time=0.5)
        sched = co.compile(spec)
        assert sched.interior_swap_events == 0
        kinds = [p.kind for p in sched.primitives
                 if isinstance(p, co.LocalLayer)]
        assert kinds and all(k == "basis" for k in kinds)
        op, leak = co.evaluate_schedule(sched)
        assert leak < 1e-12
        assert la.op_distance_phase_invariant(op, oracle(spec)) < 1e-10

    def test_z_tensor_half_projector(self):
        spec = co.HamiltonianSpec.single([SZ, np.diag([1.0, 0.0])], time=1.0)
        sched = co.compile(spec)
        op, leak = co.evaluate_schedule(sched)
        assert leak < 1e-12
        assert la.op_distance_phase_invariant(op, oracle(spec)) < 1e-10

    @pytest.mark.parametrize("trial", range(8))
    def test_random_specs_match_oracle(self, rng, trial):
        n = int(rng.integers(1, 4))
        dims = tuple(int(d) for d in rng.integers(2, 4, size=n))
        spec = co.HamiltonianSpec.single(random_factors(rng, dims),
                                         time=float(rng.uniform(-1.5, 1.5)),
                                         slices=int(rng.integers(1, 4)))
        sched = co.compile(spec)
        op, leak = co.evaluate_schedule(sched)
        assert leak < 1e-10
        assert la.op_distance_phase_invariant(op, oracle(spec)) < 1e-8
        assert abs(sched.total_rotation
                   - abs(spec.time) * co.diagonalize(spec).delta) < 1e-12

    def test_exactness_independent_of_slices(self, rng):
        spec1 = co.HamiltonianSpec.single(random_factors(rng, (3, 2)),
                                          time=0.9, slices=1)
        for m in (1, 2, 7):
            spec = co.HamiltonianSpec(terms=spec1.terms, time=0.9, slices=m)
            op, leak = co.evaluate_schedule(co.compile(spec))
            assert la.op_distance_phase_invariant(op, oracle(spec)) < 1e-8
            assert leak < 1e-10

    def test_self_inverse_has_no_interior_events(self, rng):
        # involutory factors: spectra in {-1, +1}
        for _ in range(3):
            facs = []
            for d in (2, 3):
                Q = np.linalg.qr(rng.normal(size=(d, d))
                                 + 1j * rng.normal(size=(d, d)))[0]
                signs = np.diag([1.0] + [-1.0] * (d - 1))
                facs.append(Q @ signs @ Q.conj().T)
            spec = co.HamiltonianSpec.single(facs, time=0.6)
            sched = co.compile(spec)
            assert sched.interior_swap_events == 0
            op, leak = co.evaluate_schedule(sched)
            assert la.op_distance_phase_invariant(op, oracle(spec)) < 1e-8

    def test_physics_convention(self):
        spec = co.HamiltonianSpec.single([SX, SZ], time=0.4)
        op, _ = co.evaluate_schedule(co.compile(spec, convention="-i"))
        assert la.op_distance_phase_invariant(op, oracle(spec, sign=-1.0)) < 1e-10

    def test_zero_hamiltonian(self):
        spec = co.HamiltonianSpec.single([np.zeros((2, 2)), SZ], time=0.7)
        op, leak = co.evaluate_schedule(co.compile(spec))
        assert np.max(np.abs(op.entries - np.eye(4))) < 1e-12

    def test_rejects_multi_term(self):
        spec = co.HamiltonianSpec(terms=((SZ, SZ), (SX, SX)), time=0.1)
        with pytest.raises(ValueError):
            co.compile(spec)


class TestCompileSum:
    def test_commuting_terms_exact_at_one_slice(self):
        z, i2 = SZ, np.eye(2)
        spec = co.HamiltonianSpec(
            terms=((z, z, i2), (i2, z, z)), time=0.8, slices=1)
        op, _ = co.evaluate_schedule(co.compile_sum(spec))
        assert la.op_distance_phase_invariant(op, oracle(spec)) < 1e-9

    def test_single_term_identical_to_compile(self, rng):
        spec = co.HamiltonianSpec.single(random_factors(rng, (2, 3)),
                                         time=0.5, slices=3)
        a, _ = co.evaluate_schedule(co.compile(spec))
        b, _ = co.evaluate_schedule(co.compile_sum(spec))
        assert np.max(np.abs(a.entries - b.entries)) < 1e-12

    def test_first_order_error_scaling(self):
        # genuinely non-commuting pair: [X(x)X, Z(x)I] != 0
        spec = co.HamiltonianSpec(terms=((SX, SX), (SZ, np.eye(2))), time=0.4)
        target = oracle(spec)
        errs = []
        for m in (8, 16, 32, 64):
            op, _ = co.evaluate_schedule(co.compile_sum(spec, slices=m))
            errs.append(la.op_distance_phase_invariant(op, target))
        slope = np.polyfit(np.log(np.array([8, 16, 32, 64])),
                           np.log(errs), 1)[0]
        assert -1.3 <= slope <= -0.8
        assert errs[0] / errs[-1] > 5  # error at m=64 well below m=8

    def test_stated_pair_commutes_and_is_exact(self):
        # X(x)X and Z(x)Z commute on two qubits: the product formula is exact
        spec = co.HamiltonianSpec(terms=((SX, SX), (SZ, SZ)), time=0.4)
        target = oracle(spec)
        for m in (1, 8, 64):
            op, _ = co.evaluate_schedule(co.compile_sum(spec, slices=m))
            assert la.op_distance_phase_invariant(op, target) < 1e-9


class TestCost:
    def test_linear_single_term(self):
        spec = co.HamiltonianSpec.single([SX, SX], time=0.5, slices=4)
        sched = co.compile(spec)
        assert abs(co.cost_estimate(sched, "linear") - 5.6418 * 0.5) < 1e-10

    def test_zero_time(self):
        spec = co.HamiltonianSpec.single([SZ, SZ], time=0.0)
        assert co.cost_estimate(co.compile(spec), "linear") == 0.0

    def test_linear_sum_of_norms(self):
        spec = co.HamiltonianSpec(terms=((SX, SX), (SZ, SZ)), time=0.4)
        sched = co.compile_sum(spec, slices=16)
        assert abs(co.cost_estimate(sched, "linear") - 5.6418 * 0.4 * 2) < 1e-9

    def test_cost_additivity_over_slices(self):
        spec = co.HamiltonianSpec(terms=((SX, SX), (SZ, SZ)), time=0.4)
        c1 = co.cost_estimate(co.compile_sum(spec, slices=1), "linear")
        c8 = co.cost_estimate(co.compile_sum(spec, slices=8), "linear")
        assert abs(c8 - c1) < 1e-9

    def test_exact_mode_matches_linear_for_small_segments(self, opt_full):
        # slicing makes every rotation angle <= 1e-4
        spec = co.HamiltonianSpec.single([SZ, SZ], time=1e-3, slices=16)
        sched = co.compile(spec)
        assert max(abs(a) for a in sched.rotation_angles) <= 1e-4
        lin = co.cost_estimate(sched, "linear")
        exact = co.cost_estimate(sched, "exact", optimizer=opt_full)
        assert abs(exact - lin) / lin < 0.01
