from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lcuprep.eigen import TruncatedState
from lcuprep.lcu import (Circuit, Convention, Gate, PrepPlan, ancilla_count, build_lcu, count_prep_rotations,
                         oaa_round, prep_angles, success_probability, synth_prep, synth_select, uncompute_ancilla)
from lcuprep.sim import StateVector, apply_circuit, circuit_unitary, post_select

from conftest import REF_AMPS, REF_BITS, random_state

GOLDEN = Path(__file__).parent / "golden"


def ancilla_state(circ: Circuit) -> np.ndarray:
    return apply_circuit(StateVector.zero(circ.n_qubits), circ).amplitudes


def random_instance(rng, n_bits, M):
    idx = rng.choice(1 << n_bits, size=M, replace=False)
    amps = rng.normal(size=M)
    amps *= rng.uniform(0.3, 1.0) / np.linalg.norm(amps)
    return TruncatedState(tuple(format(int(i), f"0{n_bits}b") for i in idx), amps)


def pipeline_fidelity(state: TruncatedState) -> float:
    lcu = build_lcu(state, Convention.DIRECT)
    out = apply_circuit(StateVector.zero(lcu.deterministic.n_qubits), lcu.deterministic)
    anc = lcu.prep.ancilla_qubits
    work, prob = post_select(out, anc, "0" * len(anc)) if anc else (out, 1.0)
    assert prob == pytest.approx(1.0, abs=1e-10)
    return abs(np.vdot(state.statevector(), work.amplitudes)) ** 2


class TestGates:
    @pytest.mark.parametrize("gate", [
        Gate("RY", (2,), 0.3), Gate("MCX", (3,), controls=((0, 1), (1, 0))), Gate("GPHASE", (), -1.2),
        Gate("PROT", (0, 2), 0.7, pauli="XY"), Gate("RZZ", (1, 2), 1e-17), Gate("SDG", (0,)),
    ])
    def test_text_round_trip(self, gate):
        assert Gate.from_line(gate.to_line()) == gate

    def test_rejects_overlapping_target_and_control(self):
        with pytest.raises(ValueError):
            Gate("CX", (1,), controls=((1, 1),))

    @pytest.mark.parametrize("kind,angle", [("RY", float("inf")), ("RY", None), ("FOO", None)])
    def test_rejects_bad_gates(self, kind, angle):
        with pytest.raises(ValueError):
            Gate(kind, (0,), angle)

    def test_circuit_rejects_out_of_layout_qubits(self):
        with pytest.raises(ValueError):
            Circuit((Gate("X", (5,)),), 2, 2)

    def test_circuit_text_round_trip(self, small_truncated):
        lcu = build_lcu(small_truncated, Convention.SQRT, has_test=True)
        circ = lcu.block
        assert Circuit.from_text(circ.to_text()) == circ

    def test_inverse_is_identity(self, rng):
        lcu = build_lcu(random_instance(rng, 5, 6), Convention.SQRT)
        circ = lcu.prep + lcu.select + lcu.uncompute
        U = circuit_unitary(circ + circ.inverse())
        np.testing.assert_allclose(U, np.eye(U.shape[0]), atol=1e-10)


class TestPrep:
    def test_point_mass_is_identity_on_zero(self):
        plan = PrepPlan(np.array([1.0, 0, 0, 0]), (1,), Convention.DIRECT)
        out = ancilla_state(synth_prep(plan))
        np.testing.assert_allclose(out, [1, 0, 0, 0], atol=1e-14)

    def test_uniform_direct(self):
        plan = PrepPlan(np.full(4, 0.5), (1, 1, 1, 1), Convention.DIRECT)
        np.testing.assert_allclose(ancilla_state(synth_prep(plan)), np.full(4, 0.5), atol=1e-14)

    @given(st.lists(st.floats(0, 1), min_size=1, max_size=16).filter(lambda v: sum(v) > 1e-3),
           st.sampled_from(list(Convention)))
    @settings(max_examples=80, deadline=None)
    def test_prepares_target(self, mags, convention):
        plan = PrepPlan.from_amplitudes(np.array(mags) / (np.linalg.norm(mags) + 1e-9), convention)
        out = ancilla_state(synth_prep(plan))
        np.testing.assert_allclose(out, plan.target(), atol=1e-10)

    def test_rotation_budget(self):
        for M in range(1, 65):
            plan = PrepPlan.from_amplitudes(np.ones(M) / np.sqrt(M))
            assert synth_prep(plan).rotation_count() <= count_prep_rotations(M)

    @pytest.mark.parametrize("mags,conv", [
        (np.zeros(4), Convention.SQRT), (np.ones(3), Convention.SQRT),
        (np.array([-0.5, 0.5]), Convention.SQRT), (np.ones(2), Convention.DIRECT),
    ])
    def test_rejects_invalid_specs(self, mags, conv):
        with pytest.raises(ValueError):
            PrepPlan(mags, (), conv)

    def test_small_instance_angles(self, small_truncated):
        """Tree angles for the four-term state, with a reparametrized reference as diagnostic.

        The reference pair (2.0663, 0.62978) encodes the two branch angles of
        the second level as a difference and as a complement of the sum.
        """
        plan = PrepPlan.from_truncated(small_truncated, Convention.DIRECT)
        top, branch = prep_angles(plan.target())
        assert top[0] == pytest.approx(0.57081, abs=1e-4)
        t2, t3 = 2.0663, 0.62978
        assert branch[1] == pytest.approx(t2 - t3, abs=1e-4)
        assert branch[0] == pytest.approx(np.pi - (t2 + t3), abs=1e-4)

    def test_small_instance_golden_circuit(self, small_truncated):
        prep = build_lcu(small_truncated, Convention.DIRECT).prep
        golden = Circuit.from_text((GOLDEN / "prep_n4_direct.txt").read_text())
        assert [g.kind for g in prep.gates] == [g.kind for g in golden.gates]
        np.testing.assert_allclose(circuit_unitary(prep), circuit_unitary(golden), atol=1e-10)


class TestSelect:
    def test_single_entry_plain_x(self):
        circ = synth_select([("0101", 1)], n_ancilla=0)
        assert circ.gates == (Gate("X", (1,)), Gate("X", (3,)))

    def test_small_instance_structure(self):
        circ = synth_select(list(zip(REF_BITS, [-1] * 4)))
        counts = circ.gate_counts()
        assert counts == {"MCX": 8}
        raw = synth_select(list(zip(REF_BITS, [-1] * 4)), normalize_global_sign=False)
        assert raw.gate_counts().get("MCZ", 0) + raw.gate_counts().get("Z", 0) == 4

    def test_signs_applied(self, rng):
        entries = [("011", 1), ("100", -1), ("110", 1)]
        circ = synth_select(entries)
        for m, (bits, sign) in enumerate(entries):
            sv = StateVector.from_bitstring(format(m, "02b") + "000")
            out = apply_circuit(sv, circ).amplitudes
            assert out[int(format(m, "02b") + bits, 2)] == pytest.approx(sign)

    @pytest.mark.parametrize("entries", [[("01", 1), ("01", 1)], [("01", 1), ("011", 1)]])
    def test_rejects_bad_entries(self, entries):
        with pytest.raises(ValueError):
            synth_select(entries)

    @given(st.integers(1, 8), st.integers(0, 2**31))
    @settings(max_examples=20, deadline=None)
    def test_unitary_on_random_states(self, M, seed):
        rng = np.random.default_rng(seed)
        tr = random_instance(rng, 4, M)
        circ = synth_select(list(zip(tr.bitstrings, tr.signs)))
        sv = StateVector(random_state(rng, 1 << circ.n_qubits), circ.n_qubits)
        back = apply_circuit(apply_circuit(sv, circ), circ.inverse())
        np.testing.assert_allclose(back.amplitudes, sv.amplitudes, atol=1e-10)


class TestPipeline:
    def test_single_entry_has_no_ancilla(self):
        circ = uncompute_ancilla(["0110"])
        assert circ.n_ancilla == 0 and circ.gates == ()

    def test_small_instance_fidelity(self, small_truncated):
        assert pipeline_fidelity(small_truncated) >= 1 - 1e-10

    def test_random_eight_strings_on_six_qubits(self, rng):
        for _ in range(5):
            assert pipeline_fidelity(random_instance(rng, 6, 8)) >= 1 - 1e-10

    @given(st.integers(1, 12), st.integers(0, 2**31))
    @settings(max_examples=25, deadline=None)
    def test_random_instances(self, M, seed):
        tr = random_instance(np.random.default_rng(seed), 4, M)
        assert pipeline_fidelity(tr) >= 1 - 1e-10


class TestSuccessProbability:
    @pytest.mark.parametrize("M", [1, 2, 4, 8, 16])
    def test_equal_weights_sqrt(self, M):
        plan = PrepPlan.from_amplitudes(np.ones(M) / np.sqrt(M), Convention.SQRT)
        assert success_probability(plan) == pytest.approx(1 / M, abs=1e-14)

    def test_reference_amplitudes(self):
        sqrt = PrepPlan.from_amplitudes(REF_AMPS, Convention.SQRT)
        direct = PrepPlan.from_amplitudes(REF_AMPS, Convention.DIRECT)
        assert sqrt.one_norm == pytest.approx(1.5430, abs=1e-12)
        assert success_probability(sqrt) == pytest.approx(0.4189, abs=1e-4)
        assert success_probability(direct) == pytest.approx(0.772, abs=5e-4)

    @given(st.integers(1, 8), st.integers(0, 2**31), st.sampled_from(list(Convention)))
    @settings(max_examples=30, deadline=None)
    def test_matches_statevector_postselection(self, M, seed, convention):
        tr = random_instance(np.random.default_rng(seed), 3, M)
        lcu = build_lcu(tr, convention)
        out = apply_circuit(StateVector.zero(lcu.block.n_qubits), lcu.block)
        anc = lcu.prep.ancilla_qubits
        prob = out.probability(anc, "0" * len(anc)) if anc else 1.0
        assert prob == pytest.approx(success_probability(lcu.plan), abs=1e-10)

    def test_sqrt_block_prepares_truncated_state(self, small_truncated):
        lcu = build_lcu(small_truncated, Convention.SQRT)
        out = apply_circuit(StateVector.zero(lcu.block.n_qubits), lcu.block)
        work, _ = post_select(out, lcu.prep.ancilla_qubits, "00")
        assert abs(np.vdot(small_truncated.statevector(), work.amplitudes)) ** 2 == pytest.approx(1, abs=1e-10)

    @pytest.mark.parametrize("M,expected", [(1, 0), (2, 6), (4, 30), (5, 126), (64, 2 * (4 ** 6 - 1))])
    def test_rotation_budget_formula(self, M, expected):
        assert count_prep_rotations(M) == expected
        assert ancilla_count(M) == (M - 1).bit_length()


class TestAmplification:
    def amplified(self, tr):
        lcu = build_lcu(tr, Convention.SQRT)
        bare = success_probability(lcu.plan)
        circ = oaa_round(lcu.prep, lcu.select, bare)
        out = apply_circuit(StateVector.zero(circ.n_qubits), circ)
        anc = circ.ancilla_qubits
        work, prob = post_select(out, anc, "0" * len(anc)) if anc else (out, 1.0)
        return bare, prob, abs(np.vdot(tr.statevector(), work.amplitudes)) ** 2

    def test_quarter_probability_goes_to_one(self):
        tr = TruncatedState(("00", "01", "10", "11"), np.full(4, 0.5))
        bare, amp, fid = self.amplified(tr)
        assert bare == pytest.approx(0.25)
        assert amp == pytest.approx(1.0, abs=1e-10)
        assert fid == pytest.approx(1.0, abs=1e-10)

    def test_small_instance_improves(self, small_truncated):
        bare, amp, fid = self.amplified(small_truncated)
        assert amp > 0.42 and amp > bare
        assert fid == pytest.approx(1.0, abs=1e-10)

    def test_matches_angle_formula(self, rng):
        for _ in range(5):
            tr = random_instance(rng, 4, 6)
            if success_probability(PrepPlan.from_truncated(tr)) > 0.5:
                continue
            bare, amp, _ = self.amplified(tr)
            theta = np.arcsin(np.sqrt(bare))
            assert amp == pytest.approx(np.sin(3 * theta) ** 2, abs=1e-10)

    def test_certain_success_unchanged(self):
        tr = TruncatedState(("0110",), np.array([1.0]))
        with pytest.warns(RuntimeWarning):
            bare, amp, _ = self.amplified(tr)
        assert bare == amp == pytest.approx(1.0, abs=1e-10)

    def test_overshoot_warning(self):
        tr = TruncatedState(("01", "10"), np.array([0.8, 0.6]))
        with pytest.warns(RuntimeWarning, match="overshoots"):
            self.amplified(tr)
