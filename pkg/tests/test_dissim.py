from __future__ import annotations

import numpy as np
import pytest

from conftest import make_sequence_set
from medtraj.descriptives import TransitionMatrix, transition_rates
from medtraj.dissim import (
    CostModel,
    DissimilarityMatrix,
    constant_costs,
    distance_matrix,
    om_distance,
    set_threads,
    trate_costs,
)
from medtraj.errors import ValidationError
from medtraj.sequences import Alphabet, StateSequence, validate_set
from oracles import om_bruteforce

ABC = Alphabet(("A", "B", "C"))


def seq(states, subject="p", alphabet=ABC):
    return StateSequence(subject, tuple(states), alphabet)


def random_cost(rng, n_states, indel=None):
    sub = np.zeros((n_states, n_states))
    for i in range(n_states):
        for j in range(i + 1, n_states):
            sub[i, j] = sub[j, i] = float(rng.uniform(0.1, 3.0))
    return CostModel(float(rng.uniform(0.2, 2.0)) if indel is None else indel, sub)


class TestCostModel:
    def test_rejects_asymmetric(self):
        sub = np.array([[0.0, 1.0], [2.0, 0.0]])
        with pytest.raises(ValidationError, match="symmetric"):
            CostModel(1.0, sub)

    def test_rejects_nonzero_diagonal(self):
        sub = np.array([[0.5, 1.0], [1.0, 0.0]])
        with pytest.raises(ValidationError, match="diagonal"):
            CostModel(1.0, sub)

    def test_rejects_negative_and_nonfinite(self):
        with pytest.raises(ValidationError):
            CostModel(1.0, np.array([[0.0, -1.0], [-1.0, 0.0]]))
        with pytest.raises(ValidationError):
            CostModel(1.0, np.array([[0.0, np.inf], [np.inf, 0.0]]))


class TestTrateCosts:
    def tm(self, probs, zero_rows=()):
        probs = np.asarray(probs, dtype=float)
        labels = tuple(chr(ord("A") + i) for i in range(probs.shape[0]))
        counts = (probs * 100).astype(np.int64)
        return TransitionMatrix(labels, counts, probs, zero_rows)

    def test_identity_rates_give_max_cost(self):
        cost = trate_costs(self.tm(np.eye(3)))
        off = cost.sub[~np.eye(3, dtype=bool)]
        assert set(off.tolist()) == {2.0}

    def test_symmetric_half_rates(self):
        probs = np.array([[0.5, 0.5], [0.5, 0.5]])
        cost = trate_costs(self.tm(probs))
        assert cost.sub[0, 1] == 1.0

    def test_hand_counted_aabb(self):
        # A,A,B,B gives P[A] = (0.5, 0.5), P[B] = (0, 1): sub = 2 - 0.5 - 0 = 1.5
        tm = transition_rates(
            validate_set([StateSequence("p", (0, 0, 1, 1), Alphabet(("A", "B")))])
        )
        cost = trate_costs(tm)
        assert cost.sub[0, 1] == pytest.approx(1.5)

    def test_unvisited_pairs_get_cval(self):
        probs = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 0.0]])
        cost = trate_costs(self.tm(probs, zero_rows=(2,)), cval=2.5)
        assert cost.sub[0, 2] == 2.5
        assert cost.sub[1, 2] == 2.5

    def test_clamped_at_zero(self):
        probs = np.array([[0.0, 1.0], [1.0, 0.0]])
        cost = trate_costs(self.tm(probs), cval=1.5)
        assert cost.sub[0, 1] == 0.0

    def test_cval_must_be_positive(self):
        with pytest.raises(ValidationError):
            trate_costs(self.tm(np.eye(2)), cval=0.0)

    def test_range_and_symmetry(self, rng):
        ss = make_sequence_set(rng, n=40, length=52, n_states=8)
        cost = trate_costs(transition_rates(ss))
        assert np.array_equal(cost.sub, cost.sub.T)
        assert np.diagonal(cost.sub).tolist() == [0.0] * 8
        assert (cost.sub >= 0).all() and (cost.sub <= 2.0).all()


class TestOmDistance:
    def test_self_distance_zero(self, rng):
        cost = random_cost(rng, 3)
        for _ in range(20):
            s = seq(rng.integers(0, 3, int(rng.integers(1, 8))))
            assert om_distance(s, s, cost) == 0.0

    def test_empty_costs_length_times_indel(self):
        cost = constant_costs(3, indel=0.7)
        s = seq([0, 1, 2, 1])
        empty = seq([])
        assert om_distance(s, empty, cost) == pytest.approx(4 * 0.7)
        assert om_distance(empty, empty, cost) == 0.0

    def test_single_substitution(self):
        cost = constant_costs(3, sub_cost=1.3, indel=1.0)
        assert om_distance(seq([0, 1]), seq([0, 2]), cost) == pytest.approx(1.3)

    def test_indel_beats_expensive_substitution(self):
        cost = constant_costs(3, sub_cost=5.0, indel=1.0)
        # cheaper to delete and insert than substitute
        assert om_distance(seq([0]), seq([1]), cost) == pytest.approx(2.0)

    def test_alphabet_mismatch_rejected(self):
        other = Alphabet(("X", "Y", "Z"))
        with pytest.raises(ValidationError, match="alphabet"):
            om_distance(seq([0]), StateSequence("q", (0,), other), constant_costs(3))

    def test_matches_bruteforce_oracle(self, rng):
        cost_pool = [random_cost(rng, 3) for _ in range(10)]
        for trial in range(300):
            cost = cost_pool[trial % len(cost_pool)]
            s = seq(rng.integers(0, 3, int(rng.integers(0, 6))))
            t = seq(rng.integers(0, 3, int(rng.integers(0, 6))))
            got = om_distance(s, t, cost)
            want = om_bruteforce(s.states, t.states, cost.sub.tolist(), cost.indel)
            assert got == pytest.approx(want, abs=1e-9)


class TestOmProperties:
    def trate_cost_for(self, ss):
        return trate_costs(transition_rates(ss))

    def test_symmetry_exact(self, rng):
        ss = make_sequence_set(rng, n=40, length=52, n_states=8, persistence=0.6)
        cost = self.trate_cost_for(ss)
        for _ in range(60):
            i, j = rng.integers(0, len(ss), 2)
            a, b = ss.sequences[int(i)], ss.sequences[int(j)]
            assert om_distance(a, b, cost) == om_distance(b, a, cost)

    def test_triangle_inequality(self, rng):
        ss = make_sequence_set(rng, n=60, length=52, n_states=8, persistence=0.6)
        cost = self.trate_cost_for(ss)
        for _ in range(120):
            i, j, k = rng.integers(0, len(ss), 3)
            s, t, u = (ss.sequences[int(x)] for x in (i, j, k))
            d_su = om_distance(s, u, cost)
            d_st = om_distance(s, t, cost)
            d_tu = om_distance(t, u, cost)
            assert d_su <= d_st + d_tu + 1e-9

    def test_upper_bound(self, rng):
        ss = make_sequence_set(rng, n=30, length=52, n_states=8)
        cost = self.trate_cost_for(ss)
        bound = 52 * min(2 * cost.indel, float(cost.sub.max()))
        for _ in range(40):
            i, j = rng.integers(0, len(ss), 2)
            assert om_distance(ss.sequences[int(i)], ss.sequences[int(j)], cost) <= bound + 1e-9

    def test_power_of_two_scaling_is_exact(self, rng):
        ss = make_sequence_set(rng, n=20, length=52, n_states=8)
        cost = self.trate_cost_for(ss)
        for lam in (0.5, 2.0, 4.0):
            scaled = cost.scaled(lam)
            for _ in range(20):
                i, j = rng.integers(0, len(ss), 2)
                a, b = ss.sequences[int(i)], ss.sequences[int(j)]
                assert om_distance(a, b, scaled) == lam * om_distance(a, b, cost)

    def test_general_scaling_close(self, rng):
        ss = make_sequence_set(rng, n=10, length=52, n_states=8)
        cost = self.trate_cost_for(ss)
        scaled = cost.scaled(3.0)
        for _ in range(20):
            i, j = rng.integers(0, len(ss), 2)
            a, b = ss.sequences[int(i)], ss.sequences[int(j)]
            assert om_distance(a, b, scaled) == pytest.approx(
                3.0 * om_distance(a, b, cost), rel=1e-12
            )


class TestDistanceMatrix:
    def test_identical_sequences_all_zero(self):
        ss = validate_set([seq([0, 1, 2], subject=f"p{i}") for i in range(4)])
        dm = distance_matrix(ss, constant_costs(3))
        assert dm.condensed.tolist() == [0.0] * 6

    def test_matches_individual_calls(self, rng):
        ss = make_sequence_set(rng, n=3, length=10, n_states=3)
        cost = random_cost(rng, 3)
        dm = distance_matrix(ss, cost)
        for i in range(3):
            for j in range(3):
                want = om_distance(ss.sequences[i], ss.sequences[j], cost)
                assert dm.get(i, j) == want

    def test_dense_reference_and_symmetry(self, rng):
        ss = make_sequence_set(rng, n=100, length=20, n_states=5)
        cost = random_cost(rng, 5)
        dm = distance_matrix(ss, cost)
        square = dm.to_square()
        assert np.array_equal(square, square.T)
        # dense reference: recompute every entry independently
        for _ in range(200):
            i, j = (int(x) for x in rng.integers(0, 100, 2))
            if i == j:
                assert square[i, j] == 0.0
            else:
                assert square[i, j] == om_distance(ss.sequences[i], ss.sequences[j], cost)

    def test_thread_count_does_not_change_bits(self, rng):
        ss = make_sequence_set(rng, n=40, length=52, n_states=8)
        cost = trate_costs(transition_rates(ss))
        one = distance_matrix(ss, cost, threads=1)
        many = distance_matrix(ss, cost, threads=4)
        assert np.array_equal(one.condensed, many.condensed)

    def test_set_threads_clamps(self):
        assert set_threads(10_000) >= 1
        with pytest.raises(ValidationError):
            set_threads(0)

    def test_condensed_indexing(self):
        dm = DissimilarityMatrix(("a", "b", "c"), np.array([1.0, 2.0, 3.0]))
        assert dm.get(0, 1) == 1.0
        assert dm.get(2, 0) == 2.0
        assert dm.get(1, 2) == 3.0
        assert dm.get(1, 1) == 0.0
        with pytest.raises(IndexError):
            dm.index(0, 0)

    def test_negative_values_rejected(self):
        with pytest.raises(ValidationError):
            DissimilarityMatrix(("a", "b"), np.array([-0.5]))


class TestMatrixFile:
    def test_round_trip(self, tmp_path, rng):
        ss = make_sequence_set(rng, n=12, length=8, n_states=4)
        dm = distance_matrix(ss, constant_costs(4))
        path = tmp_path / "d.bin"
        dm.save(path)
        back = DissimilarityMatrix.load(path)
        assert back.subject_ids == dm.subject_ids
        assert np.array_equal(back.condensed, dm.condensed)

    def test_magic_bytes(self, tmp_path):
        dm = DissimilarityMatrix(("a", "b"), np.array([1.5]))
        path = tmp_path / "d.bin"
        dm.save(path)
        raw = path.read_bytes()
        assert raw[:8] == b"SSADIST1"
        assert int.from_bytes(raw[8:16], "little") == 2
        assert np.frombuffer(raw[16:24], dtype="<f8")[0] == 1.5

    def test_non_ascii_ids(self, tmp_path):
        dm = DissimilarityMatrix(("påtient-1", "p2"), np.array([0.25]))
        path = tmp_path / "d.bin"
        dm.save(path)
        assert DissimilarityMatrix.load(path).subject_ids == ("påtient-1", "p2")

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"NOTADIST" + b"\x00" * 16)
        with pytest.raises(ValidationError, match="SSADIST1"):
            DissimilarityMatrix.load(path)

    def test_csv_export_and_guard(self, tmp_path):
        dm = DissimilarityMatrix(("a", "b", "c"), np.array([1.0, 2.0, 3.5]))
        path = tmp_path / "d.csv"
        dm.to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "subject_id,a,b,c"
        assert lines[1] == "a,0.0,1.0,2.0"

        big = DissimilarityMatrix(
            tuple(f"s{i}" for i in range(2001)),
            np.zeros(2001 * 2000 // 2),
        )
        with pytest.raises(ValidationError, match="2000"):
            big.to_csv(tmp_path / "big.csv")
