"""Exact joint inference: scores, partition, gradients, and Viterbi."""

import itertools
import math

import numpy as np
import pytest

from jmrm.core import LabelSpace
from jmrm.lattice import (
    InfeasibleGold,
    JointScoreInputs,
    joint_score,
    log_partition,
    logsumexp,
    loss_gradients,
    nll_loss,
    viterbi_decode,
)
from jmrm.masks import (
    NEG_INF,
    RelationMask,
    all_ones_relation_mask,
    build_transition_mask,
    permissive_transition_mask,
)
from jmrm.oracles import random_instance


def brute_force(jin):
    """Minimal in-test enumeration, independent of jmrm.oracles."""
    scores = {}
    for y in range(jin.n_intents):
        for t in itertools.product(range(jin.n_slots), repeat=jin.n_positions):
            r = jin.lam * jin.f_l[y]
            prev = None
            for i, o in enumerate(t):
                r += jin.f_o[i, o] if jin.rm.rm[y, o] else NEG_INF
                r += jin.tm.start[o] if prev is None else jin.tm.trans[prev, o]
                prev = o
            scores[(y, t)] = r
    return scores


def open_inputs(f_l, f_o, lam=1.0):
    y, t = len(f_l), f_o.shape[1]
    return JointScoreInputs(
        f_l, f_o, all_ones_relation_mask(y, t), permissive_transition_mask(t), lam
    )


class TestJointScore:
    def test_single_position_expansion(self):
        f_l = np.array([0.7, -0.2])
        f_o = np.array([[1.5, -3.0]])
        jin = open_inputs(f_l, f_o)
        for y in range(2):
            for t1 in range(2):
                assert joint_score(y, [t1], jin) == pytest.approx(
                    f_l[y] + f_o[0, t1] + 1.0
                )

    def test_masked_slot_gives_neg_inf(self):
        f_l = np.zeros(2)
        f_o = np.zeros((2, 3))
        rm = all_ones_relation_mask(2, 3)
        rm.rm[0, 2] = False
        jin = JointScoreInputs(f_l, f_o, rm, permissive_transition_mask(3), 1.0)
        assert joint_score(0, [0, 2], jin) == NEG_INF
        assert joint_score(1, [0, 2], jin) > NEG_INF

    def test_matches_term_by_term_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(40):
            jin, _ = random_instance(rng)
            ref = brute_force(jin)
            for (y, t), r in ref.items():
                got = joint_score(y, np.array(t), jin)
                if r == NEG_INF:
                    assert got == NEG_INF
                else:
                    assert got == pytest.approx(r, rel=1e-12)

    def test_length_checked(self):
        jin = open_inputs(np.zeros(1), np.zeros((2, 2)))
        with pytest.raises(ValueError):
            joint_score(0, [0], jin)


class TestLogPartition:
    def test_symmetric_uniform_case(self):
        # Y=1, T=2, m=2, zero emissions, all transitions open: every one of
        # the 4 sequences scores 2 (START + one internal transition), so
        # log Z = log 4 + 2 and each sequence has probability 1/4
        jin = open_inputs(np.zeros(1), np.zeros((2, 2)))
        post = log_partition(jin)
        assert post.log_z == pytest.approx(math.log(4) + 2.0, abs=1e-12)
        for t in itertools.product(range(2), repeat=2):
            p = math.exp(joint_score(0, np.array(t), jin) - post.log_z)
            assert p == pytest.approx(0.25, abs=1e-12)

    def test_matches_enumeration(self):
        rng = np.random.default_rng(1)
        for _ in range(60):
            jin, _ = random_instance(rng)
            post = log_partition(jin)
            ref = brute_force(jin)
            finite = [r for r in ref.values() if r > NEG_INF]
            mx = max(finite)
            log_z = mx + math.log(sum(math.exp(r - mx) for r in finite))
            assert post.log_z == pytest.approx(log_z, rel=1e-9)
            q = np.zeros(jin.n_intents)
            for (y, _), r in ref.items():
                if r > NEG_INF:
                    q[y] += math.exp(r - log_z)
            np.testing.assert_allclose(post.intent_marginals, q, atol=1e-9)

    def test_posterior_invariants(self):
        rng = np.random.default_rng(2)
        for _ in range(40):
            jin, _ = random_instance(rng)
            post = log_partition(jin)
            assert post.intent_marginals.sum() == pytest.approx(1.0, abs=1e-9)
            for y in range(jin.n_intents):
                sums = post.slot_unary_marginals[y].sum(axis=1)
                np.testing.assert_allclose(sums, post.intent_marginals[y], atol=1e-9)
                masked = ~jin.rm.rm[y]
                assert np.all(post.slot_unary_marginals[y][:, masked] == 0.0)

    def test_monotone_masking_never_decreases_log_z(self):
        rng = np.random.default_rng(3)
        for _ in range(40):
            jin, _ = random_instance(rng)
            zeros = np.argwhere(~jin.rm.rm)
            if len(zeros) == 0:
                continue
            y, o = zeros[int(rng.integers(len(zeros)))]
            before = log_partition(jin).log_z
            rm2 = jin.rm.rm.copy()
            rm2[y, o] = True
            jin2 = JointScoreInputs(jin.f_l, jin.f_o, RelationMask(rm2, True), jin.tm, jin.lam)
            assert log_partition(jin2).log_z >= before - 1e-12

    def test_extreme_magnitudes_no_nan(self):
        rng = np.random.default_rng(4)
        for _ in range(25):
            jin, _ = random_instance(rng, emission_scale=1e6)
            post = log_partition(jin)
            assert np.isfinite(post.log_z)
            assert not np.any(np.isnan(post.intent_marginals))
            assert not np.any(np.isnan(post.slot_unary_marginals))
            y, t, s = viterbi_decode(jin)
            assert np.isfinite(s)


class TestY1CrfEquivalence:
    def test_slot_marginals_match_standalone_crf(self):
        # with a single intent the model is a masked linear-chain CRF
        def crf_forward_backward(emit, trans, start):
            m, t = emit.shape
            alpha = np.zeros((m, t))
            alpha[0] = start + emit[0]
            for i in range(1, m):
                for o in range(t):
                    alpha[i, o] = logsumexp(alpha[i - 1] + trans[:, o], axis=0) + emit[i, o]
            beta = np.zeros((m, t))
            for i in range(m - 2, -1, -1):
                for o in range(t):
                    beta[i, o] = logsumexp(trans[o] + emit[i + 1] + beta[i + 1], axis=0)
            log_z = logsumexp(alpha[-1], axis=0)
            with np.errstate(invalid="ignore"):
                marg = np.exp(alpha + beta - log_z)
            return log_z, np.nan_to_num(marg, nan=0.0)

        rng = np.random.default_rng(5)
        for _ in range(25):
            jin, _ = random_instance(rng, max_intents=1)
            post = log_partition(jin)
            emit = np.where(jin.rm.rm[0][None, :], jin.f_o, NEG_INF)
            log_z_slot, marg = crf_forward_backward(emit, jin.tm.trans, jin.tm.start)
            assert post.intent_marginals[0] == pytest.approx(1.0, abs=1e-12)
            np.testing.assert_allclose(post.slot_unary_marginals[0], marg, atol=1e-9)


class TestNllLoss:
    def test_degenerate_single_configuration(self):
        ls = LabelSpace(("only",), ("O",))
        jin = JointScoreInputs(
            np.array([1.3]), np.array([[0.4], [0.2], [-1.0]]),
            all_ones_relation_mask(1, 1), build_transition_mask(ls), 1.0,
        )
        loss, _ = nll_loss(0, np.array([0, 0, 0]), jin)
        assert loss == 0.0

    def test_matches_brute_force_probability(self):
        rng = np.random.default_rng(6)
        for _ in range(30):
            jin, _ = random_instance(rng)
            ref = brute_force(jin)
            feasible = [pair for pair, r in ref.items() if r > NEG_INF]
            gold = feasible[int(rng.integers(len(feasible)))]
            loss, _ = nll_loss(gold[0], np.array(gold[1]), jin)
            finite = [r for r in ref.values() if r > NEG_INF]
            mx = max(finite)
            log_z = mx + math.log(sum(math.exp(r - mx) for r in finite))
            p_gold = math.exp(ref[gold] - log_z)
            assert loss == pytest.approx(-math.log(p_gold), rel=1e-9, abs=1e-9)
            assert loss >= 0.0

    def test_infeasible_gold_raises(self):
        f_l = np.zeros(1)
        f_o = np.zeros((1, 2))
        rm = all_ones_relation_mask(1, 2)
        rm.rm[0, 1] = False
        jin = JointScoreInputs(f_l, f_o, rm, permissive_transition_mask(2), 1.0)
        with pytest.raises(InfeasibleGold):
            nll_loss(0, np.array([1]), jin)

    def test_raising_gold_intent_score_lowers_loss(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            jin, _ = random_instance(rng, max_intents=3)
            if jin.n_intents < 2:
                continue
            post = log_partition(jin)
            gold_y = int(np.argmin(post.intent_marginals))
            # the all-O sequence is always feasible under the forced-O mask
            gold_t = tuple([0] * jin.n_positions)
            if joint_score(gold_y, np.array(gold_t), jin) == NEG_INF:
                continue
            loss1, _ = nll_loss(gold_y, np.array(gold_t), jin)
            f_l2 = jin.f_l.copy()
            f_l2[gold_y] += 0.5
            jin2 = JointScoreInputs(f_l2, jin.f_o, jin.rm, jin.tm, jin.lam)
            loss2, _ = nll_loss(gold_y, np.array(gold_t), jin2)
            if post.intent_marginals[gold_y] < 1.0 and jin.lam > 0:
                assert loss2 < loss1


class TestLossGradients:
    def test_certain_model_zero_gradients(self):
        ls = LabelSpace(("only",), ("O",))
        jin = JointScoreInputs(
            np.array([0.9]), np.array([[2.0], [1.0]]),
            all_ones_relation_mask(1, 1), build_transition_mask(ls), 1.0,
        )
        loss, post = nll_loss(0, np.array([0, 0]), jin)
        d_fl, d_fo = loss_gradients(0, np.array([0, 0]), post, jin)
        np.testing.assert_allclose(d_fl, 0.0, atol=1e-15)
        np.testing.assert_allclose(d_fo, 0.0, atol=1e-15)

    def test_intent_gradient_sums_to_zero(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            jin, _ = random_instance(rng)
            ref = brute_force(jin)
            feasible = [pair for pair, r in ref.items() if r > NEG_INF]
            gold = feasible[int(rng.integers(len(feasible)))]
            _, post = nll_loss(gold[0], np.array(gold[1]), jin)
            d_fl, d_fo = loss_gradients(gold[0], np.array(gold[1]), post, jin)
            assert d_fl.sum() == pytest.approx(0.0, abs=1e-12)
            # cells masked under every intent get no partition mass, so the
            # gradient there is at most the (negative) gold indicator
            masked_everywhere = ~np.any(jin.rm.rm, axis=0)
            assert np.all(d_fo[:, masked_everywhere] <= 0.0)

    def test_finite_difference_spot_check(self):
        rng = np.random.default_rng(9)
        step = 1e-5
        jin, _ = random_instance(rng)
        ref = brute_force(jin)
        feasible = [pair for pair, r in ref.items() if r > NEG_INF]
        gold = feasible[0]
        _, post = nll_loss(gold[0], np.array(gold[1]), jin)
        d_fl, d_fo = loss_gradients(gold[0], np.array(gold[1]), post, jin)
        for y in range(jin.n_intents):
            up = jin.f_l.copy(); up[y] += step
            down = jin.f_l.copy(); down[y] -= step
            fd = (
                nll_loss(gold[0], np.array(gold[1]), JointScoreInputs(up, jin.f_o, jin.rm, jin.tm, jin.lam))[0]
                - nll_loss(gold[0], np.array(gold[1]), JointScoreInputs(down, jin.f_o, jin.rm, jin.tm, jin.lam))[0]
            ) / (2 * step)
            assert d_fl[y] == pytest.approx(fd, abs=1e-6)


class TestViterbi:
    def test_masked_label_never_decoded(self, music_space):
        # emissions scream B-city, but the gold intent's relation row bans it
        t_n = music_space.n_slots
        f_l = np.array([5.0, -5.0])
        f_o = np.full((3, t_n), -1.0)
        f_o[:, music_space.slot_id("B-city")] = 10.0
        rm = all_ones_relation_mask(2, t_n)
        rm.rm[0, music_space.slot_id("B-city")] = False
        rm.rm[0, music_space.slot_id("I-city")] = False
        jin = JointScoreInputs(f_l, f_o, rm, build_transition_mask(music_space), 1.0)
        y, path, score = viterbi_decode(jin)
        ref = brute_force(jin)
        best = max((r, pair) for pair, r in ref.items() if r > NEG_INF)
        assert (y, tuple(int(o) for o in path)) == best[1]
        if y == 0:
            assert music_space.slot_id("B-city") not in set(int(o) for o in path)

    def test_bio_validity_by_construction(self, music_space):
        rng = np.random.default_rng(10)
        tm = build_transition_mask(music_space)
        for _ in range(50):
            m = int(rng.integers(1, 6))
            f_l = rng.uniform(-5, 5, size=2)
            f_o = rng.uniform(-5, 5, size=(m, music_space.n_slots))
            rm = all_ones_relation_mask(2, music_space.n_slots)
            jin = JointScoreInputs(f_l, f_o, rm, tm, 1.0)
            _, path, _ = viterbi_decode(jin)
            assert np.isfinite(tm.start[path[0]])
            for i in range(1, m):
                assert np.isfinite(tm.trans[path[i - 1], path[i]])

    def test_matches_enumeration_with_tie_breaking(self):
        rng = np.random.default_rng(11)
        for _ in range(60):
            jin, _ = random_instance(rng)
            y, path, score = viterbi_decode(jin)
            ref = brute_force(jin)
            best_pair, best_score = None, NEG_INF
            for yy in range(jin.n_intents):
                for t in itertools.product(range(jin.n_slots), repeat=jin.n_positions):
                    r = ref[(yy, t)]
                    if r > best_score:
                        best_score, best_pair = r, (yy, t)
            assert (y, tuple(int(o) for o in path)) == best_pair

    def test_exact_ties_break_lexicographically(self):
        # fully symmetric instance: scores tie across intents and sequences
        ls = LabelSpace(("a", "b"), ("O", "B-x"))
        jin = JointScoreInputs(
            np.zeros(2), np.zeros((3, 2)),
            all_ones_relation_mask(2, 2), build_transition_mask(ls), 1.0,
        )
        y, path, _ = viterbi_decode(jin)
        assert y == 0
        assert list(path) == [0, 0, 0]

    def test_score_matches_joint_score_bitwise(self):
        rng = np.random.default_rng(12)
        for _ in range(40):
            jin, _ = random_instance(rng)
            y, path, score = viterbi_decode(jin)
            assert score == joint_score(y, path, jin)


class TestShiftInvariance:
    def test_intent_and_row_shifts(self):
        rng = np.random.default_rng(13)
        c = 3.7
        for _ in range(25):
            jin, _ = random_instance(rng)
            post = log_partition(jin)
            y, path, _ = viterbi_decode(jin)

            jin_l = JointScoreInputs(jin.f_l + c, jin.f_o, jin.rm, jin.tm, jin.lam)
            post_l = log_partition(jin_l)
            assert post_l.log_z == pytest.approx(post.log_z + jin.lam * c, abs=1e-9)
            np.testing.assert_allclose(post_l.intent_marginals, post.intent_marginals, atol=1e-9)

            row = int(rng.integers(jin.n_positions))
            f_o2 = jin.f_o.copy()
            f_o2[row] += c
            jin_o = JointScoreInputs(jin.f_l, f_o2, jin.rm, jin.tm, jin.lam)
            post_o = log_partition(jin_o)
            assert post_o.log_z == pytest.approx(post.log_z + c, abs=1e-9)
            np.testing.assert_allclose(
                post_o.slot_unary_marginals, post.slot_unary_marginals, atol=1e-9
            )
            y2, path2, _ = viterbi_decode(jin_o)
            assert (y2, list(path2)) == (y, list(path))


class TestLogsumexp:
    def test_all_neg_inf(self):
        assert logsumexp(np.array([NEG_INF, NEG_INF]), axis=0) == NEG_INF

    def test_matrix_axis_with_masked_column(self):
        a = np.array([[0.0, NEG_INF], [1.0, NEG_INF]])
        out = logsumexp(a, axis=0)
        assert out[1] == NEG_INF
        assert out[0] == pytest.approx(np.logaddexp(0.0, 1.0))

    def test_singleton_exact(self):
        assert logsumexp(np.array([1.2345]), axis=0) == 1.2345

    def test_large_values_stable(self):
        a = np.array([1e6, 1e6 - 3.0])
        assert logsumexp(a, axis=0) == pytest.approx(1e6 + math.log(1 + math.exp(-3.0)))
