from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from capref.humaneval import (
    HumanEvalError,
    aggregate_axis,
    cohen_kappa,
    fleiss_kappa,
    make_judgment,
    sign_test_p,
)
from oracles import sign_test_exact


def judgments(axis, a=0, b=0, tie=0):
    out = []
    for i in range(a):
        out.append(make_judgment(f"item{i}", axis, "ann1", "A"))
    for i in range(b):
        out.append(make_judgment(f"item{a + i}", axis, "ann1", "B"))
    for i in range(tie):
        out.append(make_judgment(f"item{a + b + i}", axis, "ann1", "tie"))
    return out


class TestSignTest:
    def test_ten_unanimous(self):
        r = aggregate_axis(judgments("overall", a=10))
        assert r.p_value == pytest.approx(2 * 0.5**10, abs=1e-15)
        assert r.significant

    def test_perfect_balance_capped_at_one(self):
        r = aggregate_axis(judgments("overall", a=5, b=5))
        assert r.p_value == 1.0
        assert not r.significant

    def test_all_ties(self):
        r = aggregate_axis(judgments("overall", tie=8))
        assert r.prop_tie == 1.0
        assert r.p_value == 1.0
        assert not r.significant

    def test_matches_exact_binomial_for_all_small_cases(self):
        for m in range(0, 21):
            for k in range((m + 1) // 2, m + 1):
                assert sign_test_p(k, m) == pytest.approx(float(sign_test_exact(k, m)), abs=1e-12)

    def test_matches_scipy_tail(self):
        scipy_stats = pytest.importorskip("scipy.stats")
        for m, k in [(10, 8), (15, 9), (20, 17), (100, 63)]:
            expected = min(1.0, 2 * float(scipy_stats.binom.sf(k - 1, m, 0.5)))
            assert sign_test_p(k, m) == pytest.approx(expected, abs=1e-12)

    def test_symmetry_in_k(self):
        # p for k wins equals p for the complementary split read from the other side
        for m in range(1, 15):
            for k in range(m + 1):
                assert sign_test_p(max(k, m - k), m) == sign_test_p(max(m - k, k), m)

    def test_proportions_sum_to_one(self):
        r = aggregate_axis(judgments("style", a=3, b=4, tie=5))
        assert r.prop_a + r.prop_b + r.prop_tie == pytest.approx(1.0, abs=1e-12)

    def test_relabel_swap_invariance(self):
        js = judgments("accuracy", a=7, b=3, tie=2)
        swapped = [
            make_judgment(j.item_id, j.axis, j.annotator_id, {"A": "B", "B": "A", "tie": "tie"}[j.choice])
            for j in js
        ]
        r1, r2 = aggregate_axis(js), aggregate_axis(swapped)
        assert r1.prop_a == r2.prop_b and r1.prop_b == r2.prop_a
        assert r1.p_value == r2.p_value

    def test_empty_rejected(self):
        with pytest.raises(HumanEvalError):
            aggregate_axis([])

    def test_mixed_axes_rejected(self):
        js = judgments("overall", a=1) + judgments("style", b=1)
        with pytest.raises(HumanEvalError, match="axes"):
            aggregate_axis(js)

    def test_duplicate_judgment_rejected(self):
        j = make_judgment("i", "overall", "ann", "A")
        with pytest.raises(HumanEvalError, match="duplicate"):
            aggregate_axis([j, j])

    def test_per_item_majority(self):
        js = [
            make_judgment("i1", "overall", f"ann{k}", c)
            for k, c in enumerate(["A", "A", "B"])
        ] + [
            make_judgment("i2", "overall", f"ann{k}", c)
            for k, c in enumerate(["B", "B", "A"])
        ]
        pooled = aggregate_axis(js)
        majority = aggregate_axis(js, per_item_majority=True)
        assert pooled.p_value == sign_test_p(3, 6)
        assert majority.p_value == sign_test_p(1, 2)


class TestFleissKappa:
    def test_unanimous_single_category_is_one(self):
        assert fleiss_kappa([[3, 0], [3, 0], [3, 0]], 3) == 1.0

    def test_hand_computed_two_item_table(self):
        # rows [2,1] and [1,2] with 3 raters: P̄ = 1/3, P̄e = 1/2
        assert fleiss_kappa([[2, 1], [1, 2]], 3) == pytest.approx(-1 / 3, abs=1e-12)

    def test_matches_statsmodels(self):
        inter_rater = pytest.importorskip("statsmodels.stats.inter_rater")
        rng = random.Random(0)
        table = []
        for _ in range(40):
            counts = [0, 0, 0]
            for _ in range(5):
                counts[rng.randrange(3)] += 1
            table.append(counts)
        ours = fleiss_kappa(table, 5)
        theirs = float(inter_rater.fleiss_kappa(table, method="fleiss"))
        assert ours == pytest.approx(theirs, abs=1e-9)

    def test_random_table_near_zero(self):
        rng = random.Random(42)
        table = []
        for _ in range(4000):
            counts = [0, 0, 0, 0]
            for _ in range(6):
                counts[rng.randrange(4)] += 1
            table.append(counts)
        assert abs(fleiss_kappa(table, 6)) < 0.05

    def test_row_sum_mismatch_rejected(self):
        with pytest.raises(HumanEvalError, match="sums to"):
            fleiss_kappa([[2, 1], [1, 1]], 3)

    def test_permutation_invariance(self):
        table = [[2, 1, 0], [0, 2, 1], [1, 1, 1], [3, 0, 0]]
        k = fleiss_kappa(table, 3)
        assert fleiss_kappa(list(reversed(table)), 3) == pytest.approx(k, abs=1e-12)
        permuted = [[row[2], row[0], row[1]] for row in table]
        assert fleiss_kappa(permuted, 3) == pytest.approx(k, abs=1e-12)


class TestCohenKappa:
    def test_identical_is_one(self):
        assert cohen_kappa(["x", "y", "x"], ["x", "y", "x"]) == 1.0

    def test_worked_confusion_table_is_exactly_04(self):
        a = ["x"] * 25 + ["y"] * 25
        b = ["x"] * 20 + ["y"] * 5 + ["x"] * 10 + ["y"] * 15
        assert cohen_kappa(a, b) == 0.4

    def test_disjoint_constant_labelings_nonpositive(self):
        assert cohen_kappa(["x"] * 10, ["y"] * 10) <= 0.0

    def test_matches_sklearn(self):
        sk = pytest.importorskip("sklearn.metrics")
        rng = random.Random(3)
        a = [rng.choice("pqr") for _ in range(200)]
        b = [rng.choice("pqr") for _ in range(200)]
        assert cohen_kappa(a, b) == pytest.approx(float(sk.cohen_kappa_score(a, b)), abs=1e-9)

    def test_length_mismatch_rejected(self):
        with pytest.raises(HumanEvalError):
            cohen_kappa(["x"], ["x", "y"])

    @given(st.lists(st.sampled_from("xy"), min_size=1, max_size=30))
    @settings(max_examples=50, deadline=None)
    def test_self_agreement_is_one_or_degenerate(self, labels):
        assert cohen_kappa(labels, labels) == 1.0
