"""Equivalence of the metric implementations against independent
brute-force oracles on randomized corpora."""

from __future__ import annotations

import random

import pytest

from capref.metrics import TokenizedCaption, bleu4, cider_d, levenshtein_words, make_eval_set
from oracles import bleu_oracle, cider_oracle, lev_recursive

VOCAB = (
    "ein eine der die mann frau hund katze vogel pferd kind haus baum park "
    "straße brücke klein groß alt jung rot blau steht sitzt läuft springt "
    "liest spielt wartet schläft auf unter neben hinter über vor und mit ."
).split()


def random_corpus(rng: random.Random, n_items: int, max_refs: int = 3):
    items = []
    for k in range(n_items):
        cand = rng.choices(VOCAB, k=rng.randint(4, 12))
        refs = [rng.choices(VOCAB, k=rng.randint(4, 12)) for _ in range(rng.randint(1, max_refs))]
        items.append((cand, refs))
    return items


def to_eval_set(items):
    return make_eval_set(
        [
            (f"img{k}", TokenizedCaption(tuple(cand)), [TokenizedCaption(tuple(r)) for r in refs])
            for k, (cand, refs) in enumerate(items)
        ]
    )


class TestBleuOracle:
    def test_three_item_toy_corpus(self):
        items = [
            ("ein kleiner hund springt über die mauer .".split(), ["ein kleiner hund läuft über die mauer .".split()]),
            ("die frau liest ein buch .".split(), ["eine frau liest ein altes buch .".split(), "die frau liest .".split()]),
            ("kinder spielen im park .".split(), ["drei kinder spielen im park .".split()]),
        ]
        assert bleu4(to_eval_set(items)).score == pytest.approx(bleu_oracle(items), abs=1e-9)

    @pytest.mark.parametrize("seed", [0, 1, 2, 3])
    def test_random_corpora(self, seed):
        rng = random.Random(seed)
        items = random_corpus(rng, 40)
        assert bleu4(to_eval_set(items)).score == pytest.approx(bleu_oracle(items), abs=1e-9)


class TestCiderOracle:
    def test_five_item_toy_corpus(self):
        rng = random.Random(99)
        items = random_corpus(rng, 5)
        per_n, score = cider_oracle(items)
        report = cider_d(to_eval_set(items))
        assert report.score == pytest.approx(score, abs=1e-9)
        for got, want in zip(report.per_n, per_n):
            assert got == pytest.approx(want, abs=1e-9)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_random_corpora(self, seed):
        rng = random.Random(seed)
        items = random_corpus(rng, 30)
        _, score = cider_oracle(items)
        assert cider_d(to_eval_set(items)).score == pytest.approx(score, abs=1e-9)


class TestLevenshteinOracle:
    def test_against_naive_recursion(self):
        rng = random.Random(5)
        alphabet = ["x", "y", "z", "w"]
        for _ in range(300):
            a = tuple(rng.choices(alphabet, k=rng.randint(0, 8)))
            b = tuple(rng.choices(alphabet, k=rng.randint(0, 8)))
            got = levenshtein_words(TokenizedCaption(a), TokenizedCaption(b))
            assert got == lev_recursive(a, b), (a, b)
