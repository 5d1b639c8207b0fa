"""Caption evaluation metrics.

All metrics are corpus-level and pure: BLEU-4 (clipped n-gram precision
with brevity penalty, 0-100), CIDEr-D (TF-IDF n-gram cosine consensus
with a gaussian length penalty, raw 0-10), BERTScore (greedy token
matching over embeddings with IDF weighting, reported x100), plus
word-level Levenshtein distance and mean/std aggregation over seeds.
"""

from __future__ import annotations

import math
import re
import statistics
import unicodedata
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


class MetricError(ValueError):
    """Invalid metric input (empty corpus, degenerate IDF, shape mismatch)."""


# Punctuation split off as standalone tokens.  Hyphens stay inside words.
_PUNCT = ".,!?;:()[]{}<>\"'`«»„“”‚‘’…"
_TOKEN_RE = re.compile(rf"[{re.escape(_PUNCT)}]|[^\s{re.escape(_PUNCT)}]+")


@dataclass(frozen=True)
class TokenizedCaption:
    tokens: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class EvalItem:
    image_id: str
    candidate: TokenizedCaption
    references: tuple[TokenizedCaption, ...]


@dataclass(frozen=True)
class EvalSet:
    items: tuple[EvalItem, ...]


@dataclass(frozen=True)
class BleuReport:
    precisions: tuple[float, float, float, float]
    brevity_penalty: float
    score: float


@dataclass(frozen=True)
class CiderReport:
    per_n: tuple[float, float, float, float]
    score: float


@dataclass(frozen=True)
class BertScoreReport:
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class MetricSummary:
    metric: str
    per_seed: tuple[float, ...]
    mean: float
    std: float

    def render(self) -> str:
        return f"{self.mean:.1f} ± {self.std:.1f}"


def tokenize(text: str) -> TokenizedCaption:
    """NFC-normalize, lowercase, split punctuation off words, split on
    whitespace.  Empty input gives an empty token list."""
    text = unicodedata.normalize("NFC", text).lower()
    return TokenizedCaption(tuple(_TOKEN_RE.findall(text)))


def make_eval_set(
    items: Sequence[tuple[str, TokenizedCaption, Sequence[TokenizedCaption]]]
) -> EvalSet:
    seen: set[str] = set()
    out = []
    for image_id, candidate, references in items:
        if image_id in seen:
            raise MetricError(f"duplicate image id in eval set: {image_id!r}")
        seen.add(image_id)
        refs = tuple(references)
        if not refs:
            raise MetricError(f"image {image_id!r} has no references")
        out.append(EvalItem(image_id, candidate, refs))
    return EvalSet(tuple(out))


def eval_set_from_texts(
    predictions: dict[str, str], references: dict[str, Sequence[str]]
) -> EvalSet:
    """Tokenize raw prediction/reference texts into an EvalSet.  Every
    prediction must have references."""
    items = []
    for image_id in predictions:
        if image_id not in references or not references[image_id]:
            raise MetricError(f"no references for image {image_id!r}")
        items.append(
            (
                image_id,
                tokenize(predictions[image_id]),
                [tokenize(r) for r in references[image_id]],
            )
        )
    return make_eval_set(items)


def _ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


# ---------------------------------------------------------------------------
# BLEU-4


def bleu4(e: EvalSet) -> BleuReport:
    """Corpus-level BLEU with uniform weights for n = 1..4, no smoothing.

    Clipped n-gram matches and candidate lengths are summed over the
    corpus; the reference length is the per-item reference length
    closest to the candidate's (ties break toward the shorter one).
    Score is 0 if any n-gram precision is 0.
    """
    if not e.items:
        raise MetricError("bleu4 of an empty eval set")
    correct = [0] * 4
    guess = [0] * 4
    cand_len = 0
    ref_len = 0
    for item in e.items:
        c = item.candidate.tokens
        cand_len += len(c)
        ref_len += min((abs(len(r) - len(c)), len(r)) for r in item.references)[1]
        for n in range(1, 5):
            counts = _ngram_counts(c, n)
            guess[n - 1] += max(0, len(c) - n + 1)
            if not counts:
                continue
            max_ref: Counter = Counter()
            for r in item.references:
                for gram, k in _ngram_counts(r.tokens, n).items():
                    if k > max_ref[gram]:
                        max_ref[gram] = k
            correct[n - 1] += sum(min(k, max_ref[gram]) for gram, k in counts.items())
    precisions = tuple(
        (correct[i] / guess[i]) if guess[i] > 0 else 0.0 for i in range(4)
    )
    if cand_len == 0:
        return BleuReport(precisions, 0.0, 0.0)
    bp = 1.0 if cand_len >= ref_len else math.exp(1.0 - ref_len / cand_len)
    if any(p == 0.0 for p in precisions):
        score = 0.0
    else:
        score = 100.0 * bp * math.exp(sum(math.log(p) for p in precisions) / 4.0)
    return BleuReport(precisions, bp, score)


# ---------------------------------------------------------------------------
# CIDEr-D


def cider_d(e: EvalSet, sigma: float = 6.0) -> CiderReport:
    """CIDEr-D: per n in 1..4, TF-IDF vectors over n-grams with
    idf = ln(#items / df), candidate counts clipped against each
    reference, cosine similarity scaled by 10 and by the gaussian length
    penalty exp(-(lc - lr)^2 / (2 sigma^2)), averaged over references,
    then over items, then over n.

    Document frequency counts the items whose reference set contains the
    n-gram; n-grams absent from every reference set carry no weight.
    """
    if len(e.items) < 2:
        raise MetricError("cider_d needs >= 2 items for a usable IDF")
    m = len(e.items)
    df: list[dict[tuple, int]] = [defaultdict(int) for _ in range(4)]
    for item in e.items:
        for n in range(1, 5):
            grams = set()
            for r in item.references:
                grams.update(_ngram_counts(r.tokens, n))
            for g in grams:
                df[n - 1][g] += 1

    def tfidf(tokens: Sequence[str], n: int) -> tuple[dict, float]:
        vec = {}
        for g, k in _ngram_counts(tokens, n).items():
            d = df[n - 1].get(g, 0)
            if d > 0:
                vec[g] = k * math.log(m / d)
        norm = math.sqrt(sum(w * w for w in vec.values()))
        return vec, norm

    per_n_totals = [0.0] * 4
    for item in e.items:
        lc = len(item.candidate)
        for n in range(1, 5):
            hvec, hnorm = tfidf(item.candidate.tokens, n)
            sim_sum = 0.0
            for r in item.references:
                rvec, rnorm = tfidf(r.tokens, n)
                num = sum(min(w, rvec[g]) * rvec[g] for g, w in hvec.items() if g in rvec)
                cos = num / (hnorm * rnorm) if hnorm > 0 and rnorm > 0 else 0.0
                penalty = math.exp(-((lc - len(r)) ** 2) / (2.0 * sigma**2))
                sim_sum += 10.0 * penalty * cos
            per_n_totals[n - 1] += sim_sum / len(item.references)
    per_n = tuple(t / m for t in per_n_totals)
    return CiderReport(per_n, sum(per_n) / 4.0)


# ---------------------------------------------------------------------------
# BERTScore

Embedder = Callable[[list[list[str]]], list[list[Sequence[float]]]]


def bert_score(
    e: EvalSet,
    embedder: Embedder,
    idf_corpus: Sequence[Sequence[str]] | None = None,
    rescale_baseline: float | None = None,
) -> BertScoreReport:
    """Greedy-matching BERTScore.

    Recall is the IDF-weighted mean, over reference tokens, of the best
    cosine against candidate tokens; precision is symmetric with
    candidate-side IDF weights; per-item F1 is their harmonic mean.  With
    several references the best-F1 reference wins.  The corpus report is
    the mean of per-item values, x100.

    IDF uses +1 smoothing over the reference corpus (one document per
    reference caption), ``idf_corpus`` overriding the eval set's own
    references.  ``rescale_baseline``, when given, linearly rescales
    per-item precision/recall/F1 by (x - b) / (1 - b).
    """
    if not e.items:
        raise MetricError("bert_score of an empty eval set")
    docs = (
        [list(doc) for doc in idf_corpus]
        if idf_corpus is not None
        else [list(r.tokens) for item in e.items for r in item.references]
    )
    ndocs = len(docs)
    dfreq: Counter = Counter()
    for doc in docs:
        dfreq.update(set(doc))

    def idf(token: str) -> float:
        return math.log((ndocs + 1) / (dfreq[token] + 1))

    lists: list[list[str]] = []
    for item in e.items:
        lists.append(list(item.candidate.tokens))
        for r in item.references:
            lists.append(list(r.tokens))
    vectors = embedder(lists)
    if len(vectors) != len(lists):
        raise MetricError("embedder returned wrong number of token lists")
    dim: int | None = None
    arrays: list[np.ndarray] = []
    for toks, vecs in zip(lists, vectors):
        if len(vecs) != len(toks):
            raise MetricError("embedder returned wrong number of token vectors")
        a = np.asarray(vecs, dtype=float)
        if len(toks) == 0:
            arrays.append(a.reshape(0, dim or 0))
            continue
        if dim is None:
            dim = a.shape[1]
        elif a.shape[1] != dim:
            raise MetricError(f"embedding dimension drift: {a.shape[1]} != {dim}")
        norms = np.linalg.norm(a, axis=1, keepdims=True)
        norms[norms == 0.0] = 1.0
        arrays.append(a / norms)
    pos = 0
    p_total = r_total = f_total = 0.0
    for item in e.items:
        cand = arrays[pos]
        cand_tokens = item.candidate.tokens
        pos += 1
        best = (0.0, 0.0, 0.0)
        for r in item.references:
            ref = arrays[pos]
            pos += 1
            if len(cand_tokens) == 0 or len(r.tokens) == 0:
                continue
            sim = cand @ ref.T
            cw = np.array([idf(t) for t in cand_tokens])
            rw = np.array([idf(t) for t in r.tokens])
            # all-zero idf (every token in every document) degenerates to
            # a plain mean
            prec = float(np.average(sim.max(axis=1), weights=cw if cw.sum() else None))
            rec = float(np.average(sim.max(axis=0), weights=rw if rw.sum() else None))
            f1 = 2 * prec * rec / (prec + rec) if prec + rec > 0 else 0.0
            if f1 > best[2]:
                best = (prec, rec, f1)
        prec, rec, f1 = best
        if rescale_baseline is not None:
            b = rescale_baseline
            prec, rec, f1 = ((x - b) / (1 - b) for x in (prec, rec, f1))
        p_total += prec
        r_total += rec
        f_total += f1
    n = len(e.items)
    return BertScoreReport(
        precision=100.0 * p_total / n,
        recall=100.0 * r_total / n,
        f1=100.0 * f_total / n,
    )


# ---------------------------------------------------------------------------
# Word-level edit distance


def levenshtein_words(a: TokenizedCaption, b: TokenizedCaption) -> int:
    """Minimum insertions/deletions/substitutions turning a into b."""
    return _levenshtein(a.tokens, b.tokens)


def _levenshtein(a: Sequence[str], b: Sequence[str]) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, tok_a in enumerate(a, start=1):
        cur = [i] + [0] * len(b)
        for j, tok_b in enumerate(b, start=1):
            cur[j] = min(
                prev[j] + 1,
                cur[j - 1] + 1,
                prev[j - 1] + (tok_a != tok_b),
            )
        prev = cur
    return prev[len(b)]


# ---------------------------------------------------------------------------
# Aggregation


def summarize(metric: str, per_seed_scores: Sequence[float]) -> MetricSummary:
    """Mean and population std over per-seed scores."""
    if not per_seed_scores:
        raise MetricError("summarize of an empty score list")
    scores = tuple(float(s) for s in per_seed_scores)
    return MetricSummary(
        metric=metric,
        per_seed=scores,
        mean=statistics.fmean(scores),
        std=statistics.pstdev(scores),
    )
