"""Aggregation of pairwise human preference judgments: per-axis
proportions with an exact two-sided sign test, plus Fleiss' and Cohen's
kappa for inter-annotator agreement.

Counts are small in this setting (a few hundred judgments per axis), so
everything is computed with exact rational arithmetic and converted to
float at the end.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import comb
from pathlib import Path
from typing import Sequence

from .jsonl import read_jsonl

AXES = ("faithfulness", "completeness", "accuracy", "detail", "style", "overall")
CHOICES = ("A", "B", "tie")


class HumanEvalError(ValueError):
    pass


@dataclass(frozen=True)
class Judgment:
    item_id: str
    axis: str
    annotator_id: str
    choice: str


@dataclass(frozen=True)
class AxisResult:
    axis: str
    n: int
    prop_a: float
    prop_b: float
    prop_tie: float
    p_value: float
    significant: bool


def make_judgment(item_id: str, axis: str, annotator_id: str, choice: str) -> Judgment:
    if axis not in AXES:
        raise HumanEvalError(f"unknown axis {axis!r}")
    if choice not in CHOICES:
        raise HumanEvalError(f"unknown choice {choice!r}")
    return Judgment(str(item_id), axis, str(annotator_id), choice)


def sign_test_p(k: int, m: int) -> float:
    """Exact two-sided sign test: with k wins for the majority side among
    m non-tie judgments, p = 2 * P(Bin(m, 1/2) >= k), capped at 1."""
    if m < 0 or k < 0 or k > m:
        raise HumanEvalError(f"invalid sign test counts k={k}, m={m}")
    if m == 0:
        return 1.0
    tail = Fraction(sum(comb(m, i) for i in range(k, m + 1)), 2**m)
    return float(min(Fraction(1), 2 * tail))


def aggregate_axis(
    judgments: Sequence[Judgment], per_item_majority: bool = False
) -> AxisResult:
    """Proportions and sign-test significance for one axis.

    Ties are excluded from the sign test.  By default all judgments are
    pooled; with per_item_majority each item is first reduced to its
    majority choice (within-item ties count as tie)."""
    if not judgments:
        raise HumanEvalError("aggregate_axis of an empty judgment list")
    axes = {j.axis for j in judgments}
    if len(axes) != 1:
        raise HumanEvalError(f"judgments span several axes: {sorted(axes)}")
    seen = set()
    for j in judgments:
        key = (j.item_id, j.axis, j.annotator_id)
        if key in seen:
            raise HumanEvalError(f"duplicate judgment {key}")
        seen.add(key)
    n = len(judgments)
    n_a = sum(j.choice == "A" for j in judgments)
    n_b = sum(j.choice == "B" for j in judgments)
    n_tie = n - n_a - n_b
    if per_item_majority:
        votes: dict[str, list[str]] = {}
        for j in judgments:
            votes.setdefault(j.item_id, []).append(j.choice)
        wins_a = wins_b = 0
        for choices in votes.values():
            a, b = choices.count("A"), choices.count("B")
            if a > b:
                wins_a += 1
            elif b > a:
                wins_b += 1
        a, b = wins_a, wins_b
    else:
        a, b = n_a, n_b
    m = a + b
    p = sign_test_p(max(a, b), m)
    return AxisResult(
        axis=judgments[0].axis,
        n=n,
        prop_a=n_a / n,
        prop_b=n_b / n,
        prop_tie=n_tie / n,
        p_value=p,
        significant=p < 0.05,
    )


def fleiss_kappa(table: Sequence[Sequence[int]], raters_per_item: int) -> float:
    """Fleiss' kappa for an items x categories count matrix where every
    item was rated by the same ``raters_per_item`` raters."""
    r = raters_per_item
    if r < 2:
        raise HumanEvalError("fleiss_kappa needs >= 2 raters per item")
    if not table:
        raise HumanEvalError("fleiss_kappa of an empty table")
    n_items = len(table)
    n_cats = len(table[0])
    for i, row in enumerate(table):
        if len(row) != n_cats:
            raise HumanEvalError(f"ragged table at row {i}")
        if sum(row) != r:
            raise HumanEvalError(f"row {i} sums to {sum(row)}, expected {r}")
    p_bar = Fraction(0)
    for row in table:
        p_bar += Fraction(sum(c * c for c in row) - r, r * (r - 1))
    p_bar /= n_items
    pe = Fraction(0)
    for j in range(n_cats):
        pj = Fraction(sum(row[j] for row in table), n_items * r)
        pe += pj * pj
    if pe == 1:
        # all mass in one category; perfect agreement by definition
        return 1.0
    return float((p_bar - pe) / (1 - pe))


def cohen_kappa(a: Sequence, b: Sequence) -> float:
    """Cohen's kappa between two equal-length label sequences."""
    if len(a) != len(b):
        raise HumanEvalError(f"label sequences differ in length: {len(a)} != {len(b)}")
    if not a:
        raise HumanEvalError("cohen_kappa of empty sequences")
    n = len(a)
    p_o = Fraction(sum(x == y for x, y in zip(a, b)), n)
    cats = set(a) | set(b)
    p_e = Fraction(0)
    for c in cats:
        p_e += Fraction(sum(x == c for x in a), n) * Fraction(sum(y == c for y in b), n)
    if p_e == 1:
        return 1.0 if p_o == 1 else 0.0
    return float((p_o - p_e) / (1 - p_e))


# ---------------------------------------------------------------------------
# File formats


def read_judgments(path: str | Path) -> list[Judgment]:
    out = []
    for row in read_jsonl(path):
        missing = {"item_id", "axis", "annotator_id", "choice"} - set(row)
        if missing:
            raise HumanEvalError(f"{path}: judgment record missing {sorted(missing)}")
        out.append(make_judgment(row["item_id"], row["axis"], row["annotator_id"], row["choice"]))
    return out


def axis_result_to_dict(r: AxisResult) -> dict:
    return {
        "axis": r.axis,
        "n": r.n,
        "prop_a": r.prop_a,
        "prop_b": r.prop_b,
        "prop_tie": r.prop_tie,
        "p_value": r.p_value,
        "significant": r.significant,
    }
