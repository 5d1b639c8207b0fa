"""Analyses over reformulation data: how much annotators changed, what
kinds of edits they made, and pairing stylized captions back to the
plain caption they were written from."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .corpus import normalize_text
from .jsonl import read_jsonl
from .metrics import _levenshtein, tokenize

ELEMENTS = ("object", "action", "attribute", "setting", "other")
KINDS = ("add", "replace", "remove", "rewrite")


class AnalysisError(ValueError):
    pass


@dataclass(frozen=True)
class ReformulationPair:
    image_id: str
    original: str
    reformulated: str
    language: str


@dataclass(frozen=True)
class ChangeLabel:
    """One edit operation label.  Rewrites are element-less in the
    source tables; by convention they carry element='other' here."""

    element: str
    kind: str


@dataclass(frozen=True)
class ReformulationStats:
    total: int
    unchanged_fraction: float
    mean_edit_distance: float
    mean_len_before: float
    mean_len_after: float


@dataclass(frozen=True)
class ChangeTable:
    """Per-(element, kind) counts for add/replace/remove, with rewrites
    tracked only in the kind margin (they have no element breakdown)."""

    cells: dict[str, dict[str, int]]
    rewrite_total: int

    @property
    def row_totals(self) -> dict[str, int]:
        return {el: sum(self.cells[el].values()) for el in ELEMENTS}

    @property
    def kind_totals(self) -> dict[str, int]:
        totals = {
            kind: sum(self.cells[el][kind] for el in ELEMENTS)
            for kind in ("add", "replace", "remove")
        }
        totals["rewrite"] = self.rewrite_total
        return totals


def make_pair(
    image_id: str, original: str, reformulated: str, language: str
) -> ReformulationPair:
    original = normalize_text(original)
    reformulated = normalize_text(reformulated)
    if not original or not reformulated:
        raise AnalysisError(f"pair {image_id!r}: empty caption text")
    return ReformulationPair(image_id, original, reformulated, language)


def make_label(element: str | None, kind: str) -> ChangeLabel:
    if kind not in KINDS:
        raise AnalysisError(f"unknown change kind {kind!r}")
    if kind == "rewrite":
        element = "other"
    if element not in ELEMENTS:
        raise AnalysisError(f"unknown change element {element!r}")
    return ChangeLabel(element, kind)


def reformulation_stats(
    pairs: Sequence[ReformulationPair], length_unit: str = "chars"
) -> ReformulationStats:
    """Unchanged fraction (exact equality after NFC normalization), mean
    word-level edit distance, and mean caption length before/after.
    Length is characters including spaces by default; 'words' counts
    tokens instead."""
    if not pairs:
        raise AnalysisError("reformulation_stats of an empty pair list")
    if length_unit not in ("chars", "words"):
        raise AnalysisError(f"unknown length unit {length_unit!r}")
    unchanged = 0
    dist_sum = 0
    len_before = 0.0
    len_after = 0.0
    for p in pairs:
        if p.original == p.reformulated:
            unchanged += 1
        dist_sum += _levenshtein(
            tokenize(p.original).tokens, tokenize(p.reformulated).tokens
        )
        if length_unit == "chars":
            len_before += len(p.original)
            len_after += len(p.reformulated)
        else:
            len_before += len(tokenize(p.original))
            len_after += len(tokenize(p.reformulated))
    n = len(pairs)
    return ReformulationStats(
        total=n,
        unchanged_fraction=unchanged / n,
        mean_edit_distance=dist_sum / n,
        mean_len_before=len_before / n,
        mean_len_after=len_after / n,
    )


def change_tally(
    labels: Sequence[tuple[str, Sequence[ChangeLabel]]]
) -> ChangeTable:
    """Tally change labels into the element x kind table.  A pair may
    contribute several cells."""
    cells = {el: {k: 0 for k in ("add", "replace", "remove")} for el in ELEMENTS}
    rewrites = 0
    for _pair_id, pair_labels in labels:
        for lab in pair_labels:
            if lab.kind == "rewrite":
                rewrites += 1
            else:
                cells[lab.element][lab.kind] += 1
    return ChangeTable(cells=cells, rewrite_total=rewrites)


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    """Length of the longest common subsequence of two token lists."""
    if len(a) < len(b):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for tok_a in a:
        cur = [0] * (len(b) + 1)
        for j, tok_b in enumerate(b, start=1):
            cur[j] = prev[j - 1] + 1 if tok_a == tok_b else max(prev[j], cur[j - 1])
        prev = cur
    return prev[len(b)]


def pair_stylized_to_original(stylized: str, candidates: Sequence[str]) -> int:
    """Index of the candidate with the largest token-level LCS overlap
    with the stylized caption; ties break toward the lowest index."""
    if not candidates:
        raise AnalysisError("pair_stylized_to_original needs candidates")
    s = tokenize(stylized).tokens
    best_idx = 0
    best = -1
    for i, cand in enumerate(candidates):
        overlap = lcs_length(s, tokenize(cand).tokens)
        if overlap > best:
            best, best_idx = overlap, i
    return best_idx


# ---------------------------------------------------------------------------
# File formats


def read_pairs(path: str | Path) -> list[ReformulationPair]:
    pairs = []
    for row in read_jsonl(path):
        missing = {"image_id", "original", "reformulated", "language"} - set(row)
        if missing:
            raise AnalysisError(f"{path}: pair record missing {sorted(missing)}")
        pairs.append(
            make_pair(row["image_id"], row["original"], row["reformulated"], row["language"])
        )
    return pairs


def read_labels(path: str | Path) -> list[tuple[str, list[ChangeLabel]]]:
    out = []
    for row in read_jsonl(path):
        if "pair_id" not in row or "labels" not in row:
            raise AnalysisError(f"{path}: label record needs pair_id and labels")
        labs = [make_label(entry.get("element"), entry.get("kind", "")) for entry in row["labels"]]
        out.append((str(row["pair_id"]), labs))
    return out
