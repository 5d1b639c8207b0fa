"""Deterministic mock implementations of the five model roles.

The mocks share a closed toy world so that desk-scale experiments have
provable behavior:

* a toy grammar emits one canonical caption per image id (in the target
  language and, via a bijective word table, in English);
* checkpoints carry an error probability; the mock captioner corrupts
  that fraction of tokens, mostly with *shallow* forms a reformulator
  can recognize and occasionally with *deep* junk it cannot;
* the mock translator maps words through the bijective table and passes
  unknown tokens through unchanged, so round trips are lossless;
* the mock reformulator restores shallow forms (to proper English) and
  touches nothing else; given an empty caption it acts as an English
  captioner with a small error rate of its own;
* the mock trainer measures the corrupted-token fraction of its
  training captions and derives the child checkpoint's error
  probability from it, so cleaner training data provably yields a
  better captioner.

Every stochastic choice is hashed from explicit inputs (image id, seed)
rather than drawn from RNG state, which makes outputs independent of
batching and byte-identical across runs and machines.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from ..seeding import stable_index, stable_u64, unit_float

TARGET_LANGUAGE = "de"

_DET1 = ["ein", "eine"]
_ADJ = ["kleiner", "großer", "alter", "junger", "roter", "blauer", "müder", "schneller", "grüner", "leiser"]
_NOUN = ["mann", "frau", "hund", "junge", "vogel", "reiter", "bäcker", "hase", "künstler", "lehrer", "mädchen", "pferd"]
_VERB = ["steht", "sitzt", "läuft", "springt", "wartet", "schläft", "spielt", "winkt", "träumt", "balanciert"]
_PREP = ["auf", "neben", "hinter", "vor", "unter", "über"]
_DET2 = ["der", "einer"]
_NOUN2 = ["straße", "wiese", "brücke", "treppe", "bühne", "mauer", "bank", "leiter"]

DE_TO_EN = {
    "ein": "a", "eine": "one",
    "kleiner": "small", "großer": "big", "alter": "old", "junger": "young",
    "roter": "red", "blauer": "blue", "müder": "tired", "schneller": "fast",
    "grüner": "green", "leiser": "quiet",
    "mann": "man", "frau": "woman", "hund": "dog", "junge": "boy",
    "vogel": "bird", "reiter": "rider", "bäcker": "baker", "hase": "rabbit",
    "künstler": "artist", "lehrer": "teacher", "mädchen": "girl", "pferd": "horse",
    "steht": "stands", "sitzt": "sits", "läuft": "runs", "springt": "jumps",
    "wartet": "waits", "schläft": "sleeps", "spielt": "plays", "winkt": "waves",
    "träumt": "dreams", "balanciert": "balances",
    "auf": "on", "neben": "beside", "hinter": "behind", "vor": "before",
    "unter": "under", "über": "above",
    "der": "the", "einer": "some",
    "straße": "street", "wiese": "meadow", "brücke": "bridge", "treppe": "staircase",
    "bühne": "stage", "mauer": "wall", "bank": "bench", "leiter": "ladder",
}
EN_TO_DE = {v: k for k, v in DE_TO_EN.items()}
assert len(EN_TO_DE) == len(DE_TO_EN), "toy lexicon must be bijective"

# English synonyms deliberately missing from the lexicon; used by the toy
# additional-set captions so translated human captions carry a little noise.
EN_SYNONYM = {
    "small": "tiny", "big": "huge", "old": "ancient", "young": "youthful",
    "red": "crimson", "blue": "azure", "tired": "weary", "fast": "quick",
    "green": "verdant", "quiet": "hushed",
}

CLEAN_DE = set(DE_TO_EN) | {"."}
_ALL_WORDS = set(DE_TO_EN) | set(EN_TO_DE) | set(EN_SYNONYM.values())


def _mangle(word: str, deep: bool) -> str:
    form = word[::-1] + "q" if deep else (word[1] + word[0] + word[2:] if len(word) > 1 else word + "x")
    while form in _ALL_WORDS:
        form += "x"
    return form


def _build_forms() -> tuple[dict, dict, dict, dict]:
    shallow_de, deep_de, deep_en, restore_en = {}, {}, {}, {}
    taken = set(_ALL_WORDS)
    for w in sorted(DE_TO_EN):
        for table, deep in ((shallow_de, False), (deep_de, True)):
            form = _mangle(w, deep)
            while form in taken:
                form += "x"
            taken.add(form)
            table[w] = form
        restore_en[shallow_de[w]] = DE_TO_EN[w]
    for w in sorted(EN_TO_DE):
        form = _mangle(w, True)
        while form in taken:
            form += "x"
        taken.add(form)
        deep_en[w] = form
    return shallow_de, deep_de, deep_en, restore_en


SHALLOW_DE, DEEP_DE, DEEP_EN, RESTORE_EN = _build_forms()


# ---------------------------------------------------------------------------
# Toy grammar


def image_key(image_id_or_uri: str) -> str:
    """Image ids double as grammar seeds; uris use the toy:// scheme."""
    m = re.match(r"^[a-z+]+://(.*)$", image_id_or_uri)
    return m.group(1) if m else image_id_or_uri


def caption_tokens_de(image_id: str, variant: int = 0) -> list[str]:
    """Canonical caption for an image.  Variant 0 is what a perfect
    captioner would say; higher variants are reference paraphrases
    (different adjective/verb; variant 2 drops the adjective)."""
    key = image_key(image_id)
    adj = _ADJ[(stable_index(len(_ADJ), "adj", key) + variant) % len(_ADJ)]
    verb = _VERB[(stable_index(len(_VERB), "verb", key) + variant) % len(_VERB)]
    tokens = [
        _DET1[stable_index(len(_DET1), "det1", key)],
        adj,
        _NOUN[stable_index(len(_NOUN), "noun", key)],
        verb,
        _PREP[stable_index(len(_PREP), "prep", key)],
        _DET2[stable_index(len(_DET2), "det2", key)],
        _NOUN2[stable_index(len(_NOUN2), "noun2", key)],
        ".",
    ]
    if variant == 2:
        tokens.pop(1)
    return tokens


def caption_tokens_en(image_id: str, variant: int = 0) -> list[str]:
    return [DE_TO_EN.get(t, t) for t in caption_tokens_de(image_id, variant)]


# ---------------------------------------------------------------------------
# Mock world


@dataclass(frozen=True)
class MockWorld:
    """Dials for the mock suite.  ``skill`` sets how fast a from-scratch
    checkpoint improves with training volume, ``deep_fraction`` how much
    captioner corruption is beyond the reformulator's reach,
    ``english_err`` the error rate of the English captioning mode, and
    ``noise`` a small seed-dependent jitter on trained checkpoints."""

    skill: float = 1000.0
    noise: float = 0.002
    deep_fraction: float = 0.15
    english_err: float = 0.04
    embed_dim: int = 12


_CKPT_RE = re.compile(r"^ck-[0-9a-f]{16}-p(0\.\d{6}|1\.000000)$")


def checkpoint_id(p_err: float, *parts: str | int) -> str:
    return f"ck-{stable_u64('checkpoint', f'{p_err:.6f}', *parts):016x}-p{p_err:.6f}"


def checkpoint_p_err(ckpt_id: str) -> float:
    if not _CKPT_RE.match(ckpt_id):
        raise ValueError(f"not a mock checkpoint id: {ckpt_id!r}")
    return float(ckpt_id.rsplit("-p", 1)[1])


def _corrupt(tokens: list[str], p_err: float, key: str, seed: int, world: MockWorld, lang: str) -> list[str]:
    positions = [i for i, t in enumerate(tokens) if t != "."]
    if not positions:
        return tokens
    residual = unit_float("corrupt-count", lang, key, seed)
    k = min(len(positions), int(p_err * len(positions) + residual))
    ranked = sorted(positions, key=lambda i: stable_u64("corrupt-rank", lang, key, seed, i))
    out = list(tokens)
    for i in ranked[:k]:
        word = out[i]
        if lang == "en":
            out[i] = DEEP_EN.get(word, _mangle(word, True))
        elif unit_float("corrupt-deep", key, seed, i) < world.deep_fraction:
            out[i] = DEEP_DE.get(word, _mangle(word, True))
        else:
            out[i] = SHALLOW_DE.get(word, _mangle(word, False))
    return out


def mock_caption(image_id: str, ckpt_id: str, seed: int, world: MockWorld) -> str:
    """Caption an image with the checkpoint's error probability."""
    tokens = caption_tokens_de(image_id, 0)
    p = checkpoint_p_err(ckpt_id)
    return " ".join(_corrupt(tokens, p, image_key(image_id), seed, world, TARGET_LANGUAGE))


def mock_translate(texts: list[str], src: str, tgt: str) -> list[str]:
    if (src, tgt) not in (("de", "en"), ("en", "de")):
        raise ValueError(f"mock translator only speaks de<->en, not {src}->{tgt}")
    table = DE_TO_EN if src == "de" else EN_TO_DE
    return [" ".join(table.get(t, t) for t in text.split()) for text in texts]


def mock_reformulate(image_uri: str, caption: str, seed: int, world: MockWorld) -> str:
    """Restore every shallow-corrupted token; leave everything else
    alone.  An empty input caption switches to English captioning."""
    if caption.strip():
        return " ".join(RESTORE_EN.get(t, t) for t in caption.split())
    tokens = caption_tokens_en(image_uri, 0)
    return " ".join(_corrupt(tokens, world.english_err, image_key(image_uri), seed, world, "en"))


def mock_embed(token_lists: list[list[str]], world: MockWorld, _memo: dict = {}) -> list[list[list[float]]]:
    """One unit vector per token, hashed from the token text alone."""
    dim = world.embed_dim
    out = []
    for tokens in token_lists:
        vecs = []
        for t in tokens:
            cached = _memo.get((dim, t))
            if cached is None:
                raw = [unit_float("embed", t, i) * 2.0 - 1.0 for i in range(dim)]
                norm = sum(x * x for x in raw) ** 0.5 or 1.0
                cached = [x / norm for x in raw]
                _memo[(dim, t)] = cached
            vecs.append(cached)
        out.append(vecs)
    return out


def measure_corruption_rate(texts: list[str]) -> float:
    """Fraction of caption tokens outside the clean target-language
    lexicon; what the mock trainer 'learns' from its data."""
    total = bad = 0
    for text in texts:
        for t in text.split():
            total += 1
            bad += t not in CLEAN_DE
    return bad / total if total else 0.0


@dataclass(frozen=True)
class TrainResult:
    checkpoint: str
    p_err: float
    data_corruption_rate: float


def mock_train(
    texts: list[str],
    manifest_digest: str,
    init: str | None,
    epochs: int,
    seed: int,
    world: MockWorld,
) -> TrainResult:
    """Derive a child checkpoint from training captions.

    From scratch, error probability is the data corruption rate plus a
    volume-dependent floor; continued training averages the parent's
    error probability with the new data's corruption rate.  Less corrupt
    data therefore always yields a less error-prone captioner.
    """
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    rate = measure_corruption_rate(texts)
    if init is None:
        volume = len(texts) * epochs
        p = rate + world.skill / (world.skill + volume)
    else:
        p = 0.5 * checkpoint_p_err(init) + 0.5 * rate
    p += (unit_float("train-noise", manifest_digest, str(init), seed) - 0.5) * world.noise
    p = min(max(p, 0.0), 0.95)
    return TrainResult(
        checkpoint=checkpoint_id(p, manifest_digest, str(init), epochs, seed),
        p_err=p,
        data_corruption_rate=rate,
    )
