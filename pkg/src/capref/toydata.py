"""Builder for the deterministic toy corpus used by desk-scale
experiments: a captioned base set in the target language, an additional
set of images with English human captions, a caption-less extension set
(ImageNet-like), and a ragged-reference test set.  All captions come
from the mock grammar, so the mock trainer sees them as perfectly clean
data."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .backends.mocks import EN_SYNONYM, caption_tokens_de, caption_tokens_en
from .corpus import Dataset, DatasetManifest, ImageRef, make_caption, make_dataset, save_canonical
from .seeding import stable_index, unit_float

# chance that a toy English human caption uses an out-of-lexicon synonym,
# so translated human captions carry a little realistic noise
SYNONYM_RATE = 0.35


@dataclass(frozen=True)
class ToyWorldPaths:
    base: Path
    additional: Path
    extension: Path
    test: Path

    def manifest_paths(self) -> dict[str, str]:
        return {
            "base": str(self.base),
            "additional": str(self.additional),
            "extension": str(self.extension),
            "test": str(self.test),
        }


def _image(prefix: str, i: int) -> ImageRef:
    iid = f"{prefix}{i:05d}"
    return ImageRef(id=iid, uri=f"toy://{iid}", dataset=f"toy-{prefix}")


def build_base(n: int) -> Dataset:
    images = [_image("b", i) for i in range(n)]
    captions = []
    for img in images:
        for v in (0, 1):
            captions.append(
                make_caption(img.id, " ".join(caption_tokens_de(img.id, v)), "de")
            )
    return make_dataset("toy-base", "train", images, captions)


def english_human_caption(image_id: str, variant: int) -> str:
    """English caption as a human might write it: occasionally uses a
    synonym the toy translator does not know."""
    tokens = caption_tokens_en(image_id, variant)
    if unit_float("synonym", image_id, variant) < SYNONYM_RATE:
        for i, t in enumerate(tokens):
            if t in EN_SYNONYM:
                tokens[i] = EN_SYNONYM[t]
                break
    return " ".join(tokens)


def build_additional(n: int) -> Dataset:
    images = [_image("a", i) for i in range(n)]
    captions = []
    for img in images:
        for v in (0, 1):
            captions.append(make_caption(img.id, english_human_caption(img.id, v), "en"))
    return make_dataset("toy-additional", "additional", images, captions)


def build_extension(n: int) -> Dataset:
    return make_dataset("toy-extension", "additional", [_image("x", i) for i in range(n)], [])


def build_test(n: int) -> Dataset:
    images = [_image("t", i) for i in range(n)]
    captions = []
    for img in images:
        n_refs = 1 + stable_index(3, "nrefs", img.id)
        for v in range(n_refs):
            captions.append(
                make_caption(img.id, " ".join(caption_tokens_de(img.id, v)), "de")
            )
    return make_dataset("toy-test", "test", images, captions)


def build_toy_world(
    root: str | Path,
    n_base: int = 1000,
    n_additional: int = 400,
    n_extension: int = 150,
    n_test: int = 2500,
) -> ToyWorldPaths:
    """Write the four datasets under root and return their manifest paths."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    manifests: dict[str, DatasetManifest] = {}
    for name, dataset in (
        ("base", build_base(n_base)),
        ("additional", build_additional(n_additional)),
        ("extension", build_extension(n_extension)),
        ("test", build_test(n_test)),
    ):
        manifests[name] = save_canonical(dataset, root / f"{name}.jsonl")
    return ToyWorldPaths(
        base=root / "base.jsonl.manifest.json",
        additional=root / "additional.jsonl.manifest.json",
        extension=root / "extension.jsonl.manifest.json",
        test=root / "test.jsonl.manifest.json",
    )
