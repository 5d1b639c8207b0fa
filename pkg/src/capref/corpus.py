"""Caption corpus handling: ingestion of external dataset formats into a
canonical internal representation, the sampling operations experiments
need, and content-addressed serialization.

Supported input formats
-----------------------
multi30k    index file (one image name per line) plus k parallel caption
            files; line i of each caption file belongs to image line i.
coco_json   one JSON document with ``images[{id, file_name}]`` and
            ``annotations[{image_id, caption}]``.
xm3600      line-delimited ``{"image_id", "caption", "language"}``;
            records are filtered to the requested language.
image_list  one image path per line, no captions.
canonical   this package's own record file + manifest pair.

Canonical record files are line-delimited JSON, one record per line,
sorted, with two record shapes: image declarations
``{"image_id", "uri"}`` and caption records
``{"image_id", "text", "language", "origin", "provenance"}``.  The
content digest is the SHA-256 of the sorted lines, so it is independent
of ingestion order.
"""

from __future__ import annotations

import hashlib
import json
import re
import unicodedata
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping

from .jsonl import atomic_write_text, dumps_canonical, read_jsonl
from .seeding import stable_index, stable_order

ORIGINS = ("human", "model", "translated", "reformulated")
SPLITS = ("train", "val", "test", "additional")
FORMATS = ("multi30k", "coco_json", "xm3600", "image_list", "canonical")

_LANGUAGE_RE = re.compile(r"^[A-Za-z]{2,3}(-[A-Za-z0-9]{1,8})*$")


class CorpusError(ValueError):
    """Malformed input data or violated dataset invariant."""


@dataclass(frozen=True)
class ImageRef:
    id: str
    uri: str
    dataset: str


@dataclass(frozen=True)
class CaptionRecord:
    image_id: str
    text: str
    language: str
    origin: str = "human"
    provenance: str | None = None


@dataclass(frozen=True)
class Dataset:
    """Immutable after construction; safe to share across threads."""

    name: str
    split: str
    images: tuple[ImageRef, ...]
    captions: Mapping[str, tuple[CaptionRecord, ...]]

    @property
    def image_count(self) -> int:
        return len(self.images)

    @property
    def caption_count(self) -> int:
        return sum(len(v) for v in self.captions.values())

    def captions_for(self, image_id: str) -> tuple[CaptionRecord, ...]:
        return self.captions.get(image_id, ())


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    split: str
    image_count: int
    caption_count: int
    content_digest: str
    storage_uri: str


def normalize_text(text: str) -> str:
    return unicodedata.normalize("NFC", text).strip()


def valid_language(code: str) -> bool:
    return bool(_LANGUAGE_RE.match(code))


def make_caption(
    image_id: str,
    text: str,
    language: str,
    origin: str = "human",
    provenance: str | None = None,
) -> CaptionRecord:
    """Validate and NFC-normalize a caption record."""
    text = normalize_text(text)
    if not text:
        raise CorpusError(f"empty caption text for image {image_id!r}")
    if not valid_language(language):
        raise CorpusError(f"invalid language code {language!r}")
    if origin not in ORIGINS:
        raise CorpusError(f"unknown caption origin {origin!r}")
    return CaptionRecord(image_id, text, language, origin, provenance)


def make_dataset(
    name: str,
    split: str,
    images: Iterable[ImageRef],
    captions: Iterable[CaptionRecord],
) -> Dataset:
    """Build a Dataset, enforcing its invariants: unique non-empty image
    ids, non-empty uris, and every caption resolving to a known image.
    Caption-less images are permitted."""
    if split not in SPLITS:
        raise CorpusError(f"unknown split {split!r}")
    imgs = tuple(images)
    seen: set[str] = set()
    for img in imgs:
        if not img.id:
            raise CorpusError(f"dataset {name!r}: empty image id")
        if not img.uri:
            raise CorpusError(f"dataset {name!r}: image {img.id!r} has empty uri")
        if img.id in seen:
            raise CorpusError(f"dataset {name!r}: duplicate image id {img.id!r}")
        seen.add(img.id)
    by_image: dict[str, list[CaptionRecord]] = {}
    for cap in captions:
        if cap.image_id not in seen:
            raise CorpusError(
                f"dataset {name!r}: caption references unknown image {cap.image_id!r}"
            )
        by_image.setdefault(cap.image_id, []).append(cap)
    frozen = {k: tuple(v) for k, v in by_image.items()}
    return Dataset(name=name, split=split, images=imgs, captions=frozen)


# ---------------------------------------------------------------------------
# Ingestion


def ingest(
    format: str,
    paths: list[str | Path],
    language: str,
    name: str | None = None,
    split: str = "train",
) -> Dataset:
    """Parse external files into a Dataset.  ``language`` names the
    caption language of formats that do not carry one themselves."""
    if format not in FORMATS:
        raise CorpusError(f"unknown format {format!r}")
    if not paths:
        raise CorpusError("ingest needs at least one path")
    for p in paths:
        if not Path(p).exists():
            raise CorpusError(f"no such file: {p}")
    if format != "canonical" and not valid_language(language):
        raise CorpusError(f"invalid language code {language!r}")
    if name is None:
        name = Path(paths[0]).stem
    if format == "multi30k":
        return _ingest_multi30k(paths, language, name, split)
    if format == "coco_json":
        return _ingest_coco(paths, language, name, split)
    if format == "xm3600":
        return _ingest_xm3600(paths, language, name, split)
    if format == "image_list":
        return _ingest_image_list(paths, name, split)
    return load_canonical(paths[0])


def _read_lines(path: str | Path) -> list[str]:
    with open(path, encoding="utf-8", newline="") as f:
        content = f.read()
    if "\r" in content:
        raise CorpusError(f"{path}: expected LF line endings")
    lines = content.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return lines


def _ingest_multi30k(paths, language, name, split) -> Dataset:
    index_path, *caption_paths = paths
    if not caption_paths:
        raise CorpusError("multi30k ingest needs an index file and >= 1 caption file")
    image_lines = _read_lines(index_path)
    images = []
    for lineno, line in enumerate(image_lines, start=1):
        iid = line.strip()
        if not iid:
            raise CorpusError(f"{index_path}:{lineno}: blank image line")
        images.append(ImageRef(id=iid, uri=iid, dataset=name))
    captions = []
    for cpath in caption_paths:
        cap_lines = _read_lines(cpath)
        if len(cap_lines) != len(images):
            raise CorpusError(
                f"{cpath}: {len(cap_lines)} caption lines but index has "
                f"{len(images)} images"
            )
        for lineno, line in enumerate(cap_lines, start=1):
            if not line.strip():
                raise CorpusError(f"{cpath}:{lineno}: empty caption line")
            captions.append(make_caption(images[lineno - 1].id, line, language))
    return make_dataset(name, split, images, captions)


def _ingest_coco(paths, language, name, split) -> Dataset:
    if len(paths) != 1:
        raise CorpusError("coco_json ingest takes exactly one file")
    path = paths[0]
    with open(path, encoding="utf-8") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise CorpusError(f"{path}:{e.lineno}: invalid JSON: {e.msg}") from e
    if not isinstance(doc, dict) or "images" not in doc or "annotations" not in doc:
        raise CorpusError(f"{path}: expected object with 'images' and 'annotations'")
    images = []
    for i, entry in enumerate(doc["images"]):
        try:
            iid, fname = str(entry["id"]), str(entry["file_name"])
        except (TypeError, KeyError) as e:
            raise CorpusError(f"{path}: images[{i}] missing field {e}") from e
        images.append(ImageRef(id=iid, uri=fname, dataset=name))
    captions = []
    for i, entry in enumerate(doc["annotations"]):
        try:
            iid, text = str(entry["image_id"]), entry["caption"]
        except (TypeError, KeyError) as e:
            raise CorpusError(f"{path}: annotations[{i}] missing field {e}") from e
        captions.append(make_caption(iid, text, language))
    return make_dataset(name, split, images, captions)


def _ingest_xm3600(paths, language, name, split) -> Dataset:
    image_ids: list[str] = []
    seen: set[str] = set()
    captions = []
    for path in paths:
        for row in read_jsonl(path):
            missing = {"image_id", "caption", "language"} - set(row)
            if missing:
                raise CorpusError(f"{path}: record missing fields {sorted(missing)}")
            if row["language"] != language:
                continue
            iid = str(row["image_id"])
            if iid not in seen:
                seen.add(iid)
                image_ids.append(iid)
            captions.append(make_caption(iid, row["caption"], language))
    images = [ImageRef(id=iid, uri=iid, dataset=name) for iid in image_ids]
    return make_dataset(name, split, images, captions)


def _ingest_image_list(paths, name, split) -> Dataset:
    images = []
    for path in paths:
        for lineno, line in enumerate(_read_lines(path), start=1):
            uri = line.strip()
            if not uri:
                raise CorpusError(f"{path}:{lineno}: blank image path")
            images.append(ImageRef(id=uri, uri=uri, dataset=name))
    return make_dataset(name, split, images, [])


# ---------------------------------------------------------------------------
# Sampling


def sample_one_caption_per_image(d: Dataset, seed: int) -> Dataset:
    """Keep exactly one caption per image, chosen deterministically from
    the seed.  Every image must have at least one caption."""
    kept = []
    for img in d.images:
        caps = d.captions_for(img.id)
        if not caps:
            raise CorpusError(f"image {img.id!r} has zero captions")
        kept.append(caps[stable_index(len(caps), "pick-caption", str(seed), img.id)])
    return make_dataset(d.name, d.split, d.images, kept)


def sample_subset(d: Dataset, n: int, seed: int) -> Dataset:
    """n distinct images with all their captions.  For a fixed seed,
    subsets are nested: sample_subset(d, n1, s) is contained in
    sample_subset(d, n2, s) whenever n1 < n2, which keeps data-size
    sweep curves monotone in the data actually seen."""
    if n < 1 or n > d.image_count:
        raise CorpusError(f"subset size {n} out of range 1..{d.image_count}")
    order = stable_order([img.id for img in d.images], "subset", str(seed))
    keep = set(order[:n])
    images = [img for img in d.images if img.id in keep]
    captions = [c for img in images for c in d.captions_for(img.id)]
    return make_dataset(d.name, d.split, images, captions)


def merge(a: Dataset, b: Dataset) -> Dataset:
    """Union of two datasets.  Ids are kept as-is when already disjoint;
    otherwise every id is qualified with its dataset name, and any
    collision that survives qualification is rejected."""
    if not b.images and not b.captions:
        return a
    ids_a = {img.id for img in a.images}
    ids_b = {img.id for img in b.images}
    if ids_a & ids_b:
        qualify = True
        qualified = {f"{a.name}:{i}" for i in ids_a} & {f"{b.name}:{i}" for i in ids_b}
        if qualified:
            clash = sorted(i.split(":", 1)[1] for i in qualified)[0]
            raise CorpusError(f"merge id collision after dataset-name prefixing: {clash!r}")
    else:
        qualify = False

    def rename(d: Dataset, img: ImageRef) -> ImageRef:
        return replace(img, id=f"{d.name}:{img.id}") if qualify else img

    images = [rename(a, img) for img in a.images] + [rename(b, img) for img in b.images]
    captions = []
    for d in (a, b):
        for img_id, caps in d.captions.items():
            new_id = f"{d.name}:{img_id}" if qualify else img_id
            captions.extend(replace(c, image_id=new_id) for c in caps)
    name = a.name if a.name == b.name else f"{a.name}+{b.name}"
    return make_dataset(name, a.split, images, captions)


# ---------------------------------------------------------------------------
# Canonical serialization


def canonical_lines(d: Dataset) -> list[str]:
    lines = [
        dumps_canonical({"image_id": img.id, "uri": img.uri}) for img in d.images
    ]
    for img in d.images:
        for c in d.captions_for(img.id):
            lines.append(
                dumps_canonical(
                    {
                        "image_id": c.image_id,
                        "text": c.text,
                        "language": c.language,
                        "origin": c.origin,
                        "provenance": c.provenance,
                    }
                )
            )
    return sorted(lines)


def content_digest(d: Dataset) -> str:
    body = "\n".join(canonical_lines(d)) + "\n"
    return hashlib.sha256(body.encode("utf-8")).hexdigest()


def save_canonical(d: Dataset, records_path: str | Path) -> DatasetManifest:
    """Write the sorted record file and its manifest (written next to the
    records as ``<records>.manifest.json``).  Returns the manifest."""
    records_path = Path(records_path)
    body = "\n".join(canonical_lines(d)) + "\n"
    atomic_write_text(records_path, body)
    manifest = DatasetManifest(
        name=d.name,
        split=d.split,
        image_count=d.image_count,
        caption_count=d.caption_count,
        content_digest=hashlib.sha256(body.encode("utf-8")).hexdigest(),
        storage_uri=str(records_path),
    )
    atomic_write_text(manifest_path_for(records_path), manifest_to_json(manifest))
    return manifest


def manifest_path_for(records_path: str | Path) -> Path:
    return Path(str(records_path) + ".manifest.json")


def manifest_to_json(m: DatasetManifest) -> str:
    return dumps_canonical(
        {
            "name": m.name,
            "split": m.split,
            "image_count": m.image_count,
            "caption_count": m.caption_count,
            "content_digest": m.content_digest,
            "records": Path(m.storage_uri).name,
        }
    )


def load_manifest(manifest_path: str | Path) -> DatasetManifest:
    manifest_path = Path(manifest_path)
    with open(manifest_path, encoding="utf-8") as f:
        doc = json.load(f)
    missing = {
        "name",
        "split",
        "image_count",
        "caption_count",
        "content_digest",
        "records",
    } - set(doc)
    if missing:
        raise CorpusError(f"{manifest_path}: manifest missing fields {sorted(missing)}")
    records = manifest_path.parent / doc["records"]
    return DatasetManifest(
        name=doc["name"],
        split=doc["split"],
        image_count=doc["image_count"],
        caption_count=doc["caption_count"],
        content_digest=doc["content_digest"],
        storage_uri=str(records),
    )


def load_canonical(manifest_path: str | Path) -> Dataset:
    """Load a canonical dataset and verify its digest and counts."""
    m = load_manifest(manifest_path)
    with open(m.storage_uri, encoding="utf-8") as f:
        body = f.read()
    digest = hashlib.sha256(body.encode("utf-8")).hexdigest()
    if digest != m.content_digest:
        raise CorpusError(
            f"{m.storage_uri}: content digest mismatch "
            f"(manifest {m.content_digest[:12]}, file {digest[:12]})"
        )
    images = []
    captions = []
    for line in body.splitlines():
        row = json.loads(line)
        if "text" in row:
            captions.append(
                CaptionRecord(
                    image_id=row["image_id"],
                    text=row["text"],
                    language=row["language"],
                    origin=row["origin"],
                    provenance=row.get("provenance"),
                )
            )
        else:
            images.append(ImageRef(id=row["image_id"], uri=row["uri"], dataset=m.name))
    d = make_dataset(m.name, m.split, images, captions)
    if d.image_count != m.image_count or d.caption_count != m.caption_count:
        raise CorpusError(
            f"{manifest_path}: manifest counts do not match records "
            f"({d.image_count}/{d.caption_count} found)"
        )
    return d
