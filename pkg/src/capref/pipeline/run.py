"""Plan execution over the artifact store and backend clients.

Stages run in topological order; a stage whose cache key is already in
the store (and passes its digest check) is skipped, a failed stage
halts its dependents while independent branches keep going, and every
computed output is published atomically, so an interrupted run resumes
from where it stopped.
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import json
import os
import time
from dataclasses import dataclass, field

from .. import metrics as M
from ..backends import client as bk
from ..corpus import (
    Dataset,
    DatasetManifest,
    ImageRef,
    canonical_lines,
    content_digest,
    load_canonical,
    load_manifest,
    make_caption,
    make_dataset,
    manifest_path_for,
    manifest_to_json,
    merge,
    sample_one_caption_per_image,
    sample_subset,
    save_canonical,
)
from ..jsonl import dumps_canonical
from .config import ExperimentConfig, parse_variant
from .plan import GEN_CAPTIONER, GEN_ENGLISH, GEN_HUMAN_SAMPLE, Stage, StagePlan, plan_variant
from .store import ArtifactStore, StoreEntry


class RunError(RuntimeError):
    pass


@dataclass(frozen=True)
class StageOutcome:
    name: str
    kind: str
    cache_key: str
    status: str  # hit | computed | failed | skipped
    duration_s: float
    error: str | None = None


@dataclass(frozen=True)
class RunRecord:
    variant: str
    seed: int
    plan_digest: str
    outcomes: tuple[StageOutcome, ...]
    scores: dict[str, float]

    @property
    def ok(self) -> bool:
        return all(o.status in ("hit", "computed") for o in self.outcomes)

    @property
    def all_hits(self) -> bool:
        return all(o.status == "hit" for o in self.outcomes)


@dataclass
class SweepResult:
    records: list[tuple[str, int, int, RunRecord]] = field(default_factory=list)

    @property
    def all_hits(self) -> bool:
        return all(r.all_hits for _, _, _, r in self.records)

    def score(self, variant: str, n: int, seed: int, metric: str) -> float:
        for v, size, s, record in self.records:
            if (v, size, s) == (variant, n, seed):
                return record.scores[metric]
        raise KeyError((variant, n, seed, metric))


class _Runtime:
    """Shared per-run context: datasets are loaded once per path."""

    def __init__(self, config: ExperimentConfig, store: ArtifactStore, session: bk.BackendSession):
        self.config = config
        self.store = store
        self.session = session
        self._datasets: dict[str, Dataset] = {}

    def dataset(self, manifest_path: str) -> Dataset:
        if manifest_path not in self._datasets:
            self._datasets[manifest_path] = load_canonical(manifest_path)
        return self._datasets[manifest_path]


def _checkpoint_from_entry(entry: StoreEntry) -> bk.CheckpointRef:
    doc = json.loads(entry.output_text().splitlines()[0])
    return bk.CheckpointRef(
        id=doc["id"], parent=doc.get("parent"), trained_on=doc["trained_on"], epochs=doc["epochs"]
    )


def _caption_rows(entry: StoreEntry) -> list[dict]:
    return [json.loads(line) for line in entry.output_text().splitlines()]


def _source_images(plan: StagePlan, rt: _Runtime) -> list[ImageRef]:
    additional = rt.dataset(plan.dataset_path("additional"))
    if plan.variant.plus_imagenet:
        merged = merge(additional, rt.dataset(plan.dataset_path("extension")))
        return list(merged.images)
    return list(additional.images)


def _uri_map(plan: StagePlan, rt: _Runtime) -> dict[str, str]:
    return {img.id: img.uri for img in _source_images(plan, rt)}


def _checkpoint_line(ckpt: bk.CheckpointRef) -> str:
    return dumps_canonical(
        {"id": ckpt.id, "parent": ckpt.parent, "trained_on": ckpt.trained_on, "epochs": ckpt.epochs}
    )


def _exec_train_base(stage: Stage, plan: StagePlan, rt: _Runtime, deps: dict) -> tuple[str, dict]:
    manifest = load_manifest(plan.dataset_path("base"))
    ckpt = bk.train(
        rt.config.endpoint("trainer"), manifest, None, rt.config.base_epochs, stage.seed,
        session=rt.session,
    )
    return _checkpoint_line(ckpt) + "\n", {"checkpoint": ckpt.id}


def _exec_generate(stage: Stage, plan: StagePlan, rt: _Runtime, deps: dict) -> tuple[str, dict]:
    mode = stage.input("mode")
    images = _source_images(plan, rt)
    lang = rt.config.target_language
    if mode == GEN_CAPTIONER:
        ckpt = _checkpoint_from_entry(deps["train_base"])
        records = bk.caption_batch(
            rt.config.endpoint("captioner"), ckpt, images, stage.seed, lang, session=rt.session
        )
        rows = [
            {"image_id": r.image_id, "text": r.text, "language": r.language,
             "origin": r.origin, "provenance": r.provenance}
            for r in records
        ]
    elif mode == GEN_ENGLISH:
        ep = rt.config.endpoint("reformulator")
        texts = bk.reformulate_batch(ep, [(img.uri, "") for img in images], session=rt.session)
        rows = [
            {"image_id": img.id, "text": t, "language": "en", "origin": "model",
             "provenance": ep.identity}
            for img, t in zip(images, texts)
        ]
    elif mode == GEN_HUMAN_SAMPLE:
        additional = rt.dataset(plan.dataset_path("additional"))
        human_en = make_dataset(
            additional.name,
            additional.split,
            additional.images,
            [
                c
                for caps in additional.captions.values()
                for c in caps
                if c.origin == "human" and c.language == "en"
            ],
        )
        sampled = sample_one_caption_per_image(human_en, stage.seed)
        rows = [
            {"image_id": img.id, "text": sampled.captions_for(img.id)[0].text,
             "language": "en", "origin": "human", "provenance": None}
            for img in sampled.images
        ]
    else:
        raise RunError(f"unknown generate mode {mode!r}")
    return "".join(dumps_canonical(r) + "\n" for r in rows), {"captions": len(rows)}


def _exec_translate(stage: Stage, plan: StagePlan, rt: _Runtime, deps: dict) -> tuple[str, dict]:
    upstream = deps[stage.deps[0]]
    rows = _caption_rows(upstream)
    ep = rt.config.endpoint("translator")
    src, tgt = stage.input("src"), stage.input("tgt")
    translated = bk.translate_batch(ep, src, tgt, [r["text"] for r in rows], session=rt.session)
    out = [
        {"image_id": r["image_id"], "text": t, "language": tgt, "origin": "translated",
         "provenance": ep.identity}
        for r, t in zip(rows, translated)
    ]
    return "".join(dumps_canonical(r) + "\n" for r in out), {"captions": len(out)}


def _exec_reformulate(stage: Stage, plan: StagePlan, rt: _Runtime, deps: dict) -> tuple[str, dict]:
    rows = _caption_rows(deps["translate_to_en"])
    uris = _uri_map(plan, rt)
    ep = rt.config.endpoint("reformulator")
    fixed = bk.reformulate_batch(
        ep, [(uris[r["image_id"]], r["text"]) for r in rows], session=rt.session
    )
    out = [
        {"image_id": r["image_id"], "text": t, "language": r["language"],
         "origin": "reformulated", "provenance": ep.identity}
        for r, t in zip(rows, fixed)
    ]
    return "".join(dumps_canonical(r) + "\n" for r in out), {"captions": len(out)}


def _exec_assemble(stage: Stage, plan: StagePlan, rt: _Runtime, deps: dict) -> tuple[str, dict]:
    rows = _caption_rows(deps[stage.deps[0]])
    images = _source_images(plan, rt)
    lang, origin = stage.input("language"), stage.input("origin")
    captions = [
        make_caption(r["image_id"], r["text"], lang, origin=origin, provenance=r.get("provenance"))
        for r in rows
    ]
    dataset = make_dataset(f"assembled-{stage.cache_key[:12]}", "additional", images, captions)
    body = "\n".join(canonical_lines(dataset)) + "\n"
    manifest = DatasetManifest(
        name=dataset.name,
        split=dataset.split,
        image_count=dataset.image_count,
        caption_count=dataset.caption_count,
        content_digest=hashlib.sha256(body.encode("utf-8")).hexdigest(),
        storage_uri="output.jsonl",
    )
    return body, {"manifest": manifest_to_json(manifest)}


def _exec_continue_train(stage: Stage, plan: StagePlan, rt: _Runtime, deps: dict) -> tuple[str, dict]:
    init = _checkpoint_from_entry(deps["train_base"])
    assemble_entry = deps["assemble"]
    manifest = load_manifest(manifest_path_for(assemble_entry.output_path))
    ckpt = bk.train(
        rt.config.endpoint("trainer"), manifest, init, rt.config.continue_epochs, stage.seed,
        session=rt.session,
    )
    return _checkpoint_line(ckpt) + "\n", {"checkpoint": ckpt.id}


def _exec_evaluate(stage: Stage, plan: StagePlan, rt: _Runtime, deps: dict) -> tuple[str, dict]:
    ckpt = _checkpoint_from_entry(deps[stage.deps[0]])
    test = rt.dataset(plan.dataset_path("test"))
    lang = rt.config.target_language
    predictions = bk.caption_batch(
        rt.config.endpoint("captioner"), ckpt, list(test.images), stage.seed, lang,
        session=rt.session,
    )
    pred_texts = {r.image_id: r.text for r in predictions}
    ref_texts = {img.id: [c.text for c in test.captions_for(img.id)] for img in test.images}
    eval_set = M.eval_set_from_texts(pred_texts, ref_texts)
    rows = []
    for metric in sorted(rt.config.metrics):
        if metric == "bleu4":
            report = M.bleu4(eval_set)
            rows.append({"metric": "bleu4", "score": report.score,
                         "brevity_penalty": report.brevity_penalty,
                         "precisions": list(report.precisions)})
        elif metric == "cider_d":
            report = M.cider_d(eval_set)
            rows.append({"metric": "cider_d", "score": report.score, "per_n": list(report.per_n)})
        elif metric == "bert_score":
            ep = rt.config.endpoint("embedder")

            def embedder(lists):
                return bk.embed_batch(ep, lists, session=rt.session)

            report = M.bert_score(eval_set, embedder)
            rows.append({"metric": "bert_score", "score": report.f1,
                         "precision": report.precision, "recall": report.recall})
        else:
            raise RunError(f"unknown metric {metric!r}")
    return "".join(dumps_canonical(r) + "\n" for r in rows), {"items": len(eval_set.items)}


_EXECUTORS = {
    "train_base": _exec_train_base,
    "generate": _exec_generate,
    "translate_to_en": _exec_translate,
    "translate_back": _exec_translate,
    "reformulate": _exec_reformulate,
    "assemble": _exec_assemble,
    "continue_train": _exec_continue_train,
    "evaluate": _exec_evaluate,
}


def _required_kinds(plan: StagePlan, config: ExperimentConfig) -> set[str]:
    kinds = {"trainer", "captioner"}
    for s in plan.stages:
        if s.kind in ("translate_to_en", "translate_back"):
            kinds.add("translator")
        if s.kind == "reformulate":
            kinds.add("reformulator")
        if s.kind == "generate" and dict(s.inputs).get("mode") == GEN_ENGLISH:
            kinds.add("reformulator")
    if "bert_score" in config.metrics:
        kinds.add("embedder")
    return kinds


def run(
    plan: StagePlan,
    config: ExperimentConfig,
    store: ArtifactStore | None = None,
    session: bk.BackendSession | None = None,
    check_health: bool = True,
) -> RunRecord:
    """Execute a plan, reusing cached stage outputs where possible."""
    store = store or ArtifactStore(config.store_dir)
    session = session or bk.default_session()
    rt = _Runtime(config, store, session)
    if check_health:
        for kind in sorted(_required_kinds(plan, config)):
            ep = config.endpoint(kind)
            if not bk.health_check(ep, session=session):
                raise RunError(f"backend {ep.identity} at {ep.base_url} is not healthy")
    outcomes: list[StageOutcome] = []
    entries: dict[str, StoreEntry] = {}
    broken: set[str] = set()
    scores: dict[str, float] = {}
    for stage in plan.stages:
        t0 = time.perf_counter()
        if any(d in broken for d in stage.deps):
            outcomes.append(StageOutcome(stage.name, stage.kind, stage.cache_key, "skipped", 0.0))
            broken.add(stage.name)
            continue
        entry = store.lookup(stage.cache_key)
        status = "hit"
        error = None
        if entry is None:
            status = "computed"
            try:
                output, extra_meta = _EXECUTORS[stage.kind](stage, plan, rt, entries)
            except Exception as e:  # noqa: BLE001 - stage isolation
                outcomes.append(
                    StageOutcome(
                        stage.name, stage.kind, stage.cache_key, "failed",
                        time.perf_counter() - t0, error=f"{type(e).__name__}: {e}",
                    )
                )
                broken.add(stage.name)
                continue
            meta = {
                "kind": stage.kind,
                "backend": stage.backend_identity,
                "inputs": dict(stage.inputs),
                "seed": stage.seed,
            }
            extra_files = {}
            if stage.kind == "assemble":
                extra_files["output.jsonl.manifest.json"] = extra_meta.pop("manifest")
            meta.update(extra_meta)
            entry = store.publish(stage.cache_key, output, meta, extra_files)
        entries[stage.name] = entry
        if stage.kind == "evaluate":
            for row in _caption_rows(entry):
                scores[row["metric"]] = row["score"]
        outcomes.append(
            StageOutcome(
                stage.name, stage.kind, stage.cache_key, status,
                time.perf_counter() - t0, error=error,
            )
        )
    return RunRecord(
        variant=plan.variant.label,
        seed=plan.seed,
        plan_digest=plan.digest,
        outcomes=tuple(outcomes),
        scores=scores,
    )


def materialize_subset(
    config: ExperimentConfig, n: int, seed: int, store: ArtifactStore
) -> str:
    """Write the size-n base subset for this seed into the store's
    dataset area and return its manifest path."""
    base = load_canonical(config.base_dataset)
    subset = sample_subset(base, n, seed)
    datasets_dir = store.root / "datasets"
    datasets_dir.mkdir(parents=True, exist_ok=True)
    digest = content_digest(subset)
    records = datasets_dir / f"{digest}.jsonl"
    manifest_path = manifest_path_for(records)
    if not manifest_path.exists():
        save_canonical(subset, records)
    return str(manifest_path)


def sweep(
    config: ExperimentConfig,
    session: bk.BackendSession | None = None,
    store: ArtifactStore | None = None,
) -> SweepResult:
    """Run every (variant, subset size, seed) cell of the experiment.

    Cells sharing a (size, seed) pair run sequentially so they reuse
    each other's cached stages (the base checkpoint, shared generation);
    distinct (size, seed) groups run in parallel up to the worker cap.
    """
    store = store or ArtifactStore(config.store_dir)
    session = session or bk.default_session()
    base_count = load_manifest(config.base_dataset).image_count
    sizes = config.subset_sizes or [base_count]
    for n in sizes:
        if n > base_count:
            raise RunError(f"subset size {n} exceeds base image count {base_count}")
    groups: list[tuple[int, int]] = [(n, seed) for seed in config.seeds for n in sizes]

    def run_group(group: tuple[int, int]) -> list[tuple[str, int, int, RunRecord]]:
        n, seed = group
        if config.subset_sizes:
            base_manifest = materialize_subset(config, n, seed, store)
        else:
            base_manifest = config.base_dataset
        out = []
        for label in config.variants:
            variant = parse_variant(label, seed)
            plan = plan_variant(variant, config, base_manifest=base_manifest)
            record = run(plan, config, store=store, session=session)
            if not record.ok:
                failures = [o for o in record.outcomes if o.status == "failed"]
                raise RunError(
                    f"variant {variant.label} (n={n}, seed={seed}) failed: "
                    + "; ".join(f"{o.name}: {o.error}" for o in failures)
                )
            out.append((variant.label, n, seed, record))
        return out

    workers = config.workers or min(len(groups), os.cpu_count() or 2)
    result = SweepResult()
    if workers <= 1 or len(groups) <= 1:
        for g in groups:
            result.records.extend(run_group(g))
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
            for rows in pool.map(run_group, groups):
                result.records.extend(rows)
    label_order = [parse_variant(v).label for v in config.variants]
    result.records.sort(key=lambda r: (r[1], r[2], label_order.index(r[0])))
    return result
