"""Variant planning: turn (variant, config) into an executable DAG of
stages with content-addressed cache keys.

A stage's cache key digests its kind, its input digests (dataset content
digests, upstream stage keys, and scalar parameters), the identity of
the backend that will run it, and the seed.  Any change to one of those
yields a new key; nothing else does.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from ..corpus import DatasetManifest, load_canonical, load_manifest
from ..jsonl import dumps_canonical
from .config import ExperimentConfig, VariantSpec

STAGE_KINDS = (
    "train_base",
    "generate",
    "translate_to_en",
    "reformulate",
    "translate_back",
    "assemble",
    "continue_train",
    "evaluate",
)

# caption-source modes for the generate stage
GEN_CAPTIONER = "captioner"
GEN_ENGLISH = "english"
GEN_HUMAN_SAMPLE = "human_sample"

ASSEMBLE_IDENTITY = "assemble@1"
SAMPLE_IDENTITY = "corpus-sample@1"

FINAL_ORIGIN = {"own": "model", "re": "reformulated", "h_tran": "translated", "m_tran": "translated"}


class PlanError(ValueError):
    pass


@dataclass(frozen=True)
class Stage:
    name: str
    kind: str
    backend_identity: str
    inputs: tuple[tuple[str, str], ...]
    seed: int
    cache_key: str
    deps: tuple[str, ...]

    def input(self, key: str) -> str:
        for k, v in self.inputs:
            if k == key:
                return v
        raise KeyError(key)


@dataclass(frozen=True)
class StagePlan:
    variant: VariantSpec
    seed: int
    stages: tuple[Stage, ...]
    datasets: tuple[tuple[str, str], ...]  # role -> manifest path

    def stage(self, name: str) -> Stage:
        for s in self.stages:
            if s.name == name:
                return s
        raise KeyError(name)

    def dataset_path(self, role: str) -> str:
        for k, v in self.datasets:
            if k == role:
                return v
        raise KeyError(role)

    @property
    def digest(self) -> str:
        body = dumps_canonical([s.cache_key for s in self.stages])
        return hashlib.sha256(body.encode()).hexdigest()


def _cache_key(kind: str, inputs: dict[str, str], backend: str, seed: int) -> str:
    body = dumps_canonical({"kind": kind, "inputs": inputs, "backend": backend, "seed": seed})
    return hashlib.sha256(body.encode("utf-8")).hexdigest()


def _make_stage(kind: str, inputs: dict[str, str], backend: str, seed: int, deps: tuple[str, ...]) -> Stage:
    return Stage(
        name=kind,
        kind=kind,
        backend_identity=backend,
        inputs=tuple(sorted(inputs.items())),
        seed=seed,
        cache_key=_cache_key(kind, inputs, backend, seed),
        deps=deps,
    )


def _check_h_tran_captions(manifest_paths: list[str]) -> None:
    for path in manifest_paths:
        dataset = load_canonical(path)
        for img in dataset.images:
            caps = dataset.captions_for(img.id)
            if not any(c.origin == "human" and c.language == "en" for c in caps):
                raise PlanError(
                    f"h_tran requires human English captions in the additional set; "
                    f"image {img.id!r} has none"
                )


def plan_variant(
    v: VariantSpec, c: ExperimentConfig, base_manifest: str | None = None
) -> StagePlan:
    """Build the stage DAG for one variant.  ``base_manifest`` replaces
    the configured base dataset (subset sweeps)."""
    seed = v.seed
    lang = c.target_language
    base_path = base_manifest or c.base_dataset
    manifests: dict[str, DatasetManifest] = {
        "base": load_manifest(base_path),
        "additional": load_manifest(c.additional_dataset),
        "test": load_manifest(c.test_dataset),
    }
    datasets = {"base": base_path, "additional": c.additional_dataset, "test": c.test_dataset}
    if v.plus_imagenet:
        if not c.extension_dataset:
            raise PlanError(f"variant {v.label}: no extension dataset configured")
        manifests["extension"] = load_manifest(c.extension_dataset)
        datasets["extension"] = c.extension_dataset
    if v.name == "h_tran":
        if v.plus_imagenet:
            raise PlanError(
                "h_tran+IN is not trainable: extension images carry no human captions"
            )
        _check_h_tran_captions([c.additional_dataset])

    trainer = c.endpoint("trainer").identity
    stages: list[Stage] = []

    def add(kind: str, inputs: dict[str, str], backend: str, deps: tuple[str, ...] = ()) -> Stage:
        stage = _make_stage(kind, inputs, backend, seed, deps)
        stages.append(stage)
        return stage

    additional_inputs = {"dataset": manifests["additional"].content_digest}
    if v.plus_imagenet:
        additional_inputs["extension"] = manifests["extension"].content_digest

    train_base = add(
        "train_base",
        {"dataset": manifests["base"].content_digest, "epochs": str(c.base_epochs)},
        trainer,
    )

    final_train = train_base
    if v.name != "base":
        if v.name in ("own", "re"):
            generate = add(
                "generate",
                {**additional_inputs, "mode": GEN_CAPTIONER, "checkpoint": train_base.cache_key},
                c.endpoint("captioner").identity,
                deps=("train_base",),
            )
        elif v.name == "m_tran":
            generate = add(
                "generate",
                {**additional_inputs, "mode": GEN_ENGLISH},
                c.endpoint("reformulator").identity,
            )
        else:  # h_tran
            generate = add(
                "generate",
                {**additional_inputs, "mode": GEN_HUMAN_SAMPLE},
                SAMPLE_IDENTITY,
            )
        captions = generate
        if v.name == "re":
            to_en = add(
                "translate_to_en",
                {"captions": captions.cache_key, "src": lang, "tgt": "en"},
                c.endpoint("translator").identity,
                deps=("generate",),
            )
            reformulate = add(
                "reformulate",
                {**additional_inputs, "captions": to_en.cache_key},
                c.endpoint("reformulator").identity,
                deps=("translate_to_en",),
            )
            captions = add(
                "translate_back",
                {"captions": reformulate.cache_key, "src": "en", "tgt": lang},
                c.endpoint("translator").identity,
                deps=("reformulate",),
            )
        elif v.name in ("m_tran", "h_tran"):
            captions = add(
                "translate_back",
                {"captions": captions.cache_key, "src": "en", "tgt": lang},
                c.endpoint("translator").identity,
                deps=("generate",),
            )
        assemble = add(
            "assemble",
            {
                **additional_inputs,
                "captions": captions.cache_key,
                "language": lang,
                "origin": FINAL_ORIGIN[v.name],
            },
            ASSEMBLE_IDENTITY,
            deps=(captions.name,),
        )
        final_train = add(
            "continue_train",
            {
                "init": train_base.cache_key,
                "dataset": assemble.cache_key,
                "epochs": str(c.continue_epochs),
            },
            trainer,
            deps=("train_base", "assemble"),
        )

    eval_backend = c.endpoint("captioner").identity
    if "bert_score" in c.metrics:
        eval_backend += "+" + c.endpoint("embedder").identity
    add(
        "evaluate",
        {
            "checkpoint": final_train.cache_key,
            "test": manifests["test"].content_digest,
            "metrics": ",".join(sorted(c.metrics)),
            "language": lang,
        },
        eval_backend,
        deps=(final_train.name,),
    )
    return StagePlan(
        variant=v,
        seed=seed,
        stages=tuple(stages),
        datasets=tuple(sorted(datasets.items())),
    )
