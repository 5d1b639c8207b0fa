"""Experiment configuration: which datasets, which backends, which
training schedule, which seeds.  Configs live in a single JSON document;
backend URLs can be overridden per role with CAPREF_BACKEND_<KIND>."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from ..backends.client import KINDS, BackendEndpoint

VARIANTS = ("base", "own", "re", "h_tran", "m_tran")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class VariantSpec:
    name: str
    plus_imagenet: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.name not in VARIANTS:
            raise ConfigError(f"unknown variant {self.name!r}")

    @property
    def label(self) -> str:
        return self.name.replace("_", "-") + ("+IN" if self.plus_imagenet else "")


def parse_variant(label: str, seed: int = 0) -> VariantSpec:
    """Parse 're', 'h-tran', 'own+IN' style labels."""
    plus = label.endswith("+IN")
    name = (label[:-3] if plus else label).replace("-", "_")
    return VariantSpec(name=name, plus_imagenet=plus, seed=seed)


@dataclass(frozen=True)
class EndpointConfig:
    url: str
    identity: str
    timeout_ms: int = 30_000
    max_batch: int = 64
    max_retries: int = 3

    def endpoint(self, kind: str) -> BackendEndpoint:
        return BackendEndpoint(
            kind=kind,
            base_url=self.url,
            identity=self.identity,
            timeout_ms=self.timeout_ms,
            max_batch=self.max_batch,
            max_retries=self.max_retries,
        )


@dataclass
class ExperimentConfig:
    name: str
    target_language: str
    base_dataset: str
    additional_dataset: str
    test_dataset: str
    backends: dict[str, EndpointConfig]
    extension_dataset: str | None = None
    base_epochs: int = 10
    continue_epochs: int = 1
    seeds: list[int] = field(default_factory=lambda: [0])
    subset_sizes: list[int] | None = None
    variants: list[str] = field(default_factory=lambda: list(VARIANTS))
    metrics: list[str] = field(default_factory=lambda: ["bleu4", "cider_d", "bert_score"])
    store_dir: str = "store"
    workers: int | None = None

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        if self.base_epochs < 1 or self.continue_epochs < 1:
            raise ConfigError("epochs must be >= 1")
        for v in self.variants:
            parse_variant(v)

    def endpoint(self, kind: str) -> BackendEndpoint:
        if kind not in self.backends:
            raise ConfigError(f"no backend configured for role {kind!r}")
        return self.backends[kind].endpoint(kind)


def _endpoint_from_doc(kind: str, doc) -> EndpointConfig:
    if isinstance(doc, str):
        return EndpointConfig(url=doc, identity=f"{kind}@unversioned")
    return EndpointConfig(
        url=doc["url"],
        identity=doc.get("identity", f"{kind}@unversioned"),
        timeout_ms=int(doc.get("timeout_ms", 30_000)),
        max_batch=int(doc.get("max_batch", 64)),
        max_retries=int(doc.get("max_retries", 3)),
    )


def load_config(path: str | Path, env: dict | None = None) -> ExperimentConfig:
    env = os.environ if env is None else env
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}: invalid JSON: {e.msg}") from e
    required = {"name", "target_language", "base_dataset", "additional_dataset", "test_dataset", "backends"}
    missing = required - set(doc)
    if missing:
        raise ConfigError(f"{path}: config missing fields {sorted(missing)}")
    backends = {}
    for kind, ep_doc in doc["backends"].items():
        if kind not in KINDS:
            raise ConfigError(f"{path}: unknown backend role {kind!r}")
        backends[kind] = _endpoint_from_doc(kind, ep_doc)
    for kind in KINDS:
        override = env.get(f"CAPREF_BACKEND_{kind.upper()}")
        if override:
            base = backends.get(kind, EndpointConfig(url=override, identity=f"{kind}@unversioned"))
            backends[kind] = EndpointConfig(
                url=override,
                identity=base.identity,
                timeout_ms=base.timeout_ms,
                max_batch=base.max_batch,
                max_retries=base.max_retries,
            )

    def resolve(p: str | None) -> str | None:
        if p is None:
            return None
        q = Path(p)
        return str(q if q.is_absolute() else path.parent / q)

    return ExperimentConfig(
        name=doc["name"],
        target_language=doc["target_language"],
        base_dataset=resolve(doc["base_dataset"]),
        additional_dataset=resolve(doc["additional_dataset"]),
        test_dataset=resolve(doc["test_dataset"]),
        extension_dataset=resolve(doc.get("extension_dataset")),
        backends=backends,
        base_epochs=int(doc.get("base_epochs", 10)),
        continue_epochs=int(doc.get("continue_epochs", 1)),
        seeds=[int(s) for s in doc.get("seeds", [0])],
        subset_sizes=[int(n) for n in doc["subset_sizes"]] if doc.get("subset_sizes") else None,
        variants=list(doc.get("variants", VARIANTS)),
        metrics=list(doc.get("metrics", ["bleu4", "cider_d", "bert_score"])),
        store_dir=resolve(doc.get("store_dir", "store")),
        workers=int(doc["workers"]) if doc.get("workers") else None,
    )
