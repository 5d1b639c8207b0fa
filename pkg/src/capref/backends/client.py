"""HTTP clients for the five model roles.

All batch operations chunk their input at the endpoint's ``max_batch``,
retry transient failures (connection errors and 5xx) with exponential
backoff, and return outputs aligned with their inputs.  Each chunk
carries a stable X-Request-Id header so a server can recognize a retry
of work it already did.  Training is asynchronous on the wire (submit a
job, poll it) but synchronous here.
"""

from __future__ import annotations

import threading
import time
import uuid
from dataclasses import dataclass
from typing import Sequence

import requests

from ..corpus import CaptionRecord, DatasetManifest, ImageRef, make_caption, manifest_path_for

KINDS = ("captioner", "translator", "reformulator", "embedder", "trainer")


class BackendError(RuntimeError):
    """A backend call failed for good (retries exhausted or a
    non-transient protocol error)."""

    def __init__(self, message: str, failed_ids: Sequence[str] = ()):
        super().__init__(message)
        self.failed_ids = tuple(failed_ids)


class ProtocolError(BackendError):
    """The response did not match the wire schema."""


@dataclass(frozen=True)
class BackendEndpoint:
    kind: str
    base_url: str
    identity: str
    timeout_ms: int = 30_000
    max_batch: int = 64
    max_retries: int = 3

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if not self.identity:
            raise ValueError("endpoint identity must be non-empty")
        if self.max_batch < 1:
            raise ValueError("max_batch must be >= 1")


@dataclass(frozen=True)
class CheckpointRef:
    id: str
    parent: str | None
    trained_on: str
    epochs: int


class BackendSession:
    """Shared connection pool plus per-endpoint bookkeeping: an
    in-flight request cap and the embedding dimension seen so far (to
    catch dimension drift across calls)."""

    def __init__(self, max_in_flight: int = 4, backoff_base: float = 0.1):
        self.http = requests.Session()
        self.backoff_base = backoff_base
        self._max_in_flight = max_in_flight
        self._semaphores: dict[str, threading.BoundedSemaphore] = {}
        self._embed_dims: dict[str, int] = {}
        self._lock = threading.Lock()

    def _semaphore(self, identity: str) -> threading.BoundedSemaphore:
        with self._lock:
            if identity not in self._semaphores:
                self._semaphores[identity] = threading.BoundedSemaphore(self._max_in_flight)
            return self._semaphores[identity]

    def check_embed_dim(self, identity: str, dim: int) -> None:
        with self._lock:
            known = self._embed_dims.setdefault(identity, dim)
        if known != dim:
            raise ProtocolError(
                f"embedding dimension drift for {identity}: got {dim}, expected {known}"
            )


_default_session: BackendSession | None = None
_default_lock = threading.Lock()


def default_session() -> BackendSession:
    global _default_session
    with _default_lock:
        if _default_session is None:
            _default_session = BackendSession()
        return _default_session


def _post(
    ep: BackendEndpoint,
    path: str,
    payload: dict,
    session: BackendSession,
    failed_ids: Sequence[str] = (),
) -> dict:
    url = ep.base_url.rstrip("/") + path
    request_id = str(uuid.uuid4())
    timeout = ep.timeout_ms / 1000.0
    last_error = "no attempt made"
    for attempt in range(ep.max_retries + 1):
        if attempt:
            time.sleep(session.backoff_base * 2 ** (attempt - 1))
        try:
            with session._semaphore(ep.identity):
                resp = session.http.post(
                    url, json=payload, timeout=timeout, headers={"X-Request-Id": request_id}
                )
        except requests.RequestException as e:
            last_error = f"connection failure: {e}"
            continue
        if resp.status_code >= 500:
            last_error = f"server error {resp.status_code}"
            continue
        if resp.status_code != 200:
            raise BackendError(
                f"{ep.identity} {path}: rejected with {resp.status_code}: {resp.text[:200]}",
                failed_ids,
            )
        try:
            return resp.json()
        except ValueError as e:
            raise ProtocolError(f"{ep.identity} {path}: non-JSON response", failed_ids) from e
    raise BackendError(
        f"{ep.identity} {path}: giving up after {ep.max_retries + 1} attempts ({last_error})",
        failed_ids,
    )


def _chunks(seq: Sequence, size: int):
    for i in range(0, len(seq), size):
        yield seq[i : i + size]


def health_check(ep: BackendEndpoint, session: BackendSession | None = None) -> bool:
    session = session or default_session()
    try:
        resp = session.http.get(ep.base_url.rstrip("/") + "/healthz", timeout=ep.timeout_ms / 1000.0)
        return resp.status_code == 200
    except requests.RequestException:
        return False


def caption_batch(
    ep: BackendEndpoint,
    checkpoint: CheckpointRef,
    images: Sequence[ImageRef],
    seed: int,
    language: str,
    session: BackendSession | None = None,
) -> list[CaptionRecord]:
    """One model caption per image, order-aligned with the input."""
    if ep.kind != "captioner":
        raise ValueError(f"caption_batch needs a captioner endpoint, got {ep.kind}")
    session = session or default_session()
    records: list[CaptionRecord] = []
    for chunk in _chunks(list(images), ep.max_batch):
        ids = [img.id for img in chunk]
        payload = {
            "checkpoint": checkpoint.id,
            "seed": seed,
            "images": [{"id": img.id, "uri": img.uri} for img in chunk],
        }
        doc = _post(ep, "/v1/caption", payload, session, failed_ids=ids)
        caps = doc.get("captions")
        if not isinstance(caps, list) or len(caps) != len(chunk):
            raise ProtocolError(
                f"{ep.identity}: expected {len(chunk)} captions, got "
                f"{len(caps) if isinstance(caps, list) else type(caps).__name__}",
                ids,
            )
        for img, entry in zip(chunk, caps):
            if entry.get("image_id") != img.id:
                raise ProtocolError(
                    f"{ep.identity}: caption for {entry.get('image_id')!r} "
                    f"where {img.id!r} expected",
                    ids,
                )
            records.append(
                make_caption(img.id, entry["text"], language, origin="model", provenance=ep.identity)
            )
    return records


def translate_batch(
    ep: BackendEndpoint,
    src: str,
    tgt: str,
    texts: Sequence[str],
    session: BackendSession | None = None,
) -> list[str]:
    if ep.kind != "translator":
        raise ValueError(f"translate_batch needs a translator endpoint, got {ep.kind}")
    if src == tgt:
        raise ValueError("translate_batch with src == tgt")
    session = session or default_session()
    out: list[str] = []
    for chunk in _chunks(list(texts), ep.max_batch):
        doc = _post(ep, "/v1/translate", {"src": src, "tgt": tgt, "texts": list(chunk)}, session)
        translated = doc.get("texts")
        if not isinstance(translated, list) or len(translated) != len(chunk):
            raise ProtocolError(f"{ep.identity}: translation count mismatch")
        out.extend(str(t) for t in translated)
    return out


def reformulate_batch(
    ep: BackendEndpoint,
    items: Sequence[tuple[str, str]],
    session: BackendSession | None = None,
) -> list[str]:
    """items are (image_uri, caption) pairs; an empty caption asks the
    backend to caption the image from scratch."""
    if ep.kind != "reformulator":
        raise ValueError(f"reformulate_batch needs a reformulator endpoint, got {ep.kind}")
    session = session or default_session()
    out: list[str] = []
    for chunk in _chunks(list(items), ep.max_batch):
        payload = {"items": [{"image_uri": uri, "caption": cap} for uri, cap in chunk]}
        ids = [uri for uri, _ in chunk]
        doc = _post(ep, "/v1/reformulate", payload, session, failed_ids=ids)
        caps = doc.get("captions")
        if not isinstance(caps, list) or len(caps) != len(chunk):
            raise ProtocolError(f"{ep.identity}: reformulation count mismatch", ids)
        out.extend(str(c) for c in caps)
    return out


def embed_batch(
    ep: BackendEndpoint,
    token_lists: Sequence[Sequence[str]],
    session: BackendSession | None = None,
) -> list[list[list[float]]]:
    """Per-token vectors for each token list; dimension is constant per
    endpoint identity and drift across calls is an error."""
    if ep.kind != "embedder":
        raise ValueError(f"embed_batch needs an embedder endpoint, got {ep.kind}")
    session = session or default_session()
    out: list[list[list[float]]] = []
    for chunk in _chunks(list(token_lists), ep.max_batch):
        doc = _post(ep, "/v1/embed", {"tokens": [list(t) for t in chunk]}, session)
        vectors, dim = doc.get("vectors"), doc.get("dim")
        if not isinstance(vectors, list) or len(vectors) != len(chunk) or not isinstance(dim, int):
            raise ProtocolError(f"{ep.identity}: embedding response shape mismatch")
        session.check_embed_dim(ep.identity, dim)
        for toks, vecs in zip(chunk, vectors):
            if len(vecs) != len(toks) or any(len(v) != dim for v in vecs):
                raise ProtocolError(f"{ep.identity}: embedding vector shape mismatch")
        out.extend(vectors)
    return out


def train(
    ep: BackendEndpoint,
    manifest: DatasetManifest,
    init: CheckpointRef | None,
    epochs: int,
    seed: int,
    session: BackendSession | None = None,
    poll_interval: float = 0.05,
    poll_timeout: float = 600.0,
) -> CheckpointRef:
    """Submit a training job and block until it completes."""
    if ep.kind != "trainer":
        raise ValueError(f"train needs a trainer endpoint, got {ep.kind}")
    if epochs < 1:
        raise ValueError("train needs epochs >= 1")
    session = session or default_session()
    payload = {
        "manifest_uri": str(manifest_path_for(manifest.storage_uri)),
        "init": init.id if init else None,
        "epochs": epochs,
        "seed": seed,
    }
    doc = _post(ep, "/v1/train", payload, session)
    job_id = doc.get("job_id")
    if not job_id:
        raise ProtocolError(f"{ep.identity}: train response carries no job_id")
    url = ep.base_url.rstrip("/") + f"/v1/train/{job_id}"
    deadline = time.monotonic() + poll_timeout
    while True:
        resp = session.http.get(url, timeout=ep.timeout_ms / 1000.0)
        if resp.status_code != 200:
            raise BackendError(f"{ep.identity}: poll failed with {resp.status_code}")
        status = resp.json()
        state = status.get("status")
        if state == "done":
            return CheckpointRef(
                id=status["checkpoint"],
                parent=init.id if init else None,
                trained_on=manifest.content_digest,
                epochs=epochs,
            )
        if state == "failed":
            raise BackendError(f"{ep.identity}: training failed: {status.get('error')}")
        if state != "running":
            raise ProtocolError(f"{ep.identity}: unknown job status {state!r}")
        if time.monotonic() > deadline:
            raise BackendError(f"{ep.identity}: training job {job_id} timed out")
        time.sleep(poll_interval)
