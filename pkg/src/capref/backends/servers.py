"""In-repo mock servers speaking the backend wire protocol over HTTP.

One server per role, each a stdlib ThreadingHTTPServer running on an
ephemeral port in a daemon thread.  Servers remember the responses they
produced per X-Request-Id, so a retried chunk is answered from memory
instead of being recomputed, and they can be told to fail the next few
requests to exercise client retry behavior.
"""

from __future__ import annotations

import json
import threading
import uuid
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from ..corpus import load_canonical, load_manifest
from . import mocks
from .client import BackendEndpoint

MOCK_IDENTITIES = {
    "captioner": "mock-captioner@1",
    "translator": "mock-translator@1",
    "reformulator": "mock-reformulator@1",
    "embedder": "mock-embedder@1",
    "trainer": "mock-trainer@1",
}


class MockBackendServer:
    def __init__(self, kind: str, world: mocks.MockWorld | None = None):
        if kind not in MOCK_IDENTITIES:
            raise ValueError(f"unknown mock role {kind!r}")
        self.kind = kind
        self.world = world or mocks.MockWorld()
        self.identity = MOCK_IDENTITIES[kind]
        self.requests_served = 0
        self.requests_computed = 0
        self.request_sizes: list[int] = []
        self._jobs: dict[str, dict] = {}
        self._replies: dict[str, dict] = {}
        self._fail_next = 0
        self._fail_status = 503
        self._lock = threading.Lock()
        server = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):  # quiet
                pass

            def do_GET(self):
                server._handle_get(self)

            def do_POST(self):
                server._handle_post(self)

        self._httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)

    @property
    def url(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    def endpoint(self, **overrides) -> BackendEndpoint:
        fields = dict(kind=self.kind, base_url=self.url, identity=self.identity)
        fields.update(overrides)
        return BackendEndpoint(**fields)

    def start(self) -> "MockBackendServer":
        self._thread.start()
        return self

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()

    def fail_next(self, n: int, status: int = 503) -> None:
        """Make the next n requests fail with the given status."""
        with self._lock:
            self._fail_next = n
            self._fail_status = status

    # -- request handling ---------------------------------------------------

    def _send(self, handler, code: int, doc: dict) -> None:
        body = json.dumps(doc).encode("utf-8")
        handler.send_response(code)
        handler.send_header("Content-Type", "application/json")
        handler.send_header("Content-Length", str(len(body)))
        handler.end_headers()
        handler.wfile.write(body)

    def _maybe_fail(self, handler) -> bool:
        with self._lock:
            if self._fail_next > 0:
                self._fail_next -= 1
                status = self._fail_status
            else:
                return False
        self._send(handler, status, {"error": "injected failure"})
        return True

    def _handle_get(self, handler) -> None:
        if handler.path == "/healthz":
            self._send(handler, 200, {"ok": True, "identity": self.identity})
            return
        if handler.path.startswith("/v1/train/") and self.kind == "trainer":
            job_id = handler.path.rsplit("/", 1)[1]
            with self._lock:
                job = self._jobs.get(job_id)
            if job is None:
                self._send(handler, 404, {"error": f"unknown job {job_id}"})
            else:
                self._send(handler, 200, job)
            return
        self._send(handler, 404, {"error": f"no such path {handler.path}"})

    def _handle_post(self, handler) -> None:
        if self._maybe_fail(handler):
            return
        try:
            length = int(handler.headers.get("Content-Length", "0"))
            payload = json.loads(handler.rfile.read(length).decode("utf-8"))
        except (ValueError, UnicodeDecodeError):
            self._send(handler, 400, {"error": "request body is not valid JSON"})
            return
        request_id = handler.headers.get("X-Request-Id")
        with self._lock:
            self.requests_served += 1
            if request_id and request_id in self._replies:
                code, doc = self._replies[request_id]["code"], self._replies[request_id]["doc"]
                self._send(handler, code, doc)
                return
        try:
            code, doc = self._dispatch(handler.path, payload)
        except (KeyError, TypeError, ValueError) as e:
            code, doc = 400, {"error": str(e)}
        with self._lock:
            self.requests_computed += 1
            if request_id:
                self._replies[request_id] = {"code": code, "doc": doc}
        self._send(handler, code, doc)

    def _dispatch(self, path: str, payload: dict) -> tuple[int, dict]:
        if self.kind == "captioner" and path == "/v1/caption":
            images = payload["images"]
            seed = int(payload["seed"])
            ckpt = payload["checkpoint"]
            self.request_sizes.append(len(images))
            captions = [
                {
                    "image_id": img["id"],
                    "text": mocks.mock_caption(img["id"], ckpt, seed, self.world),
                }
                for img in images
            ]
            return 200, {"captions": captions}
        if self.kind == "translator" and path == "/v1/translate":
            texts = mocks.mock_translate(
                [str(t) for t in payload["texts"]], payload["src"], payload["tgt"]
            )
            self.request_sizes.append(len(texts))
            return 200, {"texts": texts}
        if self.kind == "reformulator" and path == "/v1/reformulate":
            items = payload["items"]
            self.request_sizes.append(len(items))
            seed = int(payload.get("seed", 0))
            captions = [
                mocks.mock_reformulate(item["image_uri"], item["caption"], seed, self.world)
                for item in items
            ]
            return 200, {"captions": captions}
        if self.kind == "embedder" and path == "/v1/embed":
            lists = [[str(t) for t in toks] for toks in payload["tokens"]]
            self.request_sizes.append(len(lists))
            vectors = mocks.mock_embed(lists, self.world)
            return 200, {"vectors": vectors, "dim": self.world.embed_dim}
        if self.kind == "trainer" and path == "/v1/train":
            manifest_path = _local_path(payload["manifest_uri"])
            manifest = load_manifest(manifest_path)
            dataset = load_canonical(manifest_path)
            texts = [c.text for caps in dataset.captions.values() for c in caps]
            result = mocks.mock_train(
                texts,
                manifest.content_digest,
                payload.get("init"),
                int(payload["epochs"]),
                int(payload["seed"]),
                self.world,
            )
            job_id = uuid.uuid4().hex
            with self._lock:
                self._jobs[job_id] = {"status": "done", "checkpoint": result.checkpoint}
            return 200, {"job_id": job_id}
        return 404, {"error": f"role {self.kind} does not serve {path}"}


def _local_path(manifest_uri: str) -> str:
    if manifest_uri.startswith("file://"):
        return manifest_uri[len("file://") :]
    return manifest_uri


class MockSuite:
    """All five mock servers, started together.  Usable as a context
    manager; ``endpoints()`` yields ready-made BackendEndpoint values."""

    def __init__(self, world: mocks.MockWorld | None = None):
        self.world = world or mocks.MockWorld()
        self.servers = {kind: MockBackendServer(kind, self.world) for kind in MOCK_IDENTITIES}

    def __enter__(self) -> "MockSuite":
        for s in self.servers.values():
            s.start()
        return self

    def __exit__(self, *exc) -> None:
        for s in self.servers.values():
            s.stop()

    def endpoints(self, **overrides) -> dict[str, BackendEndpoint]:
        return {kind: s.endpoint(**overrides) for kind, s in self.servers.items()}

    def urls(self) -> dict[str, str]:
        return {kind: s.url for kind, s in self.servers.items()}
