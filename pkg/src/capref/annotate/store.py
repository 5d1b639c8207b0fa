"""Persistent store for annotation tasks and submissions.

All state lives in one append-only event log (``events.jsonl``); the
in-memory view is rebuilt by replay on open, so anything acknowledged
before a crash is still there after recovery.  Mutations serialize
through a single lock (the scale here is thousands of submissions, not
millions); reads work on plain dict snapshots.

Tasks are either ``reformulation`` (image + caption to fix) or
``comparison`` (two captions judged per axis).  Comparison tasks get a
server-issued left/right swap recorded at creation time, so the UI can
blind the A/B order while exports stay de-randomized.  Assignment uses
leases: a task handed to an annotator returns to the open pool when the
lease expires unanswered.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from ..humaneval import AXES
from ..jsonl import dumps_canonical
from ..seeding import stable_order, stable_u64

TASK_KINDS = ("reformulation", "comparison")
DEFAULT_LEASE_SECONDS = 600.0

GUIDELINES = """Annotation guidelines

Reformulation tasks
- You will see an image together with a short description of it.
- Rewrite the description so that it stays as close to the original
  wording as possible while every mistake in it is fixed.
- Watch for made-up objects, missing key elements, and wrong words.
- If nothing is wrong, you may submit the description unchanged.
- If the description is beyond repair, write a fresh one instead.

Comparison tasks
- You will see an image with two candidate descriptions.
- For every listed aspect, pick the better side or call it a tie.
"""


class AnnotateError(ValueError):
    pass


class ConflictError(AnnotateError):
    pass


class NotFoundError(AnnotateError):
    pass


@dataclass
class TaskState:
    task_id: str
    kind: str
    batch_id: str
    image_uri: str
    payload: dict
    assignments: dict[str, dict] = field(default_factory=dict)  # annotator -> lease
    submissions: dict[str, dict] = field(default_factory=dict)  # annotator -> submission


class AnnotationStore:
    def __init__(
        self,
        root: str | Path,
        clock=time.time,
        lease_seconds: float = DEFAULT_LEASE_SECONDS,
        submissions_per_task: int = 1,
    ):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.clock = clock
        self.lease_seconds = lease_seconds
        self.submissions_per_task = submissions_per_task
        self._log_path = self.root / "events.jsonl"
        self._lock = threading.Lock()
        self._tasks: dict[str, TaskState] = {}
        self._batches: dict[str, list[str]] = {}
        self._replay()

    # -- persistence ---------------------------------------------------------

    def _replay(self) -> None:
        if not self._log_path.exists():
            return
        with open(self._log_path, encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if line:
                    self._apply(json.loads(line))

    def _append(self, event: dict) -> None:
        with open(self._log_path, "a", encoding="utf-8") as f:
            f.write(dumps_canonical(event) + "\n")
            f.flush()

    def _apply(self, event: dict) -> None:
        kind = event["event"]
        if kind == "task_created":
            state = TaskState(
                task_id=event["task_id"],
                kind=event["kind"],
                batch_id=event["batch_id"],
                image_uri=event["image_uri"],
                payload=event["payload"],
            )
            self._tasks[state.task_id] = state
            self._batches.setdefault(state.batch_id, []).append(state.task_id)
        elif kind == "assigned":
            self._tasks[event["task_id"]].assignments[event["annotator_id"]] = {
                "token": event["token"],
                "expires": event["expires"],
            }
        elif kind == "submitted":
            task = self._tasks[event["task_id"]]
            task.submissions[event["annotator_id"]] = event["submission"]
            task.assignments.pop(event["annotator_id"], None)

    # -- derived status ------------------------------------------------------

    def _is_done(self, task: TaskState) -> bool:
        return len(task.submissions) >= self.submissions_per_task

    def _live_assignments(self, task: TaskState, now: float) -> dict[str, dict]:
        return {a: l for a, l in task.assignments.items() if l["expires"] > now}

    def _status(self, task: TaskState, now: float) -> str:
        if self._is_done(task):
            return "done"
        if self._live_assignments(task, now):
            return "assigned"
        return "open"

    def status_counts(self) -> dict[str, int]:
        now = self.clock()
        with self._lock:
            counts = {"open": 0, "assigned": 0, "done": 0}
            for task in self._tasks.values():
                counts[self._status(task, now)] += 1
            return counts

    # -- operations ----------------------------------------------------------

    def create_tasks(self, kind: str, items: list[dict], batch_id: str | None = None) -> list[str]:
        """Persist one open task per item.  Items need an ``id``, an
        ``image_uri``, and the kind's payload fields."""
        if kind not in TASK_KINDS:
            raise AnnotateError(f"unknown task kind {kind!r}")
        if not items:
            raise AnnotateError("create_tasks with no items")
        with self._lock:
            batch = batch_id or f"batch-{len(self._batches):04d}"
            prepared = []
            for item in items:
                task_id = str(item.get("id", ""))
                if not task_id:
                    raise AnnotateError("item without id")
                if task_id in self._tasks or any(p["task_id"] == task_id for p in prepared):
                    raise ConflictError(f"task {task_id!r} already exists")
                payload = self._validate_item(kind, task_id, item)
                prepared.append(
                    {
                        "event": "task_created",
                        "task_id": task_id,
                        "kind": kind,
                        "batch_id": batch,
                        "image_uri": str(item.get("image_uri", "")),
                        "payload": payload,
                    }
                )
            for event in prepared:
                self._append(event)
                self._apply(event)
            return [p["task_id"] for p in prepared]

    def _validate_item(self, kind: str, task_id: str, item: dict) -> dict:
        if kind == "reformulation":
            caption = str(item.get("caption", "")).strip()
            if not caption:
                raise AnnotateError(f"task {task_id!r}: empty caption")
            return {"caption": caption, "language": item.get("language", "en")}
        axes = item.get("axes") or []
        unknown = [a for a in axes if a not in AXES]
        if not axes or unknown:
            raise AnnotateError(
                f"task {task_id!r}: comparison needs non-empty axes from {AXES}, got {axes}"
            )
        a, b = str(item.get("caption_a", "")).strip(), str(item.get("caption_b", "")).strip()
        if not a or not b:
            raise AnnotateError(f"task {task_id!r}: comparison needs caption_a and caption_b")
        # server-issued blinding: when swap is true the UI shows B on the left
        return {
            "caption_a": a,
            "caption_b": b,
            "axes": list(axes),
            "swap": bool(stable_u64("ab-swap", task_id) % 2),
        }

    def next_task(self, annotator_id: str, kind: str) -> dict | None:
        """Atomically lease one open task this annotator has not already
        answered.  Returns the task with lease token and deadline, or
        None when nothing is available."""
        if kind not in TASK_KINDS:
            raise AnnotateError(f"unknown task kind {kind!r}")
        now = self.clock()
        with self._lock:
            for task_id in sorted(self._tasks):
                task = self._tasks[task_id]
                if task.kind != kind or self._is_done(task):
                    continue
                if annotator_id in task.submissions:
                    continue
                live = self._live_assignments(task, now)
                if live and annotator_id not in live:
                    continue
                token = f"lease-{stable_u64('lease', task_id, annotator_id, str(len(task.submissions)))}-{int(now * 1000)}"
                if annotator_id in live:
                    token = live[annotator_id]["token"]
                expires = now + self.lease_seconds
                event = {
                    "event": "assigned",
                    "task_id": task_id,
                    "annotator_id": annotator_id,
                    "token": token,
                    "expires": expires,
                }
                self._append(event)
                self._apply(event)
                return self._task_view(task, token, expires)
            return None

    def _task_view(self, task: TaskState, token: str, expires: float) -> dict:
        return {
            "task_id": task.task_id,
            "kind": task.kind,
            "batch_id": task.batch_id,
            "image_uri": task.image_uri,
            "payload": dict(task.payload),
            "lease_token": token,
            "lease_expires": expires,
        }

    def submit(self, submission: dict) -> dict:
        """Persist a submission for a leased task.  Replays with the same
        lease token return the original acknowledgment instead of
        duplicating anything."""
        task_id = str(submission.get("task_id", ""))
        annotator_id = str(submission.get("annotator_id", ""))
        token = str(submission.get("lease_token", ""))
        if not task_id or not annotator_id:
            raise AnnotateError("submission needs task_id and annotator_id")
        now = self.clock()
        with self._lock:
            task = self._tasks.get(task_id)
            if task is None:
                raise NotFoundError(f"no such task {task_id!r}")
            prior = task.submissions.get(annotator_id)
            if prior is not None:
                if prior.get("lease_token") == token:
                    return {"submission_id": prior["submission_id"], "duplicate": True}
                raise ConflictError(f"annotator {annotator_id!r} already answered {task_id!r}")
            lease = task.assignments.get(annotator_id)
            if lease is None or lease["token"] != token:
                raise ConflictError(f"task {task_id!r} is not leased to {annotator_id!r}")
            if lease["expires"] <= now:
                raise ConflictError(f"lease on task {task_id!r} expired")
            body = self._validate_body(task, submission)
            record = {
                "submission_id": f"sub-{stable_u64('submission', task_id, annotator_id)}",
                "task_id": task_id,
                "annotator_id": annotator_id,
                "lease_token": token,
                "timestamp": now,
                **body,
            }
            event = {
                "event": "submitted",
                "task_id": task_id,
                "annotator_id": annotator_id,
                "submission": record,
            }
            self._append(event)
            self._apply(event)
            return {"submission_id": record["submission_id"], "duplicate": False}

    def _validate_body(self, task: TaskState, submission: dict) -> dict:
        if task.kind == "reformulation":
            text = str(submission.get("reformulated", "")).strip()
            if not text:
                raise AnnotateError("reformulation submission needs non-empty text")
            return {"reformulated": text}
        choices = submission.get("choices")
        if not isinstance(choices, dict):
            raise AnnotateError("comparison submission needs a choices object")
        expected = set(task.payload["axes"])
        if set(choices) != expected:
            raise AnnotateError(
                f"choices must cover exactly the task axes {sorted(expected)}, "
                f"got {sorted(choices)}"
            )
        for axis, choice in choices.items():
            if choice not in ("left", "right", "tie"):
                raise AnnotateError(f"axis {axis!r}: choice must be left/right/tie")
        return {"choices": dict(choices)}

    def qc_sample(self, batch_id: str, k: int, seed: int = 0) -> list[dict]:
        """Deterministic uniform sample of k submissions from a batch."""
        with self._lock:
            task_ids = self._batches.get(batch_id)
            if task_ids is None:
                raise NotFoundError(f"no such batch {batch_id!r}")
            subs = []
            for tid in task_ids:
                subs.extend(self._tasks[tid].submissions.values())
        if k < 0 or k > len(subs):
            raise AnnotateError(f"cannot sample {k} of {len(subs)} submissions")
        by_id = {s["submission_id"]: s for s in subs}
        picked = stable_order(sorted(by_id), "qc", batch_id, str(seed))[:k]
        return [by_id[sid] for sid in picked]

    def export(self, kind: str) -> str:
        """Byte-stable export: reformulation pairs or de-randomized
        per-axis judgments, as line-delimited JSON."""
        if kind not in TASK_KINDS:
            raise AnnotateError(f"unknown task kind {kind!r}")
        with self._lock:
            lines = []
            for task_id in sorted(self._tasks):
                task = self._tasks[task_id]
                if task.kind != kind:
                    continue
                for annotator_id in sorted(task.submissions):
                    sub = task.submissions[annotator_id]
                    if kind == "reformulation":
                        lines.append(
                            dumps_canonical(
                                {
                                    "image_id": task.task_id,
                                    "original": task.payload["caption"],
                                    "reformulated": sub["reformulated"],
                                    "language": task.payload.get("language", "en"),
                                }
                            )
                        )
                    else:
                        swap = task.payload["swap"]
                        for axis in task.payload["axes"]:
                            choice = sub["choices"][axis]
                            if choice == "tie":
                                resolved = "tie"
                            elif choice == "left":
                                resolved = "B" if swap else "A"
                            else:
                                resolved = "A" if swap else "B"
                            lines.append(
                                dumps_canonical(
                                    {
                                        "item_id": task.task_id,
                                        "axis": axis,
                                        "annotator_id": annotator_id,
                                        "choice": resolved,
                                    }
                                )
                            )
            return "".join(line + "\n" for line in lines)
