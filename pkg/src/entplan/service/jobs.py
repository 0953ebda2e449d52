"""Background jobs for long-running plan/simulation runs, polled by id."""

from __future__ import annotations

import threading
import traceback
import uuid
from dataclasses import dataclass, field


@dataclass
class Job:
    id: str
    kind: str
    status: str = "running"          # running | done | failed
    progress: float = 0.0            # 0..1
    result: dict | None = None
    error: str | None = None

    def as_dict(self) -> dict:
        return {"job_id": self.id, "kind": self.kind, "status": self.status,
                "progress": self.progress, "result": self.result,
                "error": self.error}


@dataclass
class JobRegistry:
    _jobs: dict[str, Job] = field(default_factory=dict)
    _lock: threading.Lock = field(default_factory=threading.Lock)

    def submit(self, kind: str, runner) -> Job:
        """Start `runner(set_progress)` on a worker thread; returns the job.

        `runner` returns the result payload; exceptions mark the job failed
        with the message only (no traceback leaks to clients).
        """
        job = Job(id=uuid.uuid4().hex, kind=kind)
        with self._lock:
            self._jobs[job.id] = job

        def set_progress(fraction: float) -> None:
            job.progress = max(0.0, min(1.0, fraction))

        def work():
            try:
                job.result = runner(set_progress)
                job.progress = 1.0
                job.status = "done"
            except Exception as exc:  # noqa: BLE001 - reported via the job
                traceback.print_exc()
                job.error = str(exc)
                job.status = "failed"

        thread = threading.Thread(target=work, daemon=True)
        thread.start()
        return job

    def get(self, job_id: str) -> Job | None:
        with self._lock:
            return self._jobs.get(job_id)
