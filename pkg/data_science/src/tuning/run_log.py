import json
import threading
from pathlib import Path
from typing import Optional


class RunLog:
    """
    Newline-delimited JSON records of a training run.

    With a path records are appended to the file only; without one they are
    kept in memory (`records`). `bind` returns a view that stamps extra fields
    (protocol row, seed) on every record and shares the underlying sink.
    """

    def __init__(self, path: Optional[str | Path] = None):
        self.path = Path(path) if path is not None else None
        self.records = []
        self.context = {}
        self._lock = threading.Lock()
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text("", encoding="utf-8")

    def bind(self, **context) -> "RunLog":
        view = RunLog.__new__(RunLog)
        view.path, view.records, view._lock = self.path, self.records, self._lock
        view.context = {**self.context, **context}
        return view

    def write(self, **record):
        record = {**self.context, **record}
        with self._lock:
            if self.path is None:
                self.records.append(record)
                return
            with open(self.path, "a", encoding="utf-8") as f:
                f.write(json.dumps(record, sort_keys=True) + "\n")

    @staticmethod
    def read(path: str | Path) -> list:
        with open(path, encoding="utf-8") as f:
            return [json.loads(line) for line in f if line.strip()]
