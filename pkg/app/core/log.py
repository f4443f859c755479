# app/core/log.py
"""
Log writer shared by the engine and the API runner.

Every line looks like `[2026-01-01T10:00:00Z] [HARNESS] message`: it is printed
to stdout (the API runner parses these lines) and appended to the open log file
handle when there is one.
"""
from __future__ import annotations

import contextlib
import datetime
from pathlib import Path
from typing import IO, Iterator, Optional


def log_write(log_fh: Optional[IO[str]], msg: str) -> None:
    ts = datetime.datetime.now(datetime.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    line = f"[{ts}] {msg}"
    print(line, flush=True)
    if log_fh:
        try:
            log_fh.write(line + "\n")
            log_fh.flush()
        except Exception:
            pass


@contextlib.contextmanager
def open_log(log_dir: Path | str, name: str) -> Iterator[Optional[IO[str]]]:
    """Open `<log_dir>/<name>/log_YYYY-MM-DD.txt` for appending.

    A log file that cannot be opened is reported once and the run continues
    with stdout only.
    """
    date_str = datetime.datetime.now().strftime("%Y-%m-%d")
    log_path = Path(log_dir) / name / f"log_{date_str}.txt"
    log_fh = None
    try:
        log_path.parent.mkdir(parents=True, exist_ok=True)
        log_fh = log_path.open("a", encoding="utf-8")
    except OSError as e:
        log_write(None, f"[WARN] Could not open log file {log_path}: {e}")
    try:
        yield log_fh
    finally:
        if log_fh:
            try:
                log_fh.close()
            except Exception:
                pass
