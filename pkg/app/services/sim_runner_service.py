# app/services/sim_runner_service.py
"""
Runs studies for the API by launching the engine as a subprocess
(`python -m sim_engine.main custom <run_dir>/study.env`) and following its
tagged stdout lines.
"""
import subprocess
import threading
import uuid
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional

from app.config import settings
from app.core.log import log_write
from app.models.runner import RunStatus, StudyRequest
from app.services import harness_service
from app.services.study_config_service import build_study_spec, dump_study_config

ENGINE_DIR = Path(settings.ENGINE_DIR)
LOG_TEXT_LIMIT = 200_000

# tag -> (stage, progress floor)
STAGES = {
    "[cli]": ("STARTING", 5),
    "[gold]": ("GOLD_STANDARD", 10),
    "[harness]": ("SIMULATING", 15),
    "[report]": ("WRITING", 95),
}


def _now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


class RunRegistry:
    """In-memory run records, shared between request handlers and background tasks."""

    def __init__(self):
        self._runs: Dict[str, RunStatus] = {}
        self._lock = threading.Lock()

    def add(self, status: RunStatus) -> None:
        with self._lock:
            self._runs[status.run_id] = status

    def get(self, run_id: str) -> Optional[RunStatus]:
        with self._lock:
            status = self._runs.get(run_id)
            return status.model_copy() if status else None

    def list(self) -> List[RunStatus]:
        with self._lock:
            return [s.model_copy() for s in self._runs.values()]

    def update(self, run_id: str, **fields) -> None:
        with self._lock:
            status = self._runs[run_id]
            self._runs[run_id] = status.model_copy(update={**fields, "updated_at": _now()})

    def append_log(self, run_id: str, msg: str) -> None:
        with self._lock:
            status = self._runs[run_id]
            text = (status.log_text + msg + "\n")[-LOG_TEXT_LIMIT:]
            self._runs[run_id] = status.model_copy(update={"log_text": text, "updated_at": _now()})


registry = RunRegistry()


def _expected_cells(command: str, spec) -> int:
    if command == "linear-check":
        return len(spec.cells())
    return sum(
        1 for n, rho in spec.cells() for adj in harness_service.ADJUSTMENT_ORDER if spec.wants(adj, rho)
    )


def create_run(req: StudyRequest, reg: RunRegistry = registry) -> RunStatus:
    """Validate the request, write its config file and register a pending run.

    Raises ConfigError for an invalid study.
    """
    spec = build_study_spec(req.command, req.overrides())
    run_id = uuid.uuid4().hex[:12]
    run_dir = Path(settings.SIM_RUNS_DIR) / run_id
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "study.env").write_text(dump_study_config(req.command, spec, req.scenario), encoding="utf-8")

    ts = _now()
    status = RunStatus(
        run_id=run_id,
        command=req.command,
        output_dir=str(run_dir / "out"),
        expected_cells=_expected_cells(req.command, spec),
        message="Queued",
        created_at=ts,
        updated_at=ts,
    )
    reg.add(status)
    return status


def _progress(status: RunStatus, lower: str) -> Dict:
    for tag, (stage, floor) in STAGES.items():
        if tag in lower:
            if tag == "[harness]":
                done = status.finished_cells + 1
                total = max(status.expected_cells, done)
                return {"stage": stage, "finished_cells": done,
                        "progress": max(status.progress, floor + int(75 * done / total))}
            return {"stage": stage, "progress": max(status.progress, floor)}
    return {}


def _runner_log(reg: RunRegistry, run_id: str, msg: str) -> None:
    log_write(None, msg)
    reg.append_log(run_id, msg)


def run_engine(run_id: str, reg: RunRegistry = registry) -> None:
    status = reg.get(run_id)
    run_dir = Path(settings.SIM_RUNS_DIR) / run_id
    cmd = [
        settings.SIM_PYTHON_BIN, "-m", "sim_engine.main", "custom",
        str(run_dir / "study.env"),
        "--out", status.output_dir,
        "--force",
    ]
    reg.update(run_id, state="running", stage="STARTING", progress=1, message="Starting engine")
    _runner_log(reg, run_id, f"[RUNNER] run {run_id}: {' '.join(cmd)}")

    try:
        proc = subprocess.Popen(
            cmd,
            cwd=str(ENGINE_DIR),
            stdout=subprocess.PIPE,
            stderr=subprocess.STDOUT,
            text=True,
            bufsize=1,
        )
        for line in proc.stdout:
            msg = line.strip()
            if not msg:
                continue
            reg.append_log(run_id, msg[:1000])
            update = _progress(reg.get(run_id), msg.lower())
            reg.update(run_id, message=msg[:500], **update)

        rc = proc.wait()
        if rc != 0:
            _runner_log(reg, run_id, f"[RUNNER][ERROR] engine exited with code {rc}")
            reg.update(run_id, state="failed", stage="FAILED", progress=100, return_code=rc,
                       message=f"engine exited with code {rc}")
            return

        out_dir = Path(status.output_dir)
        outputs = sorted(p.name for p in out_dir.iterdir()) if out_dir.is_dir() else []
        reg.update(run_id, state="done", stage="COMPLETED", progress=100, return_code=0,
                   outputs=outputs, message="Study completed")
        _runner_log(reg, run_id, f"[RUNNER] run {run_id} completed: {len(outputs)} output files")
    except Exception as e:
        _runner_log(reg, run_id, f"[RUNNER][ERROR] {e}")
        reg.update(run_id, state="failed", stage="FAILED", progress=100, message=f"Exception: {e}")


def schedule_run(bg, run_id: str, reg: RunRegistry = registry) -> None:
    bg.add_task(run_engine, run_id, reg)
