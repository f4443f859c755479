# app/routes/study_routes.py
from fastapi import APIRouter, BackgroundTasks, Depends, HTTPException

from app.core.errors import ConfigError
from app.deps import get_registry
from app.models.runner import RunStatus, StudyRequest
from app.services.sim_runner_service import RunRegistry, create_run, schedule_run

router = APIRouter(prefix="/api", tags=["studies"])


@router.post("/studies", summary="Start a simulation study", status_code=202, response_model=RunStatus)
def start_study(req: StudyRequest, bg: BackgroundTasks, reg: RunRegistry = Depends(get_registry)):
    try:
        status = create_run(req, reg)
    except ConfigError as e:
        raise HTTPException(status_code=400, detail=str(e))
    except OSError as e:
        raise HTTPException(status_code=500, detail=f"Could not prepare run directory: {e}")
    schedule_run(bg, status.run_id, reg)
    return status


@router.get("/studies", summary="List studies")
def list_studies(reg: RunRegistry = Depends(get_registry)):
    items = reg.list()
    return {"status": "ok", "items": [s.model_dump(exclude={"log_text"}) for s in items]}


@router.get("/studies/{run_id}", summary="Study status, log and outputs", response_model=RunStatus)
def get_study(run_id: str, reg: RunRegistry = Depends(get_registry)):
    status = reg.get(run_id)
    if status is None:
        raise HTTPException(status_code=404, detail=f"Unknown run {run_id}")
    return status
