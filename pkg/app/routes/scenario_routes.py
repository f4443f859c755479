# app/routes/scenario_routes.py
from fastapi import APIRouter, HTTPException, Path, Query

from app.core.errors import ConfigError, UnknownScenarioError
from app.models.common import DgpMode
from app.models.runner import ScenarioInfo
from app.services.dgp_service import marginal_dr_truth, per_dose_truth, scenario_config

router = APIRouter(prefix="/api", tags=["scenarios"])


@router.get("/scenarios/{scenario_id}", summary="Dose grid and analytic truth of a preset", response_model=ScenarioInfo)
def get_scenario(
    scenario_id: int = Path(...),
    rho: float = Query(0.0),
    dgp: DgpMode = Query(DgpMode.code),
):
    try:
        cfg = scenario_config(scenario_id, rho=rho, dgp_mode=dgp)
    except UnknownScenarioError as e:
        raise HTTPException(status_code=404, detail=str(e))
    except (ConfigError, ValueError) as e:
        raise HTTPException(status_code=400, detail=str(e))
    alpha0, alpha_d = marginal_dr_truth(cfg)
    return ScenarioInfo(
        scenario=scenario_id,
        dose_levels=cfg.dose_levels,
        rho=rho,
        dgp=dgp.value,
        alpha0=alpha0,
        alpha_d=alpha_d,
        per_dose_rate=[float(p) for p in per_dose_truth(cfg)],
    )
