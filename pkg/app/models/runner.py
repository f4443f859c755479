from typing import Any, Dict, List, Literal, Optional
from pydantic import BaseModel, Field


class StudyRequest(BaseModel):
    """Body of POST /api/studies; unset fields fall back to the command presets."""
    command: Literal["table", "figure", "linear-check"] = "table"
    scenario: int = 1
    doses: Optional[List[float]] = None
    n: Optional[List[int]] = None
    rho: Optional[List[float]] = None
    reps: Optional[int] = Field(None, ge=2)
    seed: Optional[int] = Field(None, ge=0)
    adjust: Optional[Literal["cf", "unadj", "both"]] = None
    link: Optional[Literal["probit", "logit"]] = None
    form: Optional[Literal["modelbased", "empirical"]] = None
    truth: Optional[Literal["analytic", "fitted"]] = None
    dgp: Optional[Literal["code", "prose"]] = None
    exclusion: Optional[Literal["pairwise", "per_column"]] = None
    beta_c: Optional[float] = None
    gamma_d: Optional[float] = None
    shift: Optional[float] = None
    sigma_eta: Optional[float] = None
    sigma_eps: Optional[float] = None
    workers: Optional[int] = Field(None, ge=0)

    def overrides(self) -> Dict[str, Any]:
        return self.model_dump(exclude={"command"}, exclude_none=True)


class RunStatus(BaseModel):
    run_id: str
    command: str
    state: Literal["pending", "running", "done", "failed"] = "pending"
    stage: str = "PENDING"
    progress: int = 0
    message: str = ""
    log_text: str = ""
    output_dir: str
    outputs: List[str] = []
    expected_cells: int = 0
    finished_cells: int = 0
    return_code: Optional[int] = None
    created_at: str
    updated_at: str


class ScenarioInfo(BaseModel):
    scenario: int
    dose_levels: List[float]
    rho: float
    dgp: str
    alpha0: float
    alpha_d: float
    per_dose_rate: List[float]
