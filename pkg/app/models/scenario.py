from typing import List, Optional
from pydantic import BaseModel, Field, field_validator

from app.models.common import DgpMode


class ScenarioConfig(BaseModel):
    """Data-generating process of one simulated trial design."""
    name: Optional[str] = None
    dose_levels: List[float] = Field(..., min_length=2)
    n: int = Field(40, ge=2)
    rho: float = 0.0
    beta_c: float = 1.0
    gamma_d: float = 1.0
    shift: float = -3.0
    sigma_eta: float = Field(1.0, gt=0)
    sigma_eps: float = Field(1.0, gt=0)   # continuous-response trials only
    dgp_mode: DgpMode = DgpMode.code

    @field_validator("rho")
    @classmethod
    def rho_range(cls, v):
        if not 0.0 <= v < 1.0:
            raise ValueError("rho must be >= 0 and < 1")
        return v

    @field_validator("dose_levels")
    @classmethod
    def distinct_doses(cls, v):
        if len(set(v)) < 2:
            raise ValueError("dose grid needs at least 2 distinct levels")
        return v

    @property
    def n_doses(self) -> int:
        return len(self.dose_levels)

    @property
    def label(self) -> str:
        base = self.name or "custom"
        return f"{base}-prose-dgp" if self.dgp_mode == DgpMode.prose else base
