from typing import List, Literal, Optional
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.models.common import Adjustment, ExclusionMode, Link, PredictionForm, TruthMode
from app.models.scenario import ScenarioConfig

# replication streams use indices [0, GOLD_STREAM_INDEX); the gold-standard trial owns this one
GOLD_STREAM_INDEX = 2**40
GOLD_STANDARD_N = 200_000
FORMAT_VERSION = 1


class StudySpec(BaseModel):
    scenario: ScenarioConfig
    n_values: List[int] = Field(default_factory=lambda: [40, 80, 120], min_length=1)
    rho_values: List[float] = Field(default_factory=lambda: [0.0, 0.3, 0.6, 0.9], min_length=1)
    n_replications: int = Field(10000, ge=2, lt=GOLD_STREAM_INDEX)
    master_seed: int = Field(123, ge=0, lt=2**64)
    adjustments: List[Adjustment] = Field(default_factory=lambda: [Adjustment.UNADJ, Adjustment.CF], min_length=1)
    # None: unadjusted estimator at every rho; otherwise only at the listed rho values
    unadjusted_rho_values: Optional[List[float]] = None
    prediction_link: Link = Link.probit
    prediction_form: PredictionForm = PredictionForm.modelbased
    truth_mode: TruthMode = TruthMode.analytic
    exclusion: ExclusionMode = ExclusionMode.pairwise
    workers: int = Field(1, ge=1)
    jackknife_blocks: int = Field(50, ge=2)

    @field_validator("rho_values")
    @classmethod
    def rho_range(cls, v):
        for r in v:
            if not 0.0 <= r < 1.0:
                raise ValueError("rho must be >= 0 and < 1")
        return v

    @field_validator("adjustments")
    @classmethod
    def unique_adjustments(cls, v):
        out = []
        for a in v:
            if a not in out:
                out.append(a)
        return out

    @model_validator(mode="after")
    def check_consistency(self):
        k = self.scenario.n_doses
        for n in self.n_values:
            if n < 2 * k or n % k:
                raise ValueError(f"n={n} must be a multiple of the dose-grid size {k} (balanced assignment)")
        if self.prediction_form == PredictionForm.modelbased and self.prediction_link != Link.probit:
            raise ValueError("model-based prediction requires the probit link")
        if self.jackknife_blocks > self.n_replications:
            self.jackknife_blocks = self.n_replications
        return self

    def cells(self):
        """(n, rho) pairs in table order."""
        return [(n, rho) for n in self.n_values for rho in self.rho_values]

    def wants(self, adjustment: Adjustment, rho: float) -> bool:
        if adjustment not in self.adjustments:
            return False
        if adjustment == Adjustment.UNADJ and self.unadjusted_rho_values is not None:
            return any(abs(rho - r) < 1e-12 for r in self.unadjusted_rho_values)
        return True


class TruthRecord(BaseModel):
    mode: TruthMode
    alpha0: float
    alpha_d: float
    per_dose: List[float]


class AggregateReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    n: int
    rho: float
    adjustment: Adjustment
    bias_dr: List[float]
    bias_der: List[float]
    variance_dr: List[float]
    variance_der: List[float]
    mse_dr: List[float]
    mse_der: List[float]
    ratio_variance_vs_dr: List[float]
    ratio_mse_vs_dr: List[float]
    ratio_variance_se: List[float]
    per_dose_variance_ratio: List[float]
    per_dose_variance_ratio_se: List[float]
    per_dose_bias_dr: List[float]
    per_dose_bias_der: List[float]
    n_replications: int
    used_replications: int
    excluded_replications: int
    used_replications_dr: int
    used_replications_der: int

    @model_validator(mode="after")
    def check_accounting(self):
        if self.used_replications + self.excluded_replications != self.n_replications:
            raise ValueError("excluded + used replications must equal n_replications")
        if not (self.used_replications <= min(self.used_replications_dr, self.used_replications_der)
                and max(self.used_replications_dr, self.used_replications_der) <= self.n_replications):
            raise ValueError("per-estimator counts must lie between the pairwise count and n_replications")
        k = len(self.per_dose_variance_ratio)
        if not (len(self.per_dose_variance_ratio_se) == len(self.per_dose_bias_dr)
                == len(self.per_dose_bias_der) == k):
            raise ValueError("per-dose vectors must share the dose-grid length")
        return self


class LinearCheckReport(BaseModel):
    n: int
    rho: float
    n_replications: int
    used_replications: int
    variance_dr: float
    variance_der_unadjusted: float
    variance_der_cf: float
    analytic_variance_dr: float
    analytic_variance_der_unadjusted: float
    analytic_variance_der_cf: float
    ratio_unadjusted: float
    ratio_unadjusted_se: float
    ratio_unadjusted_analytic: float
    ratio_cf: float
    ratio_cf_se: float
    ratio_cf_analytic: float
    discrepancy_unadjusted_se_units: float
    discrepancy_cf_se_units: float
    identity_max_abs_diff: float
    identity_violations: int
    identity_tolerance: float = 1e-10


class RunManifest(BaseModel):
    command: Literal["table1", "table2", "table", "figure", "linear-check", "custom"]
    output_dir: str
    spec: StudySpec
    dgp_label: str
    format_version: int = FORMAT_VERSION
    artifact_version: str
    created_at: str
    outputs: List[str] = []
    options: dict = {}
