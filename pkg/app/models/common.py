from enum import Enum


class Link(str, Enum):
    probit = "probit"
    logit = "logit"


class Method(str, Enum):
    DR = "DR"
    DER_CF = "DER_CF"
    DER_UNADJ = "DER_UNADJ"


class Adjustment(str, Enum):
    CF = "CF"
    UNADJ = "UNADJ"


class DgpMode(str, Enum):
    code = "code"     # table-reproduction parameterization (latent correlation rho^2)
    prose = "prose"   # latent correlation rho


class TruthMode(str, Enum):
    analytic = "analytic"
    fitted_200k = "fitted_200k"


class PredictionForm(str, Enum):
    modelbased = "modelbased"
    empirical = "empirical"


class ExclusionMode(str, Enum):
    pairwise = "pairwise"
    per_column = "per_column"
