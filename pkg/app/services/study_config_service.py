# app/services/study_config_service.py
"""
Study resolution shared by the CLI flags, custom config files and the API.

A config file is flat KEY=VALUE text (read with python-dotenv), one study per
file, e.g.

    COMMAND=table
    SCENARIO=2
    N=40,80
    RHO=0,0.9
    REPS=2000

Keys are case-insensitive; lists are comma-separated.
"""
from __future__ import annotations

import io
import os
import re
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

from dotenv import dotenv_values
from pydantic import ValidationError

from app.config import settings
from app.core.errors import ConfigError, ParseError, UnknownScenarioError
from app.models.common import Adjustment, DgpMode, ExclusionMode, Link, PredictionForm, TruthMode
from app.models.study import StudySpec
from app.services.dgp_service import scenario_config

COMMANDS = ("table", "figure", "linear-check")

# preset cells per command
DEFAULT_N = {"table": [40, 80, 120], "figure": [40, 80], "linear-check": [200]}
DEFAULT_RHO = {"table": [0.0, 0.3, 0.6, 0.9], "figure": [0.0, 0.3, 0.6, 0.9], "linear-check": [0.0]}

ADJUST_CHOICES = {
    "cf": [Adjustment.CF],
    "unadj": [Adjustment.UNADJ],
    "both": [Adjustment.UNADJ, Adjustment.CF],
}
TRUTH_CHOICES = {"analytic": TruthMode.analytic, "fitted": TruthMode.fitted_200k}

# model field -> config key, for locating validation errors
FIELD_KEYS = {
    "dose_levels": "DOSES",
    "n_values": "N",
    "rho_values": "RHO",
    "rho": "RHO",
    "n_replications": "REPS",
    "master_seed": "SEED",
    "workers": "WORKERS",
    "prediction_link": "LINK",
    "prediction_form": "FORM",
    "truth_mode": "TRUTH",
    "dgp_mode": "DGP",
    "exclusion": "EXCLUSION",
    "beta_c": "BETA_C",
    "gamma_d": "GAMMA_D",
    "shift": "SHIFT",
    "sigma_eta": "SIGMA_ETA",
    "sigma_eps": "SIGMA_EPS",
}


# ---------- value parsing ----------

def _int_list(raw: str) -> List[int]:
    return [int(x) for x in raw.split(",") if x.strip()]


def _float_list(raw: str) -> List[float]:
    return [float(x) for x in raw.split(",") if x.strip()]


def _choice(options) -> Callable[[str], str]:
    def parse(raw: str) -> str:
        v = raw.strip().lower()
        if v not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {raw!r}")
        return v
    return parse


PARSERS: Dict[str, Callable[[str], Any]] = {
    "COMMAND": _choice(COMMANDS),
    "SCENARIO": int,
    "DOSES": _float_list,
    "N": _int_list,
    "RHO": _float_list,
    "REPS": int,
    "SEED": int,
    "ADJUST": _choice(tuple(ADJUST_CHOICES)),
    "LINK": _choice(tuple(m.value for m in Link)),
    "FORM": _choice(tuple(m.value for m in PredictionForm)),
    "TRUTH": _choice(tuple(TRUTH_CHOICES)),
    "DGP": _choice(tuple(m.value for m in DgpMode)),
    "EXCLUSION": _choice(tuple(m.value for m in ExclusionMode)),
    "BETA_C": float,
    "GAMMA_D": float,
    "SHIFT": float,
    "SIGMA_ETA": float,
    "SIGMA_EPS": float,
    "WORKERS": int,
}


def _key_lines(text: str) -> Dict[str, int]:
    out: Dict[str, int] = {}
    for i, line in enumerate(text.splitlines(), start=1):
        m = re.match(r"^\s*(?:export\s+)?([A-Za-z_][A-Za-z0-9_]*)\s*=", line)
        if m:
            out.setdefault(m.group(1).upper(), i)
    return out


def parse_config_text(text: str) -> Tuple[Dict[str, Any], Dict[str, int]]:
    """Typed overrides keyed by lowercase config key, plus the line of each key."""
    lines = _key_lines(text)
    for i, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if s and not s.startswith("#") and "=" not in s:
            raise ParseError(f"expected KEY=VALUE, got {s!r}", line=i)

    raw = dotenv_values(stream=io.StringIO(text))

    overrides: Dict[str, Any] = {}
    for key, value in raw.items():
        ukey = key.upper()
        line = lines.get(ukey)
        if ukey not in PARSERS:
            raise ParseError(f"unknown key {key!r}", line=line, field=key)
        if value is None or not value.strip():
            raise ParseError("empty value", line=line, field=ukey)
        try:
            overrides[ukey.lower()] = PARSERS[ukey](value)
        except ValueError as e:
            raise ParseError(str(e), line=line, field=ukey) from e
    return overrides, lines


# ---------- study resolution ----------

def _validation_field(err: ValidationError) -> Optional[str]:
    for item in err.errors():
        for part in item.get("loc", ()):
            if part in FIELD_KEYS:
                return FIELD_KEYS[part]
    return None


def _validation_message(err: ValidationError) -> str:
    item = err.errors()[0]
    return str(item.get("msg", err)).removeprefix("Value error, ")


def resolve_workers(workers: Optional[int]) -> int:
    w = settings.SIM_WORKERS if workers is None else workers
    return (os.cpu_count() or 1) if w == 0 else w


def build_study_spec(command: str, overrides: Dict[str, Any]) -> StudySpec:
    """StudySpec from command presets, overrides and `.env` defaults.

    `overrides` uses the lowercase config keys; None values are ignored.
    """
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}", field="COMMAND")
    o = {k: v for k, v in overrides.items() if v is not None}

    scenario_fields = {
        "dose_levels": o.get("doses"),
        "beta_c": o.get("beta_c"),
        "gamma_d": o.get("gamma_d"),
        "shift": o.get("shift"),
        "sigma_eta": o.get("sigma_eta"),
        "sigma_eps": o.get("sigma_eps"),
        "dgp_mode": o.get("dgp"),
    }
    n_values = o.get("n", DEFAULT_N[command])
    try:
        scenario = scenario_config(int(o.get("scenario", 1)), **scenario_fields)

        unadjusted_rho = None
        if "adjust" in o:
            adjustments = ADJUST_CHOICES[o["adjust"]]
        elif command == "figure":
            adjustments = ADJUST_CHOICES["both"]
            unadjusted_rho = [0.0]
        else:
            adjustments = ADJUST_CHOICES["both"]

        return StudySpec(
            scenario=scenario,
            n_values=n_values,
            rho_values=o.get("rho", DEFAULT_RHO[command]),
            n_replications=o.get("reps", settings.SIM_REPLICATIONS),
            master_seed=o.get("seed", settings.SIM_MASTER_SEED),
            adjustments=adjustments,
            unadjusted_rho_values=unadjusted_rho,
            prediction_link=o.get("link", Link.probit),
            prediction_form=o.get("form", PredictionForm.modelbased),
            truth_mode=TRUTH_CHOICES[o.get("truth", "analytic")],
            exclusion=o.get("exclusion", ExclusionMode.pairwise),
            workers=resolve_workers(o.get("workers")),
            jackknife_blocks=settings.SIM_JACKKNIFE_BLOCKS,
        )
    except UnknownScenarioError as e:
        raise UnknownScenarioError(e.message, field="SCENARIO") from e
    except ValidationError as e:
        raise ConfigError(_validation_message(e), field=_validation_field(e)) from e


def load_study_config(path: Path | str) -> Tuple[str, StudySpec, Dict[str, Any]]:
    """(command, StudySpec, overrides) from a config file."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    overrides, lines = parse_config_text(text)
    command = overrides.get("command", "table")
    try:
        return command, build_study_spec(command, overrides), overrides
    except ConfigError as e:
        if e.field is not None and e.line is None:
            raise e.at_line(lines.get(e.field)) from e
        raise


def _fmt_list(values) -> str:
    return ",".join(repr(float(v)) if isinstance(v, float) else str(v) for v in values)


def dump_study_config(command: str, spec: StudySpec, scenario_id: int) -> str:
    """Resolved config text; loading it reproduces `spec`."""
    sc = spec.scenario
    truth = next(k for k, v in TRUTH_CHOICES.items() if v == spec.truth_mode)
    lines = [
        f"COMMAND={command}",
        f"SCENARIO={scenario_id}",
        f"DOSES={_fmt_list(sc.dose_levels)}",
        f"N={_fmt_list(spec.n_values)}",
        f"RHO={_fmt_list(spec.rho_values)}",
        f"REPS={spec.n_replications}",
        f"SEED={spec.master_seed}",
    ]
    if spec.unadjusted_rho_values is None:
        adjust = next(k for k, v in ADJUST_CHOICES.items() if set(v) == set(spec.adjustments))
        lines.append(f"ADJUST={adjust}")
    lines += [
        f"LINK={spec.prediction_link.value}",
        f"FORM={spec.prediction_form.value}",
        f"TRUTH={truth}",
        f"DGP={sc.dgp_mode.value}",
        f"BETA_C={sc.beta_c!r}",
        f"GAMMA_D={sc.gamma_d!r}",
        f"SHIFT={sc.shift!r}",
        f"SIGMA_ETA={sc.sigma_eta!r}",
        f"SIGMA_EPS={sc.sigma_eps!r}",
        f"EXCLUSION={spec.exclusion.value}",
        f"WORKERS={spec.workers}",
    ]
    return "\n".join(lines) + "\n"
