import pytest

from app.core.errors import ConfigError, ParseError, UnknownScenarioError
from app.models.common import Adjustment, DgpMode, TruthMode
from app.services.study_config_service import (
    build_study_spec,
    dump_study_config,
    load_study_config,
    parse_config_text,
)


def _write(tmp_path, text, name="study.env"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_minimal_file_runs_full_defaults(tmp_path):
    command, spec, _ = load_study_config(_write(tmp_path, "SCENARIO=1\n"))
    assert command == "table"
    assert spec.n_values == [40, 80, 120]
    assert spec.rho_values == [0.0, 0.3, 0.6, 0.9]
    assert spec.n_replications == 10000
    assert spec.master_seed == 123
    assert spec.adjustments == [Adjustment.UNADJ, Adjustment.CF]
    assert spec.truth_mode == TruthMode.analytic
    assert spec.scenario.dose_levels == [1.0, 2.0, 3.0, 4.0, 5.0]


def test_keys_are_case_insensitive_and_lists_split(tmp_path):
    text = "# desk run\nscenario=2\nn=40,80\nRho=0, 0.9\nreps=500\nseed=7\nadjust=cf\ntruth=fitted\n"
    command, spec, overrides = load_study_config(_write(tmp_path, text))
    assert spec.n_values == [40, 80]
    assert spec.rho_values == [0.0, 0.9]
    assert (spec.n_replications, spec.master_seed) == (500, 7)
    assert spec.adjustments == [Adjustment.CF]
    assert spec.truth_mode == TruthMode.fitted_200k
    assert spec.scenario.dose_levels == pytest.approx([d / 1.5 for d in (1, 2, 3, 4, 5)])
    assert overrides["scenario"] == 2


def test_rho_of_one_is_a_config_error_with_location(tmp_path):
    with pytest.raises(ConfigError) as exc:
        load_study_config(_write(tmp_path, "SCENARIO=1\nRHO=1.0\n"))
    assert "rho must be" in str(exc.value) and "< 1" in str(exc.value)
    assert exc.value.line == 2
    assert exc.value.field == "RHO"


def test_unknown_key_names_the_line(tmp_path):
    with pytest.raises(ParseError) as exc:
        load_study_config(_write(tmp_path, "SCENARIO=1\n\nCOLOUR=blue\n"))
    assert exc.value.line == 3
    assert "line 3" in str(exc.value)


def test_bad_values_are_parse_errors():
    with pytest.raises(ParseError) as exc:
        parse_config_text("N=forty\n")
    assert exc.value.field == "N" and exc.value.line == 1
    with pytest.raises(ParseError):
        parse_config_text("LINK=cauchit\n")
    with pytest.raises(ParseError):
        parse_config_text("SCENARIO\n")
    with pytest.raises(ParseError):
        parse_config_text("RHO=\n")


def test_unknown_scenario(tmp_path):
    with pytest.raises(UnknownScenarioError) as exc:
        load_study_config(_write(tmp_path, "SCENARIO=3\n"))
    assert exc.value.line == 1


def test_prose_dgp_label(tmp_path):
    _, spec, _ = load_study_config(_write(tmp_path, "SCENARIO=1\nDGP=prose\n"))
    assert spec.scenario.dgp_mode == DgpMode.prose
    assert spec.scenario.label == "scenario1-prose-dgp"


def test_command_presets():
    figure = build_study_spec("figure", {})
    assert figure.n_values == [40, 80]
    assert figure.unadjusted_rho_values == [0.0]
    linear = build_study_spec("linear-check", {})
    assert linear.n_values == [200] and linear.rho_values == [0.0]
    explicit = build_study_spec("figure", {"adjust": "both"})
    assert explicit.unadjusted_rho_values is None


def test_invalid_studies_are_config_errors():
    with pytest.raises(ConfigError):
        build_study_spec("figure", {"rho": []})
    with pytest.raises(ConfigError) as exc:
        build_study_spec("table", {"n": [42]})
    assert "multiple" in str(exc.value)
    with pytest.raises(ConfigError):
        build_study_spec("figure", {"link": "logit"})
    with pytest.raises(ConfigError):
        build_study_spec("simulate", {})
    assert build_study_spec("figure", {"link": "logit", "form": "empirical"}).prediction_link.value == "logit"


def test_workers_zero_means_cpu_count():
    assert build_study_spec("table", {"workers": 0}).workers >= 1


@pytest.mark.parametrize("command,overrides", [
    ("table", {"scenario": 2, "n": [40], "rho": [0.3], "reps": 50, "adjust": "unadj"}),
    ("figure", {"scenario": 1, "link": "logit", "form": "empirical", "dgp": "prose"}),
    ("linear-check", {"n": [100], "sigma_eps": 2.5, "beta_c": 0.5}),
])
def test_resolved_config_reproduces_spec(tmp_path, command, overrides):
    spec = build_study_spec(command, overrides)
    text = dump_study_config(command, spec, overrides.get("scenario", 1))
    loaded_command, loaded, _ = load_study_config(_write(tmp_path, text))
    assert loaded_command == command
    assert loaded == spec
