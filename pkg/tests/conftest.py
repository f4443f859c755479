import pytest

from app.config import settings
from app.services.dgp_service import scenario_config


@pytest.fixture(autouse=True)
def isolated_settings(tmp_path, monkeypatch):
    """Keep logs and outputs under tmp_path and pin the .env-driven defaults."""
    monkeypatch.setattr(settings, "LOG_DIR", tmp_path / "log")
    monkeypatch.setattr(settings, "SIM_OUTPUT_DIR", tmp_path / "out")
    monkeypatch.setattr(settings, "SIM_RUNS_DIR", tmp_path / "runs")
    monkeypatch.setattr(settings, "SIM_REPLICATIONS", 10000)
    monkeypatch.setattr(settings, "SIM_MASTER_SEED", 123)
    monkeypatch.setattr(settings, "SIM_WORKERS", 1)
    monkeypatch.setattr(settings, "SIM_JACKKNIFE_BLOCKS", 50)
    return settings


@pytest.fixture
def scenario1():
    return scenario_config(1, n=40)


@pytest.fixture
def scenario2():
    return scenario_config(2, n=40)
