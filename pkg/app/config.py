from pathlib import Path
from dotenv import load_dotenv
from pydantic_settings import BaseSettings, SettingsConfigDict
from pydantic import Field
from typing import ClassVar


BASE_DIR = Path(__file__).resolve().parent.parent
ENV_PATH = BASE_DIR / ".env"
load_dotenv(ENV_PATH)

class Settings(BaseSettings):
    # Simulation defaults
    SIM_MASTER_SEED: int = Field(123, ge=0, lt=2**64)
    SIM_REPLICATIONS: int = Field(10000, ge=2)
    SIM_WORKERS: int = Field(1, ge=0)
    SIM_JACKKNIFE_BLOCKS: int = Field(50, ge=2)
    SIM_OUTPUT_DIR: Path = BASE_DIR / "out"
    LOG_DIR: Path = BASE_DIR / "log"

    ## API runner
    ENGINE_DIR: ClassVar[Path] = BASE_DIR
    SIM_PYTHON_BIN: str = "python"
    SIM_RUNS_DIR: Path = BASE_DIR / "out" / "runs"
    ALLOWED_ORIGINS: str = "http://localhost:3000,http://127.0.0.1:3000"

    model_config = SettingsConfigDict(
        env_file=str(ENV_PATH),
        env_file_encoding="utf-8",
        extra="ignore",
    )

settings = Settings()
