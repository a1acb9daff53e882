"""
Configuration management: loads .env and exposes typed settings.
"""

from __future__ import annotations
from pathlib import Path

from dotenv import dotenv_values
from pydantic import Field, ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from raincdf.errors import ConfigError
from raincdf.models.schemas import SyntheticConfig


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    # Runtime
    seed: int = Field(0, alias="RAINCDF_SEED")
    threads: int = Field(1, alias="RAINCDF_THREADS")
    log_level: str = Field("INFO", alias="RAINCDF_LOG_LEVEL")
    # Rows per chunk when scoring or querying in bulk
    chunk_rows: int = Field(2000, alias="RAINCDF_CHUNK_ROWS")

    # Nearest neighbors
    k: int = Field(150, alias="RAINCDF_K")
    p: float = Field(2.0, alias="RAINCDF_P")
    leaf_size: int = Field(16, alias="RAINCDF_LEAF_SIZE")

    # Optimal voting: world-record one-hour rainfall as the outlier bound
    outlier_mm: float = Field(305.0, alias="RAINCDF_OUTLIER_MM")

    # Validation split (33k train / 100k validation by default)
    n_train: int = Field(33_000, alias="RAINCDF_N_TRAIN")
    n_val: int = Field(100_000, alias="RAINCDF_N_VAL")

    # Logistic regression
    logistic_iters: int = Field(500, alias="RAINCDF_LOGISTIC_ITERS")
    logistic_lr: float = Field(1.0, alias="RAINCDF_LOGISTIC_LR")
    logistic_tol: float = Field(1e-6, alias="RAINCDF_LOGISTIC_TOL")
    logistic_l1: float = Field(0.0, alias="RAINCDF_LOGISTIC_L1")


def load_synthetic_config(path: str | Path) -> SyntheticConfig:
    """
    Read a key-value synthetic config file (``rows = 100000`` per line).

    Unknown keys and out-of-range values raise ConfigError.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"synthetic config not found: {path}")
    raw = {k.strip().lower(): v for k, v in dotenv_values(path).items()}
    unknown = sorted(set(raw) - set(SyntheticConfig.model_fields))
    if unknown:
        raise ConfigError(f"unknown synthetic config keys in {path}: {unknown}")
    missing = [k for k, v in raw.items() if v is None or v == ""]
    if missing:
        raise ConfigError(f"synthetic config keys without values in {path}: {missing}")
    try:
        config = SyntheticConfig(**raw)
    except ValidationError as e:
        raise ConfigError(f"invalid synthetic config {path}: {e}") from e
    return config.check()


settings = Settings()
