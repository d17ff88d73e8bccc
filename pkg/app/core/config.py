"""
Application configuration via environment variables.
"""

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Process-wide settings loaded from environment variables."""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        env_prefix="HSAN_",
        extra="ignore",
    )

    # Logging
    LOG_LEVEL: str = "INFO"

    # Outputs
    RUN_ROOT: str = "runs"

    # Bootstrap worker pool size
    WORKERS: int = 1

    # Seed used when a run config does not name one
    DEFAULT_SEED: int = 13


settings = Settings()
