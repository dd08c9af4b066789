"""Configuration settings for the AoI preemption toolkit."""

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Runtime settings loaded from environment variables (prefix ``AOI_``)."""

    model_config = SettingsConfigDict(
        env_prefix="AOI_", env_file=".env", env_file_encoding="utf-8"
    )

    # Worker pool used by sweeps; 1 runs every point in-process
    workers: int = Field(default=1, ge=1)

    # "production" switches log output to JSON
    environment: str = "development"

    # Logging
    debug: bool = False  # Enable DEBUG level logging for per-sweep timing

    @property
    def json_logs(self) -> bool:
        """Whether logs should be rendered as JSON."""
        return self.environment == "production"


def get_settings() -> Settings:
    """Get application settings."""
    return Settings()
