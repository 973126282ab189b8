"""Application configuration using pydantic-settings."""

from functools import lru_cache

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Run settings loaded from environment."""

    model_config = SettingsConfigDict(
        env_prefix="INFDPP_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # Monte Carlo
    threads: int = Field(default=1, ge=1, description="Default worker streams for Monte Carlo")

    # Numerical thresholds
    eigen_tau: float = Field(default=1e-6, gt=0, description="Eigen-truncation threshold for chi L")
    angle_floor: float = Field(default=1e-6, gt=0, description="Angle below which L, V degenerate")
    rank_rtol: float = Field(default=1e-10, gt=0, description="Relative pivot cut in project_span")
    cond_limit: float = Field(default=1e12, gt=1, description="Max condition of I + (g-1)K")
    diag_switch: float = Field(default=1e-6, gt=0, description="Relative near-diagonal switch")

    # Default quadrature
    panels: int = Field(default=8, ge=1)
    nodes_per_panel: int = Field(default=16, ge=2, le=64)

    log_level: str = Field(default="WARNING")


@lru_cache
def get_settings() -> Settings:
    """Get cached settings instance."""
    return Settings()
