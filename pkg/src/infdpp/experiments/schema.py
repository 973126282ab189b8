"""Experiment configuration and result records."""

from enum import StrEnum
from pathlib import Path
from typing import Any, Self

from pydantic import BaseModel, ConfigDict, Field, model_validator

from infdpp.models import KernelFamily

SCHEMA_VERSION = "1.0"

SAMPLING_COMMANDS = frozenset({"sample", "mc-check", "radial-mc"})


class OutputFormat(StrEnum):
    JSON = "json"
    CSV = "csv"


class ExperimentConfig(BaseModel):
    """Validated parameters of one experiment run."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    command: str
    # Kernel and ensemble parameters
    family: KernelFamily = KernelFamily.BESSEL_J
    s: float = Field(default=0.0, allow_inf_nan=False)
    n: tuple[int, ...] = ()
    N: int = Field(default=5, ge=1)
    x: float = Field(default=1.0, allow_inf_nan=False)
    y: float = Field(default=2.0, allow_inf_nan=False)
    b1: float = Field(default=0.0, gt=-1.0, lt=1.0)
    chain: tuple[float, ...] = ()
    radii: tuple[float, ...] = ()
    region: tuple[float, float] | None = None
    grid: str = "default"

    # Monte Carlo
    draws: int = Field(default=20_000, ge=1)
    seed: int | None = Field(default=None, ge=0, lt=2**64)
    workers: int = Field(default=1, ge=1)

    # Quadrature
    panels: int = Field(default=8, ge=1)
    nodes_per_panel: int = Field(default=16, ge=2, le=64)

    # Tolerance overrides (eigen_tau, angle_floor, rank_rtol, cond_limit, diag_switch)
    tolerances: dict[str, float] = Field(default_factory=dict)

    output: Path | None = None
    format: OutputFormat = OutputFormat.JSON

    @model_validator(mode="after")
    def _check(self) -> Self:
        if self.command in SAMPLING_COMMANDS and self.seed is None:
            raise ValueError(f"{self.command} requires --seed")
        if any(n < 1 for n in self.n):
            raise ValueError("matrix sizes n must be >= 1")
        if any(b <= a for a, b in zip(self.radii, self.radii[1:], strict=False)):
            raise ValueError("radii must be strictly increasing")
        chain = (self.b1, *self.chain)
        if any(b <= a for a, b in zip(chain, chain[1:], strict=False)):
            raise ValueError("chain must increase strictly from b1")
        if self.chain and self.chain[-1] >= 1.0:
            raise ValueError("chain must stay below u = 1")
        if self.region is not None and not self.region[0] < self.region[1]:
            raise ValueError(f"degenerate region {self.region}")
        unknown = set(self.tolerances) - {
            "eigen_tau",
            "angle_floor",
            "rank_rtol",
            "cond_limit",
            "diag_switch",
        }
        if unknown:
            raise ValueError(f"unknown tolerance overrides: {sorted(unknown)}")
        return self


class Check(BaseModel):
    """One invariant evaluated by a self-test."""

    model_config = ConfigDict(frozen=True)

    name: str
    value: float
    bound: float
    passed: bool


class ExperimentResult(BaseModel):
    """Machine-readable output of a run; ``rows`` feed the CSV format."""

    schema_version: str = SCHEMA_VERSION
    library_version: str
    command: str
    inputs: dict[str, Any]
    results: dict[str, Any] = Field(default_factory=dict)
    residuals: dict[str, float] = Field(default_factory=dict)
    rows: list[dict[str, Any]] = Field(default_factory=list)
    checks: list[Check] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)


def result_schema() -> dict[str, Any]:
    """JSON schema of ``ExperimentResult``, tagged with the schema version."""
    schema = ExperimentResult.model_json_schema()
    schema["$id"] = f"infdpp/experiment-result/{SCHEMA_VERSION}"
    return schema
