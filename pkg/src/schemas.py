"""
Pydantic schemas for model files and machine-readable reports.
Complex matrices are stored as nested rows of [re, im] pairs.
"""

import math
from typing import Any, Literal, Optional, Union

from pydantic import BaseModel, Field, field_validator, model_validator

ComplexPair = tuple[float, float]
MatrixData = list[list[ComplexPair]]


def _parse_endpoint(value: Any) -> float:
    if value is None:
        raise ValueError("interval endpoint may not be null; use '-inf' or 'inf'")
    if isinstance(value, str):
        text = value.strip().lower()
        if text in {"inf", "+inf", "infinity", "+infinity"}:
            return math.inf
        if text in {"-inf", "-infinity"}:
            return -math.inf
        return float(text)
    return float(value)


# ============================================================================
# Model File Schemas
# ============================================================================

class SmallSpec(BaseModel):
    """Small-system matrix E."""

    E: MatrixData = Field(..., description="Hermitian matrix as rows of [re, im] pairs")

    @field_validator("E")
    @classmethod
    def validate_square(cls, v):
        if not v or any(len(row) != len(v) for row in v):
            raise ValueError("E must be a non-empty square matrix")
        return v


class CellSpec(BaseModel):
    """One cell of the spectral partition."""

    interval: tuple[float, float] = Field(..., description="[a, b) with +-inf allowed")
    fiber_dim: Optional[int] = Field(..., ge=0, description="Fiber dimension; 'inf' maps to None")

    @field_validator("interval", mode="before")
    @classmethod
    def parse_interval(cls, v):
        if not isinstance(v, (list, tuple)) or len(v) != 2:
            raise ValueError("interval must be [a, b]")
        a, b = (_parse_endpoint(x) for x in v)
        if not a < b:
            raise ValueError(f"interval [{a}, {b}) is empty")
        return (a, b)

    @field_validator("fiber_dim", mode="before")
    @classmethod
    def parse_fiber(cls, v):
        if isinstance(v, str) and v.strip().lower() in {"inf", "infinity"}:
            return None
        return v


class PartitionSpec(BaseModel):
    cells: list[CellSpec] = Field(..., min_length=1)


class TableSample(BaseModel):
    """One tabulated coupling sample."""

    x: float
    matrix: MatrixData


class CouplingSpec(BaseModel):
    """Coupling given as a named family or as a table."""

    family: Optional[str] = Field(default=None, description="Built-in profile name")
    params: dict[str, float] = Field(default_factory=dict)
    amplitudes: Optional[list[MatrixData]] = Field(
        default=None, description="Per-cell fiber_dim x dim E amplitude matrices"
    )
    table: Optional[list[TableSample]] = Field(default=None)
    interpolation: Literal["linear"] = "linear"
    bound: Optional[float] = Field(default=None, description="Override for sup ||v||")

    @model_validator(mode="after")
    def check_source(self):
        if (self.family is None) == (self.table is None):
            raise ValueError("coupling needs exactly one of 'family' or 'table'")
        return self


class NeighborhoodSpec(BaseModel):
    eigenvalue: float
    interval: tuple[float, float]


class ModelFile(BaseModel):
    """On-disk model definition."""

    name: str = Field(default="custom")
    small: SmallSpec
    partition: PartitionSpec
    coupling: CouplingSpec
    window: tuple[float, float]
    neighborhoods: Optional[list[NeighborhoodSpec]] = None
    holder_delta: float = Field(default=1.0, gt=0.0, le=1.0)

    @field_validator("window")
    @classmethod
    def validate_window(cls, v):
        a, b = v
        if not (math.isfinite(a) and math.isfinite(b) and a < b):
            raise ValueError("window must be a finite interval [x_min, x_max]")
        return v


# ============================================================================
# Validation Schemas
# ============================================================================

class AssumptionCheck(BaseModel):
    """A single assumption check."""

    assumption: Literal["A1", "A2", "A3"]
    subject: str
    passed: bool
    detail: str = ""
    value: Optional[float] = None


class ValidationReport(BaseModel):
    """Result of checking A1-A3 on a model."""

    model: str
    checks: list[AssumptionCheck]
    holder_constants: dict[str, float] = Field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self, assumption: Optional[str] = None) -> list[AssumptionCheck]:
        return [c for c in self.checks if not c.passed and (assumption is None or c.assumption == assumption)]


# ============================================================================
# Davies Schemas
# ============================================================================

class DaviesRouteResult(BaseModel):
    """Gamma from one route."""

    route: Literal["closed", "stationary", "dynamic"]
    blocks: dict[str, MatrixData]
    total: MatrixData
    dissipativity: float = Field(..., description="Largest eigenvalue of (Gamma - Gamma*)/2i")
    condition_residual: float = Field(..., description="||(Gamma - Gamma*)/2i + pi nu* nu||")
    diagnostics: dict[str, Any] = Field(default_factory=dict)


class DaviesReport(BaseModel):
    """All requested routes for one model."""

    model: str
    nu: dict[str, MatrixData]
    routes: list[DaviesRouteResult]
    cross_differences: dict[str, float] = Field(default_factory=dict)
    failures: dict[str, str] = Field(default_factory=dict)


# ============================================================================
# Dilation Schemas
# ============================================================================

class CutoffRow(BaseModel):
    k: float
    error: float
    ratio: Optional[float] = None


class MinimalityReport(BaseModel):
    minimal: bool
    rank: int
    fiber_dim: int
    singular_values: list[float]


class IdentityCheck(BaseModel):
    """Named identity residual against its tolerance."""

    name: str
    residual: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return math.isfinite(self.residual) and self.residual <= self.tolerance


class DilationReport(BaseModel):
    model: str
    cutoff_table: list[CutoffRow]
    identities: list[IdentityCheck]
    minimality: MinimalityReport
    diagnostics: dict[str, float] = Field(default_factory=dict, description="Informational values without a pass threshold")
    failures: list[str] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures and all(c.passed for c in self.identities)


# ============================================================================
# Sweep Schemas
# ============================================================================

class SweepRecord(BaseModel):
    """One CSV row."""

    experiment: str
    lam: float = Field(..., alias="lambda")
    probe_id: str
    probe_kind: str
    error: float = Field(..., ge=0.0)
    grid_fingerprint: str
    seconds: float = 0.0

    model_config = {"populate_by_name": True}

    @field_validator("error")
    @classmethod
    def validate_finite(cls, v):
        if not math.isfinite(v):
            raise ValueError("error must be finite")
        return v


class FailedPoint(BaseModel):
    lam: float
    probe_id: Optional[str] = None
    reason: str


class FitResult(BaseModel):
    """Least-squares slope of log(error) against log(lambda)."""

    probe_id: str
    fitted_order: Optional[float] = None
    residual: Optional[float] = None
    points: int
    note: str = ""


class ConvergenceReport(BaseModel):
    experiment: str
    model: str
    lambdas: list[float]
    records: list[SweepRecord]
    fits: list[FitResult]
    failures: list[FailedPoint] = Field(default_factory=list)
    metadata: dict[str, Any] = Field(default_factory=dict)

    @field_validator("lambdas")
    @classmethod
    def validate_decreasing(cls, v):
        if any(a <= b for a, b in zip(v, v[1:])):
            raise ValueError("lambdas must be strictly decreasing")
        return v

    def errors_for(self, probe_id: str) -> list[float]:
        """Errors of one probe in lambda order."""
        return [r.error for r in self.records if r.probe_id == probe_id]


class RunManifest(BaseModel):
    """Provenance of one CLI invocation."""

    command: Literal["validate", "davies", "dilation", "sweep"]
    config_hash: str
    tool_version: str
    started: str
    finished: str
    wall_seconds: float
    outputs: list[str]
    failed: list[FailedPoint] = Field(default_factory=list)
    notes: list[str] = Field(default_factory=list)


Report = Union[ValidationReport, DaviesReport, DilationReport, ConvergenceReport, RunManifest]
