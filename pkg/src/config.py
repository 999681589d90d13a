"""
Configuration management using Pydantic Settings.
Loads from environment variables (prefix FWCL_) and YAML files.
"""

import json
from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from .errors import ModelFileError


class LinalgConfig(BaseSettings):
    """Dense kernel tolerances."""

    confluence_threshold: float = Field(default=1e-4, description="|a-b|*t below which phi1/phi2 use series")
    hermitian_tol: float = Field(default=1e-12, description="Relative Hermitian symmetry tolerance")
    overflow_guard: float = Field(default=1e6, description="Reject t*||G|| above this in exp_generator")
    chunk_rows: int = Field(default=256, ge=1, description="Row chunk for dense phi2 kernels")


class GridPolicy(BaseSettings):
    """Asymptotic grid Y and background density."""

    dy: float = Field(default=0.05, gt=0.0, description="Uniform asymptotic spacing")
    extent: float = Field(default=200.0, gt=0.0, description="Asymptotic extent K (|y| <= K)")
    h_bg: Optional[float] = Field(default=None, description="Background spacing; None = match N_Y")
    strict_extent: bool = Field(default=False, description="Raise GridConflict if lambda^2 K exceeds the neighbourhood")


class DaviesConfig(BaseSettings):
    """Davies generator routes."""

    pv_tol: float = Field(default=1e-8, description="Absolute tolerance of the PV quadrature")
    pv_max_depth: int = Field(default=12, description="Maximum panel halvings")
    epsilons: list[float] = Field(default_factory=lambda: [0.1, 0.05, 0.025])
    z: tuple[float, float] = Field(default=(0.0, 1.0), description="Spectral parameter [re, im]")
    z_check: tuple[float, float] = Field(default=(1.0, 1.0), description="Second z for independence check")
    horizon: float = Field(default=1e3, description="Dynamic-route horizon T")
    adapt_lambda: float = Field(default=0.09, description="Coupling used to build the fine grid for routes")
    extrapolation_tol: float = Field(default=1e-3, description="Stationary extrapolation tolerance")
    route_tol: float = Field(default=1e-10, description="Condition residual tolerance for closed form")


class DilationConfig(BaseSettings):
    """Dilation diagnostics."""

    k_values: list[float] = Field(default_factory=lambda: [50.0, 100.0, 200.0])
    times: list[float] = Field(default_factory=lambda: [0.5, 1.0, 2.0])
    fd_step: float = Field(default=1e-3, description="Finite-difference step for Z+/Z- checks")
    fd_tol: float = Field(default=1e-2, description="Tolerance of the derivative checks")
    condition_tol: float = Field(default=1e-8, description="build_system condition residual bound")
    defective_cond: float = Field(default=1e8, description="Eigenvector condition number fallback threshold")
    gl_nodes_per_unit: int = Field(default=40, description="Gauss-Legendre nodes per unit time")
    feshbach_tol: float = Field(default=1e-9, description="Direct vs Feshbach agreement")
    rank_tol: float = Field(default=1e-10, description="Relative singular value cutoff for minimality")
    identity_tol: float = Field(default=1e-9, description="Unitarity and group-law tolerance")
    scaling_lambdas: list[float] = Field(default_factory=lambda: [1.0, 2.0 ** 0.5])


class ValidationConfig(BaseSettings):
    """Assumption checks."""

    samples: int = Field(default=400, ge=100, description="Samples per check")
    tol: float = Field(default=1e-6, description="Relative slack on the coupling bound")
    holder_ratio: float = Field(default=100.0, description="Allowed growth of the Hoelder quotient")


class WCLConfig(BaseSettings):
    """Weak coupling limit experiments."""

    t_points: int = Field(default=21, ge=20, description="Samples for sup-over-t")
    probe_widths: list[float] = Field(default_factory=lambda: [0.5, 1.0, 2.0])
    probe_seeds: list[int] = Field(default_factory=lambda: [0])


class LoggingConfig(BaseSettings):
    """Logging and output configuration."""

    output_dir: str = Field(default="runs", description="Directory for reports")
    level: str = Field(default="INFO", description="Log level")
    record_timing: bool = Field(default=False, description="Write wall time into sweep CSV rows")


class Config(BaseSettings):
    """Main configuration class."""

    model_config = SettingsConfigDict(
        env_prefix="FWCL_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="allow"
    )

    environment: str = Field(default="development", description="Environment name")
    jobs: Optional[int] = Field(default=None, description="Worker threads; None = logical cores")
    seed: int = Field(default=0, description="Base seed for random probes")

    # Sub-configurations
    linalg: LinalgConfig = Field(default_factory=LinalgConfig)
    grid: GridPolicy = Field(default_factory=GridPolicy)
    davies: DaviesConfig = Field(default_factory=DaviesConfig)
    dilation: DilationConfig = Field(default_factory=DilationConfig)
    validation: ValidationConfig = Field(default_factory=ValidationConfig)
    wcl: WCLConfig = Field(default_factory=WCLConfig)
    logging: LoggingConfig = Field(default_factory=LoggingConfig)

    @classmethod
    def from_yaml(cls, yaml_path: str | Path) -> "Config":
        """Load configuration from a YAML file."""
        return cls(**_load_with_base(Path(yaml_path)))


def _merge(base: dict, override: dict) -> dict:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def _load_with_base(path: Path) -> dict:
    """Read YAML or JSON, resolving `_base` inheritance relative to the file."""
    if not path.exists():
        raise FileNotFoundError(f"Config file not found: {path}")

    with open(path, "r") as f:
        if path.suffix == ".json":
            data = json.load(f)
        else:
            data = yaml.safe_load(f) or {}

    if not isinstance(data, dict):
        raise ModelFileError(f"Config file {path} must contain a mapping")

    if "_base" in data:
        base_path = path.parent / data.pop("_base")
        return _merge(_load_with_base(base_path), data)

    return data


# ============================================================================
# Sweep configuration
# ============================================================================

Experiment = Literal[
    "reduced_resolvent",
    "reduced_dynamics",
    "extended_resolvent",
    "reduced_offsector",
    "extended_offsector",
    "laplace_averaged",
    "extended_dynamics",
    "interaction_picture",
    "interaction_auxiliary",
    "weak_uniform",
]


class SweepConfig(BaseModel):
    """One lambda sweep of a limit experiment."""

    experiment: Experiment
    model: str = Field(default="builtin:lorentzian", description="builtin:name or model file path")
    lambdas: list[float] = Field(..., min_length=1, description="Couplings, sorted descending on load")
    z: list[tuple[float, float]] = Field(default_factory=lambda: [(0.0, 1.0)])
    t: list[float] = Field(default_factory=lambda: [1.0])
    T: float = Field(default=1.0, gt=0.0, description="Horizon for sup-over-t experiments")
    t_points: Optional[int] = Field(default=None, ge=20, description="Samples for sup-over-t; default wcl.t_points")
    probes: list[str] = Field(
        default_factory=lambda: ["small", "gaussian", "random"],
        description="Probe kinds for vector experiments",
    )
    probe_seeds: Optional[list[int]] = Field(default=None, description="Random probe seeds; default wcl.probe_seeds")
    eigenvalue: Optional[float] = Field(default=None, description="Reference eigenvalue; default lowest")
    k_max: Optional[float] = Field(default=None, description="Cutoff for e^{-itZ_k}; default extent")
    grid: GridPolicy = Field(default_factory=GridPolicy)
    tolerances: dict[str, float] = Field(default_factory=dict)
    output: str = Field(default="runs/sweep", description="Output directory")

    @field_validator("lambdas")
    @classmethod
    def validate_lambdas(cls, v):
        if any(lam <= 0 for lam in v):
            raise ValueError("lambdas must be positive")
        if len(set(v)) != len(v):
            raise ValueError("lambdas must be distinct")
        return sorted(v, reverse=True)

    @field_validator("z")
    @classmethod
    def validate_z(cls, v):
        for re, im in v:
            if im <= 0:
                raise ValueError(f"z = {re}+{im}i must have positive imaginary part")
        return v

    @property
    def z_values(self) -> list[complex]:
        return [complex(re, im) for re, im in self.z]

    @classmethod
    def from_file(cls, path: str | Path) -> "SweepConfig":
        """Load a sweep config from JSON or YAML (with `_base` support)."""
        return cls(**_load_with_base(Path(path)))


# Global config instance
_config: Optional[Config] = None


def get_config(config_path: Optional[str | Path] = None) -> Config:
    """
    Get or initialize the global config.

    Args:
        config_path: Optional path to YAML config file. If not provided,
                     uses configs/default.yaml or creates from env vars.
    """
    global _config

    if _config is not None and config_path is None:
        return _config

    if config_path:
        _config = Config.from_yaml(config_path)
    else:
        default_path = Path("configs/default.yaml")
        if default_path.exists():
            _config = Config.from_yaml(default_path)
        else:
            _config = Config()

    return _config


def reset_config():
    """Reset the global config (useful for testing)."""
    global _config
    _config = None
