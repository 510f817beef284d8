"""
Settings - process settings and run configuration

Settings holds process-level defaults (cache location, reference-table
size). RunConfig is the validated configuration of one command, read from a
flat YAML key-value file and command-line overrides.
"""

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from src.engines.diagnostics import choose_m, parse_rule
from src.errors import ConfigError, DomainError
from src.models.diagnostic import DiagnosticConfig, Standardization
from src.models.measures import DiscrepancyMeasure
from src.models.scenario import ScenarioSpec, build_scenario


PUBLISHED_TABLE_SEED = 20250901


def get_base_path() -> Path:
    """Project root"""
    return Path(__file__).parent.parent.parent


@dataclass
class Settings:
    """
    Process settings

    BOOTDIAG_CACHE_DIR is the only environment variable read.
    """

    base_path: Path = field(default_factory=get_base_path)
    cache_dir: Optional[Path] = None

    # Shipped reference tables
    table_m_ref: int = 10_000
    table_reps: int = 200_000
    table_seed: int = PUBLISHED_TABLE_SEED

    def __post_init__(self):
        if self.cache_dir is None:
            cache_env = os.getenv("BOOTDIAG_CACHE_DIR")
            if cache_env:
                self.cache_dir = Path(cache_env)
            else:
                self.cache_dir = self.base_path / "data" / "tables"
        self.cache_dir = Path(self.cache_dir)

    def to_dict(self) -> dict:
        return {
            "cache_dir": str(self.cache_dir),
            "table_m_ref": self.table_m_ref,
            "table_reps": self.table_reps,
            "table_seed": self.table_seed,
        }

    def __repr__(self) -> str:
        return f"Settings(cache={self.cache_dir}, m_ref={self.table_m_ref}, reps={self.table_reps})"


# ============================================================
# Run configuration
# ============================================================

Command = Literal[
    "simulate", "diagnose", "size-power", "fan-chart", "posttest", "external", "build-tables"
]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


# Scenario fields each family takes
FAMILY_PARAMS = {
    "iv": ("k", "rho_uv", "strength", "coefficients", "beta", "scheme"),
    "ar1": ("regime", "alpha0", "c", "y0", "scheme"),
    "boundary": ("regime", "theta0", "c"),
    "heavytail": ("regime", "innovation", "df", "tail_index", "theta0", "scheme"),
    "delta": ("regime", "theta0", "c"),
}


class ScenarioSection(_Section):
    """Scenario family and parameters; parameters a family does not use are ignored"""
    name: Literal["iv", "ar1", "boundary", "heavytail", "delta"] = "boundary"
    n: int = Field(default=400, ge=8)
    regime: Optional[str] = None
    scheme: Optional[str] = None
    # IV
    k: int = Field(default=1, ge=1)
    rho_uv: float = Field(default=0.9, gt=0.0, lt=1.0)
    strength: Literal["strong", "weak"] = "strong"
    coefficients: Optional[List[float]] = None
    beta: float = 0.0
    # AR(1)
    alpha0: float = 0.5
    y0: float = 0.0
    # boundary / delta / heavy tail
    theta0: Optional[float] = None
    c: float = 0.0
    innovation: Literal["gaussian", "student_t"] = "student_t"
    df: float = 5.0
    tail_index: float = 1.5

    def to_spec(self, n: Optional[int] = None) -> ScenarioSpec:
        params: Dict[str, Any] = {"n": n if n is not None else self.n}
        for key in FAMILY_PARAMS[self.name]:
            value = getattr(self, key)
            if value is None:
                continue
            params[key] = value
        if self.name == "iv" and "coefficients" not in params:
            params["coefficients"] = [1.0] + [0.0] * (self.k - 1)
        try:
            return build_scenario(self.name, **params)
        except (DomainError, ValueError) as e:
            raise ConfigError(str(e), key="scenario") from None


class DiagnosticSection(_Section):
    m: int = Field(default=20, ge=1)
    m_rule: Optional[str] = None
    measure: str = "ks"
    standardization: Literal["none", "scale", "location_scale"] = "none"
    prepass_M: Optional[int] = Field(default=None, ge=1)
    level_alpha: float = Field(default=0.05, gt=0.0, lt=1.0)

    @field_validator("measure")
    @classmethod
    def _check_measure(cls, value: str) -> str:
        try:
            DiscrepancyMeasure.parse(value)
        except (DomainError, ValueError) as e:
            raise ValueError(str(e)) from None
        return value

    @field_validator("m_rule")
    @classmethod
    def _check_rule(cls, value: Optional[str]) -> Optional[str]:
        if value is not None:
            try:
                parse_rule(value)
            except DomainError as e:
                raise ValueError(str(e)) from None
        return value

    def resolve_m(self, n: int) -> int:
        if self.m_rule is None:
            return self.m
        return choose_m(n, parse_rule(self.m_rule))

    def to_config(self, n: int, m: Optional[int] = None) -> DiagnosticConfig:
        try:
            return DiagnosticConfig(
                m=m if m is not None else self.resolve_m(n),
                measure=DiscrepancyMeasure.parse(self.measure),
                standardization=Standardization(self.standardization),
                prepass_M=self.prepass_M,
                level_alpha=self.level_alpha,
            )
        except DomainError as e:
            raise ConfigError(str(e), key="diagnostic") from None


class PlanSection(_Section):
    R: int = Field(default=500, ge=1)
    K: int = Field(default=1, ge=1)
    alphas: List[float] = Field(default_factory=lambda: [0.01, 0.05, 0.10])
    n_grid: List[int] = Field(default_factory=list)
    m_grid: List[int] = Field(default_factory=list)
    outputs: List[Literal["size_power", "profile", "band"]] = Field(
        default_factory=lambda: ["size_power"], min_length=1
    )

    @field_validator("alphas")
    @classmethod
    def _check_alphas(cls, value: List[float]) -> List[float]:
        if not value or any(not 0.0 < a < 1.0 for a in value):
            raise ValueError("every alpha must lie in (0, 1)")
        return value

    @field_validator("n_grid")
    @classmethod
    def _check_n_grid(cls, value: List[int]) -> List[int]:
        if any(n < 8 for n in value):
            raise ValueError("every n must be >= 8")
        return value

    @field_validator("m_grid")
    @classmethod
    def _check_m_grid(cls, value: List[int]) -> List[int]:
        if any(m < 1 for m in value):
            raise ValueError("every m must be >= 1")
        return value


class FanSection(_Section):
    M: int = Field(default=200, ge=100)
    B: int = Field(default=2_000, ge=1_000)
    x_min: float = -3.0
    x_max: float = 3.0
    x_points: int = Field(default=61, ge=2)
    preset: Optional[Literal["figure"]] = None

    def x_grid(self) -> List[float]:
        step = (self.x_max - self.x_min) / (self.x_points - 1)
        return [self.x_min + i * step for i in range(self.x_points)]


class PosttestSection(_Section):
    statistic: Optional[Literal["iv_t", "ar1_t", "mean_t"]] = None
    threshold: Optional[float] = None
    contrast: bool = False
    f_threshold: float = Field(default=10.0, gt=0.0)


class ExternalSection(_Section):
    pool: Optional[Path] = None
    with_replacement: bool = False
    label: str = "external"


class TablesSection(_Section):
    m_ref: Optional[int] = Field(default=None, ge=1)
    reps: Optional[int] = Field(default=None, ge=1)
    seed: Optional[int] = Field(default=None, ge=0)
    measures: List[str] = Field(default_factory=lambda: ["cvm", "ad"])
    build: bool = True

    @field_validator("measures")
    @classmethod
    def _check_measures(cls, value: List[str]) -> List[str]:
        for text in value:
            try:
                DiscrepancyMeasure.parse(text)
            except (DomainError, ValueError) as e:
                raise ValueError(str(e)) from None
        return value


class RunConfig(_Section):
    """Validated configuration of one command"""
    command: Command = "diagnose"
    seed: int = Field(default=1, ge=0, le=2**64 - 1)
    workers: int = Field(default=1, ge=1)
    out: Path = Path("results")
    scenario: ScenarioSection = Field(default_factory=ScenarioSection)
    diagnostic: DiagnosticSection = Field(default_factory=DiagnosticSection)
    plan: PlanSection = Field(default_factory=PlanSection)
    fan: FanSection = Field(default_factory=FanSection)
    posttest: PosttestSection = Field(default_factory=PosttestSection)
    external: ExternalSection = Field(default_factory=ExternalSection)
    tables: TablesSection = Field(default_factory=TablesSection)
    # "key=value" for every flag that replaced a file value
    overrides: List[str] = Field(default_factory=list)

    def echo(self) -> Dict[str, Any]:
        return self.model_dump(mode="json")


# ============================================================
# Parsing
# ============================================================

SHORTHAND = {
    "scenario": "scenario.name",
    "n": "scenario.n",
    "m": "diagnostic.m",
    "measure": "diagnostic.measure",
    "level_alpha": "diagnostic.level_alpha",
    "R": "plan.R",
    "K": "plan.K",
}
TOP_LEVEL = {"command", "seed", "workers", "out"}
SECTIONS = {"scenario", "diagnostic", "plan", "fan", "posttest", "external", "tables"}


def _canonical_key(key: str) -> str:
    key = str(key).strip()
    if key in SHORTHAND:
        return SHORTHAND[key]
    if key in TOP_LEVEL:
        return key
    section, dot, rest = key.partition(".")
    if not dot or section not in SECTIONS or not rest or "." in rest:
        raise ConfigError("unknown configuration key", key=key)
    return key


def _nest(flat: Dict[str, Any]) -> Dict[str, Any]:
    nested: Dict[str, Any] = {}
    for key, value in flat.items():
        section, dot, rest = key.partition(".")
        if dot:
            nested.setdefault(section, {})[rest] = value
        else:
            nested[key] = value
    return nested


def _load_file(path: Path) -> Dict[str, Any]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config file: {e}", key=str(path)) from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError(f"invalid YAML: {e}", key=str(path)) from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError("config file must be a flat key-value mapping", key=str(path))
    flat = {}
    for key, value in data.items():
        if isinstance(value, dict):
            raise ConfigError("nested mappings are not allowed; use dotted keys", key=str(key))
        flat[_canonical_key(key)] = value
    return flat


def parse_override(text: str) -> Tuple[str, Any]:
    """'key=value' with the value read as a YAML scalar or list"""
    key, eq, raw = text.partition("=")
    if not eq:
        raise ConfigError(f"override must look like key=value, got '{text}'", key=text)
    try:
        value = yaml.safe_load(raw) if raw.strip() else None
    except yaml.YAMLError:
        value = raw
    return _canonical_key(key), value


def parse_config(
    path: Optional[Path] = None,
    overrides: Optional[List[Tuple[str, Any]]] = None,
) -> RunConfig:
    """
    Build a RunConfig from an optional file and flag overrides

    Flags are applied last and win over file keys; each recorded in
    RunConfig.overrides. Errors name the offending key path.
    """
    flat = _load_file(path) if path is not None else {}
    recorded = []
    for key, value in overrides or []:
        canonical = _canonical_key(key)
        if canonical in flat and flat[canonical] != value:
            recorded.append(f"{canonical}={value!r} (file: {flat[canonical]!r})")
        else:
            recorded.append(f"{canonical}={value!r}")
        flat[canonical] = value

    nested = _nest(flat)
    nested["overrides"] = recorded
    try:
        config = RunConfig.model_validate(nested)
    except ValidationError as e:
        first = e.errors()[0]
        key = ".".join(str(part) for part in first["loc"])
        raise ConfigError(first["msg"], key=key) from None

    # family-specific invariants surface here with their key path
    config.scenario.to_spec()
    config.diagnostic.to_config(config.scenario.n)
    return config
