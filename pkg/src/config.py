import hashlib
import json
import logging
import os
from typing import Any, Dict, List, Optional

from dotenv import load_dotenv
from pydantic import BaseModel, Field, ValidationError, validator

from src.errors import ConfigError

logger = logging.getLogger(__name__)

ENV_PREFIX = "SHEET_"


class GridConfig(BaseModel):
    d: int = Field(3, ge=2, le=3)
    H: float = Field(20.0, gt=10.0)
    Nh: int = Field(32, ge=4)
    Nv: int = Field(48, ge=4)
    stretch: float = Field(5.0, ge=0.0)


class EosConfig(BaseModel):
    gamma: float = Field(5.0 / 3.0, gt=1.0)
    cv: float = Field(1.0, gt=0.0)
    eps: float = Field(1.0, gt=0.0)
    rho_floor: float = Field(0.1, gt=0.0)


class StabilityConfig(BaseModel):
    delta0: float = Field(0.1, gt=0.0)
    delta1: float = Field(1.0, gt=0.0)
    allow_wide_delta0: bool = False
    sweep_directions: int = Field(3600, ge=8)


class CutoffConfig(BaseModel):
    # ε1 < ε2 is deliberately not validated here; `verify` reports it instead
    eps1: float = Field(0.1, gt=0.0)
    eps2: float = Field(0.125, gt=0.0)


class SolverConfig(BaseModel):
    tol: float = Field(1e-10, gt=0.0)
    accept: float = Field(1e-8, gt=0.0)
    maxiter: int = Field(500, ge=1)
    restart: int = Field(50, ge=1)


class EvolutionConfig(BaseModel):
    sigma: float = Field(0.1, ge=0.0)
    rho_plus: float = Field(1.0, gt=0.0)
    rho_minus: float = Field(1.0, gt=0.0)
    v_plus: List[float] = Field(default_factory=lambda: [0.0, 0.0])
    v_minus: List[float] = Field(default_factory=lambda: [0.0, 0.0])
    b_plus: List[float] = Field(default_factory=lambda: [0.0, 0.0])
    b_minus: List[float] = Field(default_factory=lambda: [0.0, 0.0])
    mode: int = Field(4, ge=1)
    amplitude: float = Field(1e-3, gt=0.0)
    periods: float = Field(10.0, gt=0.0)
    cfl: float = Field(0.5, gt=0.0, le=1.0)
    blowup_factor: float = Field(1e3, gt=1.0)
    # fixed step; by default the stepper picks min(CFL limit, period/64)
    dt: Optional[float] = Field(None, gt=0.0)
    Nh: int = Field(32, ge=8)

    @validator("v_plus", "v_minus", "b_plus", "b_minus", pre=True)
    def as_pair(cls, v):
        if isinstance(v, str):
            v = [float(x) for x in v.split(",") if x.strip()]
        v = [float(x) for x in v]
        if len(v) == 1:
            v = v + [0.0]
        if len(v) != 2:
            raise ValueError(f"expected 1 or 2 tangential components, got {len(v)}")
        return v


class RunConfig(BaseModel):
    grid: GridConfig = Field(default_factory=GridConfig)
    eos: EosConfig = Field(default_factory=EosConfig)
    stability: StabilityConfig = Field(default_factory=StabilityConfig)
    cutoffs: CutoffConfig = Field(default_factory=CutoffConfig)
    solver: SolverConfig = Field(default_factory=SolverConfig)
    evolution: EvolutionConfig = Field(default_factory=EvolutionConfig)
    seed: int = 1234
    jobs: int = Field(1, ge=1)
    output_dir: str = "data/processed"
    trace_csv: Optional[str] = None
    psi_amplitude: float = Field(0.1, ge=0.0)
    f_mode: int = Field(3, ge=1)
    sobolev_s: float = Field(4.0, gt=1.0)
    samples: int = Field(1000, ge=1)
    eps_sweep: List[float] = Field(default_factory=lambda: [1.0, 0.5, 0.25])

    @validator("eps_sweep", pre=True)
    def sweep_positive(cls, v):
        if isinstance(v, str):
            v = [float(x) for x in v.split(",") if x.strip()]
        v = [float(x) for x in v]
        if not v or any(e <= 0 for e in v):
            raise ValueError("the ε sweep must be non-empty with positive entries")
        return v


def _field_name(model, key: str) -> Optional[str]:
    """Case-insensitive lookup, so SHEET_GRID__NH reaches GridConfig.Nh."""
    for name in model.model_fields:
        if name.lower() == key:
            return name
    return None


def _env_overrides() -> Dict[str, Dict[str, str]]:
    """Collects SHEET_<SECTION>__<FIELD> and SHEET_<FIELD> variables."""
    overrides: Dict[str, Any] = {}
    for key, value in os.environ.items():
        if not key.startswith(ENV_PREFIX) or key == "SHEET_LOG_DIR":
            continue
        path = key[len(ENV_PREFIX):].lower().split("__")
        section = _field_name(RunConfig, path[0])
        if section is None:
            logger.warning(f"Ignoring unknown configuration variable {key}")
            continue
        if len(path) == 1:
            overrides[section] = value
        elif len(path) == 2:
            sub = RunConfig.model_fields[section].annotation
            name = _field_name(sub, path[1]) if isinstance(sub, type) and issubclass(sub, BaseModel) else None
            if name is None:
                logger.warning(f"Ignoring unknown configuration variable {key}")
                continue
            overrides.setdefault(section, {})[name] = value
    return overrides


def _merge(base: Dict[str, Any], extra: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_config(path: Optional[str] = None, **overrides) -> RunConfig:
    """
    Builds a RunConfig from defaults, an optional JSON file, the environment (.env honoured)
    and keyword overrides, in that order of precedence.
    """
    load_dotenv()
    raw: Dict[str, Any] = {}
    if path:
        if not os.path.exists(path):
            raise ConfigError(f"Config file not found: {path}")
        try:
            with open(path, "r", encoding="utf-8") as f:
                raw = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"Config file {path} is not valid JSON: {e}")
    raw = _merge(raw, _env_overrides())
    raw = _merge(raw, {k: v for k, v in overrides.items() if v is not None})
    try:
        config = RunConfig(**raw)
    except ValidationError as e:
        raise ConfigError(f"Invalid configuration: {e}")
    logger.debug(f"Loaded configuration (hash {config_hash(config)[:12]})")
    return config


def config_hash(config: RunConfig) -> str:
    canonical = json.dumps(config.model_dump(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
