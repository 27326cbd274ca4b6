from dotenv import load_dotenv
from pathlib import Path
from typing import Any, Dict, Literal, Mapping, Optional, Tuple
import hashlib
import json
import os

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from Errors import ConfigError

ENV_PREFIX = "HYPERREC_"
# Run-level overrides: HYPERREC__SEED, HYPERREC__COMPLETION__RHO, ...
RUN_ENV_PREFIX = "HYPERREC__"
SEEDED_STAGES = ("split", "completion", "walk", "train", "synth")


class Config:
    """Centralized configuration loader."""

    def __init__(self):
        # Load environment variables once
        load_dotenv()

        self.LOG_LEVEL = os.getenv(f"{ENV_PREFIX}LOG_LEVEL", "INFO").upper()
        self.THREADS = int(os.getenv(f"{ENV_PREFIX}THREADS", "1"))
        self.OUTPUT_DIR = os.getenv(f"{ENV_PREFIX}OUTPUT_DIR", "runs/latest")

        # float64 for tests and gradient checks, float32 allowed for large runs
        self.PRECISION = os.getenv(f"{ENV_PREFIX}PRECISION", "float64")

    def as_dict(self):
        return {
            "LOG_LEVEL": self.LOG_LEVEL,
            "THREADS": self.THREADS,
            "OUTPUT_DIR": self.OUTPUT_DIR,
            "PRECISION": self.PRECISION,
        }


# Create a singleton instance so it's only loaded once
config = Config()


def _split_csv(value):
    if isinstance(value, str):
        return tuple(part.strip() for part in value.split(",") if part.strip())
    return value


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class PathsSection(_Section):
    interactions: Optional[Path] = None
    categories: Optional[Path] = None
    aux: Optional[Path] = None
    output_dir: Path = Field(default_factory=lambda: Path(config.OUTPUT_DIR))


class IngestSection(_Section):
    multi_category: bool = False


class SplitSection(_Section):
    ratios: Tuple[float, float, float] = (0.8, 0.1, 0.1)
    seed: Optional[int] = None

    @field_validator("ratios", mode="before")
    @classmethod
    def _parse_ratios(cls, value):
        return _split_csv(value)

    @field_validator("ratios")
    @classmethod
    def _check_ratios(cls, value):
        if any(r <= 0 for r in value):
            raise ValueError(f"split ratios must be positive, got {value}")
        if abs(sum(value) - 1.0) > 1e-9:
            raise ValueError(f"split ratios must sum to 1, got {sum(value)}")
        return value


class CompletionSection(_Section):
    # 0 disables completion entirely
    rho: float = Field(0.05, ge=0.0, le=1.0)
    k_clusters: Optional[int] = Field(None, ge=1)
    seed: Optional[int] = None
    standardize_aux: bool = False
    kmeans_restarts: int = Field(1, ge=1)


class WalkSection(_Section):
    views: int = Field(5, ge=1)
    steps: int = Field(15, ge=1)
    restart_prob: float = Field(0.1, ge=0.0, lt=1.0)
    min_nodes: int = Field(5, ge=1)
    max_attempts: Optional[int] = Field(None, ge=1)
    start_kind: Literal["any", "user"] = "any"
    resample_each_epoch: bool = False
    seed: Optional[int] = None


class ModelSection(_Section):
    dim: int = Field(64, ge=1)
    layers: int = Field(2, ge=0)
    precision: Literal["float64", "float32"] = Field(default_factory=lambda: config.PRECISION)


class TrainSection(_Section):
    learning_rate: float = Field(0.001, ge=0.0)
    reg: float = Field(1e-5, ge=0.0)
    epochs: int = Field(50, ge=1)
    batch_size: int = Field(1024, ge=1)
    negatives_per_positive: int = Field(1, ge=1)
    # None or 0 disables early stopping
    patience: Optional[int] = Field(10, ge=0)
    raw_logit_bpr: bool = False
    seed: Optional[int] = None


class EvalSection(_Section):
    ks: Tuple[int, ...] = (5, 10, 15, 20)
    standard_recall: bool = False
    per_user: bool = False
    early_stop_k: int = Field(10, ge=1)

    @field_validator("ks", mode="before")
    @classmethod
    def _parse_ks(cls, value):
        return _split_csv(value)

    @field_validator("ks")
    @classmethod
    def _check_ks(cls, value):
        if not value or any(k < 1 for k in value):
            raise ValueError(f"every K must be >= 1, got {value}")
        return tuple(sorted(set(value)))


class SynthSection(_Section):
    n_users: int = Field(200, ge=1)
    n_items: int = Field(300, ge=1)
    n_categories: int = Field(6, ge=1)
    n_clusters: int = Field(4, ge=1)
    density: float = Field(0.05, gt=0.0, le=1.0)
    concentration: float = Field(0.9, ge=0.0, le=1.0)
    seed: Optional[int] = None


class RunConfig(_Section):
    """Validated run configuration; every default matches the experimental protocol"""

    seed: int = 0
    threads: int = Field(default_factory=lambda: config.THREADS, ge=1)
    source: Literal["tsv", "synthetic"] = "tsv"
    repeats: int = Field(1, ge=1)
    paths: PathsSection = Field(default_factory=PathsSection)
    ingest: IngestSection = Field(default_factory=IngestSection)
    split: SplitSection = Field(default_factory=SplitSection)
    completion: CompletionSection = Field(default_factory=CompletionSection)
    walk: WalkSection = Field(default_factory=WalkSection)
    model: ModelSection = Field(default_factory=ModelSection)
    train: TrainSection = Field(default_factory=TrainSection)
    eval: EvalSection = Field(default_factory=EvalSection)
    synth: SynthSection = Field(default_factory=SynthSection)

    def stage_seeds(self) -> Dict[str, int]:
        """Explicit per-stage seeds win; the rest derive from the run seed"""
        derived = np.random.SeedSequence(self.seed).generate_state(len(SEEDED_STAGES))
        seeds = {}
        for stage, fallback in zip(SEEDED_STAGES, derived):
            explicit = getattr(self, stage).seed
            seeds[stage] = int(explicit) if explicit is not None else int(fallback)
        return seeds

    def fingerprint(self) -> str:
        """Hash of everything that shapes results; the output directory is not part of it"""
        canonical = json.dumps(self.model_dump(mode="json", exclude={"paths": {"output_dir"}}), sort_keys=True)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def flat(self) -> Dict[str, Any]:
        return flatten(self.model_dump(mode="json"))

    def derive(self, updates: Mapping[str, Any]) -> "RunConfig":
        """Copy with dotted-key updates applied and re-validated"""
        return build_run_config({**self.flat(), **dict(updates)})


def flatten(data: Mapping[str, Any], prefix: str = "") -> Dict[str, Any]:
    flat = {}
    for key, value in data.items():
        name = f"{prefix}{key}"
        if isinstance(value, Mapping):
            flat.update(flatten(value, f"{name}."))
        else:
            flat[name] = value
    return flat


def unflatten(flat: Mapping[str, Any]) -> Dict[str, Any]:
    nested: Dict[str, Any] = {}
    for key, value in flat.items():
        node = nested
        *parents, leaf = key.split(".")
        for part in parents:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"config key '{key}' conflicts with a scalar value")
        node[leaf] = value
    return nested


def env_overrides(environ: Optional[Mapping[str, str]] = None) -> Dict[str, str]:
    environ = os.environ if environ is None else environ
    overrides = {}
    for name, value in environ.items():
        if name.startswith(RUN_ENV_PREFIX):
            key = name[len(RUN_ENV_PREFIX):].lower().replace("__", ".")
            overrides[key] = value
    return overrides


def parse_assignments(assignments) -> Dict[str, str]:
    """Parse CLI 'key=value' pairs"""
    parsed = {}
    for item in assignments or ():
        if "=" not in item:
            raise ConfigError(f"expected key=value, got '{item}'")
        key, value = item.split("=", 1)
        parsed[key.strip()] = value.strip()
    return parsed


def build_run_config(flat: Mapping[str, Any]) -> RunConfig:
    try:
        return RunConfig.model_validate(unflatten(flat))
    except ValidationError as e:
        raise ConfigError(f"invalid configuration: {e}") from e


def load_run_config(
    path: Optional[Path] = None,
    overrides: Optional[Mapping[str, Any]] = None,
    environ: Optional[Mapping[str, str]] = None,
) -> RunConfig:
    """Defaults < config file < environment < explicit overrides"""
    flat: Dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file {path} is not valid JSON: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
        flat.update(flatten(data))
    flat.update(env_overrides(environ))
    flat.update(overrides or {})
    return build_run_config(flat)
