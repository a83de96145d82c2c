"""
Experiment configuration files.

A file is flat ``key = value`` text. ``#`` starts a comment, list values are
comma separated and ``grid.<key> = a, b`` lines enumerate variants of the
experiment (one ExperimentConfig per combination). Unknown keys are errors.
"""

import hashlib
import itertools
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from gclbench.encoders import EncoderConfig
from gclbench.errors import ConfigError
from gclbench.gcl import AugmentationSpec, TrainConfig, preset
from gclbench.graphs import GraphDataset

logger = logging.getLogger(__name__)

Method = Literal["graphcl", "infograph", "untrained", "handcrafted", "molfingerprint", "random"]

PRETRAINED_METHODS = ("graphcl", "infograph")
LIST_FIELDS = ("methods", "fractions", "seeds", "synthetic_styles", "synthetic_sizes")

# Fields that define grid axes or where results go; they do not change a cell's result.
NON_RESULT_FIELDS = {"name", "methods", "fractions", "seeds", "synthetic_styles", "synthetic_sizes",
                     "output_dir", "workers"}


class ExperimentConfig(BaseModel):
    """One scaling sweep: methods x (style, size) x fractions x seeds."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    name: str = Field(default="experiment", description="Label used in logs and reports")
    dataset: str = Field(description="Dataset path, or 'synthetic' for the motif generator")
    methods: List[Method] = Field(default_factory=lambda: ["untrained"], description="Methods to compare")

    encoder: Literal["gin", "gine"] = Field(default="gin", description="Message-passing encoder family")
    layers: int = Field(default=3, ge=1)
    hidden_dim: int = Field(default=32, ge=1)
    fingerprint_dim: int = Field(default=256, ge=1)

    preset: Optional[str] = Field(default=None, description="Named pretraining preset")
    epochs: Optional[int] = Field(default=None, ge=0)
    batch_size: Optional[int] = Field(default=None, ge=2)
    lr: Optional[float] = Field(default=None, gt=0)
    weight_decay: Optional[float] = Field(default=None, ge=0)
    temperature: Optional[float] = Field(default=None, gt=0)
    proj_dim: Optional[int] = Field(default=None, ge=1)
    augmentation: Optional[Literal["node-drop", "edge-drop", "node+edge"]] = None
    drop_p: Optional[float] = Field(default=None, ge=0, le=1)

    probe: Literal["svm", "logreg"] = Field(default="svm", description="Embedding probe protocol")
    folds: int = Field(default=10, ge=2, description="Outer folds of the SVM protocol")
    ablation: Literal["node-count", "avg-degree", "deg-histogram", "all"] = "all"
    random_dim: int = Field(default=7, ge=1, description="Width of the random Gaussian control")

    fractions: List[float] = Field(default_factory=lambda: [1.0])
    seeds: List[int] = Field(default_factory=lambda: [0])
    synthetic_styles: List[int] = Field(default_factory=lambda: [2])
    synthetic_sizes: List[int] = Field(default_factory=lambda: [600])
    synthetic_classes: int = Field(default=6, ge=2, le=6)

    output_dir: str = Field(default="results", description="Directory for records and reports")
    workers: Optional[int] = Field(default=None, ge=1, description="Overrides GCLBENCH_WORKERS")

    @field_validator(*LIST_FIELDS, mode="before")
    @classmethod
    def _split_lists(cls, value: Any) -> Any:
        if isinstance(value, str):
            return [part.strip() for part in value.split(",") if part.strip()]
        return value

    @field_validator("fractions")
    @classmethod
    def _fractions_in_range(cls, value: List[float]) -> List[float]:
        if not value or any(not 0.0 < f <= 1.0 for f in value):
            raise ValueError(f"fractions must be a nonempty subset of (0, 1], got {value}")
        return value

    @field_validator("seeds", "methods")
    @classmethod
    def _nonempty(cls, value: List[Any]) -> List[Any]:
        if not value:
            raise ValueError("must not be empty")
        return value

    @property
    def is_synthetic(self) -> bool:
        return self.dataset == "synthetic"

    def train_config(self, seed: int) -> TrainConfig:
        """Preset (or defaults) with the explicit overrides applied."""
        base = preset(self.preset) if self.preset else TrainConfig()
        updates: Dict[str, Any] = {"seed": seed}
        for key in ("epochs", "batch_size", "lr", "weight_decay", "temperature", "proj_dim"):
            value = getattr(self, key)
            if value is not None:
                updates[key] = value
        if self.augmentation is not None or self.drop_p is not None:
            updates["augmentation"] = AugmentationSpec(
                kind=self.augmentation or base.augmentation.kind,
                p=base.augmentation.p if self.drop_p is None else self.drop_p,
            )
        return base.model_copy(update=updates)

    def encoder_config(self, method: str, dataset: GraphDataset, seed: int) -> EncoderConfig:
        if method == "molfingerprint":
            return EncoderConfig.for_dataset(
                dataset, "molfingerprint", fingerprint_dim=self.fingerprint_dim, init_seed=seed
            )
        return EncoderConfig.for_dataset(
            dataset, self.encoder, layers=self.layers, hidden_dim=self.hidden_dim, init_seed=seed
        )

    def config_hash(self) -> str:
        """16 hex digits over the result-defining fields, independent of field order."""
        payload = self.model_dump(exclude=NON_RESULT_FIELDS)
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


# ============================================================================
# FILE PARSING
# ============================================================================

def parse_config_text(text: str, source: str = "<string>") -> Tuple[Dict[str, str], Dict[str, List[str]]]:
    """Split a config file into plain settings and grid.* axes."""
    values: Dict[str, str] = {}
    grid: Dict[str, List[str]] = {}
    for line_no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{line_no}: expected 'key = value', got '{raw.strip()}'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{line_no}: empty key")
        if key.startswith("grid."):
            grid[key[len("grid."):]] = [v.strip() for v in value.split(",") if v.strip()]
        elif key in values:
            raise ConfigError(f"{source}:{line_no}: duplicate key '{key}'")
        else:
            values[key] = value
    return values, grid


def build_config(values: Dict[str, Any], source: str = "<config>") -> ExperimentConfig:
    try:
        return ExperimentConfig(**values)
    except ValidationError as e:
        problems = "; ".join(f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors())
        raise ConfigError(f"{source}: {problems}")


def expand_grid(config: ExperimentConfig, grid: Dict[str, List[Any]]) -> List[ExperimentConfig]:
    """
    One config per combination of grid values, named after its settings and
    writing to its own subdirectory of output_dir.
    """
    if not grid:
        return [config]
    keys = sorted(grid)
    variants = []
    for combo in itertools.product(*(grid[k] for k in keys)):
        label = ",".join(f"{k}={v}" for k, v in zip(keys, combo))
        values = config.model_dump()
        values.update(dict(zip(keys, combo)))
        values["name"] = f"{config.name}[{label}]"
        values["output_dir"] = str(Path(config.output_dir) / label)
        variants.append(build_config(values, f"grid {label}"))
    logger.info(f"Expanded {config.name} into {len(variants)} grid variants")
    return variants


def load_experiment_file(path: Union[str, Path], overrides: Optional[Dict[str, Any]] = None) -> List[ExperimentConfig]:
    """Parse a config file into one or more experiment configs."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Config file not found: {path}")
    values, grid = parse_config_text(path.read_text(encoding="utf-8"), str(path))
    values.update(overrides or {})
    config = build_config(values, str(path))
    for key in grid:
        if key not in ExperimentConfig.model_fields:
            raise ConfigError(f"{path}: unknown grid key '{key}'")
    return expand_grid(config, grid)
