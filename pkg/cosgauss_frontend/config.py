"""
Run configuration
Every hyperparameter lives in one RunConfig with documented defaults.
The text format is flat `section.key = value`, one pair per line, `#` starts
a comment. Unknown keys are rejected; missing keys take their defaults.
All randomness flows from run.seed; module seeds use fixed offsets.
"""

from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from cosgauss_frontend.audio_io import SynthSpec
from cosgauss_frontend.errors import ConfigError

SYNTH_SEED_OFFSET = 0
TRAIN_SEED_OFFSET = 1
CPC_SEED_OFFSET = 2
FOLD_SEED_OFFSET = 100


class Section(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class AudioConfig(Section):
    sample_rate: int = Field(16000, gt=0)
    frame_len: int = Field(640, ge=1)
    hop: int = Field(160, ge=1)


class FilterConfig(Section):
    F: int = Field(64, ge=1)
    kernel_len: int = Field(257, ge=1)
    mu_min: float = Field(0.004, gt=0)
    mu_max: float = Field(0.45, gt=0, lt=0.5)
    eps: float = Field(1e-10, gt=0)
    f_min: float = Field(64.0, gt=0)
    f_max: float = Field(7200.0, gt=0)

    @field_validator("kernel_len")
    @classmethod
    def kernel_len_is_odd(cls, v: int) -> int:
        if v % 2 == 0:
            raise ValueError("kernel_len must be odd")
        return v

    @model_validator(mode="after")
    def check_ranges(self):
        if self.mu_min > self.mu_max:
            raise ValueError("mu_min must not exceed mu_max")
        if self.f_min >= self.f_max:
            raise ValueError("f_min must be below f_max")
        return self


class RelevanceConfig(Section):
    hidden: int = Field(51, ge=1)
    enabled: bool = True


class ModelConfig(Section):
    hidden: int = Field(64, ge=1)
    feature_mode: Literal["cosgauss", "mel"] = "cosgauss"


class TrainConfig(Section):
    epochs: int = Field(30, ge=1)
    lr: float = Field(1e-3, gt=0)
    batch_size: int = Field(4, ge=1)
    seed: int = 0
    freeze_filters: bool = False
    freeze_relevance: bool = False
    delta_window: int = Field(2, ge=1)
    normalization: Literal["utterance", "none"] = "utterance"
    target_auc: float = Field(0.9, gt=0, le=1)


class CpcConfig(Section):
    K: int = Field(4, ge=1)
    N: int = Field(10, ge=1)
    context_dim: int = Field(64, ge=1)
    lr: float = Field(1e-3, gt=0)
    steps: int = Field(300, ge=1)
    batch_size: int = Field(4, ge=1)
    anchors_per_file: int = Field(8, ge=1)
    seed: int = 0


class SynthConfig(Section):
    n_per_class: int = Field(50, ge=1)
    duration_s: float = Field(1.0, gt=0)
    class0_low: float = 500.0
    class0_high: float = 1500.0
    class1_low: float = 3000.0
    class1_high: float = 4000.0
    snr_db: float = 0.0


class EvalConfig(Section):
    folds: int = Field(5, ge=1)
    val_fraction: float = Field(0.2, gt=0, lt=1)


class RunSection(Section):
    seed: int = 0
    jobs: int = Field(1, ge=1)


# Seeds are derived from run.seed, never set per section
DERIVED_KEYS = {"train.seed", "cpc.seed"}


class RunConfig(Section):
    audio: AudioConfig = Field(default_factory=AudioConfig)
    filters: FilterConfig = Field(default_factory=FilterConfig)
    relevance: RelevanceConfig = Field(default_factory=RelevanceConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    cpc: CpcConfig = Field(default_factory=CpcConfig)
    synth: SynthConfig = Field(default_factory=SynthConfig)
    eval: EvalConfig = Field(default_factory=EvalConfig)
    run: RunSection = Field(default_factory=RunSection)

    @model_validator(mode="after")
    def check_cross_section(self):
        if self.audio.frame_len < self.filters.kernel_len:
            raise ValueError(
                f"audio.frame_len ({self.audio.frame_len}) must be >= filters.kernel_len ({self.filters.kernel_len})"
            )
        if self.filters.f_max > self.audio.sample_rate / 2:
            raise ValueError(f"filters.f_max must be <= audio.sample_rate / 2 ({self.audio.sample_rate / 2})")
        return self

    def train_config(self) -> TrainConfig:
        return self.train.model_copy(update={"seed": self.run.seed + TRAIN_SEED_OFFSET})

    def cpc_config(self) -> CpcConfig:
        return self.cpc.model_copy(update={"seed": self.run.seed + CPC_SEED_OFFSET})

    def synth_spec(self) -> SynthSpec:
        try:
            return SynthSpec(
                n_per_class=self.synth.n_per_class,
                duration_s=self.synth.duration_s,
                class0_band=(self.synth.class0_low, self.synth.class0_high),
                class1_band=(self.synth.class1_low, self.synth.class1_high),
                snr_db=self.synth.snr_db,
                seed=self.run.seed + SYNTH_SEED_OFFSET,
                sample_rate=self.audio.sample_rate,
            )
        except ValidationError as e:
            raise _config_error(e, prefix="synth") from e


def _config_error(e: ValidationError, prefix: str = "") -> ConfigError:
    first = e.errors()[0]
    key = ".".join(str(part) for part in first["loc"])
    if prefix and not key.startswith(prefix):
        key = f"{prefix}.{key}" if key else prefix
    key = key or "config"
    return ConfigError(f"{key}: {first['msg']}", key=key)


def parse_config_text(text: str, source: str = "<config>") -> RunConfig:
    sections: dict[str, dict[str, str]] = {}
    seen: set[str] = set()

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{line_no}: expected `key = value`, got {raw.strip()!r}")

        key, value = (part.strip() for part in line.split("=", 1))
        if key in seen:
            raise ConfigError(f"{source}:{line_no}: duplicate key {key}", key=key)
        seen.add(key)

        section, _, name = key.partition(".")
        if (not name or section not in RunConfig.model_fields
                or name not in RunConfig.model_fields[section].annotation.model_fields
                or key in DERIVED_KEYS):
            raise ConfigError(f"{source}:{line_no}: unknown key {key}", key=key)
        sections.setdefault(section, {})[name] = value

    try:
        return RunConfig.model_validate(sections)
    except ValidationError as e:
        raise _config_error(e) from e


def parse_config(path: str | Path | None) -> RunConfig:
    """
    Read a RunConfig from a `key = value` file; None gives all defaults

    Raises:
        ConfigError: unknown key, unparsable value or violated constraint,
            with the offending key in the message
    """
    if path is None:
        return RunConfig()
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_config_text(path.read_text(encoding="utf-8"), source=str(path))


def format_config(cfg: RunConfig) -> list[str]:
    """Fully resolved `key = value` lines, defaults included"""
    lines = []
    for section, values in cfg.model_dump().items():
        for name, value in values.items():
            if f"{section}.{name}" in DERIVED_KEYS:
                continue
            lines.append(f"{section}.{name} = {value}")
    return lines
