"""
Run configuration
=================

One JSON file holds every section; missing sections fall back to the built-in
defaults. Command-line flags are applied on top with with_overrides(), and
validate() checks cross-section consistency before anything runs.
"""

from dataclasses import asdict, dataclass, field, fields, replace

from audio_frontend import FrontendConfig
from errors import ConfigError
from forge import TEMPERATURE_RANGE, Backend
from model import ModelConfig
from persistence import read_json, write_json
from sequence_builder import PromptFormat
from trainer import TrainConfig


@dataclass(frozen=True)
class ForgeConfig:
    backend: str = "offline"
    subset: int = None
    temperature_min: float = TEMPERATURE_RANGE[0]
    temperature_max: float = TEMPERATURE_RANGE[1]
    max_in_flight: int = 4
    timeout_s: float = 30.0

    def validate(self):
        Backend(self.backend)
        if not 0 < self.temperature_min <= self.temperature_max:
            raise ValueError(f"bad temperature range [{self.temperature_min}, {self.temperature_max}]")
        if self.max_in_flight < 1:
            raise ValueError(f"max_in_flight must be at least 1, got {self.max_in_flight}")
        if self.subset is not None and self.subset < 1:
            raise ValueError(f"subset must be positive, got {self.subset}")


@dataclass(frozen=True)
class EvalConfig:
    repeats: int = 4
    words: int = 78
    per_word_audio: int = 4
    max_new: int = 12
    temperature: float = 0.0

    def validate(self):
        if self.repeats < 1:
            raise ValueError(f"repeats must be at least 1, got {self.repeats}")
        if self.words < 1 or self.per_word_audio < 1:
            raise ValueError("words and per_word_audio must be positive")
        if self.temperature < 0:
            raise ValueError(f"temperature must be >= 0, got {self.temperature}")


@dataclass(frozen=True)
class ExperimentConfig:
    words: int = 12
    source_clips_per_word: int = 2
    shard_words: int = 12
    per_word_audio: int = 2
    baseline_steps: int = 400
    finetune_steps: int = 200
    # small fine-tuning set size; the large condition uses every forged record
    small_subset: int = 48
    large_finetune_steps: int = 400
    repeats: int = 1

    def validate(self):
        for f in fields(self):
            if getattr(self, f.name) < 1:
                raise ValueError(f"experiment.{f.name} must be positive, got {getattr(self, f.name)}")


SECTIONS = {
    "frontend": FrontendConfig,
    "model": ModelConfig,
    "train": TrainConfig,
    "forge": ForgeConfig,
    "eval": EvalConfig,
    "experiment": ExperimentConfig,
}


@dataclass(frozen=True)
class RunConfig:
    frontend: FrontendConfig = field(default_factory=FrontendConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    forge: ForgeConfig = field(default_factory=ForgeConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)
    seed: int = 0

    @classmethod
    def from_dict(cls, data):
        unknown = set(data) - set(SECTIONS) - {"seed"}
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        sections = {}
        for name, section_cls in SECTIONS.items():
            values = data.get(name) or {}
            known = {f.name for f in fields(section_cls)}
            extra = set(values) - known
            if extra:
                raise ConfigError(f"unknown keys in [{name}]: {sorted(extra)}")
            try:
                sections[name] = section_cls(**values)
            except TypeError as e:
                raise ConfigError(f"bad [{name}] section: {e}") from e
        return cls(seed=int(data.get("seed", 0)), **sections)

    def to_dict(self):
        payload = {name: asdict(getattr(self, name)) for name in SECTIONS}
        payload["seed"] = self.seed
        return payload

    def with_overrides(self, seed=None, format=None, repeats=None, backend=None, subset=None, steps=None):
        """Flags win over the file; the seed reaches every stochastic component"""
        cfg = self
        if seed is not None:
            cfg = replace(cfg, seed=seed, train=replace(cfg.train, seed=seed), model=replace(cfg.model, seed=seed))
        if format is not None:
            cfg = replace(cfg, train=replace(cfg.train, format=PromptFormat(format).value))
        if repeats is not None:
            cfg = replace(cfg, eval=replace(cfg.eval, repeats=repeats))
        if backend is not None:
            cfg = replace(cfg, forge=replace(cfg.forge, backend=Backend(backend).value))
        if subset is not None:
            cfg = replace(cfg, forge=replace(cfg.forge, subset=subset))
        if steps is not None:
            cfg = replace(cfg, train=replace(cfg.train, steps=steps))
        return cfg

    def validate(self):
        try:
            for name in SECTIONS:
                getattr(self, name).validate()
        except ValueError as e:
            raise ConfigError(str(e)) from e
        if self.frontend.d_model != self.model.d_model:
            raise ConfigError(f"frontend.d_model {self.frontend.d_model} != model.d_model {self.model.d_model}")
        if self.frontend.d_audio != self.model.d_audio:
            raise ConfigError(f"frontend.d_audio {self.frontend.d_audio} != model.d_audio {self.model.d_audio}")
        if self.frontend.audio_slot_count + 2 > self.model.max_seq_len:
            raise ConfigError(
                f"{self.frontend.audio_slot_count} audio slots leave no room for text "
                f"in max_seq_len {self.model.max_seq_len}"
            )
        return self


def load_config(path=None):
    """RunConfig from a JSON file, or the defaults when path is None"""
    if path is None:
        return RunConfig()
    return RunConfig.from_dict(read_json(path))


def dump_config(cfg, path):
    return write_json(path, cfg.to_dict())
