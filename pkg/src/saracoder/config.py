"""Engine configuration: defaults, key=value config files, validation.

The config file format is a flat, diff-friendly ``key = value`` text
file (one pair per line, ``#`` comments). Flags given on the command
line override file values; unknown keys are rejected.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError
from .hf_op import PipelineConfig, StageToggles

ENV_CONFIG_VAR = "SARACODER_CONFIG"

_BOOL_WORDS = {"true": True, "false": False, "yes": True, "no": False, "1": True, "0": False}


@dataclass
class EngineConfig:
    index_dir: str = "index"
    language: str = "python"
    h: int = 3
    w: int = 20
    top_k: int = 4
    expansion_p: int = 5
    quantile_q: float = 0.75
    gamma: float = 0.5
    alpha: float = 0.5
    mmr_lambda: float = 0.7
    enable_sad: bool = True
    enable_rap: bool = True
    enable_tpm: bool = True
    enable_dar: bool = True
    enable_eaid: bool = True
    provider: str = "local"
    endpoint: str = ""
    budget: int = 2048
    cache_entries: int = 100000

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.h < 1 or self.w < 1:
            raise ConfigError(f"slice parameters must be >= 1 (h={self.h}, w={self.w})")
        if self.provider not in ("local", "remote"):
            raise ConfigError(f"provider must be 'local' or 'remote', got {self.provider!r}")
        if self.provider == "remote" and not self.endpoint:
            raise ConfigError("remote provider requires an endpoint")
        if self.budget < 0:
            raise ConfigError(f"budget must be >= 0, got {self.budget}")
        if self.cache_entries < 0:
            raise ConfigError(f"cache_entries must be >= 0, got {self.cache_entries}")
        try:
            self.pipeline()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def pipeline(self) -> PipelineConfig:
        return PipelineConfig(
            quantile_q=self.quantile_q,
            gamma=self.gamma,
            alpha=self.alpha,
            mmr_lambda=self.mmr_lambda,
            top_k=self.top_k,
            expansion_p=self.expansion_p,
            stages=StageToggles(
                sad=self.enable_sad,
                rap=self.enable_rap,
                tpm=self.enable_tpm,
                dar=self.enable_dar,
            ),
        )

    # -- text round-trip -----------------------------------------------------

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, source: str = "<config>") -> "EngineConfig":
        values: dict = {}
        known = {f.name: f for f in fields(cls)}
        for line_no, raw in enumerate(text.split("\n"), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{source}: line {line_no}: expected 'key = value'")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip().strip("\"'")
            if key not in known:
                raise ConfigError(f"{source}: line {line_no}: unknown key {key!r}")
            values[key] = _coerce(known[key].type, key, value, source, line_no)
        return cls(**values)

    @classmethod
    def from_file(cls, path: str | Path) -> "EngineConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        return cls.from_text(path.read_text(encoding="utf-8"), source=str(path))

    def merged(self, overrides: dict) -> "EngineConfig":
        """New config with non-None override values applied."""
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        for key, value in overrides.items():
            if value is None:
                continue
            if key not in values:
                raise ConfigError(f"unknown config key {key!r}")
            values[key] = value
        return EngineConfig(**values)


def _coerce(type_name: str, key: str, value: str, source: str, line_no: int):
    # Dataclass field types arrive as strings under from __future__ annotations.
    if type_name == "bool":
        lowered = value.lower()
        if lowered not in _BOOL_WORDS:
            raise ConfigError(f"{source}: line {line_no}: {key} expects true/false, got {value!r}")
        return _BOOL_WORDS[lowered]
    try:
        if type_name == "int":
            return int(value)
        if type_name == "float":
            return float(value)
    except ValueError:
        raise ConfigError(
            f"{source}: line {line_no}: {key} expects {type_name}, got {value!r}"
        ) from None
    return value
