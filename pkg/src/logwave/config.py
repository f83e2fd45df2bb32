"""File-backed configuration for the CLI.

One JSON document drives every subcommand. Parsing is strict: unknown
keys anywhere in the document are rejected so a typo cannot silently fall
back to a default, while absent optional keys take their documented
defaults. A parsed config serializes back to an equivalent document.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

from .errors import ConfigError
from .evaluation import DetectorSettings, ExperimentConfig, SplitFractions
from .modulation import ModulationConfig
from .pipeline import AblationFlags, AttentionSettings
from .synthetic import GeneratorConfig

# JSON key -> dataclass field name, where they differ.
_ALIASES = {"lambda": "lam"}
_REVERSE_ALIASES = {v: k for k, v in _ALIASES.items()}


def _from_dict(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object, got {type(data).__name__}")
    names = {f.name for f in fields(cls)}
    kwargs = {}
    for key, value in data.items():
        name = _ALIASES.get(key, key)
        if name not in names:
            raise ConfigError(f"{where}: unknown key {key!r}")
        kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _to_dict(obj) -> dict:
    out = {}
    for f in fields(obj):
        value = getattr(obj, f.name)
        if isinstance(value, tuple):
            value = list(value)
        out[_REVERSE_ALIASES.get(f.name, f.name)] = value
    return out


@dataclass
class Paths:
    out_dir: str = "out"
    events: str | None = None        # default: <out_dir>/events.csv
    ground_truth: str | None = None  # default: <out_dir>/ground_truth.csv
    taxonomy: str | None = None      # default: built-in six-category taxonomy

    def events_path(self) -> Path:
        return Path(self.events) if self.events else Path(self.out_dir) / "events.csv"

    def ground_truth_path(self) -> Path:
        return Path(self.ground_truth) if self.ground_truth else Path(self.out_dir) / "ground_truth.csv"


@dataclass
class PipelineConfig:
    """Union of all module configs plus IO paths and the master seed."""

    seed: int = 7
    paths: Paths = field(default_factory=Paths)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)

    @classmethod
    def from_json_dict(cls, data: dict) -> "PipelineConfig":
        if not isinstance(data, dict):
            raise ConfigError("config root must be a JSON object")
        unknown = set(data) - {"seed", "paths", "generator", "experiment"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")

        seed = data.get("seed", 7)
        if not isinstance(seed, int):
            raise ConfigError(f"seed must be an integer, got {seed!r}")
        paths = _from_dict(Paths, data.get("paths", {}), "paths")
        gen_data = dict(data.get("generator", {}))
        if "anomaly_days" in gen_data:
            gen_data["anomaly_days"] = tuple(gen_data["anomaly_days"])
        generator = _from_dict(GeneratorConfig, gen_data, "generator")

        exp_data = dict(data.get("experiment", {}))
        nested = {
            "modulation": ModulationConfig,
            "attention": AttentionSettings,
            "detector": DetectorSettings,
            "split": SplitFractions,
            "ablation": AblationFlags,
        }
        exp_kwargs: dict[str, Any] = {}
        for key, value in exp_data.items():
            if key in nested:
                exp_kwargs[key] = _from_dict(nested[key], value, f"experiment.{key}")
            elif key == "seeds":
                exp_kwargs[key] = tuple(value)
            else:
                exp_kwargs[key] = value
        experiment = _from_dict(ExperimentConfig, exp_kwargs, "experiment")
        return cls(seed=seed, paths=paths, generator=generator, experiment=experiment)

    def to_json_dict(self) -> dict:
        exp = _to_dict(self.experiment)
        for key in ("modulation", "attention", "detector", "split", "ablation"):
            exp[key] = _to_dict(getattr(self.experiment, key))
        return {
            "seed": self.seed,
            "paths": _to_dict(self.paths),
            "generator": _to_dict(self.generator),
            "experiment": exp,
        }

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            with open(path) as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_json_dict(data)

    def dump(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
