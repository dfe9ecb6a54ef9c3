"""JSON run configuration for the command-line tools.

Schema (every key optional; unknown keys are rejected)::

    {
      "preset": "toy_32",            # generator preset; commands pick a default when absent
      "generator": {                 # overrides applied on top of the preset
        "latent_dim": 16, "latent_channels": 8, "latent_grid": 8,
        "initial_size": 8, "mlp_ratio": 4, "norm": "batch", "cross_mlp": true,
        "attention_mode": "multi_axis", "attention_stages": 4,
        "stages": [ {"resolution": 8, "kind": "low_res", "cross_dim": 16,
                     "cross_heads": 4, "self_attn": {"dim": 16, "heads": 4,
                     "repeats": 1, "block_size": 4, "mode": "multi_axis"},
                     "mlp": null, "tail": "pixel_shuffle", "tail_dim": 16}, ... ]
      },
      "seed": 0,                     # model initialization seed
      "dtype": "f64",                # "f32" or "f64"
      "bench": {"sizes": [...], "modes": [...], "repeats": 3, "heads": 2,
                "dim": 32, "dtype": "f32"},
      "train": {"steps": 2000, "batch_size": 32, "gamma": 10.0, "lr": 1e-4,
                "beta1": 0.0, "beta2": 0.99, "eval_every": 100,
                "eval_samples": 512, "disc_hidden": 64},
      "out": "runs"
    }
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .generator import (GeneratorConfig, MlpSpec, SelfAttnSpec, StageSpec, preset, with_attention_mode,
                        with_attention_stages)
from .training import GanHyper


class RunConfigError(ValueError):
    pass


def _check_keys(d: dict, allowed, where: str) -> None:
    if not isinstance(d, dict):
        raise RunConfigError(f"{where}: expected an object")
    unknown = set(d) - set(allowed)
    if unknown:
        raise RunConfigError(f"{where}: unknown keys {sorted(unknown)}")


@dataclass
class BenchConfig:
    sizes: list[int] = field(default_factory=lambda: [256, 1024, 4096])
    modes: list[str] = field(default_factory=lambda: ["full", "multi_axis"])
    repeats: int = 3
    heads: int = 2
    dim: int = 32
    dtype: str = "f32"


@dataclass
class TrainConfig:
    steps: int = 2000
    batch_size: int = 32
    gamma: float = 10.0
    lr: float = 1e-4
    beta1: float = 0.0
    beta2: float = 0.99
    eval_every: int = 100
    eval_samples: int = 512
    disc_hidden: int = 64

    def hyper(self) -> GanHyper:
        return GanHyper(gamma=self.gamma, lr=self.lr, beta1=self.beta1, beta2=self.beta2,
                        batch_size=self.batch_size, steps=self.steps, eval_every=self.eval_every,
                        eval_samples=self.eval_samples)


_GEN_KEYS = ("latent_dim", "latent_channels", "latent_grid", "initial_size", "mlp_ratio", "norm", "cross_mlp",
             "attention_mode", "attention_stages", "stages")
_STAGE_KEYS = ("resolution", "kind", "cross_dim", "cross_heads", "self_attn", "mlp", "tail", "tail_dim")


@dataclass
class RunConfig:
    preset: str | None = None
    generator: dict = field(default_factory=dict)
    seed: int = 0
    dtype: str = "f64"
    bench: BenchConfig = field(default_factory=BenchConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    out: str = "runs"

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        _check_keys(d, [f.name for f in dataclasses.fields(cls)], "config")
        d = dict(d)
        bench = d.pop("bench", {})
        train = d.pop("train", {})
        _check_keys(bench, [f.name for f in dataclasses.fields(BenchConfig)], "config.bench")
        _check_keys(train, [f.name for f in dataclasses.fields(TrainConfig)], "config.train")
        _check_keys(d.get("generator", {}), _GEN_KEYS, "config.generator")
        for i, st in enumerate(d.get("generator", {}).get("stages") or []):
            _check_keys(st, _STAGE_KEYS, f"config.generator.stages[{i}]")
        cfg = cls(**d, bench=BenchConfig(**bench), train=TrainConfig(**train))
        if cfg.dtype not in ("f32", "f64"):
            raise RunConfigError(f"dtype must be f32 or f64, got {cfg.dtype!r}")
        if cfg.preset is not None:
            cfg.generator_config()  # fail early on bad generator settings
        return cfg

    @classmethod
    def load(cls, path: str | Path | None) -> "RunConfig":
        if path is None:
            return cls()
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as e:
            raise RunConfigError(f"{path}: {e}") from None

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "f32" else np.float64

    def with_default_preset(self, name: str) -> "RunConfig":
        return self if self.preset is not None else dataclasses.replace(self, preset=name)

    def generator_config(self) -> GeneratorConfig:
        if self.preset is None:
            raise RunConfigError("no generator preset selected")
        g = dict(self.generator)
        base = preset(self.preset)
        if "stages" in g:
            base = base.replace(stages=tuple(_stage_from_dict(s) for s in g.pop("stages")))
        mode = g.pop("attention_mode", None)
        count = g.pop("attention_stages", None)
        try:
            cfg = base.replace(**g, seed=self.seed)
        except TypeError as e:
            raise RunConfigError(str(e)) from None
        if mode is not None:
            cfg = with_attention_mode(cfg, mode)
        if count is not None:
            cfg = with_attention_stages(cfg, count)
        try:
            cfg.validate()
        except ValueError as e:
            raise RunConfigError(str(e)) from None
        return cfg

    def resolved(self) -> dict:
        d = asdict(self)
        if self.preset is not None:
            d["resolved_generator"] = _config_dict(self.generator_config())
        return d


def _stage_from_dict(d: dict) -> StageSpec:
    d = dict(d)
    sa = d.pop("self_attn", None)
    mlp = d.pop("mlp", None)
    if sa is not None:
        _check_keys(sa, [f.name for f in dataclasses.fields(SelfAttnSpec)], "self_attn")
    if mlp is not None:
        _check_keys(mlp, [f.name for f in dataclasses.fields(MlpSpec)], "mlp")
    return StageSpec(**d, self_attn=SelfAttnSpec(**sa) if sa else None, mlp=MlpSpec(**mlp) if mlp else None)


def _config_dict(cfg: GeneratorConfig) -> dict:
    d = asdict(cfg)
    d["stages"] = [asdict(s) for s in cfg.stages]
    return d
