"""Run configuration: INI file, command-line overrides, seeds.

Precedence is flag > config file > default. Example file::

    [run]
    seed = 7
    folds = 10
    vecchia_k = 15
    pred_k = 60
    threads = 1
    out = results

    [learners]
    names = elastic_net, ridge, knn, extra_trees

    [learner.knn]
    k = 7
"""
from __future__ import annotations

import ast
import configparser
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import ConfigError
from .learners import DEFAULT_LEARNERS, LearnerSpec
from .models import ModelConfig


@dataclass
class RunConfig:
    seed: int = 0
    folds: int = 10
    vecchia_k: int = 15
    pred_k: int = 60
    threads: int = 1
    out: str = "out"
    manifest: str | None = None
    learners: tuple = DEFAULT_LEARNERS
    learner_params: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.seed < 0 or self.seed >= 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.folds < 2:
            raise ConfigError("folds must be >= 2")
        if self.vecchia_k < 1 or self.pred_k < 1:
            raise ConfigError("vecchia_k and pred_k must be >= 1")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.manifest is not None and not Path(self.manifest).exists():
            raise ConfigError(f"manifest not found: {self.manifest}")
        for spec in self.library():
            try:
                spec.build()
            except ValueError as e:
                raise ConfigError(str(e)) from None

    def library(self) -> list[LearnerSpec]:
        return [LearnerSpec(nm, dict(self.learner_params.get(nm, {}))) for nm in self.learners]

    def model_config(self) -> ModelConfig:
        return ModelConfig(folds=self.folds, vecchia_k=self.vecchia_k, pred_k=self.pred_k,
                           seed=self.seed, threads=self.threads, library=self.library())

    def echo(self) -> dict:
        d = asdict(self)
        d["learners"] = ",".join(self.learners)
        d["learner_params"] = repr(self.learner_params)
        return d


def _value(text: str):
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


_INT_KEYS = ("seed", "folds", "vecchia_k", "pred_k", "threads")


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Build a RunConfig from an optional INI file, then apply non-None overrides."""
    cfg = RunConfig()
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        cp = configparser.ConfigParser()
        try:
            cp.read(path, encoding="utf-8")
        except configparser.Error as e:
            raise ConfigError(f"{path}: {e}") from None
        if cp.has_section("run"):
            known = {f.name for f in fields(RunConfig)}
            for key, val in cp.items("run"):
                if key not in known or key in ("learners", "learner_params"):
                    raise ConfigError(f"{path}: unknown [run] key {key!r}")
                try:
                    setattr(cfg, key, int(val) if key in _INT_KEYS else val)
                except ValueError:
                    raise ConfigError(f"{path}: {key} must be an integer") from None
        if cp.has_section("learners") and cp.has_option("learners", "names"):
            names = [s.strip() for s in cp.get("learners", "names").split(",") if s.strip()]
            cfg.learners = tuple(names)
        for sec in cp.sections():
            if sec.startswith("learner."):
                cfg.learner_params[sec[len("learner."):]] = {k: _value(v) for k, v in cp.items(sec)}
    for key, val in (overrides or {}).items():
        if val is not None:
            setattr(cfg, key, val)
    cfg.validate()
    return cfg
