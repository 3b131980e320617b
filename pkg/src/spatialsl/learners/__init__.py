"""Base regression learners and the learner library used in stage 1."""
from __future__ import annotations

import pickle
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from ..errors import ConfigError
from .base import Learner, MeanRegressor
from .knn import KNeighbors
from .linear import OLS, ElasticNet, Lasso, Ridge
from .mlp import MLP, MLPSpec, mlp_spec
from .trees import (
    Bagging,
    DecisionTree,
    ExtraTrees,
    GradientBoosting,
    RandomForest,
    RegularizedBoosting,
)

REGISTRY: dict[str, type[Learner]] = {
    cls.name: cls
    for cls in (ElasticNet, DecisionTree, Ridge, Lasso, KNeighbors, GradientBoosting,
                RegularizedBoosting, Bagging, RandomForest, ExtraTrees, MLP, OLS, MeanRegressor)
}

DEFAULT_LEARNERS = (
    "elastic_net", "decision_tree", "ridge", "lasso", "knn", "gradient_boosting",
    "regularized_boosting", "bagging", "random_forest", "extra_trees", "mlp",
)


@dataclass(frozen=True)
class LearnerSpec:
    """A learner configuration: registry kind, column label and overrides."""

    kind: str
    params: dict = field(default_factory=dict)
    label: str | None = None

    def __post_init__(self):
        if self.kind not in REGISTRY:
            raise ConfigError(f"unknown learner {self.kind!r}; choose from {sorted(REGISTRY)}")

    @property
    def name(self) -> str:
        return self.label or self.kind

    def build(self) -> Learner:
        return REGISTRY[self.kind](**self.params)


def default_library() -> list[LearnerSpec]:
    return [LearnerSpec(k) for k in DEFAULT_LEARNERS]


def check_library(library: Sequence[LearnerSpec]) -> None:
    names = [s.name for s in library]
    if len(set(names)) != len(names):
        raise ConfigError(f"learner names must be unique: {names}")
    if len(names) < 1:
        raise ConfigError("learner library is empty")


def fit(spec: LearnerSpec, X, y, seed: int = 0) -> Learner:
    return spec.build().fit(X, y, seed=seed)


def predict(fitted: Learner, X):
    return fitted.predict(X)


ARTIFACT_FORMAT = "spatialsl-learners"
ARTIFACT_VERSION = 1


def save_learners(fitted: dict[str, Learner], path) -> None:
    payload = {"format": ARTIFACT_FORMAT, "version": ARTIFACT_VERSION, "learners": fitted}
    with open(path, "wb") as fh:
        pickle.dump(payload, fh, protocol=pickle.HIGHEST_PROTOCOL)


def load_learners(path) -> dict[str, Learner]:
    with open(path, "rb") as fh:
        payload = pickle.load(fh)
    if not isinstance(payload, dict) or payload.get("format") != ARTIFACT_FORMAT:
        raise ConfigError(f"{path}: not a fitted-learner artifact")
    if payload.get("version") != ARTIFACT_VERSION:
        raise ConfigError(f"{path}: unsupported artifact version {payload.get('version')}")
    return payload["learners"]


__all__ = [
    "Learner", "LearnerSpec", "REGISTRY", "DEFAULT_LEARNERS", "default_library",
    "check_library", "fit", "predict", "save_learners", "load_learners", "mlp_spec", "MLPSpec",
    "ElasticNet", "Ridge", "Lasso", "OLS", "DecisionTree", "KNeighbors", "GradientBoosting",
    "RegularizedBoosting", "Bagging", "RandomForest", "ExtraTrees", "MLP", "MeanRegressor",
]
