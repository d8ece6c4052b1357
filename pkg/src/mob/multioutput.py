"""Problem-transformation strategies: independent models, stacking and CMOB.

All three share a first level of one forest per target trained on the full
training data. Stacking and CMOB additionally train second-level models on
out-of-fold predicted targets obtained by an inner cross-validation; at
prediction time those second-level models consume the full-data first-level
predictions instead.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .compboost import (BaseLearnerSpace, BoostModel, BoostParams, LossKind, boost_fit,
                        boost_predict)
from .data import Dataset, Schema, TargetKind, kfold_split, mix_seed
from .learners import ForestModel, ForestParams, fit_forest, predict_forest

SCHEMA_VERSION = 1

# tags keeping seed streams of the different training stages apart
_FIRST_LEVEL, _INNER_CV, _INNER_FOLDS, _SECOND_LEVEL = 1, 2, 3, 4


class Variant(str, Enum):
    IM = "im"
    STA = "sta"
    CMOB = "cmob"


def predicted_target_names(schema: Schema) -> tuple[str, ...]:
    return tuple(f"{t}_hat" for t in schema.target_names)


@dataclass(frozen=True)
class SecondLevelData:
    Y_hat: np.ndarray
    names: tuple[str, ...]
    folds: np.ndarray


@dataclass(frozen=True)
class MultiOutputPrediction:
    """``response`` holds regression values and 0/1 labels; ``prob`` holds
    positive-class probabilities for binary targets and NaN for regression ones."""

    response: np.ndarray
    prob: np.ndarray
    scores: np.ndarray


@dataclass
class MultiOutputModel:
    variant: Variant
    schema: Schema
    first_level: list[ForestModel]
    second_level: list = None
    # out-of-fold predictions the second level was trained on; not used for prediction
    second_level_data: SecondLevelData | None = None

    def predict(self, X) -> MultiOutputPrediction:
        return predict_multioutput(self, X)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "variant": self.variant.value,
            "schema": self.schema.to_dict(),
            "first_level": [f.to_dict() for f in self.first_level],
            "second_level": [s.to_dict() for s in (self.second_level or [])],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MultiOutputModel":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported model schema version {d.get('schema_version')!r}")
        variant = Variant(d["variant"])
        second = []
        for s in d.get("second_level", []):
            second.append(BoostModel.from_dict(s) if s["type"] == "boost" else ForestModel.from_dict(s))
        return cls(
            variant=variant,
            schema=Schema.from_dict(d["schema"]),
            first_level=[ForestModel.from_dict(f) for f in d["first_level"]],
            second_level=second or None,
        )


def _forest_params(base: ForestParams, seed: int) -> ForestParams:
    return replace(base, seed=seed)


def _fit_target(X, y, kind, params, categorical, n_levels):
    return fit_forest(X, y, kind, params, categorical=categorical, n_levels=n_levels)


def _n_levels(schema: Schema) -> np.ndarray:
    return np.array([0 if lv is None else len(lv) for lv in schema.levels], dtype=np.int64)


def fit_first_level(dataset: Dataset, learner: ForestParams, seed: int) -> list[ForestModel]:
    cat, nlev = dataset.categorical, _n_levels(dataset.schema())
    return [
        _fit_target(dataset.features, t.values, t.kind,
                    _forest_params(learner, mix_seed(seed, _FIRST_LEVEL, j)), cat, nlev)
        for j, t in enumerate(dataset.targets)
    ]


def cv_predicted_targets(dataset: Dataset, learner: ForestParams = ForestParams(),
                         inner_k: int = 10, seed: int = 0) -> SecondLevelData:
    """Out-of-fold forest predictions for every target.

    One fold assignment is shared by all targets. Binary targets yield
    probabilities.
    """
    if inner_k < 2:
        raise ValueError("inner_k must be >= 2")
    if dataset.n < inner_k:
        raise ValueError(f"{dataset.n} rows are too few for {inner_k} inner folds")
    folds = kfold_split(dataset.n, inner_k, mix_seed(seed, _INNER_FOLDS))
    cat, nlev = dataset.categorical, _n_levels(dataset.schema())
    Y_hat = np.empty((dataset.n, dataset.m))
    for j, t in enumerate(dataset.targets):
        for f in range(inner_k):
            train, test = folds.train_rows(f), folds.test_rows(f)
            params = _forest_params(learner, mix_seed(seed, _INNER_CV, j, f))
            model = _fit_target(dataset.features[train], t.values[train], t.kind, params, cat, nlev)
            Y_hat[test, j] = predict_forest(model, dataset.features[test])
    Y_hat.setflags(write=False)
    return SecondLevelData(Y_hat, predicted_target_names(dataset.schema()), folds.assignment)


def first_level_and_predictions(dataset: Dataset, learner: ForestParams, inner_k: int, seed: int):
    """First-level forests and out-of-fold predictions, as shared by STA and CMOB."""
    return fit_first_level(dataset, learner, seed), cv_predicted_targets(dataset, learner, inner_k, seed)


def train_im(dataset: Dataset, learner: ForestParams = ForestParams(), seed: int = 0) -> MultiOutputModel:
    """One independent forest per target."""
    return MultiOutputModel(Variant.IM, dataset.schema(), fit_first_level(dataset, learner, seed))


def train_sta(dataset: Dataset, learner: ForestParams = ForestParams(), inner_k: int = 10,
              seed: int = 0, shared=None) -> MultiOutputModel:
    """Stacking: per-target forests on the features augmented with all predicted targets."""
    first, sld = shared or first_level_and_predictions(dataset, learner, inner_k, seed)
    X_aug = np.hstack([dataset.features, sld.Y_hat])
    cat = np.concatenate([dataset.categorical, np.zeros(dataset.m, dtype=bool)])
    nlev = np.concatenate([_n_levels(dataset.schema()), np.zeros(dataset.m, dtype=np.int64)])
    second = [
        _fit_target(X_aug, t.values, t.kind,
                    _forest_params(learner, mix_seed(seed, _SECOND_LEVEL, j)), cat, nlev)
        for j, t in enumerate(dataset.targets)
    ]
    return MultiOutputModel(Variant.STA, dataset.schema(), first, second, sld)


def train_cmob(dataset: Dataset, learner: ForestParams = ForestParams(),
               boost: BoostParams = BoostParams(), inner_k: int = 10, seed: int = 0,
               shared=None) -> MultiOutputModel:
    """Component-wise multi-output boosting.

    Each target gets a booster over the predicted-target columns only (its own
    included) with one linear base learner per column.
    """
    first, sld = shared or first_level_and_predictions(dataset, learner, inner_k, seed)
    space = BaseLearnerSpace.from_columns(sld.names)
    second = [
        boost_fit(sld.Y_hat, t.values, space, boost, LossKind.for_target(t.kind))
        for t in dataset.targets
    ]
    return MultiOutputModel(Variant.CMOB, dataset.schema(), first, second, sld)


def train(variant, dataset: Dataset, learner: ForestParams = ForestParams(),
          boost: BoostParams = BoostParams(), inner_k: int = 10, seed: int = 0,
          shared=None) -> MultiOutputModel:
    """Train one variant. ``shared`` may carry a precomputed
    :func:`first_level_and_predictions` result for the same arguments."""
    variant = Variant(variant)
    if variant is Variant.IM:
        if shared is not None:
            return MultiOutputModel(Variant.IM, dataset.schema(), list(shared[0]))
        return train_im(dataset, learner, seed)
    if variant is Variant.STA:
        return train_sta(dataset, learner, inner_k, seed, shared)
    return train_cmob(dataset, learner, boost, inner_k, seed, shared)


def first_level_predictions(model: MultiOutputModel, X) -> np.ndarray:
    return np.column_stack([predict_forest(f, X) for f in model.first_level])


def predict_multioutput(model: MultiOutputModel, X) -> MultiOutputPrediction:
    """Predict a q x m matrix for the rows of ``X``."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != model.schema.d:
        raise ValueError(f"expected rows with {model.schema.d} features, got shape {X.shape}")
    F = first_level_predictions(model, X)
    binary = np.array([k is TargetKind.BINARY for k in model.schema.target_kinds])

    if model.variant is Variant.IM:
        scores = F
        prob = np.where(binary, F, np.nan)
    elif model.variant is Variant.STA:
        X_aug = np.hstack([X, F])
        scores = np.column_stack([predict_forest(g, X_aug) for g in model.second_level])
        prob = np.where(binary, scores, np.nan)
    else:
        scores = np.column_stack([boost_predict(g, F) for g in model.second_level])
        prob = np.full_like(scores, np.nan)
        prob[:, binary] = np.exp(-np.logaddexp(0.0, -scores[:, binary]))

    response = np.where(binary, (np.nan_to_num(prob) >= 0.5).astype(float), scores)
    return MultiOutputPrediction(response, prob, scores)
