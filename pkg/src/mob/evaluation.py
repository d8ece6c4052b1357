"""Multi-output metrics and the nested cross-validation benchmark."""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .compboost import BoostParams
from .data import Dataset, Standardizer, TargetKind, fit_standardizer, kfold_split, mix_seed
from .learners import ForestParams
from .multioutput import (MultiOutputModel, Variant, first_level_and_predictions,
                          predict_multioutput, train)

_OUTER_FOLDS, _FOLD_TRAIN = 11, 12


def _pair(y, y_hat) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y.shape != y_hat.shape:
        raise ValueError(f"shape mismatch: {y.shape} vs {y_hat.shape}")
    if y.size == 0:
        raise ValueError("empty input")
    return y, y_hat


def _check_binary(*arrays) -> None:
    for a in arrays:
        if not np.all((a == 0) | (a == 1)):
            raise ValueError("expected binary 0/1 values")


def hamming_loss(y, y_hat) -> float:
    """Fraction of mismatching labels.

    A vector is one instance over ``m`` labels; an (n, m) matrix gives the
    mean of the per-instance losses.
    """
    y, y_hat = _pair(y, y_hat)
    _check_binary(y, y_hat)
    if y.ndim == 1:
        return float(np.count_nonzero(y != y_hat)) / y.shape[0]
    return float(np.mean(np.count_nonzero(y != y_hat, axis=1) / y.shape[1]))


def mmse(y, y_hat) -> float:
    """Mean over targets of squared errors; for an (n, m) matrix, averaged over instances."""
    y, y_hat = _pair(y, y_hat)
    if y.ndim == 1:
        return float(np.mean((y - y_hat) ** 2))
    return float(np.mean(np.mean((y - y_hat) ** 2, axis=1)))


def mmce(y, y_hat) -> float:
    """Misclassification rate of one binary target."""
    y, y_hat = _pair(y, y_hat)
    _check_binary(y, y_hat)
    return float(np.count_nonzero(y != y_hat)) / y.size


def mse(y, y_hat) -> float:
    y, y_hat = _pair(y, y_hat)
    return float(np.mean((y - y_hat) ** 2))


def standardized_mse(y, y_hat, standardizer: Standardizer) -> float:
    """MSE after applying the training-set standardizer to both truth and prediction."""
    if standardizer is None:
        raise ValueError("standardizer is not fitted")
    y, y_hat = _pair(y, y_hat)
    return mse(standardizer.apply(y), standardizer.apply(y_hat))


class MetricKind(str, Enum):
    MSE = "mse"
    STANDARDIZED_MSE = "standardized_mse"
    MMCE = "mmce"


@dataclass(frozen=True)
class MetricSpec:
    """Per-target losses ``kinds[j]`` weighted by ``weights[j]``."""

    kinds: tuple[MetricKind, ...]
    weights: tuple[float, ...]
    standardizers: tuple[Standardizer | None, ...] | None = None

    def __post_init__(self):
        if len(self.kinds) != len(self.weights):
            raise ValueError("kinds and weights differ in length")
        if not all(np.isfinite(w) and w >= 0 for w in self.weights):
            raise ValueError("weights must be finite and non-negative")
        if self.standardizers is not None and len(self.standardizers) != len(self.kinds):
            raise ValueError("standardizers and kinds differ in length")

    @classmethod
    def uniform(cls, kind: MetricKind, m: int) -> "MetricSpec":
        return cls((MetricKind(kind),) * m, (1.0 / m,) * m)


def _target_loss(kind: MetricKind, y, y_hat, standardizer) -> np.ndarray:
    """Pointwise loss of one target."""
    if kind is MetricKind.MMCE:
        return (y != y_hat).astype(np.float64)
    if kind is MetricKind.STANDARDIZED_MSE:
        if standardizer is None:
            raise ValueError("standardized_mse needs a fitted standardizer")
        return (standardizer.apply(y) - standardizer.apply(y_hat)) ** 2
    return (y - y_hat) ** 2


def weighted_loss(y, y_hat, spec: MetricSpec) -> float:
    """Sum of weighted per-target losses; matrices are averaged over instances."""
    y, y_hat = _pair(y, y_hat)
    m = y.shape[-1]
    if len(spec.kinds) != m:
        raise ValueError(f"metric spec has {len(spec.kinds)} targets, data has {m}")
    Y, Y_hat = np.atleast_2d(y), np.atleast_2d(y_hat)
    std = spec.standardizers or (None,) * m
    per_instance = np.zeros(Y.shape[0])
    for j, (kind, w) in enumerate(zip(spec.kinds, spec.weights)):
        per_instance += w * _target_loss(MetricKind(kind), Y[:, j], Y_hat[:, j], std[j])
    return float(np.mean(per_instance))


# ---------------------------------------------------------------------------
# Benchmark
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BenchmarkConfig:
    algorithms: tuple[Variant, ...] = (Variant.IM, Variant.STA, Variant.CMOB)
    outer_k: int = 10
    inner_k: int = 10
    learner: ForestParams = ForestParams()
    boost: BoostParams = BoostParams()
    seed: int = 1
    n_jobs: int = 1

    def __post_init__(self):
        object.__setattr__(self, "algorithms", tuple(Variant(a) for a in self.algorithms))
        if self.outer_k < 2 or self.inner_k < 2:
            raise ValueError("outer_k and inner_k must be >= 2")
        if not self.algorithms:
            raise ValueError("no algorithms requested")


@dataclass
class BenchmarkResult:
    dataset: str
    targets: tuple[str, ...]
    kinds: tuple[TargetKind, ...]
    algorithms: tuple[Variant, ...]
    # scores[alg][fold][j]
    fold_scores: dict[str, list[list[float]]]
    fold_sizes: list[int]
    seed: int
    outer_k: int
    inner_k: int
    durations: dict[str, float] = field(default_factory=dict)
    # fitted models per (algorithm, fold), kept only on request
    models: dict[tuple[str, int], MultiOutputModel] | None = None

    def target_scores(self, algorithm) -> np.ndarray:
        """Per-target mean over outer folds."""
        return np.mean(np.asarray(self.fold_scores[Variant(algorithm).value]), axis=0)

    def mmse(self, algorithm) -> float | None:
        if any(k is not TargetKind.REGRESSION for k in self.kinds):
            return None
        return float(np.mean(self.target_scores(algorithm)))

    def hamming(self, algorithm) -> float | None:
        if any(k is not TargetKind.BINARY for k in self.kinds):
            return None
        return float(np.mean(self.target_scores(algorithm)))

    def to_dict(self) -> dict:
        algos = {}
        for a in self.algorithms:
            algos[a.value] = {
                "target_scores": [float(v) for v in self.target_scores(a)],
                "fold_scores": self.fold_scores[a.value],
                "mmse": self.mmse(a),
                "hamming_loss": self.hamming(a),
            }
        return {
            "dataset": self.dataset,
            "targets": list(self.targets),
            "kinds": [k.value for k in self.kinds],
            "metrics": ["mmce" if k is TargetKind.BINARY else "standardized_mse" for k in self.kinds],
            "outer_k": self.outer_k,
            "inner_k": self.inner_k,
            "seed": self.seed,
            "fold_sizes": self.fold_sizes,
            "algorithms": algos,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _score_fold(model: MultiOutputModel, test: Dataset, standardizers) -> list[float]:
    pred = predict_multioutput(model, test.features)
    out = []
    for j, t in enumerate(test.targets):
        if t.kind is TargetKind.BINARY:
            out.append(mmce(t.values, pred.response[:, j]))
        else:
            out.append(standardized_mse(t.values, pred.response[:, j], standardizers[j]))
    return out


def run_benchmark(dataset: Dataset, config: BenchmarkConfig = BenchmarkConfig(),
                  keep_models: bool = False) -> BenchmarkResult:
    """Outer ``outer_k``-fold CV of each requested algorithm on ``dataset``.

    Test folds are used only for prediction and scoring; regression targets
    are scored by the MSE after standardizing with training-fold statistics.
    """
    if dataset.n < config.outer_k:
        raise ValueError(f"{dataset.n} rows are too few for {config.outer_k} outer folds")
    min_train = dataset.n - int(np.ceil(dataset.n / config.outer_k))
    if min_train < config.inner_k:
        raise ValueError(f"training folds of {min_train} rows are too small for {config.inner_k} inner folds")
    folds = kfold_split(dataset.n, config.outer_k, mix_seed(config.seed, _OUTER_FOLDS))

    def run_fold(f: int):
        train_ds = dataset.subset(folds.train_rows(f))
        test_ds = dataset.subset(folds.test_rows(f))
        standardizers = [fit_standardizer(t.values) if t.kind is TargetKind.REGRESSION else None
                         for t in train_ds.targets]
        fold_seed = mix_seed(config.seed, _FOLD_TRAIN, f)
        scores, models, durations = {}, {}, {}
        shared = None
        if sum(a is not Variant.IM for a in config.algorithms) > 1:
            # identical seeds make the first level and inner CV common to all variants
            start = time.perf_counter()
            shared = first_level_and_predictions(train_ds, config.learner, config.inner_k, fold_seed)
            durations["shared"] = time.perf_counter() - start
        for a in config.algorithms:
            start = time.perf_counter()
            model = train(a, train_ds, config.learner, config.boost, config.inner_k, fold_seed, shared)
            scores[a.value] = _score_fold(model, test_ds, standardizers)
            durations[a.value] = time.perf_counter() - start
            if keep_models:
                models[(a.value, f)] = model
        return scores, models, durations

    if config.n_jobs > 1:
        with ThreadPoolExecutor(max_workers=config.n_jobs) as pool:
            outcomes = list(pool.map(run_fold, range(config.outer_k)))
    else:
        outcomes = [run_fold(f) for f in range(config.outer_k)]

    fold_scores = {a.value: [o[0][a.value] for o in outcomes] for a in config.algorithms}
    durations = {key: sum(o[2].get(key, 0.0) for o in outcomes) for key in outcomes[0][2]}
    models = {}
    for o in outcomes:
        models.update(o[1])
    return BenchmarkResult(
        dataset=dataset.name,
        targets=dataset.target_names,
        kinds=tuple(t.kind for t in dataset.targets),
        algorithms=config.algorithms,
        fold_scores=fold_scores,
        fold_sizes=[int(s) for s in folds.sizes()],
        seed=config.seed,
        outer_k=config.outer_k,
        inner_k=config.inner_k,
        durations=durations,
        models=models if keep_models else None,
    )
