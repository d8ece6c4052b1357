"""JSON run configuration with defaults from the benchmark protocol."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .compboost import BoostParams
from .data import Dataset, TargetKind, default_cache_dir, load_csv, load_openml
from .evaluation import BenchmarkConfig
from .learners import ForestParams
from .multioutput import Variant


class ConfigError(ValueError):
    pass


_TOP_KEYS = {"openml_id", "csv", "targets", "name", "algorithms", "cv", "forest", "boost",
             "seed", "n_jobs", "cache_dir"}
_CV_KEYS = {"outer_k", "inner_k"}
_FOREST_KEYS = {"num_trees", "mtry", "min_node_size", "max_depth", "bootstrap"}
_BOOST_KEYS = {"learning_rate", "max_iters", "eps", "patience"}


@dataclass(frozen=True)
class RunConfig:
    openml_id: int | None = None
    csv: Path | None = None
    targets: tuple[tuple[str, TargetKind], ...] | None = None
    name: str | None = None
    algorithms: tuple[Variant, ...] = (Variant.IM, Variant.STA, Variant.CMOB)
    outer_k: int = 10
    inner_k: int = 10
    forest: ForestParams = field(default_factory=ForestParams)
    boost: BoostParams = field(default_factory=BoostParams)
    seed: int = 1
    n_jobs: int = 1
    cache_dir: Path | None = None

    def benchmark_config(self) -> BenchmarkConfig:
        return BenchmarkConfig(self.algorithms, self.outer_k, self.inner_k, self.forest,
                               self.boost, self.seed, self.n_jobs)

    def load_dataset(self) -> Dataset:
        if self.csv is not None:
            return load_csv(self.csv, self.targets, self.name)
        names = [t for t, _ in self.targets] if self.targets else None
        ds = load_openml(self.openml_id, self.cache_dir or default_cache_dir(), names)
        return ds if not self.name else Dataset(ds.features, ds.feature_names, ds.targets,
                                                ds.levels, self.name, ds.dropped_rows)


def _check_keys(section: dict, allowed: set[str], path: str) -> None:
    if not isinstance(section, dict):
        raise ConfigError(f"{path or 'config'}: expected an object")
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ConfigError(f"{path + '.' if path else ''}{unknown[0]}: unknown key")


def _int(value, path: str, minimum: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path}: expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{path}: must be >= {minimum}, got {value}")
    return value


def _number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {value!r}")
    return float(value)


def parse_config(text: str, base_dir: Path | None = None) -> RunConfig:
    """Parse a JSON run configuration; unspecified fields take the defaults.

    Exactly one dataset source is required: ``openml_id`` or ``csv`` (the
    latter together with ``targets``, a list of ``{"name", "kind"}`` objects).
    """
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from exc
    _check_keys(raw, _TOP_KEYS, "")

    kw: dict = {}
    has_openml = "openml_id" in raw
    has_csv = "csv" in raw
    if has_openml == has_csv:
        raise ConfigError("config needs exactly one dataset source: openml_id or csv")
    if has_openml:
        kw["openml_id"] = _int(raw["openml_id"], "openml_id", 1)
    else:
        p = Path(raw["csv"])
        kw["csv"] = p if p.is_absolute() or base_dir is None else base_dir / p
        if "targets" not in raw:
            raise ConfigError("targets: required with a csv dataset source")
    if "targets" in raw:
        targets = []
        if not isinstance(raw["targets"], list) or not raw["targets"]:
            raise ConfigError("targets: expected a non-empty list")
        for i, t in enumerate(raw["targets"]):
            _check_keys(t, {"name", "kind"}, f"targets[{i}]")
            if "name" not in t:
                raise ConfigError(f"targets[{i}].name: required")
            try:
                kind = TargetKind.parse(t.get("kind", "regression"))
            except ValueError as exc:
                raise ConfigError(f"targets[{i}].kind: {exc}") from None
            targets.append((str(t["name"]), kind))
        kw["targets"] = tuple(targets)
    if "name" in raw:
        kw["name"] = str(raw["name"])
    if "algorithms" in raw:
        try:
            kw["algorithms"] = tuple(Variant(str(a).lower()) for a in raw["algorithms"])
        except ValueError:
            raise ConfigError(f"algorithms: expected a subset of im, sta, cmob, got {raw['algorithms']!r}") from None
        if not kw["algorithms"]:
            raise ConfigError("algorithms: must not be empty")

    cv = raw.get("cv", {})
    _check_keys(cv, _CV_KEYS, "cv")
    for key in _CV_KEYS & set(cv):
        kw[key] = _int(cv[key], f"cv.{key}", 2)

    forest = raw.get("forest", {})
    _check_keys(forest, _FOREST_KEYS, "forest")
    fkw = {}
    if "num_trees" in forest:
        fkw["num_trees"] = _int(forest["num_trees"], "forest.num_trees", 1)
    for key in ("mtry", "min_node_size", "max_depth"):
        if forest.get(key) is not None:
            fkw[key] = _int(forest[key], f"forest.{key}", 0 if key == "max_depth" else 1)
    if "bootstrap" in forest:
        if not isinstance(forest["bootstrap"], bool):
            raise ConfigError("forest.bootstrap: expected true or false")
        fkw["bootstrap"] = forest["bootstrap"]
    kw["forest"] = ForestParams(**fkw)

    boost = raw.get("boost", {})
    _check_keys(boost, _BOOST_KEYS, "boost")
    bkw = {}
    if "learning_rate" in boost:
        nu = _number(boost["learning_rate"], "boost.learning_rate")
        if not 0.0 < nu <= 1.0:
            raise ConfigError(f"boost.learning_rate: must be in (0, 1], got {nu}")
        bkw["learning_rate"] = nu
    if "max_iters" in boost:
        bkw["max_iters"] = _int(boost["max_iters"], "boost.max_iters", 1)
    if "eps" in boost:
        eps = _number(boost["eps"], "boost.eps")
        if eps < 0:
            raise ConfigError(f"boost.eps: must be >= 0, got {eps}")
        bkw["eps"] = eps
    if "patience" in boost:
        bkw["patience"] = _int(boost["patience"], "boost.patience", 1)
    kw["boost"] = BoostParams(**bkw)

    if "seed" in raw:
        kw["seed"] = _int(raw["seed"], "seed", 0)
    if "n_jobs" in raw:
        kw["n_jobs"] = _int(raw["n_jobs"], "n_jobs", 1)
    if "cache_dir" in raw:
        kw["cache_dir"] = Path(raw["cache_dir"])
    return RunConfig(**kw)


def load_config(path) -> RunConfig:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), base_dir=path.parent)
