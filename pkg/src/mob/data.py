"""Datasets, file ingestion (CSV / ARFF / OpenML), folds and standardization."""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import tempfile
import urllib.error
import urllib.request
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

logger = logging.getLogger(__name__)

OPENML_API = "https://www.openml.org/api/v1/json/data/{data_id}"
DEFAULT_CACHE_DIR = Path.home() / ".cache" / "mob"


class DataError(ValueError):
    """Raised for malformed or inconsistent input data."""


class TargetKind(str, Enum):
    REGRESSION = "regression"
    BINARY = "binary"

    @classmethod
    def parse(cls, value) -> "TargetKind":
        if isinstance(value, TargetKind):
            return value
        key = str(value).strip().lower()
        aliases = {
            "regression": cls.REGRESSION,
            "regr": cls.REGRESSION,
            "binary": cls.BINARY,
            "binaryclassification": cls.BINARY,
            "classification": cls.BINARY,
            "classif": cls.BINARY,
        }
        if key not in aliases:
            raise DataError(f"unknown target kind {value!r}")
        return aliases[key]


@dataclass(frozen=True)
class TargetColumn:
    name: str
    kind: TargetKind
    values: np.ndarray
    # original label text for the 0/1 codes of a binary target
    labels: tuple[str, str] | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if values.ndim != 1:
            raise DataError(f"target {self.name!r} must be a vector")
        if not np.all(np.isfinite(values)):
            raise DataError(f"target {self.name!r} has non-finite values")
        if self.kind is TargetKind.BINARY and not np.all((values == 0) | (values == 1)):
            raise DataError(f"binary target {self.name!r} has values outside {{0, 1}}")


@dataclass(frozen=True)
class Schema:
    """Feature and target layout shared by a dataset and the models trained on it."""

    feature_names: tuple[str, ...]
    # levels[p] is None for numeric columns, else the level names in index order
    levels: tuple[tuple[str, ...] | None, ...]
    target_names: tuple[str, ...]
    target_kinds: tuple[TargetKind, ...]

    @property
    def d(self) -> int:
        return len(self.feature_names)

    @property
    def m(self) -> int:
        return len(self.target_names)

    @property
    def categorical(self) -> np.ndarray:
        return np.array([lv is not None for lv in self.levels], dtype=bool)

    def to_dict(self) -> dict:
        return {
            "feature_names": list(self.feature_names),
            "levels": [None if lv is None else list(lv) for lv in self.levels],
            "target_names": list(self.target_names),
            "target_kinds": [k.value for k in self.target_kinds],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Schema":
        return cls(
            feature_names=tuple(d["feature_names"]),
            levels=tuple(None if lv is None else tuple(lv) for lv in d["levels"]),
            target_names=tuple(d["target_names"]),
            target_kinds=tuple(TargetKind(k) for k in d["target_kinds"]),
        )


@dataclass(frozen=True)
class Dataset:
    """Feature matrix plus ``m`` typed target columns.

    Categorical feature columns hold level indices (as floats) into
    ``levels[p]``; numeric columns hold the raw values.
    """

    features: np.ndarray
    feature_names: tuple[str, ...]
    targets: tuple[TargetColumn, ...]
    levels: tuple[tuple[str, ...] | None, ...] = ()
    name: str = ""
    dropped_rows: int = 0

    def __post_init__(self):
        X = np.array(self.features, dtype=np.float64)
        if X.ndim != 2:
            raise DataError("features must be a 2-d matrix")
        X.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "targets", tuple(self.targets))
        levels = tuple(self.levels) if self.levels else (None,) * X.shape[1]
        object.__setattr__(self, "levels", levels)
        n, d = X.shape
        if n < 1:
            raise DataError("dataset has no rows")
        if not self.targets:
            raise DataError("dataset needs at least one target")
        if len(self.feature_names) != d or len(levels) != d:
            raise DataError("feature names / levels do not match the feature matrix")
        for t in self.targets:
            if t.values.shape[0] != n:
                raise DataError(f"target {t.name!r} has {t.values.shape[0]} values, expected {n}")
        if not np.all(np.isfinite(X)):
            raise DataError("features contain missing or non-finite values")
        for p, lv in enumerate(levels):
            if lv is not None:
                col = X[:, p]
                if np.any(col != np.round(col)) or np.any(col < 0) or np.any(col >= len(lv)):
                    raise DataError(f"categorical column {self.feature_names[p]!r} has invalid level codes")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def m(self) -> int:
        return len(self.targets)

    @property
    def categorical(self) -> np.ndarray:
        return np.array([lv is not None for lv in self.levels], dtype=bool)

    @property
    def target_names(self) -> tuple[str, ...]:
        return tuple(t.name for t in self.targets)

    @property
    def Y(self) -> np.ndarray:
        """n x m matrix of target values."""
        return np.column_stack([t.values for t in self.targets])

    def schema(self) -> Schema:
        return Schema(
            feature_names=self.feature_names,
            levels=self.levels,
            target_names=self.target_names,
            target_kinds=tuple(t.kind for t in self.targets),
        )

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(
            features=self.features[rows],
            feature_names=self.feature_names,
            targets=tuple(
                TargetColumn(t.name, t.kind, t.values[rows], t.labels) for t in self.targets
            ),
            levels=self.levels,
            name=self.name,
        )

    def with_target_values(self, j: int, values) -> "Dataset":
        """Copy of the dataset with target ``j`` replaced."""
        targets = list(self.targets)
        t = targets[j]
        targets[j] = TargetColumn(t.name, t.kind, values, t.labels)
        return Dataset(self.features, self.feature_names, targets, self.levels, self.name)


# ---------------------------------------------------------------------------
# Parsing helpers
# ---------------------------------------------------------------------------

def _is_missing(cell: str | None) -> bool:
    return cell is None or cell.strip() in ("", "?")


def _try_float(cell: str) -> float | None:
    try:
        v = float(cell)
    except ValueError:
        return None
    return v if math.isfinite(v) else None


def _binary_codes(cells: list[str], declared: Sequence[str] | None, name: str):
    """Map a two-level column to 0/1 codes. Returns (codes, labels)."""
    levels = list(declared) if declared is not None else sorted(set(cells))
    if len(levels) > 2 or (declared is not None and len(levels) != 2):
        raise DataError(f"target {name!r} is not binary: levels {levels}")
    numeric = [_try_float(s) for s in levels]
    if all(v in (0.0, 1.0) for v in numeric):
        return [float(c) for c in cells], ("0", "1")
    if {s.lower() for s in levels} <= {"false", "true"}:
        return [1.0 if c.lower() == "true" else 0.0 for c in cells], ("false", "true")
    # otherwise declared (or sorted) order: first level -> 0
    lookup = {lv: float(i) for i, lv in enumerate(levels)}
    labels = (levels[0], levels[1] if len(levels) > 1 else "")
    return [lookup[c] for c in cells], labels


def _build_dataset(
    header: list[str],
    rows: list[list[str]],
    target_spec: Sequence[tuple[str, TargetKind | str]],
    name: str,
    nominal: dict[str, list[str]] | None = None,
) -> Dataset:
    nominal = nominal or {}
    spec = [(t, TargetKind.parse(k)) for t, k in target_spec]
    if not spec:
        raise DataError("target_spec is empty")
    col_index = {h: i for i, h in enumerate(header)}
    for t, _ in spec:
        if t not in col_index:
            raise DataError(f"unknown target name {t!r}")
    if len({t for t, _ in spec}) != len(spec):
        raise DataError("duplicate target names")

    kept = [r for r in rows if not any(_is_missing(c) for c in r)]
    dropped = len(rows) - len(kept)
    if dropped:
        logger.warning("%s: dropped %d row(s) with missing values", name or "dataset", dropped)
    if not kept:
        raise DataError("dataset is empty after dropping rows with missing values")
    columns = [[r[i].strip() for r in kept] for i in range(len(header))]

    targets = []
    for t, kind in spec:
        cells = columns[col_index[t]]
        if kind is TargetKind.REGRESSION:
            vals = [_try_float(c) for c in cells]
            if any(v is None for v in vals):
                raise DataError(f"regression target {t!r} has non-numeric values")
            targets.append(TargetColumn(t, kind, np.array(vals)))
        else:
            codes, labels = _binary_codes(cells, nominal.get(t), t)
            targets.append(TargetColumn(t, kind, np.array(codes), labels))

    target_names = {t for t, _ in spec}
    feature_names, feature_cols, levels = [], [], []
    for i, h in enumerate(header):
        if h in target_names:
            continue
        cells = columns[i]
        declared = nominal.get(h)
        numeric = None if declared is not None else [_try_float(c) for c in cells]
        if numeric is not None and all(v is not None for v in numeric):
            feature_cols.append(numeric)
            levels.append(None)
        else:
            # declared nominal order, else first-appearance order
            lv = list(declared) if declared is not None else list(dict.fromkeys(cells))
            lookup = {s: float(k) for k, s in enumerate(lv)}
            unknown = set(cells) - lookup.keys()
            if unknown:
                raise DataError(f"column {h!r} has undeclared levels {sorted(unknown)}")
            feature_cols.append([lookup[c] for c in cells])
            levels.append(tuple(lv))
        feature_names.append(h)

    X = np.array(feature_cols, dtype=np.float64).T.reshape(len(kept), len(feature_names))
    return Dataset(X, tuple(feature_names), tuple(targets), tuple(levels), name, dropped)


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def load_csv(path, target_spec: Sequence[tuple[str, TargetKind | str]], name: str | None = None) -> Dataset:
    """Load a CSV file with a header row; ``target_spec`` lists (column, kind) pairs."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")
            rows.append(row)
    return _build_dataset(header, rows, target_spec, name or path.stem)


def _format_value(v: float) -> str:
    return repr(float(v))


def write_csv(dataset: Dataset, path) -> None:
    """Write ``dataset`` so that :func:`load_csv` reproduces its values."""
    header = list(dataset.feature_names) + list(dataset.target_names)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(dataset.n):
            row = []
            for p, lv in enumerate(dataset.levels):
                v = dataset.features[i, p]
                row.append(lv[int(v)] if lv is not None else _format_value(v))
            for t in dataset.targets:
                v = t.values[i]
                if t.kind is TargetKind.BINARY and t.labels is not None and t.labels != ("0", "1"):
                    row.append(t.labels[int(v)])
                elif t.kind is TargetKind.BINARY:
                    row.append(str(int(v)))
                else:
                    row.append(_format_value(v))
            w.writerow(row)


def encode_features(header: Sequence[str], rows: Sequence[Sequence[str]], schema: Schema) -> np.ndarray:
    """Encode raw feature cells against a training schema.

    Columns are matched by name; extra columns (for example target columns) are
    ignored. Categorical levels unseen at training time are encoded as -1.
    """
    col_index = {h.strip(): i for i, h in enumerate(header)}
    missing = [f for f in schema.feature_names if f not in col_index]
    if missing:
        raise DataError(f"missing feature columns: {missing}")
    X = np.empty((len(rows), schema.d))
    for p, (fname, lv) in enumerate(zip(schema.feature_names, schema.levels)):
        i = col_index[fname]
        if lv is None:
            for r, row in enumerate(rows):
                v = _try_float(row[i].strip())
                if v is None:
                    raise DataError(f"row {r + 1}: column {fname!r} is not numeric")
                X[r, p] = v
        else:
            lookup = {s: k for k, s in enumerate(lv)}
            for r, row in enumerate(rows):
                X[r, p] = lookup.get(row[i].strip(), -1)
    return X


def read_feature_csv(path, schema: Schema) -> np.ndarray:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [r for r in reader if r]
    return encode_features(header, rows, schema)


# ---------------------------------------------------------------------------
# ARFF
# ---------------------------------------------------------------------------

def _split_arff_list(body: str) -> list[str]:
    reader = csv.reader([body], skipinitialspace=True, quotechar="'")
    out = []
    for cell in next(reader, []):
        cell = cell.strip()
        if len(cell) >= 2 and cell[0] == cell[-1] == '"':
            cell = cell[1:-1]
        out.append(cell)
    return out


def _parse_attribute(line: str) -> tuple[str, list[str] | None]:
    rest = line[len("@attribute"):].strip()
    if not rest:
        raise DataError(f"malformed attribute declaration: {line!r}")
    if rest[0] in "'\"":
        q = rest[0]
        end = rest.find(q, 1)
        if end < 0:
            raise DataError(f"malformed attribute declaration: {line!r}")
        name, rest = rest[1:end], rest[end + 1:].strip()
    else:
        parts = rest.split(None, 1)
        if len(parts) != 2:
            raise DataError(f"malformed attribute declaration: {line!r}")
        name, rest = parts[0], parts[1].strip()
    if rest.startswith("{"):
        if not rest.endswith("}"):
            raise DataError(f"malformed nominal declaration: {line!r}")
        return name, _split_arff_list(rest[1:-1])
    if rest.lower() in ("numeric", "real", "integer"):
        return name, None
    raise DataError(f"unsupported attribute type in {line!r}")


def parse_arff_header(text: str) -> tuple[str, list[tuple[str, list[str] | None]], list[str]]:
    """Split ARFF text into (relation, attributes, data lines)."""
    relation = ""
    attributes: list[tuple[str, list[str] | None]] = []
    data_lines: list[str] = []
    # tolerate single-line inputs by breaking before each section keyword
    normalized = text
    for kw in ("@attribute", "@ATTRIBUTE", "@Attribute", "@data", "@DATA", "@Data"):
        normalized = normalized.replace(kw, "\n" + kw)
    in_data = False
    for raw in normalized.splitlines():
        line = raw.strip()
        if not line or line.startswith("%"):
            continue
        low = line.lower()
        if in_data:
            data_lines.append(line)
        elif low.startswith("@relation"):
            relation = line[len("@relation"):].strip().strip("'\"")
        elif low.startswith("@attribute"):
            attributes.append(_parse_attribute(line))
        elif low.startswith("@data"):
            in_data = True
            tail = line[len("@data"):].strip()
            if tail:
                data_lines.append(tail)
        else:
            raise DataError(f"unexpected ARFF header line: {line!r}")
    if not attributes:
        raise DataError("ARFF has no @attribute declarations")
    if not in_data:
        raise DataError("ARFF has no @data section")
    return relation, attributes, data_lines


def parse_arff(text: str, target_spec: Sequence[tuple[str, TargetKind | str]] | None = None,
               name: str | None = None) -> Dataset:
    """Parse dense ARFF text.

    If ``target_spec`` is None, every target must instead be named later; use
    :func:`load_openml` for OpenML defaults.
    """
    relation, attributes, data_lines = parse_arff_header(text)
    header = [a for a, _ in attributes]
    nominal = {a: lv for a, lv in attributes if lv is not None}
    rows = []
    for line in data_lines:
        if line.startswith("{"):
            raise DataError("sparse ARFF data is not supported")
        row = _split_arff_list(line)
        if len(row) != len(header):
            raise DataError(f"ARFF data row has {len(row)} values, expected {len(header)}")
        rows.append(row)
    if target_spec is None:
        raise DataError("target_spec is required")
    for t, kind in target_spec:
        if TargetKind.parse(kind) is TargetKind.REGRESSION and t in nominal:
            raise DataError(f"target {t!r} is nominal, cannot be a regression target")
    return _build_dataset(header, rows, target_spec, name or relation, nominal)


def arff_target_spec(text: str, target_names: Sequence[str]) -> list[tuple[str, TargetKind]]:
    """Infer target kinds from ARFF attribute types."""
    _, attributes, _ = parse_arff_header(text)
    types = dict(attributes)
    spec = []
    for t in target_names:
        if t not in types:
            raise DataError(f"unknown target name {t!r}")
        spec.append((t, TargetKind.REGRESSION if types[t] is None else TargetKind.BINARY))
    return spec


# ---------------------------------------------------------------------------
# OpenML
# ---------------------------------------------------------------------------

def _http_get(url: str, timeout: float = 60.0) -> bytes:
    req = urllib.request.Request(url, headers={"User-Agent": "mob/0.1"})
    with urllib.request.urlopen(req, timeout=timeout) as resp:
        return resp.read()


def _atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def default_cache_dir() -> Path:
    env = os.environ.get("MOB_CACHE_DIR")
    return Path(env) if env else DEFAULT_CACHE_DIR


def _cached_description(data_id: int, cache_dir: Path) -> dict:
    path = cache_dir / f"openml_{data_id}.json"
    if path.is_file():
        return json.loads(path.read_text(encoding="utf-8"))
    try:
        raw = _http_get(OPENML_API.format(data_id=data_id))
    except urllib.error.HTTPError as exc:
        if exc.code in (404, 412):
            raise DataError(f"OpenML data ID {data_id} not found") from exc
        raise ConnectionError(f"OpenML request failed for data ID {data_id}: {exc}") from exc
    except (urllib.error.URLError, OSError) as exc:
        raise ConnectionError(f"OpenML unreachable and no cached copy of data ID {data_id}: {exc}") from exc
    try:
        desc = json.loads(raw)["data_set_description"]
    except (ValueError, KeyError) as exc:
        raise DataError(f"OpenML data ID {data_id} not found") from exc
    _atomic_write(path, json.dumps(desc, sort_keys=True).encode("utf-8"))
    return desc


def fetch_openml(data_id: int, cache_dir=None) -> str:
    """Return the ARFF text of OpenML dataset ``data_id``, downloading on a cache miss."""
    cache_dir = Path(cache_dir) if cache_dir is not None else default_cache_dir()
    arff_path = cache_dir / f"openml_{int(data_id)}.arff"
    if arff_path.is_file():
        return arff_path.read_bytes().decode("utf-8")
    desc = _cached_description(int(data_id), cache_dir)
    url = desc.get("url")
    if not url:
        raise DataError(f"OpenML description for {data_id} has no data URL")
    try:
        raw = _http_get(url)
    except (urllib.error.URLError, OSError) as exc:
        raise ConnectionError(f"download of {url} failed: {exc}") from exc
    _atomic_write(arff_path, raw)
    return raw.decode("utf-8")


def openml_target_names(data_id: int, cache_dir=None) -> list[str]:
    cache_dir = Path(cache_dir) if cache_dir is not None else default_cache_dir()
    desc = _cached_description(int(data_id), cache_dir)
    raw = desc.get("default_target_attribute") or ""
    names = [t.strip() for t in raw.split(",") if t.strip()]
    if not names:
        raise DataError(f"OpenML data ID {data_id} declares no default targets")
    return names


def load_openml(data_id: int, cache_dir=None, targets: Sequence[str] | None = None) -> Dataset:
    """Fetch (or read from cache) and parse an OpenML dataset.

    Targets default to the dataset's declared default target attributes; kinds
    follow the ARFF attribute types.
    """
    text = fetch_openml(data_id, cache_dir)
    if targets is None:
        targets = openml_target_names(data_id, cache_dir)
    spec = arff_target_spec(text, targets)
    return parse_arff(text, spec)


# ---------------------------------------------------------------------------
# Folds and standardization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FoldAssignment:
    k: int
    assignment: np.ndarray
    seed: int

    def test_rows(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == fold)

    def train_rows(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignment != fold)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.k)


def kfold_split(n: int, k: int, seed: int) -> FoldAssignment:
    """Shuffle ``n`` rows into ``k`` folds whose sizes differ by at most one."""
    if k < 2:
        raise ValueError(f"need k >= 2 folds, got {k}")
    if k > n:
        raise ValueError(f"cannot split {n} rows into {k} folds")
    rng = np.random.default_rng(int(seed) & 0xFFFFFFFFFFFFFFFF)
    perm = rng.permutation(n)
    assignment = np.empty(n, dtype=np.int64)
    assignment[perm] = np.arange(n) % k
    assignment.setflags(write=False)
    return FoldAssignment(k, assignment, int(seed))


@dataclass(frozen=True)
class Standardizer:
    mean: float
    sd: float

    def apply(self, x):
        x = np.asarray(x, dtype=np.float64) - self.mean
        return x / self.sd if self.sd > 0 else x


def fit_standardizer(values) -> Standardizer:
    """Mean and sample standard deviation (divisor n - 1) of ``values``."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValueError("cannot fit a standardizer on an empty vector")
    mean = float(v.mean())
    # constant vectors get sd 0 exactly rather than a rounding residue
    sd = float(v.std(ddof=1)) if v.size > 1 and np.ptp(v) > 0 else 0.0
    return Standardizer(mean, sd)


def mix_seed(*parts: int) -> int:
    """Deterministically derive a 63-bit seed from integer parts."""
    ss = np.random.SeedSequence([int(p) & 0xFFFFFFFFFFFFFFFF for p in parts])
    hi, lo = ss.generate_state(2, dtype=np.uint32)
    return int((int(hi) << 32 | int(lo)) & 0x7FFFFFFFFFFFFFFF)
