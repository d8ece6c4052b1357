"""Component-wise (model-based) gradient boosting.

Every iteration fits each candidate base learner to the current pseudo
residuals by least squares, keeps the one with the smallest residual sum of
squares, and adds it to the model scaled by the learning rate. Selecting one
univariate learner at a time yields a sparse additive model whose per-learner
coefficients and risk reductions can be read off directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .data import Schema, TargetKind

BINOMIAL_CLAMP = 1e-6


class LossKind(str, Enum):
    SQUARED_ERROR = "squared_error"
    BINOMIAL = "binomial"

    @classmethod
    def for_target(cls, kind: TargetKind) -> "LossKind":
        return cls.BINOMIAL if TargetKind(kind) is TargetKind.BINARY else cls.SQUARED_ERROR


def loss_values(y, g, loss: LossKind) -> np.ndarray:
    """Pointwise loss: 0.5 (y - g)^2, or log(1 + exp(-(2y - 1) g)) for 0/1 labels."""
    y = np.asarray(y, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if loss is LossKind.SQUARED_ERROR:
        return 0.5 * (y - g) ** 2
    return np.logaddexp(0.0, -(2.0 * y - 1.0) * g)


def empirical_risk(y, g, loss: LossKind) -> float:
    return float(np.mean(loss_values(y, g, loss)))


def init_offset(y, loss: LossKind) -> float:
    """Risk-minimizing constant score."""
    y = np.asarray(y, dtype=np.float64)
    if y.size == 0:
        raise ValueError("cannot compute an offset for an empty target")
    if loss is LossKind.SQUARED_ERROR:
        return float(y.mean())
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("binomial loss needs 0/1 labels")
    # both class shares are averaged directly so 1 - p does not lose digits
    p = min(max(float(y.mean()), BINOMIAL_CLAMP), 1.0 - BINOMIAL_CLAMP)
    q = min(max(float((1.0 - y).mean()), BINOMIAL_CLAMP), 1.0 - BINOMIAL_CLAMP)
    return math.log(p / q)


def negative_gradient(y, g, loss: LossKind) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if y.shape != g.shape:
        raise ValueError(f"length mismatch: {y.shape} vs {g.shape}")
    if loss is LossKind.SQUARED_ERROR:
        return y - g
    s = 2.0 * y - 1.0
    # s / (1 + exp(s g)) written via the logistic function to avoid overflow
    return s * np.exp(-np.logaddexp(0.0, s * g))


def fit_linear_base(x, r) -> tuple[float, float, float]:
    """Least-squares line through ``(x, r)``. Returns (theta0, theta1, sse)."""
    x = np.asarray(x, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    if x.shape != r.shape or x.size == 0:
        raise ValueError("x and r must be non-empty and of equal length")
    xbar = x.mean()
    rbar = r.mean()
    xc = x - xbar
    sxx = float(np.dot(xc, xc))
    theta1 = float(np.dot(xc, r - rbar)) / sxx if sxx != 0.0 else 0.0
    theta0 = float(rbar - theta1 * xbar)
    sse = float(np.sum((r - theta0 - theta1 * x) ** 2))
    return theta0, theta1, sse


def fit_group_intercept(member, r) -> tuple[float, float]:
    """Intercept for the rows of one categorical level. Returns (theta0, sse)."""
    member = np.asarray(member, dtype=bool)
    r = np.asarray(r, dtype=np.float64)
    if member.shape != r.shape:
        raise ValueError("membership and residuals differ in length")
    count = int(member.sum())
    theta0 = float(r[member].mean()) if count else 0.0
    sse = float(np.sum((r - theta0 * member) ** 2))
    return theta0, sse


# ---------------------------------------------------------------------------
# Base-learner space
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Linear:
    """theta0 + theta1 * x[:, feature]"""

    feature: int
    name: str = ""

    def label(self) -> str:
        return self.name or f"x{self.feature}"

    def to_dict(self) -> dict:
        return {"type": "linear", "feature": self.feature, "name": self.name}


@dataclass(frozen=True)
class GroupIntercept:
    """theta0 on rows whose categorical ``feature`` equals ``level``, 0 elsewhere."""

    feature: int
    level: int
    name: str = ""

    def label(self) -> str:
        return self.name or f"x{self.feature}={self.level}"

    def to_dict(self) -> dict:
        return {"type": "group", "feature": self.feature, "level": self.level, "name": self.name}


def _learner_from_dict(d: dict):
    if d["type"] == "linear":
        return Linear(int(d["feature"]), d.get("name", ""))
    return GroupIntercept(int(d["feature"]), int(d["level"]), d.get("name", ""))


@dataclass(frozen=True)
class BaseLearnerSpace:
    learners: tuple
    n_columns: int

    def __post_init__(self):
        object.__setattr__(self, "learners", tuple(self.learners))
        if not self.learners:
            raise ValueError("base-learner space is empty")
        for b in self.learners:
            if not 0 <= b.feature < self.n_columns:
                raise ValueError(f"{b} references a column outside [0, {self.n_columns})")

    def __len__(self) -> int:
        return len(self.learners)

    @classmethod
    def from_columns(cls, names: Sequence[str], levels: Sequence[Sequence[str] | None] | None = None):
        """One Linear learner per numeric column, one GroupIntercept per categorical level."""
        levels = list(levels) if levels is not None else [None] * len(names)
        learners = []
        for p, (name, lv) in enumerate(zip(names, levels)):
            if lv is None:
                learners.append(Linear(p, name))
            else:
                learners.extend(GroupIntercept(p, g, f"{name}={lv[g]}") for g in range(len(lv)))
        return cls(tuple(learners), len(names))

    @classmethod
    def from_schema(cls, schema: Schema):
        return cls.from_columns(schema.feature_names, schema.levels)

    def to_dict(self) -> dict:
        return {"n_columns": self.n_columns, "learners": [b.to_dict() for b in self.learners]}

    @classmethod
    def from_dict(cls, d: dict) -> "BaseLearnerSpace":
        return cls(tuple(_learner_from_dict(b) for b in d["learners"]), int(d["n_columns"]))


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoostParams:
    learning_rate: float = 0.1
    max_iters: int = 10000
    eps: float = 1e-4
    patience: int = 5

    def __post_init__(self):
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError(f"learning_rate must be in (0, 1], got {self.learning_rate}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.eps < 0:
            raise ValueError("eps must be >= 0")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")

    def to_dict(self) -> dict:
        return {"learning_rate": self.learning_rate, "max_iters": self.max_iters,
                "eps": self.eps, "patience": self.patience}


@dataclass(frozen=True)
class TraceEntry:
    k: int
    learner: int
    theta0: float
    theta1: float
    risk: float

    def to_dict(self) -> dict:
        return {"k": self.k, "learner": self.learner, "theta0": self.theta0,
                "theta1": self.theta1, "risk": self.risk}


@dataclass(frozen=True)
class BoostModel:
    offset: float
    loss: LossKind
    space: BaseLearnerSpace
    learning_rate: float
    risk0: float
    trace: tuple[TraceEntry, ...]
    # iterations rolled back by early stopping
    discarded: tuple[TraceEntry, ...] = ()
    stopped_early: bool = False
    params: BoostParams = field(default_factory=BoostParams)

    @property
    def m_stop(self) -> int:
        return len(self.trace)

    @property
    def risks(self) -> np.ndarray:
        """R^[0], ..., R^[m_stop]."""
        return np.array([self.risk0] + [e.risk for e in self.trace])

    def predict(self, X) -> np.ndarray:
        return boost_predict(self, X)

    def to_dict(self) -> dict:
        return {
            "type": "boost",
            "offset": self.offset,
            "loss": self.loss.value,
            "learning_rate": self.learning_rate,
            "risk0": self.risk0,
            "space": self.space.to_dict(),
            "params": self.params.to_dict(),
            "stopped_early": self.stopped_early,
            "trace": [e.to_dict() for e in self.trace],
            "discarded": [e.to_dict() for e in self.discarded],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BoostModel":
        def entries(items):
            return tuple(TraceEntry(int(e["k"]), int(e["learner"]), float(e["theta0"]),
                                    float(e["theta1"]), float(e["risk"])) for e in items)

        return cls(
            offset=float(d["offset"]),
            loss=LossKind(d["loss"]),
            space=BaseLearnerSpace.from_dict(d["space"]),
            learning_rate=float(d["learning_rate"]),
            risk0=float(d["risk0"]),
            trace=entries(d["trace"]),
            discarded=entries(d.get("discarded", [])),
            stopped_early=bool(d.get("stopped_early", False)),
            params=BoostParams(**d["params"]) if "params" in d else BoostParams(),
        )


def _design(X: np.ndarray, space: BaseLearnerSpace):
    """Per-learner column matrix Z and linear mask.

    Linear learners use the raw column; group learners use the 0/1 membership
    indicator and have no slope.
    """
    tau = len(space)
    Z = np.empty((X.shape[0], tau))
    linear = np.zeros(tau, dtype=bool)
    for l, b in enumerate(space.learners):
        if isinstance(b, Linear):
            Z[:, l] = X[:, b.feature]
            linear[l] = True
        else:
            Z[:, l] = X[:, b.feature] == b.level
    return Z, linear


def _eval_learners(Z: np.ndarray, linear: np.ndarray, entries: Sequence[TraceEntry]) -> np.ndarray:
    out = np.zeros(Z.shape[0])
    for e in entries:
        if linear[e.learner]:
            out += e.theta0 + e.theta1 * Z[:, e.learner]
        else:
            out += e.theta0 * Z[:, e.learner]
    return out


def boost_fit(X, y, space: BaseLearnerSpace, params: BoostParams = BoostParams(),
              loss: LossKind = LossKind.SQUARED_ERROR) -> BoostModel:
    """Fit a component-wise boosting model.

    Early stopping: an iteration is *stalled* when its relative risk
    improvement is below ``params.eps`` (or the previous risk is already 0).
    After ``params.patience`` consecutive stalled iterations, fitting stops and
    those iterations are rolled back, so they contribute neither to
    predictions nor to importance.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("X must be 2-d")
    n = X.shape[0]
    if n == 0:
        raise ValueError("cannot boost on zero rows")
    if y.shape != (n,):
        raise ValueError("y does not match X")
    if X.shape[1] != space.n_columns:
        raise ValueError(f"X has {X.shape[1]} columns, space expects {space.n_columns}")
    loss = LossKind(loss)

    Z, linear = _design(X, space)
    # per-learner sufficient statistics; group learners regress through the origin on the indicator
    zbar = np.where(linear, Z.mean(axis=0), 0.0)
    Zc = Z - zbar
    szz = np.einsum("ij,ij->j", Zc, Zc)
    safe = np.where(szz != 0.0, szz, 1.0)

    nu = params.learning_rate
    offset = init_offset(y, loss)
    g = np.full(n, offset)
    risk_prev = empirical_risk(y, g, loss)
    risk0 = risk_prev

    trace: list[TraceEntry] = []
    window: list[TraceEntry] = []
    stopped = False
    for k in range(1, params.max_iters + 1):
        r = negative_gradient(y, g, loss)
        rbar = r.mean()
        slope = np.where(szz != 0.0, (Zc.T @ (r - rbar)) / safe, 0.0)
        # for group learners szz is the member count and Z.T @ r the member sum
        group_mean = np.where(szz != 0.0, (Z.T @ r) / safe, 0.0)
        theta1 = np.where(linear, slope, 0.0)
        theta0 = np.where(linear, rbar - theta1 * zbar, group_mean)
        fitted = np.where(linear, theta0 + theta1 * Z, theta0 * Z)
        sse = np.sum((r[:, None] - fitted) ** 2, axis=0)
        best = int(np.argmin(sse))

        g = g + nu * fitted[:, best]
        risk = empirical_risk(y, g, loss)
        entry = TraceEntry(k, best, float(theta0[best]), float(theta1[best]), risk)

        if risk_prev > 0.0:
            stalled = (risk_prev - risk) / risk_prev < params.eps
        else:
            stalled = True
        risk_prev = risk
        if stalled:
            window.append(entry)
            if len(window) >= params.patience:
                stopped = True
                break
        else:
            trace.extend(window)
            window.clear()
            trace.append(entry)
    else:
        trace.extend(window)
        window = []

    return BoostModel(
        offset=offset,
        loss=loss,
        space=space,
        learning_rate=nu,
        risk0=risk0,
        trace=tuple(trace),
        discarded=tuple(window),
        stopped_early=stopped,
        params=params,
    )


def boost_predict(model: BoostModel, X) -> np.ndarray:
    """Score ``offset + nu * sum(b_k(x))``. A 1-d row returns a scalar.

    For a binomial model the score is on the logit scale.
    """
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != model.space.n_columns:
        raise ValueError(f"expected rows with {model.space.n_columns} columns, got shape {X.shape}")
    Z, linear = _design(X, model.space)
    g = model.offset + model.learning_rate * _eval_learners(Z, linear, model.trace)
    return float(g[0]) if single else g


def predict_proba(model: BoostModel, X) -> np.ndarray:
    return np.exp(-np.logaddexp(0.0, -boost_predict(model, X)))


@dataclass(frozen=True)
class ImportanceReport:
    vip: np.ndarray
    vip_rel: np.ndarray


def importance(model: BoostModel) -> ImportanceReport:
    """Per-learner sum of risk improvements over the iterations that selected it."""
    vip = np.zeros(len(model.space))
    risks = model.risks
    for i, e in enumerate(model.trace):
        vip[e.learner] += risks[i] - risks[i + 1]
    total = vip.sum()
    vip_rel = vip / total if total > 0 else np.zeros_like(vip)
    return ImportanceReport(vip, vip_rel)


def aggregated_coefficients(model: BoostModel) -> dict[int, tuple[float, float]]:
    """Net (theta0, theta1) per selected learner, already scaled by the learning rate."""
    acc: dict[int, list[float]] = {}
    for e in model.trace:
        c = acc.setdefault(e.learner, [0.0, 0.0])
        c[0] += e.theta0
        c[1] += e.theta1
    nu = model.learning_rate
    return {l: (nu * c[0], nu * c[1]) for l, c in sorted(acc.items())}
