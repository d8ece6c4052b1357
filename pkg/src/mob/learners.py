"""CART random forests for one regression or binary target.

Trees are grown by numba kernels on a flat node layout. For 0/1 targets the
child-weighted Gini impurity is exactly twice the child sum of squared errors,
so one split criterion serves both target kinds; they differ only in their
default hyperparameters and in that classification leaves hold positive-class
fractions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numba
import numpy as np

from .data import TargetKind, mix_seed

LEAF = -1


@dataclass(frozen=True)
class ForestParams:
    """Forest hyperparameters. ``None`` selects the per-kind default at fit time."""

    num_trees: int = 500
    mtry: int | None = None
    min_node_size: int | None = None
    max_depth: int | None = None
    bootstrap: bool = True
    seed: int = 0

    def resolve(self, d: int, kind: TargetKind) -> "ForestParams":
        """Fill per-kind defaults for ``d`` features and validate."""
        mtry = self.mtry
        if mtry is None:
            mtry = math.ceil(math.sqrt(d)) if kind is TargetKind.BINARY else math.ceil(d / 3)
        min_node = self.min_node_size
        if min_node is None:
            min_node = 1 if kind is TargetKind.BINARY else 5
        out = replace(self, mtry=max(1, min(int(mtry), d)), min_node_size=int(min_node))
        if out.num_trees < 1:
            raise ValueError("num_trees must be >= 1")
        if out.min_node_size < 1:
            raise ValueError("min_node_size must be >= 1")
        if self.mtry is not None and not 1 <= self.mtry <= d:
            raise ValueError(f"mtry must be in [1, {d}], got {self.mtry}")
        if out.max_depth is not None and out.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        return out

    def to_dict(self) -> dict:
        return {
            "num_trees": self.num_trees,
            "mtry": self.mtry,
            "min_node_size": self.min_node_size,
            "max_depth": self.max_depth,
            "bootstrap": self.bootstrap,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ForestParams":
        return cls(**d)


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------

@numba.njit(cache=True, nogil=True)
def _best_split(X, y, idx, start, end, feat, is_cat, n_levels, buf_v, buf_y, cnt, sm):
    """Best split of rows idx[start:end] on one feature.

    Returns (score, threshold) where score = sum over children of
    (child sum)^2 / (child size); larger is better. score = -inf if the feature
    is constant in the node.
    """
    n = end - start
    best = -np.inf
    thr = 0.0
    if is_cat[feat]:
        L = n_levels[feat]
        for g in range(L):
            cnt[g] = 0.0
            sm[g] = 0.0
        total = 0.0
        for i in range(start, end):
            r = idx[i]
            g = int(X[r, feat])
            cnt[g] += 1.0
            sm[g] += y[r]
            total += y[r]
        for g in range(L):
            c = cnt[g]
            if c == 0.0 or c == n:
                continue
            s_out = total - sm[g]
            score = sm[g] * sm[g] / c + s_out * s_out / (n - c)
            if score > best:
                best = score
                thr = float(g)
        return best, thr

    for i in range(start, end):
        r = idx[i]
        buf_v[i - start] = X[r, feat]
    order = np.argsort(buf_v[:n], kind="mergesort")
    total = 0.0
    for i in range(n):
        r = idx[start + order[i]]
        buf_y[i] = y[r]
        total += y[r]
    left = 0.0
    for i in range(n - 1):
        left += buf_y[i]
        v0 = buf_v[order[i]]
        v1 = buf_v[order[i + 1]]
        if v1 <= v0:
            continue
        nl = i + 1.0
        nr = n - nl
        right = total - left
        score = left * left / nl + right * right / nr
        if score > best:
            best = score
            mid = 0.5 * (v0 + v1)
            thr = mid if mid < v1 else v0
    return best, thr


@numba.njit(cache=True, nogil=True)
def _grow_tree(X, y, is_cat, n_levels, mtry, min_node_size, max_depth, bootstrap, seed):
    np.random.seed(seed)
    n, d = X.shape
    if bootstrap:
        idx = np.random.randint(0, n, n)
    else:
        idx = np.arange(n)

    max_nodes = 2 * n + 1
    feature = np.full(max_nodes, LEAF, dtype=np.int64)
    threshold = np.zeros(max_nodes)
    left = np.full(max_nodes, LEAF, dtype=np.int64)
    right = np.full(max_nodes, LEAF, dtype=np.int64)
    value = np.zeros(max_nodes)

    max_levels = 1
    for p in range(d):
        if n_levels[p] > max_levels:
            max_levels = n_levels[p]
    cnt = np.zeros(max_levels)
    sm = np.zeros(max_levels)
    buf_v = np.empty(n)
    buf_y = np.empty(n)
    tmp = np.empty(n, dtype=np.int64)

    # depth-first stack of (node, start, end, depth)
    stack = np.empty((max_nodes, 4), dtype=np.int64)
    stack[0, 0] = 0
    stack[0, 1] = 0
    stack[0, 2] = n
    stack[0, 3] = 0
    sp = 1
    n_nodes = 1
    while sp > 0:
        sp -= 1
        node = stack[sp, 0]
        start = stack[sp, 1]
        end = stack[sp, 2]
        depth = stack[sp, 3]
        size = end - start

        s = 0.0
        ymin = np.inf
        ymax = -np.inf
        for i in range(start, end):
            v = y[idx[i]]
            s += v
            if v < ymin:
                ymin = v
            if v > ymax:
                ymax = v
        value[node] = s / size

        if size <= min_node_size or ymin == ymax or (max_depth >= 0 and depth >= max_depth):
            continue

        perm = np.random.permutation(d)
        best = -np.inf
        best_f = -1
        best_t = 0.0
        tried = 0
        for q in range(d):
            f = perm[q]
            score, thr = _best_split(X, y, idx, start, end, f, is_cat, n_levels, buf_v, buf_y, cnt, sm)
            if score == -np.inf:
                continue
            if score > best:
                best = score
                best_f = f
                best_t = thr
            tried += 1
            if tried >= mtry:
                break
        if best_f < 0:
            continue

        # partition idx[start:end]: left block first, stable
        nl = 0
        nr = 0
        for i in range(start, end):
            r = idx[i]
            if is_cat[best_f]:
                go_left = X[r, best_f] == best_t
            else:
                go_left = X[r, best_f] <= best_t
            if go_left:
                idx[start + nl] = r
                nl += 1
            else:
                tmp[nr] = r
                nr += 1
        for i in range(nr):
            idx[start + nl + i] = tmp[i]

        feature[node] = best_f
        threshold[node] = best_t
        lc = n_nodes
        rc = n_nodes + 1
        n_nodes += 2
        left[node] = lc
        right[node] = rc
        # push right first so the left subtree is expanded first
        stack[sp, 0] = rc
        stack[sp, 1] = start + nl
        stack[sp, 2] = end
        stack[sp, 3] = depth + 1
        sp += 1
        stack[sp, 0] = lc
        stack[sp, 1] = start
        stack[sp, 2] = start + nl
        stack[sp, 3] = depth + 1
        sp += 1

    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), value[:n_nodes].copy())


@numba.njit(cache=True, nogil=True)
def _predict(X, is_cat, roots, feature, threshold, left, right, value):
    q = X.shape[0]
    T = roots.shape[0]
    out = np.empty(q)
    for i in range(q):
        acc = 0.0
        for t in range(T):
            node = roots[t]
            while feature[node] != LEAF:
                f = feature[node]
                x = X[i, f]
                if is_cat[f]:
                    go_left = x == threshold[node]
                else:
                    go_left = x <= threshold[node]
                node = left[node] if go_left else right[node]
            acc += value[node]
        out[i] = acc / T
    return out


# ---------------------------------------------------------------------------
# Public API
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ForestModel:
    """A fitted forest stored as concatenated flat node arrays.

    Node ``i`` is a leaf when ``feature[i] == -1``. Internal nodes send a row
    left when ``x <= threshold`` (numeric column) or ``x == threshold``
    (categorical column, threshold holds the level index). ``left``/``right``
    index into the same arrays; ``roots[t]`` is the root of tree ``t``.
    """

    kind: TargetKind
    params: ForestParams
    categorical: np.ndarray
    n_levels: np.ndarray
    roots: np.ndarray
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def d(self) -> int:
        return self.categorical.shape[0]

    @property
    def num_trees(self) -> int:
        return self.roots.shape[0]

    def predict(self, X) -> np.ndarray:
        return predict_forest(self, X)

    def tree_to_dict(self, t: int) -> dict:
        def node(i):
            if self.feature[i] == LEAF:
                return {"value": float(self.value[i])}
            f = int(self.feature[i])
            out = {"feature": f}
            if self.categorical[f]:
                out["level"] = int(self.threshold[i])
            else:
                out["threshold"] = float(self.threshold[i])
            out["left"] = node(self.left[i])
            out["right"] = node(self.right[i])
            return out

        return node(int(self.roots[t]))

    def to_dict(self) -> dict:
        return {
            "type": "forest",
            "kind": self.kind.value,
            "params": self.params.to_dict(),
            "categorical": [bool(c) for c in self.categorical],
            "n_levels": [int(v) for v in self.n_levels],
            "trees": [self.tree_to_dict(t) for t in range(self.num_trees)],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ForestModel":
        feature, threshold, left, right, value, roots = [], [], [], [], [], []

        def add(nd):
            i = len(feature)
            feature.append(LEAF)
            threshold.append(0.0)
            left.append(LEAF)
            right.append(LEAF)
            value.append(0.0)
            if "value" in nd:
                value[i] = float(nd["value"])
                return i
            feature[i] = int(nd["feature"])
            threshold[i] = float(nd["level"] if "level" in nd else nd["threshold"])
            left[i] = add(nd["left"])
            right[i] = add(nd["right"])
            return i

        for tree in d["trees"]:
            roots.append(add(tree))
        return cls(
            kind=TargetKind(d["kind"]),
            params=ForestParams.from_dict(d["params"]),
            categorical=np.array(d["categorical"], dtype=np.bool_),
            n_levels=np.array(d["n_levels"], dtype=np.int64),
            roots=np.array(roots, dtype=np.int64),
            feature=np.array(feature, dtype=np.int64),
            threshold=np.array(threshold, dtype=np.float64),
            left=np.array(left, dtype=np.int64),
            right=np.array(right, dtype=np.int64),
            value=np.array(value, dtype=np.float64),
        )


def _tree_seed(seed: int, t: int) -> int:
    return mix_seed(seed, t) & 0xFFFFFFFF


def fit_forest(X, y, kind: TargetKind, params: ForestParams = ForestParams(),
               categorical=None, n_levels=None) -> ForestModel:
    """Grow ``params.num_trees`` CART trees on bootstrap samples of ``(X, y)``.

    Parameters
    ----------
    X : (n, d) array
        Feature matrix; categorical columns hold level indices.
    y : (n,) array
        Target values (0/1 for binary targets).
    kind : TargetKind
    params : ForestParams
        Unset ``mtry`` / ``min_node_size`` take the per-kind defaults.
    categorical : (d,) bool array, optional
        Marks categorical columns. Defaults to all numeric.
    n_levels : (d,) int array, optional
        Level count per categorical column; inferred from ``X`` when omitted.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("X must be 2-d")
    n, d = X.shape
    if n == 0:
        raise ValueError("cannot fit a forest on zero rows")
    if y.shape != (n,):
        raise ValueError(f"target length {y.shape} does not match {n} rows")
    if d == 0:
        raise ValueError("cannot fit a forest without features")
    kind = TargetKind(kind)
    params = params.resolve(d, kind)
    is_cat = np.zeros(d, dtype=np.bool_) if categorical is None else np.asarray(categorical, dtype=np.bool_)
    if n_levels is None:
        n_levels = np.zeros(d, dtype=np.int64)
        for p in np.flatnonzero(is_cat):
            n_levels[p] = int(X[:, p].max()) + 1 if n else 0
    n_levels = np.asarray(n_levels, dtype=np.int64)
    max_depth = -1 if params.max_depth is None else int(params.max_depth)

    parts = [
        _grow_tree(X, y, is_cat, n_levels, params.mtry, params.min_node_size,
                   max_depth, params.bootstrap, _tree_seed(params.seed, t))
        for t in range(params.num_trees)
    ]
    sizes = np.array([p[0].shape[0] for p in parts], dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)
    feature = np.concatenate([p[0] for p in parts])
    threshold = np.concatenate([p[1] for p in parts])
    left = np.concatenate([np.where(p[2] == LEAF, LEAF, p[2] + o) for p, o in zip(parts, offsets)])
    right = np.concatenate([np.where(p[3] == LEAF, LEAF, p[3] + o) for p, o in zip(parts, offsets)])
    value = np.concatenate([p[4] for p in parts])
    return ForestModel(kind, params, is_cat, n_levels, offsets, feature, threshold,
                       left.astype(np.int64), right.astype(np.int64), value)


def predict_forest(model: ForestModel, X) -> np.ndarray:
    """Mean leaf value over trees. A 1-d row returns a scalar."""
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != model.d:
        raise ValueError(f"expected rows with {model.d} features, got shape {X.shape}")
    out = _predict(np.ascontiguousarray(X), model.categorical, model.roots, model.feature,
                   model.threshold, model.left, model.right, model.value)
    return float(out[0]) if single else out
