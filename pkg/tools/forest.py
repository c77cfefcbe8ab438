"""Sample-weighted random forest with randomized hyperparameter search.

Trees are grown best-first: the frontier leaf with the largest weighted
impurity decrease is split next, so ``max_leaves`` bounds the tree the same
way ``max_depth`` does. Each node draws ``ceil(sqrt(d))`` candidate features;
thresholds are midpoints between consecutive distinct values. Ties go to the
lowest feature index, then the lowest threshold.

Weights are rescaled to sum to one before growing, and gains closer than
``GAIN_TOLERANCE`` count as ties, so scaling all weights by a constant leaves
the tree structure unchanged.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import logging
import math
from dataclasses import dataclass
from enum import StrEnum
from typing import Any, NamedTuple

import numpy as np
from joblib import Parallel, delayed
from pydantic import BaseModel, ConfigDict, Field
from scipy.special import entr
from scipy.stats import randint
from sklearn.model_selection import ParameterSampler, StratifiedKFold

from tools.auc import roc_auc
from tools.seeding import task_seed

logger = logging.getLogger(__name__)

# Absolute gain tolerance on the unit-total weight scale
GAIN_TOLERANCE = 1e-12


class Criterion(StrEnum):
    GINI = "gini"
    ENTROPY = "entropy"


class ForestParams(BaseModel):
    """Random forest hyperparameters, bounded by the search ranges."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    max_leaves: int = Field(default=999, ge=2, lt=1000)
    max_depth: int = Field(default=49, ge=1, lt=50)
    criterion: Criterion = Criterion.GINI
    min_samples_leaf: int = Field(default=1, ge=1, lt=1000)
    min_samples_split: int = Field(default=2, ge=2, lt=50)
    n_estimators: int = Field(default=20, ge=1)


# Randomized search space; upper bounds are exclusive like the ranges above
SEARCH_SPACE: dict[str, Any] = {
    "max_leaves": randint(2, 1000),
    "max_depth": randint(1, 50),
    "criterion": [Criterion.ENTROPY.value, Criterion.GINI.value],
    "min_samples_leaf": randint(1, 1000),
    "min_samples_split": randint(2, 50),
}

# ---------------------------------------------------------------------------
# Impurity
# ---------------------------------------------------------------------------


def _impurity(w0: np.ndarray, w1: np.ndarray, criterion: Criterion) -> np.ndarray:
    total = w0 + w1
    p0 = w0 / total
    p1 = w1 / total
    if criterion == Criterion.GINI:
        return 1.0 - p0 * p0 - p1 * p1
    # entr(p) = -p ln p with entr(0) = 0
    return (entr(p0) + entr(p1)) / math.log(2.0)


def weighted_impurity(
    class_weight_sums: tuple[float, float], criterion: Criterion | str
) -> float:
    """Gini or entropy (bits) of a node from its per-class weight sums."""
    w0, w1 = (float(v) for v in class_weight_sums)
    if w0 < 0 or w1 < 0 or w0 + w1 <= 0:
        msg = f"invalid class weight sums {class_weight_sums}"
        raise ValueError(msg)
    return float(_impurity(np.float64(w0), np.float64(w1), Criterion(criterion)))


# ---------------------------------------------------------------------------
# Decision tree
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DecisionTree:
    """Array-encoded binary tree; ``feature == -1`` marks a leaf.

    ``proba`` holds the weighted positive-class share of every node (the
    negative share is ``1 - proba``).
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    proba: np.ndarray
    depth: np.ndarray
    n_samples: np.ndarray

    @property
    def n_nodes(self) -> int:
        return int(self.feature.size)

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    @property
    def max_depth(self) -> int:
        return int(self.depth.max())

    def leaf_probabilities(self) -> np.ndarray:
        """``(p0, p1)`` rows of all leaves."""
        p1 = self.proba[self.feature < 0]
        return np.column_stack([1.0 - p1, p1])

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row of ``X``."""
        X = np.asarray(X, dtype=np.float64)
        node = np.zeros(X.shape[0], dtype=np.intp)
        active = self.feature[node] >= 0
        while active.any():
            rows = np.nonzero(active)[0]
            current = node[rows]
            go_left = X[rows, self.feature[current]] <= self.threshold[current]
            node[rows] = np.where(go_left, self.left[current], self.right[current])
            active = self.feature[node] >= 0
        return node

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        """Positive-class probability for every row."""
        return self.proba[self.apply(X)]

    def to_json(self) -> list[dict[str, Any]]:
        nodes: list[dict[str, Any]] = []
        for i in range(self.n_nodes):
            if self.feature[i] < 0:
                p1 = float(self.proba[i])
                nodes.append({"id": i, "leaf": True, "proba": [1.0 - p1, p1]})
            else:
                nodes.append(
                    {
                        "id": i,
                        "feature": int(self.feature[i]),
                        "threshold": float(self.threshold[i]),
                        "left": int(self.left[i]),
                        "right": int(self.right[i]),
                    }
                )
        return nodes


class _Split(NamedTuple):
    gain: float
    feature: int
    threshold: float


def _pop_best(frontier: list[tuple[float, int, _Split]]) -> tuple[int, _Split]:
    """Pop the frontier leaf with the largest gain, lowest node id among ties."""
    _, node, split = heapq.heappop(frontier)
    ties = [(node, split)]
    while frontier and -frontier[0][0] >= split.gain - GAIN_TOLERANCE:
        _, other, other_split = heapq.heappop(frontier)
        ties.append((other, other_split))
    ties.sort(key=lambda entry: entry[0])
    for other, other_split in ties[1:]:
        heapq.heappush(frontier, (-other_split.gain, other, other_split))
    return ties[0]


class _TreeBuilder:
    """Growable node arrays plus the best-first frontier."""

    def __init__(
        self,
        X: np.ndarray,
        y: np.ndarray,
        w: np.ndarray,
        params: ForestParams,
        rng: np.random.Generator,
    ) -> None:
        self.X = X
        self.y = y
        self.w = w / w.sum()
        self.params = params
        self.criterion = Criterion(params.criterion)
        self.rng = rng
        n_features = X.shape[1]
        self.n_candidates = max(1, math.ceil(math.sqrt(n_features)))

        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.proba: list[float] = []
        self.depth: list[int] = []
        self.n_samples: list[int] = []
        self.members: dict[int, np.ndarray] = {}

    def add_node(self, idx: np.ndarray, depth: int) -> int:
        node = len(self.feature)
        w_pos = float(self.w[idx][self.y[idx] == 1].sum())
        w_all = float(self.w[idx].sum())
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.proba.append(w_pos / w_all)
        self.depth.append(depth)
        self.n_samples.append(int(idx.size))
        self.members[node] = idx
        return node

    def best_split(self, node: int) -> _Split | None:
        """Best admissible split of ``node`` or None when it must stay a leaf."""
        # draw before any stopping test so every node consumes the same randomness
        n_features = self.X.shape[1]
        candidates = np.sort(
            self.rng.choice(n_features, size=self.n_candidates, replace=False)
        )
        idx = self.members[node]
        m = idx.size
        if (
            m < self.params.min_samples_split
            or self.depth[node] >= self.params.max_depth
            or m < 2 * self.params.min_samples_leaf
        ):
            return None

        w = self.w[idx]
        pos = self.y[idx] == 1
        w1_node = w[pos].sum()
        w0_node = w[~pos].sum()
        if w1_node == 0 or w0_node == 0:
            return None
        parent = (w0_node + w1_node) * _impurity(w0_node, w1_node, self.criterion)

        left_count = np.arange(1, m)
        count_ok = (left_count >= self.params.min_samples_leaf) & (
            m - left_count >= self.params.min_samples_leaf
        )
        best: _Split | None = None
        with np.errstate(invalid="ignore", divide="ignore"):
            for f in candidates:
                x = self.X[idx, f]
                order = np.argsort(x, kind="stable")
                xs = x[order]
                ws = w[order]
                ps = pos[order]
                valid = count_ok & (xs[:-1] < xs[1:])
                if not valid.any():
                    continue
                l1 = np.cumsum(np.where(ps, ws, 0.0))[:-1]
                l0 = np.cumsum(np.where(ps, 0.0, ws))[:-1]
                r1 = np.maximum(w1_node - l1, 0.0)
                r0 = np.maximum(w0_node - l0, 0.0)
                children = (l0 + l1) * _impurity(l0, l1, self.criterion) + (
                    r0 + r1
                ) * _impurity(r0, r1, self.criterion)
                gain = np.where(valid, parent - children, -np.inf)
                top = float(gain.max())
                if best is None or top > best.gain + GAIN_TOLERANCE:
                    i = int(np.flatnonzero(gain >= top - GAIN_TOLERANCE)[0])
                    threshold = (xs[i] + xs[i + 1]) / 2.0
                    if threshold >= xs[i + 1]:
                        threshold = xs[i]
                    best = _Split(top, int(f), float(threshold))
        if best is None or not best.gain > GAIN_TOLERANCE:
            return None
        return best

    def split(self, node: int, split: _Split) -> tuple[int, int]:
        idx = self.members.pop(node)
        goes_left = self.X[idx, split.feature] <= split.threshold
        depth = self.depth[node] + 1
        left = self.add_node(idx[goes_left], depth)
        right = self.add_node(idx[~goes_left], depth)
        self.feature[node] = split.feature
        self.threshold[node] = split.threshold
        self.left[node] = left
        self.right[node] = right
        return left, right

    def grow(self) -> DecisionTree:
        frontier: list[tuple[float, int, _Split]] = []

        def push(node: int) -> None:
            split = self.best_split(node)
            if split is not None:
                heapq.heappush(frontier, (-split.gain, node, split))

        push(self.add_node(np.arange(self.X.shape[0]), 0))
        n_leaves = 1
        while frontier and n_leaves < self.params.max_leaves:
            node, split = _pop_best(frontier)
            left, right = self.split(node, split)
            n_leaves += 1
            push(left)
            push(right)

        return DecisionTree(
            feature=np.asarray(self.feature, dtype=np.intp),
            threshold=np.asarray(self.threshold, dtype=np.float64),
            left=np.asarray(self.left, dtype=np.intp),
            right=np.asarray(self.right, dtype=np.intp),
            proba=np.asarray(self.proba, dtype=np.float64),
            depth=np.asarray(self.depth, dtype=np.intp),
            n_samples=np.asarray(self.n_samples, dtype=np.intp),
        )


def _check_inputs(
    X: np.ndarray, y: np.ndarray, w: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(np.int8)
    w = np.asarray(w, dtype=np.float64)
    if X.ndim != 2 or not (X.shape[0] == y.size == w.size):
        raise ValueError("X, y and w must describe the same number of examples")
    if X.shape[0] == 0:
        raise ValueError("cannot fit on an empty dataset")
    if not (np.all(np.isfinite(w)) and np.all(w > 0)):
        raise ValueError("sample weights must be finite and strictly positive")
    return X, y, w


def fit_tree(
    X: np.ndarray,
    y: np.ndarray,
    w: np.ndarray,
    params: ForestParams,
    rng: np.random.Generator,
) -> DecisionTree:
    """Grow one weighted decision tree best-first."""
    X, y, w = _check_inputs(X, y, w)
    return _TreeBuilder(X, y, w, params, rng).grow()


# ---------------------------------------------------------------------------
# Forest
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ForestModel:
    """Fitted forest: trees plus the parameters that produced them."""

    trees: tuple[DecisionTree, ...]
    params: ForestParams
    feature_count: int
    seed: int
    weighted_bootstrap: bool = True

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        """Mean positive-class leaf probability over the trees."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.feature_count:
            msg = f"expected {self.feature_count} features, got shape {X.shape}"
            raise ValueError(msg)
        return np.mean([tree.predict_proba(X) for tree in self.trees], axis=0)

    def to_json(self) -> dict[str, Any]:
        return {
            "params": self.params.model_dump(mode="json"),
            "feature_count": self.feature_count,
            "seed": self.seed,
            "weighted_bootstrap": self.weighted_bootstrap,
            "trees": [tree.to_json() for tree in self.trees],
        }

    def digest(self) -> str:
        payload = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()


def _tree_rng(seed: int, tree_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(tree_index,)))


def _fit_forest_member(
    X: np.ndarray,
    y: np.ndarray,
    w: np.ndarray,
    params: ForestParams,
    seed: int,
    tree_index: int,
    weighted_bootstrap: bool,
) -> DecisionTree:
    rng = _tree_rng(seed, tree_index)
    n = X.shape[0]
    if weighted_bootstrap:
        rows = rng.choice(n, size=n, replace=True, p=w / w.sum())
    else:
        rows = rng.integers(0, n, size=n)
    return _TreeBuilder(X[rows], y[rows], w[rows], params, rng).grow()


def fit_forest(
    X: np.ndarray,
    y: np.ndarray,
    w: np.ndarray,
    params: ForestParams,
    seed: int,
    *,
    weighted_bootstrap: bool = True,
    n_jobs: int = 1,
) -> ForestModel:
    """Fit ``params.n_estimators`` trees on (weighted) bootstrap resamples.

    Tree ``t`` uses the RNG stream derived from ``(seed, t)``, so the model
    is identical for any ``n_jobs``.
    """
    X, y, w = _check_inputs(X, y, w)
    trees = Parallel(n_jobs=n_jobs)(
        delayed(_fit_forest_member)(X, y, w, params, seed, t, weighted_bootstrap)
        for t in range(params.n_estimators)
    )
    return ForestModel(
        trees=tuple(trees),
        params=params,
        feature_count=X.shape[1],
        seed=seed,
        weighted_bootstrap=weighted_bootstrap,
    )


# ---------------------------------------------------------------------------
# Randomized search with stratified cross-validation
# ---------------------------------------------------------------------------


class FoldScore(NamedTuple):
    model_id: int
    fold: int
    auc: float
    weighted_auc: float | None


@dataclass(frozen=True)
class SearchResult:
    """Outcome of ``random_search``; ``scores`` covers every (model, fold)."""

    best_params: ForestParams
    best_model_id: int
    fold_aucs: tuple[float, ...]
    candidates: tuple[ForestParams, ...]
    scores: tuple[FoldScore, ...]

    def mean_auc(self, model_id: int | None = None) -> float:
        model_id = self.best_model_id if model_id is None else model_id
        aucs = [s.auc for s in self.scores if s.model_id == model_id]
        return math.fsum(aucs) / len(aucs)

    @property
    def weighted_fold_aucs(self) -> tuple[float, ...] | None:
        best = [s for s in self.scores if s.model_id == self.best_model_id]
        if any(s.weighted_auc is None for s in best):
            return None
        return tuple(float(s.weighted_auc) for s in best)  # type: ignore[arg-type]


def sample_params(
    n_models: int, seed: int, *, n_estimators: int = 20
) -> list[ForestParams]:
    """Draw ``n_models`` parameter sets uniformly from the search space."""
    sampler = ParameterSampler(
        SEARCH_SPACE, n_iter=n_models, random_state=task_seed(seed)
    )
    return [
        ForestParams(
            max_leaves=int(p["max_leaves"]),
            max_depth=int(p["max_depth"]),
            criterion=Criterion(p["criterion"]),
            min_samples_leaf=int(p["min_samples_leaf"]),
            min_samples_split=int(p["min_samples_split"]),
            n_estimators=n_estimators,
        )
        for p in sampler
    ]


def stratified_folds(
    y: np.ndarray, folds: int, seed: int
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Stratified K-fold split that depends only on ``(seed, y)``.

    Raises ``ValueError`` when a class has fewer members than folds, since
    some fold would then lack that class.
    """
    y = np.asarray(y)
    counts = np.bincount(y.astype(np.intp), minlength=2)
    if counts.min() < folds:
        msg = f"cannot stratify {folds} folds with class counts {counts.tolist()}"
        raise ValueError(msg)
    splitter = StratifiedKFold(
        n_splits=folds, shuffle=True, random_state=task_seed(seed)
    )
    return list(splitter.split(np.zeros((y.size, 1)), y))


def _score_fold(
    X: np.ndarray,
    y: np.ndarray,
    w: np.ndarray,
    params: ForestParams,
    model_id: int,
    fold: int,
    train: np.ndarray,
    test: np.ndarray,
    seed: int,
    weighted_bootstrap: bool,
    eval_weights: np.ndarray | None,
) -> FoldScore:
    model = fit_forest(
        X[train],
        y[train],
        w[train],
        params,
        task_seed(seed, model_id, fold),
        weighted_bootstrap=weighted_bootstrap,
    )
    scores = model.predict_proba(X[test])
    auc = roc_auc(scores, y[test])
    weighted = None
    if eval_weights is not None:
        weighted = roc_auc(scores, y[test], sample_weight=eval_weights[test])
    return FoldScore(model_id, fold, auc, weighted)


def random_search(
    X: np.ndarray,
    y: np.ndarray,
    w: np.ndarray,
    *,
    n_models: int = 100,
    folds: int = 10,
    seed: int = 0,
    n_estimators: int = 20,
    weighted_bootstrap: bool = True,
    eval_weights: np.ndarray | None = None,
    n_jobs: int = 1,
) -> SearchResult:
    """Randomized search over the forest parameters with stratified K-fold CV.

    Parameter sets and folds are functions of ``seed`` only; the best set is
    the one with the highest mean validation AUC (lowest model id on ties).
    ``eval_weights`` additionally scores each validation fold with a
    weighted AUC (reported, never used for selection).
    """
    X, y, w = _check_inputs(X, y, w)
    if n_models < 1:
        raise ValueError("n_models must be at least 1")
    splits = stratified_folds(y, folds, seed)
    candidates = sample_params(n_models, seed, n_estimators=n_estimators)

    tasks = [
        (model_id, fold, params, train, test)
        for model_id, params in enumerate(candidates)
        for fold, (train, test) in enumerate(splits)
    ]
    scores: list[FoldScore] = Parallel(n_jobs=n_jobs)(
        delayed(_score_fold)(
            X,
            y,
            w,
            params,
            model_id,
            fold,
            train,
            test,
            seed,
            weighted_bootstrap,
            eval_weights,
        )
        for model_id, fold, params, train, test in tasks
    )

    by_model: dict[int, list[float]] = {}
    for s in scores:
        by_model.setdefault(s.model_id, []).append(s.auc)
    means = [math.fsum(by_model[m]) / len(by_model[m]) for m in range(n_models)]
    best = int(np.argmax(means))
    logger.info(
        "Random search: best model %d of %d, mean AUC %.5f",
        best,
        n_models,
        means[best],
    )
    return SearchResult(
        best_params=candidates[best],
        best_model_id=best,
        fold_aucs=tuple(s.auc for s in scores if s.model_id == best),
        candidates=tuple(candidates),
        scores=tuple(scores),
    )
