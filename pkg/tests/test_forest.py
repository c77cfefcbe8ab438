from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from pydantic import ValidationError

from tools.forest import (
    Criterion,
    ForestParams,
    fit_forest,
    fit_tree,
    random_search,
    sample_params,
    stratified_folds,
    weighted_impurity,
)


def blobs(n: int = 120, d: int = 4, seed: int = 0):
    rng = np.random.default_rng(seed)
    y = np.array([0, 1] * (n // 2))
    X = rng.normal(size=(n, d)) + y[:, None] * 0.8
    return X, y


# ---------------------------------------------------------------------------
# Impurity
# ---------------------------------------------------------------------------


@pytest.mark.parametrize(
    ("sums", "criterion", "expected"),
    [
        ((2.0, 2.0), Criterion.GINI, 0.5),
        ((5.0, 0.0), Criterion.ENTROPY, 0.0),
        ((3.0, 1.0), Criterion.GINI, 0.375),
        ((1.0, 1.0), Criterion.ENTROPY, 1.0),
    ],
)
def test_impurity_examples(sums, criterion, expected):
    assert weighted_impurity(sums, criterion) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("sums", [(0.0, 0.0), (-1.0, 2.0)])
def test_impurity_rejects_invalid_sums(sums):
    with pytest.raises(ValueError):
        weighted_impurity(sums, "gini")


@given(st.floats(0.01, 100.0), st.floats(0.01, 100.0), st.floats(0.1, 10.0))
def test_impurity_is_scale_invariant(w0, w1, c):
    for criterion in Criterion:
        assert weighted_impurity((c * w0, c * w1), criterion) == pytest.approx(
            weighted_impurity((w0, w1), criterion), abs=1e-12
        )


# ---------------------------------------------------------------------------
# Trees
# ---------------------------------------------------------------------------


def test_separable_data_gives_a_stump():
    X = np.array([[0.0], [1.0], [2.0], [10.0], [11.0], [12.0]])
    y = np.array([0, 0, 0, 1, 1, 1])
    tree = fit_tree(X, y, np.ones(6), ForestParams(), np.random.default_rng(0))
    assert tree.max_depth == 1
    assert tree.threshold[0] == 6.0
    assert np.array_equal(tree.predict_proba(X).round(), y)


def small_datasets(count: int = 100, seed: int = 0):
    """Small random datasets with integer-valued features, so splits tie often."""
    rng = np.random.default_rng(seed)
    for _ in range(count):
        n = int(rng.integers(5, 51))
        d = int(rng.integers(1, 6))
        X = rng.integers(0, 5, size=(n, d)).astype(np.float64)
        y = rng.integers(0, 2, size=n)
        yield X, y, int(rng.integers(0, 2**31))


def assert_same_tree(tree, other):
    assert tree.feature.tolist() == other.feature.tolist()
    assert tree.threshold.tolist() == other.threshold.tolist()
    assert tree.left.tolist() == other.left.tolist()
    assert tree.right.tolist() == other.right.tolist()
    assert np.allclose(tree.proba, other.proba, rtol=1e-9, atol=1e-12)


SWEEP_PARAMS = [
    ForestParams(),
    ForestParams(max_leaves=6, max_depth=4, criterion=Criterion.ENTROPY),
]


@pytest.mark.parametrize("params", SWEEP_PARAMS)
@pytest.mark.parametrize("c", [0.3, 3.0, 7.1])
def test_scaling_all_weights_keeps_the_tree(c, params):
    for X, y, seed in small_datasets():
        uniform = np.ones(y.size)
        base = fit_tree(X, y, uniform, params, np.random.default_rng(seed))
        scaled = fit_tree(X, y, c * uniform, params, np.random.default_rng(seed))
        assert_same_tree(scaled, base)


@pytest.mark.parametrize("c", [0.3, 7.1])
def test_scaling_uneven_weights_keeps_the_tree(c):
    for X, y, seed in small_datasets(seed=1):
        w = np.random.default_rng(seed).uniform(0.5, 3.0, size=y.size)
        params = ForestParams(max_leaves=10)
        base = fit_tree(X, y, w, params, np.random.default_rng(seed))
        scaled = fit_tree(X, y, c * w, params, np.random.default_rng(seed))
        assert_same_tree(scaled, base)


@pytest.mark.parametrize("params", SWEEP_PARAMS)
def test_duplicating_an_example_equals_doubling_its_weight(params):
    for X, y, seed in small_datasets(seed=2):
        row = seed % y.size
        duplicated = fit_tree(
            np.vstack([X, X[row]]),
            np.append(y, y[row]),
            np.ones(y.size + 1),
            params,
            np.random.default_rng(seed),
        )
        w = np.ones(y.size)
        w[row] = 2.0
        doubled = fit_tree(X, y, w, params, np.random.default_rng(seed))
        assert_same_tree(duplicated, doubled)


def test_tied_splits_go_to_the_lowest_feature_and_threshold():
    # thresholds 0.5 and 2.5 on either feature give the same gain
    X = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
    y = np.array([0, 1, 0, 1])
    params = ForestParams(max_leaves=2)
    for c in (1.0, 0.3, 7.1):
        tree = fit_tree(X, y, np.full(4, c), params, np.random.default_rng(0))
        assert tree.feature[0] == 0
        assert tree.threshold[0] == 0.5


@settings(max_examples=20)
@given(
    st.integers(2, 60),
    st.integers(1, 8),
    st.integers(1, 10),
    st.integers(2, 12),
    st.sampled_from(list(Criterion)),
    st.integers(0, 1000),
)
def test_tree_respects_its_bounds(
    max_leaves, max_depth, min_samples_leaf, min_samples_split, criterion, seed
):
    X, y = blobs(n=80, d=3, seed=seed)
    params = ForestParams(
        max_leaves=max_leaves,
        max_depth=max_depth,
        min_samples_leaf=min_samples_leaf,
        min_samples_split=min_samples_split,
        criterion=criterion,
    )
    tree = fit_tree(X, y, np.ones(y.size), params, np.random.default_rng(seed))
    leaves = tree.feature < 0
    assert tree.n_leaves <= max_leaves
    assert tree.max_depth <= max_depth
    assert tree.n_samples[leaves].min() >= min(min_samples_leaf, y.size)
    splits = ~leaves
    assert np.all(tree.n_samples[splits] >= min_samples_split)
    probabilities = tree.leaf_probabilities()
    assert np.allclose(probabilities.sum(axis=1), 1.0, atol=1e-12, rtol=0)


def test_tree_rejects_bad_inputs():
    rng = np.random.default_rng(0)
    w0 = np.array([1.0, 0.0, 1.0])
    with pytest.raises(ValueError):
        fit_tree(np.zeros((3, 1)), np.array([0, 1, 0]), w0, ForestParams(), rng)
    with pytest.raises(ValueError):
        fit_tree(np.zeros((3, 1)), np.array([0, 1]), np.ones(3), ForestParams(), rng)


def test_params_are_bounded_by_the_search_ranges():
    with pytest.raises(ValidationError):
        ForestParams(max_leaves=1000)
    with pytest.raises(ValidationError):
        ForestParams(min_samples_split=1)


# ---------------------------------------------------------------------------
# Forests
# ---------------------------------------------------------------------------


def test_deep_forest_memorizes_separable_data():
    X, y = blobs(n=80, d=2)
    X[:, 0] += y * 10.0
    model = fit_forest(X, y, np.ones(y.size), ForestParams(), seed=3)
    scores = model.predict_proba(X)
    assert scores[y == 1].min() > 0.9


def test_forest_is_reproducible_for_any_worker_count():
    X, y = blobs()
    params = ForestParams(n_estimators=6, max_leaves=20)
    first = fit_forest(X, y, np.ones(y.size), params, seed=12)
    assert fit_forest(X, y, np.ones(y.size), params, seed=12).digest() == first.digest()
    parallel = fit_forest(X, y, np.ones(y.size), params, seed=12, n_jobs=2)
    assert parallel.digest() == first.digest()
    assert fit_forest(X, y, np.ones(y.size), params, seed=13).digest() != first.digest()


def test_scaling_all_weights_keeps_the_forest():
    for X, y, seed in small_datasets(count=20, seed=3):
        w = np.random.default_rng(seed).uniform(0.5, 3.0, size=y.size)
        params = ForestParams(n_estimators=3)
        base = fit_forest(X, y, w, params, seed=seed)
        scaled = fit_forest(X, y, 0.3 * w, params, seed=seed)
        for tree, other in zip(base.trees, scaled.trees, strict=True):
            assert_same_tree(other, tree)


def test_weights_on_positives_shift_the_scores_up():
    X, y = blobs(n=200, d=2, seed=8)
    params = ForestParams(n_estimators=10, max_leaves=8, min_samples_leaf=5)
    uniform = fit_forest(X, y, np.ones(y.size), params, seed=1)
    w = np.where(y == 1, 99.0, 1.0)
    heavy = fit_forest(X, y, w, params, seed=1)
    grid = np.column_stack(
        [np.repeat(np.linspace(-2, 3, 15), 15), np.tile(np.linspace(-2, 3, 15), 15)]
    )
    assert heavy.predict_proba(grid).mean() > uniform.predict_proba(grid).mean()


def test_predict_checks_feature_count():
    X, y = blobs(d=3)
    model = fit_forest(X, y, np.ones(y.size), ForestParams(n_estimators=2), seed=0)
    with pytest.raises(ValueError):
        model.predict_proba(np.zeros((2, 4)))


def test_model_json_has_one_entry_per_tree():
    X, y = blobs(d=2)
    model = fit_forest(X, y, np.ones(y.size), ForestParams(n_estimators=3), seed=0)
    dumped = model.to_json()
    assert len(dumped["trees"]) == 3
    assert dumped["params"]["criterion"] == "gini"


# ---------------------------------------------------------------------------
# Search
# ---------------------------------------------------------------------------


def test_sampled_params_stay_in_range():
    for params in sample_params(200, seed=4):
        assert 2 <= params.max_leaves < 1000
        assert 1 <= params.max_depth < 50
        assert 1 <= params.min_samples_leaf < 1000
        assert 2 <= params.min_samples_split < 50
        assert params.n_estimators == 20


def test_stratified_folds_need_enough_examples_per_class():
    with pytest.raises(ValueError):
        stratified_folds(np.array([0] * 20 + [1] * 3), folds=5, seed=0)


def test_stratified_folds_keep_both_classes():
    y = np.array([0] * 30 + [1] * 10)
    for _, test in stratified_folds(y, folds=10, seed=6):
        assert set(y[test].tolist()) == {0, 1}


def test_single_model_search_returns_that_model():
    X, y = blobs(n=60)
    result = random_search(
        X, y, np.ones(y.size), n_models=1, folds=3, seed=2, n_estimators=3
    )
    assert result.best_params == sample_params(1, seed=2, n_estimators=3)[0]
    assert result.best_model_id == 0
    assert len(result.fold_aucs) == 3
    assert all(0.0 <= auc <= 1.0 for auc in result.fold_aucs)


def test_search_is_deterministic():
    X, y = blobs(n=60)
    kwargs = {"n_models": 3, "folds": 3, "seed": 5, "n_estimators": 3}
    first = random_search(X, y, np.ones(y.size), **kwargs)
    again = random_search(X, y, np.ones(y.size), **kwargs, n_jobs=2)
    assert again.best_params == first.best_params
    assert again.fold_aucs == first.fold_aucs
    assert first.mean_auc() == max(first.mean_auc(m) for m in range(3))


def test_search_reports_weighted_fold_aucs_when_asked():
    X, y = blobs(n=60)
    result = random_search(
        X,
        y,
        np.ones(y.size),
        n_models=1,
        folds=3,
        n_estimators=2,
        eval_weights=np.ones(y.size),
    )
    assert result.weighted_fold_aucs == pytest.approx(result.fold_aucs)


@pytest.mark.slow
def test_search_separates_the_separable_preset(separable_sample):
    from scripts.ntl.features import FeatureConfig, featurize

    _, _, training = separable_sample
    dataset = featurize(training.dataset, training.series, FeatureConfig())
    for seed in range(3):
        result = random_search(
            dataset.features,
            dataset.labels,
            np.ones(dataset.n_examples),
            n_models=20,
            folds=5,
            seed=seed,
        )
        assert result.mean_auc() >= 0.95
