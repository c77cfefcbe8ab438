from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tools.auc import roc_auc


def pairwise_auc(scores, labels, weights=None) -> float:
    weights = [1.0] * len(scores) if weights is None else weights
    hit = total = 0.0
    for i, (si, yi) in enumerate(zip(scores, labels, strict=True)):
        if yi != 1:
            continue
        for j, (sj, yj) in enumerate(zip(scores, labels, strict=True)):
            if yj != 0:
                continue
            pair = weights[i] * weights[j]
            total += pair
            if si > sj:
                hit += pair
            elif si == sj:
                hit += 0.5 * pair
    return hit / total


@pytest.mark.parametrize(
    ("scores", "labels", "expected"),
    [
        ([0.9, 0.8, 0.3, 0.1], [1, 1, 0, 0], 1.0),
        ([0.8, 0.5, 0.5, 0.2], [1, 0, 1, 0], 0.875),
        ([0.9, 0.8, 0.3, 0.1], [0, 0, 1, 1], 0.0),
    ],
)
def test_examples(scores, labels, expected):
    assert roc_auc(np.array(scores), np.array(labels)) == expected


def test_constant_scores_give_one_half():
    assert roc_auc(np.zeros(6), np.array([0, 1, 0, 1, 1, 0])) == 0.5


@pytest.mark.parametrize("labels", [[1, 1, 1], [0, 0, 0]])
def test_single_class_is_rejected(labels):
    with pytest.raises(ValueError):
        roc_auc(np.arange(3.0), np.array(labels))


def test_length_mismatch_is_rejected():
    with pytest.raises(ValueError):
        roc_auc(np.arange(3.0), np.array([0, 1]))


scored = st.integers(2, 200).flatmap(
    lambda n: st.tuples(
        st.lists(st.integers(0, 10).map(float), min_size=n, max_size=n),
        st.lists(st.integers(0, 1), min_size=n, max_size=n).filter(
            lambda ys: 0 < sum(ys) < len(ys)
        ),
    )
)


@given(scored)
def test_matches_pairwise_oracle(case):
    scores, labels = case
    assert roc_auc(np.array(scores), np.array(labels)) == pytest.approx(
        pairwise_auc(scores, labels), abs=1e-12
    )


@given(scored, st.floats(0.1, 10.0), st.floats(-5.0, 5.0))
def test_invariant_under_increasing_maps(case, scale, shift):
    scores, labels = case
    base = roc_auc(np.array(scores), np.array(labels))
    moved = roc_auc(np.array(scores) * scale + shift, np.array(labels))
    assert moved == pytest.approx(base, abs=1e-12)


@given(scored)
def test_flipping_labels_mirrors_the_auc(case):
    scores, labels = case
    flipped = 1 - np.array(labels)
    assert roc_auc(np.array(scores), flipped) == pytest.approx(
        1.0 - roc_auc(np.array(scores), np.array(labels)), abs=1e-12
    )


@given(scored, st.data())
def test_weighted_auc_matches_weighted_pairs(case, data):
    scores, labels = case
    weights = data.draw(
        st.lists(
            st.integers(1, 5).map(float), min_size=len(scores), max_size=len(scores)
        )
    )
    assert roc_auc(
        np.array(scores), np.array(labels), sample_weight=np.array(weights)
    ) == pytest.approx(pairwise_auc(scores, labels, weights), abs=1e-9)
