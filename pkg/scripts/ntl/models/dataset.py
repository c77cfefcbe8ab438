"""In-memory dataset and weight containers backed by numpy arrays."""

from __future__ import annotations

import hashlib
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from scripts.ntl.errors import DataError


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, copy=True)
    array.flags.writeable = False
    return array


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Feature matrix, binary labels and categorical attributes per customer.

    ``labels`` is ``None`` for an unlabeled reference population. Extra
    categorical columns (e.g. contract status) live in ``attributes``.
    """

    customer_ids: tuple[str, ...]
    features: np.ndarray
    labels: np.ndarray | None
    regions: tuple[str, ...]
    customer_classes: tuple[str, ...]
    feature_names: tuple[str, ...]
    attributes: dict[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        n = len(self.customer_ids)
        features = np.asarray(self.features, dtype=np.float64).reshape(
            n, len(self.feature_names)
        )
        if not np.all(np.isfinite(features)):
            raise DataError("feature matrix contains NaN or infinite values")
        if len(set(self.feature_names)) != len(self.feature_names):
            raise DataError("feature names must be unique")
        object.__setattr__(self, "features", _frozen(features))

        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.shape != (n,) or not np.isin(labels, (0, 1)).all():
                raise DataError("labels must be a binary vector, one per example")
            object.__setattr__(self, "labels", _frozen(labels.astype(np.int8)))

        for name, column in [
            ("regions", self.regions),
            ("customer_classes", self.customer_classes),
            *self.attributes.items(),
        ]:
            if len(column) != n:
                msg = f"attribute {name!r} has {len(column)} values for {n} examples"
                raise DataError(msg)

    # -- shape -------------------------------------------------------------

    @property
    def n_examples(self) -> int:
        return len(self.customer_ids)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    @property
    def is_labeled(self) -> bool:
        return self.labels is not None

    # -- access ------------------------------------------------------------

    def require_labels(self) -> np.ndarray:
        """Labels for training use; both classes must be present."""
        if self.labels is None:
            raise DataError("dataset is unlabeled")
        present = set(np.unique(self.labels).tolist())
        if present != {0, 1}:
            raise DataError("training data needs at least one example of each class")
        return self.labels

    def categorical(self, name: str) -> tuple[str, ...]:
        """Categorical column: ``region``, ``customer_class`` or an extra one."""
        if name == "region":
            return self.regions
        if name == "customer_class":
            return self.customer_classes
        try:
            return self.attributes[name]
        except KeyError:
            raise DataError(f"unknown categorical attribute {name!r}") from None

    def column(self, feature_name: str) -> np.ndarray:
        """One feature column by name."""
        try:
            idx = self.feature_names.index(feature_name)
        except ValueError:
            raise DataError(f"unknown feature {feature_name!r}") from None
        return self.features[:, idx]

    # -- derivation --------------------------------------------------------

    def with_features(
        self, features: np.ndarray, feature_names: Sequence[str]
    ) -> LabeledDataset:
        """Copy with a replaced feature matrix (same examples, same order)."""
        return LabeledDataset(
            customer_ids=self.customer_ids,
            features=features,
            labels=self.labels,
            regions=self.regions,
            customer_classes=self.customer_classes,
            feature_names=tuple(feature_names),
            attributes=dict(self.attributes),
        )

    def select_features(self, mask: np.ndarray) -> LabeledDataset:
        """Copy keeping only the feature columns where ``mask`` is true."""
        mask = np.asarray(mask, dtype=bool)
        names = [n for n, keep in zip(self.feature_names, mask, strict=True) if keep]
        return self.with_features(self.features[:, mask], names)

    def subset(self, indices: Sequence[int] | np.ndarray) -> LabeledDataset:
        """Copy restricted to the given example indices, in the given order."""
        idx = np.asarray(indices, dtype=np.intp)
        return LabeledDataset(
            customer_ids=tuple(self.customer_ids[i] for i in idx),
            features=self.features[idx],
            labels=None if self.labels is None else self.labels[idx],
            regions=tuple(self.regions[i] for i in idx),
            customer_classes=tuple(self.customer_classes[i] for i in idx),
            feature_names=self.feature_names,
            attributes={
                k: tuple(v[i] for i in idx) for k, v in self.attributes.items()
            },
        )

    def digest(self) -> str:
        """SHA-256 over ids, features, labels and categorical attributes."""
        h = hashlib.sha256()
        h.update("\x1f".join(self.customer_ids).encode())
        h.update("\x1f".join(self.feature_names).encode())
        h.update(np.ascontiguousarray(self.features).tobytes())
        if self.labels is not None:
            h.update(self.labels.tobytes())
        h.update("\x1f".join(self.regions).encode())
        h.update("\x1f".join(self.customer_classes).encode())
        for name in sorted(self.attributes):
            h.update(name.encode())
            h.update("\x1f".join(self.attributes[name]).encode())
        return h.hexdigest()


@dataclass(frozen=True, eq=False)
class WeightSet:
    """Per-bias correction weights and their harmonic-mean combination.

    ``combined`` is exactly the harmonic-mean output for the (clipped)
    ``per_bias`` rows; ``normalized`` rescales it to mean 1 for training.
    """

    customer_ids: tuple[str, ...]
    bias_names: tuple[str, ...]
    per_bias: np.ndarray
    combined: np.ndarray
    clip: tuple[float, float]

    def __post_init__(self) -> None:
        per_bias = np.asarray(self.per_bias, dtype=np.float64)
        combined = np.asarray(self.combined, dtype=np.float64)
        n = len(self.customer_ids)
        if per_bias.shape != (n, len(self.bias_names)) or combined.shape != (n,):
            raise ValueError("weight matrix shape does not match examples × biases")
        for values in (per_bias, combined):
            if not (np.all(np.isfinite(values)) and np.all(values > 0)):
                raise ValueError("weights must be finite and strictly positive")
        object.__setattr__(self, "per_bias", _frozen(per_bias))
        object.__setattr__(self, "combined", _frozen(combined))

    @property
    def n(self) -> int:
        """Number of combined biases."""
        return len(self.bias_names)

    @property
    def normalized(self) -> np.ndarray:
        """Combined weights rescaled to mean 1."""
        return self.combined / self.combined.mean()

    def column(self, bias_name: str) -> np.ndarray:
        return self.per_bias[:, self.bias_names.index(bias_name)]

    def effective_sample_size(self, weights: np.ndarray | None = None) -> float:
        """Kish effective sample size ``(Σw)² / Σw²`` of the combined weights.

        Pass ``weights`` to evaluate another column.
        """
        w = self.combined if weights is None else np.asarray(weights)
        return float(w.sum() ** 2 / np.square(w).sum())
