"""Univariate kernel density estimation with randomized model selection.

Densities are evaluated with scikit-learn's ``KernelDensity`` (exact
evaluation, ``atol = rtol = 0``). Kernel and bandwidth are chosen by a
randomized search scored with the K-fold cross-validated held-out
log-likelihood.
"""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field
from enum import StrEnum
from typing import Any, NamedTuple

import numpy as np
from joblib import Parallel, delayed
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.stats import loguniform
from sklearn.model_selection import KFold, ParameterSampler
from sklearn.neighbors import KernelDensity

from tools.seeding import task_seed

logger = logging.getLogger(__name__)

DENSITY_FLOOR = 1e-300
LOG_DENSITY_FLOOR = math.log(DENSITY_FLOOR)
# candidates whose held-out points hit the floor more often than this are dropped
MAX_FLOOR_FRACTION = 0.5


class Kernel(StrEnum):
    GAUSSIAN = "gaussian"
    TOPHAT = "tophat"
    EPANECHNIKOV = "epanechnikov"
    EXPONENTIAL = "exponential"
    LINEAR = "linear"
    COSINE = "cosine"


# Half-width of the kernel support in bandwidth units (inf for unbounded kernels)
KERNEL_SUPPORT: dict[Kernel, float] = {
    Kernel.GAUSSIAN: math.inf,
    Kernel.TOPHAT: 1.0,
    Kernel.EPANECHNIKOV: 1.0,
    Kernel.EXPONENTIAL: math.inf,
    Kernel.LINEAR: 1.0,
    Kernel.COSINE: 1.0,
}


# ---------------------------------------------------------------------------
# Fitted model
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DensityModel:
    """A fitted univariate KDE: kernel, bandwidth and the training sample."""

    kernel: Kernel
    bandwidth: float
    sample: np.ndarray
    _estimator: KernelDensity = field(init=False, repr=False)

    def __post_init__(self) -> None:
        sample = np.array(self.sample, dtype=np.float64).ravel()
        if sample.size == 0:
            raise ValueError("density sample must not be empty")
        if not np.all(np.isfinite(sample)):
            raise ValueError("density sample must be finite")
        if not (math.isfinite(self.bandwidth) and self.bandwidth > 0):
            msg = f"bandwidth must be positive, got {self.bandwidth}"
            raise ValueError(msg)
        sample.flags.writeable = False
        kernel = Kernel(self.kernel)
        estimator = KernelDensity(
            kernel=kernel.value, bandwidth=float(self.bandwidth)
        ).fit(sample[:, None])
        object.__setattr__(self, "kernel", kernel)
        object.__setattr__(self, "sample", sample)
        object.__setattr__(self, "_estimator", estimator)

    @property
    def n(self) -> int:
        return int(self.sample.size)

    def log_density(self, x: np.ndarray | float) -> np.ndarray:
        """Natural log of the density at each point (``-inf`` outside the support)."""
        points = np.asarray(x, dtype=np.float64).reshape(-1, 1)
        return self._estimator.score_samples(points)

    def density(self, x: np.ndarray | float) -> np.ndarray:
        return np.exp(self.log_density(x))

    def sample_digest(self) -> str:
        return hashlib.sha256(self.sample.tobytes()).hexdigest()

    def to_json(self) -> dict[str, Any]:
        return {
            "kernel": self.kernel.value,
            "bandwidth": self.bandwidth,
            "sample_digest": self.sample_digest(),
            "n": self.n,
        }


def kde_fit(
    sample: np.ndarray, kernel: Kernel | str, bandwidth: float
) -> DensityModel:
    """Fit a univariate KDE."""
    return DensityModel(
        kernel=Kernel(kernel), bandwidth=float(bandwidth), sample=sample
    )


def kde_eval(model: DensityModel, x: float | np.ndarray) -> float | np.ndarray:
    """Density of ``model`` at ``x``; scalar in, scalar out."""
    values = model.density(x)
    if np.ndim(x) == 0:
        return float(values[0])
    return values.reshape(np.shape(x))


# ---------------------------------------------------------------------------
# Randomized model selection
# ---------------------------------------------------------------------------


class KdeSearchSpec(BaseModel):
    """Search space and protocol for ``kde_select``."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    kernels: list[Kernel] = Field(
        default_factory=lambda: list(Kernel), min_length=1
    )
    bandwidth_range: tuple[float, float] = (0.001, 10.0)
    n_candidates: int = Field(default=100, ge=1)
    folds: int = Field(default=5, ge=2)
    seed: int = 0
    # selection runs on a seeded subsample of at most this many values
    max_samples: int | None = Field(default=2000, ge=2)

    @model_validator(mode="after")
    def _check_range(self) -> KdeSearchSpec:
        lo, hi = self.bandwidth_range
        if not 0 < lo <= hi:
            raise ValueError("bandwidth_range must satisfy 0 < min <= max")
        return self


class KdeCandidate(NamedTuple):
    kernel: Kernel
    bandwidth: float


class KdeSelection(NamedTuple):
    kernel: Kernel
    bandwidth: float
    cv_log_likelihood: float


def sample_candidates(spec: KdeSearchSpec) -> list[KdeCandidate]:
    """Kernel uniformly from the set, bandwidth log-uniform over the range."""
    lo, hi = spec.bandwidth_range
    space: dict[str, Any] = {"kernel": [k.value for k in spec.kernels]}
    if lo == hi:
        space["bandwidth"] = [lo]
    else:
        space["bandwidth"] = loguniform(lo, hi)
    sampler = ParameterSampler(
        space, n_iter=spec.n_candidates, random_state=task_seed(spec.seed)
    )
    return [KdeCandidate(Kernel(p["kernel"]), float(p["bandwidth"])) for p in sampler]


def _score_candidate(
    sample: np.ndarray,
    splits: list[tuple[np.ndarray, np.ndarray]],
    candidate: KdeCandidate,
) -> tuple[float, float]:
    """Mean held-out log-likelihood and fraction of held-out points at the floor."""
    fold_scores: list[float] = []
    floor_hits = 0
    held_out = 0
    for train_idx, test_idx in splits:
        model = kde_fit(sample[train_idx], candidate.kernel, candidate.bandwidth)
        log_dens = model.log_density(sample[test_idx])
        at_floor = ~(log_dens > LOG_DENSITY_FLOOR)
        floor_hits += int(at_floor.sum())
        held_out += log_dens.size
        fold_scores.append(float(np.maximum(log_dens, LOG_DENSITY_FLOOR).mean()))
    return math.fsum(fold_scores) / len(fold_scores), floor_hits / held_out


def kde_select(
    sample: np.ndarray, spec: KdeSearchSpec, *, n_jobs: int = 1
) -> KdeSelection:
    """Pick the (kernel, bandwidth) pair with the best cross-validated likelihood.

    Deterministic given ``spec.seed``: candidates come from a seeded
    ``ParameterSampler`` and all candidates are scored on the same folds, so
    the outcome does not depend on ``n_jobs``.
    """
    sample = np.asarray(sample, dtype=np.float64).ravel()
    if sample.size < spec.folds:
        msg = f"need at least {spec.folds} values for {spec.folds}-fold selection"
        raise ValueError(msg)
    if spec.max_samples is not None and sample.size > spec.max_samples:
        rng = np.random.default_rng(spec.seed)
        idx = rng.choice(sample.size, size=spec.max_samples, replace=False)
        idx.sort()
        sample = sample[idx]

    candidates = sample_candidates(spec)
    folds = KFold(n_splits=spec.folds, shuffle=True, random_state=task_seed(spec.seed))
    splits = list(folds.split(sample))

    scored = Parallel(n_jobs=n_jobs)(
        delayed(_score_candidate)(sample, splits, c) for c in candidates
    )
    scores = np.array([s for s, _ in scored])
    floor_fraction = np.array([f for _, f in scored])

    usable = floor_fraction <= MAX_FLOOR_FRACTION
    discarded = int((~usable).sum())
    if discarded:
        logger.warning(
            "KDE search: %d of %d candidates discarded (density floor)",
            discarded,
            len(candidates),
        )
    if not usable.any():
        usable[:] = True
    masked = np.where(usable, scores, -np.inf)
    best = int(np.argmax(masked))
    chosen = candidates[best]
    logger.debug(
        "KDE search: %s h=%.4g (cv log-lik %.4f)",
        chosen.kernel.value,
        chosen.bandwidth,
        scores[best],
    )
    return KdeSelection(chosen.kernel, chosen.bandwidth, float(scores[best]))
