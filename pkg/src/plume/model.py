"""Polyhedral classifier modelled as a softmax-gated mixture of logistic experts.

A model is a bank of K affine experts (w_k, b_k).  A point is labelled
positive when every expert margin w_k.x + b_k is nonnegative, so the
positive region is an intersection of K closed halfspaces.  The
probabilistic side attaches a logistic unit to each hyperplane and
weights the units with a softmax over the negated, gamma-scaled margins;
large gamma concentrates the gate on the minimum-margin expert, which
recovers the hard min-rule classifier.

Everything here is a pure function of (parameters, data) and safe to
call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log_expit, logsumexp, softmax

from .errors import ConfigError, DataError, DimensionError

__all__ = [
    "ModelParams",
    "Dataset",
    "FeatureScale",
    "augment",
    "expert_margins",
    "margin",
    "classify",
    "gating",
    "posterior",
    "log_posteriors",
    "log_likelihood",
]


def augment(features: np.ndarray) -> np.ndarray:
    """Append the constant-1 coordinate: (d,) -> (d+1,) or (N, d) -> (N, d+1)."""
    x = np.asarray(features, dtype=float)
    if x.ndim == 1:
        return np.append(x, 1.0)
    if x.ndim == 2:
        return np.hstack([x, np.ones((x.shape[0], 1))])
    raise DimensionError(f"expected a 1- or 2-dimensional array, got {x.ndim} dimensions")


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Expert weight matrix plus the gating sharpness.

    weights : (K, d+1) array; row k holds [w_k, b_k] with the bias last,
        so row k dotted with an augmented point gives w_k.x + b_k.
    gamma : positive sharpness of the softmax gate.
    """

    weights: np.ndarray
    gamma: float

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 2:
            raise ConfigError(f"weights must be a 2-dimensional matrix, got shape {w.shape}")
        if w.shape[0] < 1 or w.shape[1] < 2:
            raise ConfigError(
                f"need at least 1 expert and 1 feature, got weight shape {w.shape}"
            )
        if not np.all(np.isfinite(w)):
            raise ConfigError("weights contain non-finite entries")
        g = float(self.gamma)
        if not np.isfinite(g) or g <= 0.0:
            raise ConfigError(f"gamma must be a positive finite real, got {self.gamma!r}")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "gamma", g)

    @property
    def k_experts(self) -> int:
        return self.weights.shape[0]

    @property
    def n_features(self) -> int:
        return self.weights.shape[1] - 1

    def flatten(self) -> np.ndarray:
        """Expert rows stacked into one K*(d+1) vector."""
        return self.weights.ravel().copy()

    def with_flat(self, theta: np.ndarray) -> "ModelParams":
        """New parameters from a stacked vector, keeping this gamma."""
        w = np.asarray(theta, dtype=float).reshape(self.weights.shape)
        return ModelParams(w, self.gamma)


@dataclass(frozen=True, eq=False)
class FeatureScale:
    """Per-column (shift, scale) pairs recorded when features are standardized."""

    shift: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        shift = np.array(self.shift, dtype=float)
        scale = np.array(self.scale, dtype=float)
        if shift.ndim != 1 or shift.shape != scale.shape:
            raise ConfigError("shift and scale must be 1-dimensional and equally long")
        if not (np.all(np.isfinite(shift)) and np.all(np.isfinite(scale))):
            raise ConfigError("feature scaling contains non-finite entries")
        if np.any(scale <= 0.0):
            raise ConfigError("scale entries must be positive")
        shift.setflags(write=False)
        scale.setflags(write=False)
        object.__setattr__(self, "shift", shift)
        object.__setattr__(self, "scale", scale)

    def transform(self, features: np.ndarray) -> np.ndarray:
        """Apply the recorded normalization to raw feature rows."""
        x = np.asarray(features, dtype=float)
        if x.shape[-1] != self.shift.shape[0]:
            raise DimensionError(
                f"expected {self.shift.shape[0]} feature columns, got {x.shape[-1]}",
                expected=self.shift.shape[0],
                actual=x.shape[-1],
            )
        return (x - self.shift) / self.scale


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix with labels in {-1, +1} and optional scaling metadata."""

    features: np.ndarray
    labels: np.ndarray
    feature_scale: FeatureScale | None = None

    def __post_init__(self):
        x = np.array(self.features, dtype=float)
        y = np.array(self.labels, dtype=float)
        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
            raise DataError(f"features must be a nonempty 2-dimensional matrix, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise DataError("features contain non-finite entries")
        if y.ndim != 1 or y.shape[0] != x.shape[0]:
            raise DataError(
                f"labels must be a length-{x.shape[0]} vector, got shape {y.shape}"
            )
        if not np.all(np.isin(y, (-1.0, 1.0))):
            bad = np.unique(y[~np.isin(y, (-1.0, 1.0))])
            raise DataError(f"labels must be -1 or +1, found {bad.tolist()}")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def class_counts(self) -> tuple[int, int]:
        """(#positive, #negative) examples."""
        pos = int(np.sum(self.labels > 0))
        return pos, self.n_samples - pos


def _check_augmented(params: ModelParams, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    want = params.n_features + 1
    if x.ndim != 1 or x.shape[0] != want:
        raise DimensionError(
            f"expected an augmented point of length {want}, got shape {x.shape}",
            expected=(want,),
            actual=x.shape,
        )
    if x[-1] != 1.0:
        raise DimensionError("augmented point must end with the constant 1")
    return x


def _check_dataset(params: ModelParams, data: Dataset) -> None:
    if data.n_features != params.n_features:
        raise DimensionError(
            f"model expects {params.n_features} features, dataset has {data.n_features}",
            expected=params.n_features,
            actual=data.n_features,
        )


def expert_margins(params: ModelParams, x_aug: np.ndarray) -> np.ndarray:
    """Affine margins w_k.x + b_k for augmented input, one column per expert."""
    return np.asarray(x_aug, dtype=float) @ params.weights.T


def margin(params: ModelParams, x: np.ndarray) -> float:
    """Smallest expert margin at the augmented point x."""
    x = _check_augmented(params, x)
    return float(np.min(x @ params.weights.T))


def classify(params: ModelParams, x: np.ndarray) -> int:
    """+1 when the minimum margin is nonnegative (closed positive region), else -1."""
    return 1 if margin(params, x) >= 0.0 else -1


def gating(params: ModelParams, x: np.ndarray) -> np.ndarray:
    """Softmax gate over the negated scaled margins; sums to 1.

    Computed with max-subtraction, so only differences of the logits
    -gamma * w_k.x matter.
    """
    x = _check_augmented(params, x)
    return softmax(-params.gamma * (x @ params.weights.T))


def posterior(params: ModelParams, x: np.ndarray, y: int) -> float:
    """Gated mixture of logistic experts: sum_k g_k(x) * sigmoid(y * w_k.x)."""
    x = _check_augmented(params, x)
    if y not in (-1, 1):
        raise DataError(f"label must be -1 or +1, got {y!r}")
    margins = x @ params.weights.T
    gate = softmax(-params.gamma * margins)
    return float(np.sum(gate * expit(y * margins)))


def log_posteriors(params: ModelParams, data: Dataset) -> np.ndarray:
    """Per-example log posterior of the observed label.

    Evaluated as a difference of log-sum-exps so large gamma * margin
    products cannot overflow.
    """
    _check_dataset(params, data)
    margins = augment(data.features) @ params.weights.T
    gate_logits = -params.gamma * margins
    log_sig = log_expit(data.labels[:, None] * margins)
    return logsumexp(gate_logits + log_sig, axis=1) - logsumexp(gate_logits, axis=1)


def log_likelihood(params: ModelParams, data: Dataset) -> float:
    """Total log posterior probability of the observed labels."""
    return float(np.sum(log_posteriors(params, data)))
