"""Closed-form generalization-bound calculator for fitted models.

Bounds the expected cross-entropy risk of a gated mixture of K logistic
experts in terms of the empirical risk, per-expert weight-norm caps, the
data radius, the gate sharpness, and a confidence level.  The dominant
scale factor grows exponentially in gamma, the weight caps, and the
radius, so the bound is often vacuous on real data; the report flags
that case rather than hiding it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .model import Dataset, ModelParams, log_posteriors

__all__ = [
    "BoundInputs",
    "BoundReport",
    "rademacher_bound",
    "confidence_radius",
    "risk_bound",
    "bound_for_model",
]

# A cross-entropy risk bound beyond ln 2 + 10 says nothing useful; the
# coin-flip predictor already achieves ln 2.
VACUITY_THRESHOLD = float(np.log(2.0)) + 10.0


@dataclass(frozen=True, eq=False)
class BoundInputs:
    """Quantities the bound is evaluated at.

    w_max_per_expert : per-expert caps on ||w_k||, bias excluded.
    radius : cap on ||x|| over the data, without the appended 1.
    """

    w_max_per_expert: np.ndarray
    radius: float
    gamma: float
    n_samples: int
    delta: float
    empirical_risk: float

    def __post_init__(self):
        w = np.array(self.w_max_per_expert, dtype=float)
        if w.ndim != 1 or w.shape[0] < 1:
            raise ConfigError(f"w_max_per_expert must be a nonempty vector, got shape {w.shape}")
        if np.any(w < 0.0) or not np.all(np.isfinite(w)):
            raise ConfigError("w_max_per_expert entries must be finite and nonnegative")
        if not np.isfinite(self.radius) or self.radius < 0.0:
            raise ConfigError(f"radius must be finite and nonnegative, got {self.radius}")
        if not self.gamma > 0.0 or not np.isfinite(self.gamma):
            raise ConfigError(f"gamma must be a positive finite real, got {self.gamma}")
        if int(self.n_samples) < 1:
            raise ConfigError(f"n_samples must be at least 1, got {self.n_samples}")
        if not 0.0 < self.delta < 1.0:
            raise ConfigError(f"delta must lie in (0, 1), got {self.delta}")
        if not np.isfinite(self.empirical_risk) or self.empirical_risk < 0.0:
            raise ConfigError(f"empirical_risk must be finite and nonnegative, got {self.empirical_risk}")
        w.setflags(write=False)
        object.__setattr__(self, "w_max_per_expert", w)
        object.__setattr__(self, "n_samples", int(self.n_samples))

    @property
    def k_experts(self) -> int:
        return self.w_max_per_expert.shape[0]


@dataclass(frozen=True)
class BoundReport:
    """Computed bound terms; risk_bound is never below empirical_risk."""

    c1: float
    c2: float
    rademacher_bound: float
    risk_bound: float
    w_max: float
    w_min: float
    empirical_risk: float
    vacuous: bool


def _coupling_factor(k_experts: int) -> float:
    # Multi-expert complexity multiplier; collapses to 1 for one expert.
    return 3.0 * np.sqrt(k_experts - 1.0) / np.sqrt(2.0) + 1.0


def _loss_scale(w_max: float, w_min: float, radius: float, gamma: float) -> float:
    # Lipschitz/maximum scale of the cross-entropy loss over the class.
    return (1.0 + np.exp(w_max * radius)) * np.exp(gamma * (w_max + w_min) * radius)


def rademacher_bound(inputs: BoundInputs) -> float:
    """Upper bound on the empirical Rademacher complexity of the model class.

    (3 sqrt(K-1) / sqrt(2) + 1) * sum_k W_k * R / sqrt(N).
    """
    total = float(np.sum(inputs.w_max_per_expert))
    return _coupling_factor(inputs.k_experts) * total * inputs.radius / np.sqrt(inputs.n_samples)


def confidence_radius(delta: float, n_samples: int) -> float:
    """sqrt(ln(2/delta) / (2N)); the unscaled confidence term of the bound."""
    return float(np.sqrt(np.log(2.0 / delta) / (2.0 * n_samples)))


def risk_bound(inputs: BoundInputs) -> BoundReport:
    """Full risk bound: empirical risk + complexity term + confidence term."""
    w_max = float(np.max(inputs.w_max_per_expert))
    w_min = float(np.min(inputs.w_max_per_expert))
    scale = _loss_scale(w_max, w_min, inputs.radius, inputs.gamma)
    c1 = scale * _coupling_factor(inputs.k_experts)
    c2 = 3.0 * scale
    total_w = float(np.sum(inputs.w_max_per_expert))
    complexity_term = c1 * total_w * inputs.radius / np.sqrt(inputs.n_samples)
    confidence_term = c2 * confidence_radius(inputs.delta, inputs.n_samples)
    bound = inputs.empirical_risk + complexity_term + confidence_term
    return BoundReport(
        c1=float(c1),
        c2=float(c2),
        rademacher_bound=rademacher_bound(inputs),
        risk_bound=float(bound),
        w_max=w_max,
        w_min=w_min,
        empirical_risk=float(inputs.empirical_risk),
        vacuous=bool(bound > VACUITY_THRESHOLD),
    )


def bound_for_model(params: ModelParams, data: Dataset, delta: float) -> BoundReport:
    """Instantiate the bound at a fitted model's empirical quantities.

    Uses ||w_k|| with the bias excluded, the maximum feature-row norm
    without the appended 1, and the mean negative log posterior of the
    observed labels as the empirical risk.
    """
    w_norms = np.linalg.norm(params.weights[:, :-1], axis=1)
    radius = float(np.max(np.linalg.norm(data.features, axis=1)))
    empirical_risk = float(np.mean(-log_posteriors(params, data)))
    inputs = BoundInputs(
        w_max_per_expert=w_norms,
        radius=radius,
        gamma=params.gamma,
        n_samples=data.n_samples,
        delta=delta,
        empirical_risk=empirical_risk,
    )
    return risk_bound(inputs)
