"""Outer training loop: alternate responsibility updates with Q ascent.

Each iteration recomputes the per-example expert responsibilities from
the current parameters, then partially maximizes the expected
complete-data log-likelihood with the configured ascent method.  The
loop stops once the data log-likelihood improves by less than epsilon
(by default measured per example) or the iteration cap is reached.
Because every maximization step is Armijo-verified, the recorded
log-likelihood trajectory never decreases.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .errors import ConfigError, DataError, DimensionError, NumericalError
from .model import Dataset, ModelParams, augment, log_likelihood
from .optim import (
    ArmijoExhaustedError,
    LineSearchConfig,
    NonAscentDirectionError,
    Optimizer,
    Responsibilities,
    backtracking_search,
    maximize_q,
    q_gradient,
    q_value,
    responsibilities,
)

__all__ = ["InitScheme", "TrainConfig", "FitReport", "initialize", "fit", "predict"]

logger = logging.getLogger("plume.em")

# An expert whose total responsibility falls below this fraction of N is
# considered dead and gets reseeded from the strongest expert's row.
DEAD_EXPERT_FRACTION = 1e-6
LOGISTIC_INIT_STEPS = 100
INIT_NOISE = 0.1


class InitScheme(str, Enum):
    SMALL_RANDOM = "random"
    PERTURBED_LOGISTIC = "logistic"


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one training run.

    epsilon is compared against the log-likelihood improvement per
    iteration; with epsilon_per_example (the default) the improvement is
    divided by the number of examples first, which makes the tolerance
    dataset-size invariant.
    """

    k_experts: int
    gamma: float = 1.0
    epsilon: float = 1e-6
    optimizer: Optimizer = Optimizer.GRADIENT_ASCENT
    max_em_iters: int = 500
    init: InitScheme = InitScheme.SMALL_RANDOM
    seed: int = 0
    line_search: LineSearchConfig = field(default_factory=LineSearchConfig)
    epsilon_per_example: bool = True

    def __post_init__(self):
        if int(self.k_experts) < 1:
            raise ConfigError(f"k_experts must be at least 1, got {self.k_experts}")
        if not self.gamma > 0.0 or not np.isfinite(self.gamma):
            raise ConfigError(f"gamma must be a positive finite real, got {self.gamma}")
        if not self.epsilon > 0.0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")
        if int(self.max_em_iters) < 1:
            raise ConfigError(f"max_em_iters must be at least 1, got {self.max_em_iters}")
        object.__setattr__(self, "k_experts", int(self.k_experts))
        object.__setattr__(self, "max_em_iters", int(self.max_em_iters))
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "optimizer", Optimizer(self.optimizer))
        object.__setattr__(self, "init", InitScheme(self.init))


@dataclass(frozen=True, eq=False)
class FitReport:
    """Outcome of one training run."""

    final_params: ModelParams
    ll_trajectory: tuple[float, ...]
    em_iterations: int
    converged: bool
    wall_time: float
    train_accuracy: float

    def __post_init__(self):
        traj = tuple(float(v) for v in self.ll_trajectory)
        if len(traj) != self.em_iterations + 1:
            raise NumericalError(
                f"trajectory length {len(traj)} does not match "
                f"{self.em_iterations} iterations + 1"
            )
        drops = np.diff(traj)
        if drops.size and float(drops.min()) < -1e-8:
            raise NumericalError(
                f"log-likelihood decreased by {-float(drops.min()):.3e} during training"
            )
        object.__setattr__(self, "ll_trajectory", traj)


def _logistic_row(cfg: TrainConfig, data: Dataset) -> np.ndarray:
    # Single-expert ascent: with K=1 the gate is identically 1, so Q is
    # exactly the logistic log-likelihood.
    params = ModelParams(np.zeros((1, data.n_features + 1)), cfg.gamma)
    pi = Responsibilities(np.ones((data.n_samples, 1)))
    theta = params.flatten()

    def q_at(t):
        return q_value(params.with_flat(t), pi, data)

    for _ in range(LOGISTIC_INIT_STEPS):
        grad = q_gradient(params.with_flat(theta), pi, data)
        if np.max(np.abs(grad)) < 1e-8:
            break
        try:
            step = backtracking_search(q_at, theta, grad, grad, cfg.line_search)
        except (NonAscentDirectionError, ArmijoExhaustedError):
            break
        theta = theta + step * grad
    return theta


def initialize(cfg: TrainConfig, data: Dataset) -> ModelParams:
    """Seeded starting parameters.

    SMALL_RANDOM draws every entry uniformly from (-0.1, 0.1).
    PERTURBED_LOGISTIC first fits a single logistic separator by
    gradient ascent, then perturbs K copies of it with the same noise.
    """
    rng = np.random.default_rng(cfg.seed)
    width = data.n_features + 1
    if cfg.init is InitScheme.SMALL_RANDOM:
        weights = rng.uniform(-INIT_NOISE, INIT_NOISE, size=(cfg.k_experts, width))
    else:
        base = _logistic_row(cfg, data)
        weights = base[None, :] + rng.uniform(
            -INIT_NOISE, INIT_NOISE, size=(cfg.k_experts, width)
        )
    return ModelParams(weights, cfg.gamma)


def _rescue_dead_experts(
    params: ModelParams,
    pi: Responsibilities,
    data: Dataset,
    current_ll: float,
    rng: np.random.Generator,
) -> tuple[ModelParams, Responsibilities, float]:
    # Reseed experts that carry essentially no responsibility by
    # perturbing the strongest expert's row.  The proposal is kept only
    # if it does not lower the data log-likelihood, preserving the
    # monotone trajectory guarantee.
    totals = pi.pi.sum(axis=0)
    dead = np.flatnonzero(totals < DEAD_EXPERT_FRACTION * data.n_samples)
    if dead.size == 0:
        return params, pi, current_ll
    weights = np.array(params.weights)
    best_row = weights[int(np.argmax(totals))]
    for k in dead:
        weights[k] = best_row + rng.uniform(-INIT_NOISE, INIT_NOISE, size=best_row.shape)
    proposal = ModelParams(weights, params.gamma)
    proposal_ll = log_likelihood(proposal, data)
    if proposal_ll >= current_ll - 1e-12:
        logger.debug("reseeded %d dead expert(s)", dead.size)
        return proposal, responsibilities(proposal, data), proposal_ll
    logger.debug("dead-expert reseed rejected (would lower log-likelihood)")
    return params, pi, current_ll


def _fit_once(cfg: TrainConfig, data: Dataset) -> FitReport:
    start = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    params = initialize(cfg, data)
    current_ll = log_likelihood(params, data)
    if not np.isfinite(current_ll):
        raise NumericalError(
            "initial log-likelihood is not finite; check feature scaling"
        )
    trajectory = [current_ll]
    converged = False
    iterations = 0
    for _ in range(cfg.max_em_iters):
        pi = responsibilities(params, data)
        params, pi, current_ll = _rescue_dead_experts(params, pi, data, current_ll, rng)
        params = maximize_q(
            params, pi, data, optimizer=cfg.optimizer, line_search=cfg.line_search
        )
        new_ll = log_likelihood(params, data)
        if not np.isfinite(new_ll):
            raise NumericalError(
                "log-likelihood became non-finite; check feature scaling"
            )
        trajectory.append(new_ll)
        iterations += 1
        improvement = new_ll - current_ll
        if cfg.epsilon_per_example:
            improvement /= data.n_samples
        current_ll = new_ll
        logger.debug("iteration %d: log-likelihood %.6f", iterations, new_ll)
        if improvement < cfg.epsilon:
            converged = True
            break
    accuracy = float(np.mean(predict(params, data.features) == data.labels))
    return FitReport(
        final_params=params,
        ll_trajectory=tuple(trajectory),
        em_iterations=iterations,
        converged=converged,
        wall_time=time.perf_counter() - start,
        train_accuracy=accuracy,
    )


def fit(cfg: TrainConfig, data: Dataset, restarts: int = 1) -> FitReport:
    """Train a polyhedral classifier; returns the best restart by final log-likelihood.

    Restart r runs with seed cfg.seed + r, so results are deterministic
    given (cfg, data, restarts).  Requires both classes in the data.
    """
    if int(restarts) < 1:
        raise ConfigError(f"restarts must be at least 1, got {restarts}")
    pos, neg = data.class_counts()
    if pos == 0 or neg == 0:
        raise DataError("training data must contain both classes")
    best: FitReport | None = None
    for r in range(int(restarts)):
        report = _fit_once(replace(cfg, seed=cfg.seed + r), data)
        if best is None or report.ll_trajectory[-1] > best.ll_trajectory[-1]:
            best = report
    return best


def predict(params: ModelParams, features: np.ndarray) -> np.ndarray:
    """Labels in {-1, +1} for each feature row via the min-margin sign rule.

    The caller is responsible for applying the same feature scaling that
    was used at training time.
    """
    x = np.asarray(features, dtype=float)
    if x.ndim != 2:
        raise DimensionError(f"expected an N x d feature matrix, got shape {x.shape}")
    if x.shape[1] != params.n_features:
        raise DimensionError(
            f"model expects {params.n_features} features, data has {x.shape[1]}",
            expected=params.n_features,
            actual=x.shape[1],
        )
    margins = augment(x) @ params.weights.T
    return np.where(margins.min(axis=1) >= 0.0, 1.0, -1.0)
