"""Repeated k-fold evaluation harness.

Each fold fits a fresh model on the training split (optionally
standardizing on that split only, then applying the recorded transform
to the held-out rows) and scores accuracy on the test split.  The
summary statistic is the mean over all folds; the spread is the
standard deviation over the per-repeat mean accuracies.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, asdict

import numpy as np

from .data import CvPlan, kfold, standardize
from .em import TrainConfig, fit, predict
from .errors import ConfigError
from .model import Dataset

__all__ = ["CvReport", "cross_validate"]

AGGREGATE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class CvReport:
    """Per-fold accuracies (repeat-major) with consistent aggregates."""

    fold_accuracies: tuple[tuple[float, ...], ...]
    repeat_means: tuple[float, ...]
    mean_accuracy: float
    std_accuracy: float
    mean_train_time: float
    config: dict

    def __post_init__(self):
        folds = tuple(tuple(float(a) for a in rep) for rep in self.fold_accuracies)
        means = tuple(float(np.mean(rep)) for rep in folds)
        flat = [a for rep in folds for a in rep]
        if max(abs(m - r) for m, r in zip(means, self.repeat_means)) > AGGREGATE_TOL:
            raise ConfigError("repeat means are inconsistent with the per-fold data")
        if abs(float(np.mean(flat)) - self.mean_accuracy) > AGGREGATE_TOL:
            raise ConfigError("mean accuracy is inconsistent with the per-fold data")
        expected_std = float(np.std(means, ddof=1)) if len(means) > 1 else 0.0
        if abs(expected_std - self.std_accuracy) > AGGREGATE_TOL:
            raise ConfigError("std accuracy is inconsistent with the repeat means")
        object.__setattr__(self, "fold_accuracies", folds)
        object.__setattr__(self, "repeat_means", means)

    def as_dict(self) -> dict:
        return {
            "fold_accuracies": [list(rep) for rep in self.fold_accuracies],
            "repeat_means": list(self.repeat_means),
            "mean_accuracy": self.mean_accuracy,
            "std_accuracy": self.std_accuracy,
            "mean_train_time": self.mean_train_time,
            "config": self.config,
        }


def _run_fold(
    cfg: TrainConfig,
    data: Dataset,
    train_idx: np.ndarray,
    test_idx: np.ndarray,
    standardize_features: bool,
    restarts: int,
) -> tuple[float, float]:
    train = Dataset(data.features[train_idx], data.labels[train_idx])
    if standardize_features:
        train = standardize(train)
    report = fit(cfg, train, restarts=restarts)
    test_features = data.features[test_idx]
    if train.feature_scale is not None:
        test_features = train.feature_scale.transform(test_features)
    predicted = predict(report.final_params, test_features)
    accuracy = float(np.mean(predicted == data.labels[test_idx]))
    return accuracy, report.wall_time


def cross_validate(
    cfg: TrainConfig,
    data: Dataset,
    plan: CvPlan,
    standardize_features: bool = True,
    jobs: int = 1,
    restarts: int = 1,
) -> CvReport:
    """Run the full repeated k-fold protocol for one configuration.

    Fold i trains with seed cfg.seed + i, so the report is deterministic
    given (cfg, data, plan) regardless of the jobs level.
    """
    if int(jobs) < 1:
        raise ConfigError(f"jobs must be at least 1, got {jobs}")
    splits = kfold(plan, data)
    tasks = [
        (i, train_idx, test_idx) for i, (train_idx, test_idx) in enumerate(splits)
    ]

    def run(task):
        i, train_idx, test_idx = task
        fold_cfg = TrainConfig(
            k_experts=cfg.k_experts,
            gamma=cfg.gamma,
            epsilon=cfg.epsilon,
            optimizer=cfg.optimizer,
            max_em_iters=cfg.max_em_iters,
            init=cfg.init,
            seed=cfg.seed + i,
            line_search=cfg.line_search,
            epsilon_per_example=cfg.epsilon_per_example,
        )
        return _run_fold(fold_cfg, data, train_idx, test_idx, standardize_features, restarts)

    if jobs == 1:
        results = [run(task) for task in tasks]
    else:
        with ThreadPoolExecutor(max_workers=int(jobs)) as pool:
            results = list(pool.map(run, tasks))

    accuracies = [acc for acc, _ in results]
    times = [t for _, t in results]
    per_repeat = [
        tuple(accuracies[r * plan.n_folds:(r + 1) * plan.n_folds])
        for r in range(plan.n_repeats)
    ]
    repeat_means = tuple(float(np.mean(rep)) for rep in per_repeat)
    config_echo = {
        "k_experts": cfg.k_experts,
        "gamma": cfg.gamma,
        "epsilon": cfg.epsilon,
        "epsilon_per_example": cfg.epsilon_per_example,
        "optimizer": cfg.optimizer.value,
        "init": cfg.init.value,
        "max_em_iters": cfg.max_em_iters,
        "seed": cfg.seed,
        "restarts": int(restarts),
        "standardize": bool(standardize_features),
        "plan": asdict(plan),
    }
    return CvReport(
        fold_accuracies=tuple(per_repeat),
        repeat_means=repeat_means,
        mean_accuracy=float(np.mean(accuracies)),
        std_accuracy=float(np.std(repeat_means, ddof=1)) if len(repeat_means) > 1 else 0.0,
        mean_train_time=float(np.mean(times)),
        config=config_echo,
    )
