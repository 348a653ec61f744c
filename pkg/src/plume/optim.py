"""Building blocks for the maximization step of the training loop.

The objective Q is the responsibility-weighted expected complete-data
log-likelihood.  Q is concave in the stacked expert weights, so the
maximization step ascends it with one of three methods: plain gradient
ascent, a regularized Newton solve, or a BFGS inverse-curvature
recursion.  Every accepted step must pass an Armijo sufficient-increase
test, which is what makes the outer training loop monotone.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import expit, log_expit, logsumexp, softmax

from .errors import (
    ArmijoExhaustedError,
    ConfigError,
    DimensionError,
    NonAscentDirectionError,
    NumericalError,
)
from .model import Dataset, ModelParams, augment

__all__ = [
    "Optimizer",
    "Responsibilities",
    "LineSearchConfig",
    "BfgsState",
    "responsibilities",
    "q_value",
    "q_gradient",
    "q_hessian",
    "backtracking_search",
    "initial_bfgs_state",
    "bfgs_update",
    "maximize_q",
]

GRAD_TOL = 1e-6
MAX_INNER_ITERS = 100


class Optimizer(str, Enum):
    """Ascent method used inside the maximization step."""

    GRADIENT_ASCENT = "ga"
    NEWTON = "newton"
    BFGS = "bfgs"


@dataclass(frozen=True, eq=False)
class Responsibilities:
    """Per-example, per-expert posterior membership weights; rows sum to 1."""

    pi: np.ndarray

    def __post_init__(self):
        p = np.array(self.pi, dtype=float)
        if p.ndim != 2 or p.shape[0] < 1 or p.shape[1] < 1:
            raise ConfigError(f"responsibilities must be a nonempty matrix, got shape {p.shape}")
        if np.any(p < 0.0) or np.any(p > 1.0):
            raise ConfigError("responsibility entries must lie in [0, 1]")
        row_err = np.max(np.abs(p.sum(axis=1) - 1.0))
        if row_err > 1e-10:
            raise ConfigError(f"responsibility rows must sum to 1, worst error {row_err:.3e}")
        p.setflags(write=False)
        object.__setattr__(self, "pi", p)


@dataclass(frozen=True)
class LineSearchConfig:
    """Backtracking parameters for the Armijo sufficient-increase test."""

    armijo_c: float = 1e-4
    shrink_rho: float = 0.5
    initial_step: float = 1.0
    max_backtracks: int = 50

    def __post_init__(self):
        if not 0.0 < self.armijo_c < 1.0:
            raise ConfigError(f"armijo_c must lie in (0, 1), got {self.armijo_c}")
        if not 0.0 < self.shrink_rho < 1.0:
            raise ConfigError(f"shrink_rho must lie in (0, 1), got {self.shrink_rho}")
        if not self.initial_step > 0.0:
            raise ConfigError(f"initial_step must be positive, got {self.initial_step}")
        if int(self.max_backtracks) < 0:
            raise ConfigError(f"max_backtracks must be nonnegative, got {self.max_backtracks}")


@dataclass(frozen=True, eq=False)
class BfgsState:
    """Inverse-curvature estimate plus the point/gradient it was formed at.

    b_inv approximates the inverse of the negated Hessian, i.e. the
    curvature of the equivalent minimization problem, so it stays
    positive definite on a concave objective and b_inv @ grad is an
    ascent direction.
    """

    b_inv: np.ndarray
    prev_grad: np.ndarray
    prev_theta: np.ndarray

    def __post_init__(self):
        b = np.array(self.b_inv, dtype=float)
        g = np.array(self.prev_grad, dtype=float)
        t = np.array(self.prev_theta, dtype=float)
        n = t.shape[0] if t.ndim == 1 else -1
        if t.ndim != 1 or g.shape != (n,) or b.shape != (n, n):
            raise DimensionError(
                f"inconsistent state shapes: b_inv {b.shape}, grad {g.shape}, theta {t.shape}"
            )
        if np.max(np.abs(b - b.T), initial=0.0) > 1e-8:
            raise ConfigError("b_inv must be symmetric within 1e-8")
        for arr in (b, g, t):
            arr.setflags(write=False)
        object.__setattr__(self, "b_inv", b)
        object.__setattr__(self, "prev_grad", g)
        object.__setattr__(self, "prev_theta", t)


def initial_bfgs_state(theta: np.ndarray, grad: np.ndarray) -> BfgsState:
    """Fresh state with identity inverse curvature at (theta, grad)."""
    theta = np.asarray(theta, dtype=float)
    return BfgsState(np.eye(theta.size), np.asarray(grad, dtype=float), theta)


def _check_shapes(params: ModelParams, pi: Responsibilities, data: Dataset) -> None:
    if data.n_features != params.n_features:
        raise DimensionError(
            f"model expects {params.n_features} features, dataset has {data.n_features}"
        )
    if pi.pi.shape != (data.n_samples, params.k_experts):
        raise DimensionError(
            f"responsibilities shape {pi.pi.shape} does not match "
            f"({data.n_samples}, {params.k_experts})"
        )


def responsibilities(params: ModelParams, data: Dataset) -> Responsibilities:
    """Posterior membership of each example in each expert.

    Row n is proportional to exp(-gamma * m_nk) * sigmoid(y_n * m_nk)
    over experts k, normalized in log space.
    """
    if data.n_features != params.n_features:
        raise DimensionError(
            f"model expects {params.n_features} features, dataset has {data.n_features}"
        )
    margins = augment(data.features) @ params.weights.T
    log_weights = -params.gamma * margins + log_expit(data.labels[:, None] * margins)
    return Responsibilities(softmax(log_weights, axis=1))


def q_value(params: ModelParams, pi: Responsibilities, data: Dataset) -> float:
    """Expected complete-data log-likelihood under fixed responsibilities."""
    _check_shapes(params, pi, data)
    margins = augment(data.features) @ params.weights.T
    gate_logits = -params.gamma * margins
    log_gate = gate_logits - logsumexp(gate_logits, axis=1, keepdims=True)
    log_sig = log_expit(data.labels[:, None] * margins)
    return float(np.sum(pi.pi * (log_gate + log_sig)))


def q_gradient(params: ModelParams, pi: Responsibilities, data: Dataset) -> np.ndarray:
    """Gradient of q_value, expert blocks stacked into one vector.

    Per expert k:  sum_n [gamma * (g_nk - pi_nk)
                          + y_n * pi_nk * (1 - sigmoid(y_n m_nk))] x_n.
    Validated against central finite differences of q_value in the test
    suite; the finite-difference oracle is authoritative.
    """
    _check_shapes(params, pi, data)
    x_aug = augment(data.features)
    margins = x_aug @ params.weights.T
    gate = softmax(-params.gamma * margins, axis=1)
    sig = expit(data.labels[:, None] * margins)
    coeff = params.gamma * (gate - pi.pi) + data.labels[:, None] * pi.pi * (1.0 - sig)
    return (coeff.T @ x_aug).ravel()


def q_hessian(params: ModelParams, pi: Responsibilities, data: Dataset) -> np.ndarray:
    """Block Hessian of q_value; symmetric and negative semidefinite.

    Diagonal block k:  -sum_n [gamma^2 g_nk (1 - g_nk)
                               + pi_nk s_nk (1 - s_nk)] x_n x_n^T
    Off-diagonal k,r:  gamma^2 sum_n g_nk g_nr x_n x_n^T
    with s_nk = sigmoid(m_nk); s(1-s) is label-independent.
    """
    _check_shapes(params, pi, data)
    x_aug = augment(data.features)
    margins = x_aug @ params.weights.T
    gate = softmax(-params.gamma * margins, axis=1)
    sig = expit(margins)
    k_experts = params.k_experts
    block = params.n_features + 1
    gamma2 = params.gamma**2
    hessian = np.zeros((k_experts * block, k_experts * block))
    for k in range(k_experts):
        for r in range(k, k_experts):
            if r == k:
                c = -(gamma2 * gate[:, k] * (1.0 - gate[:, k])
                      + pi.pi[:, k] * sig[:, k] * (1.0 - sig[:, k]))
            else:
                c = gamma2 * gate[:, k] * gate[:, r]
            piece = (x_aug * c[:, None]).T @ x_aug
            hessian[k * block:(k + 1) * block, r * block:(r + 1) * block] = piece
            if r != k:
                hessian[r * block:(r + 1) * block, k * block:(k + 1) * block] = piece
    return hessian


def backtracking_search(
    objective: Callable[[np.ndarray], float],
    theta: np.ndarray,
    direction: np.ndarray,
    grad: np.ndarray,
    cfg: LineSearchConfig = LineSearchConfig(),
) -> float:
    """Largest step initial_step * rho^m passing the Armijo increase test.

    Requires an ascent direction (grad . direction > 0).  Raises
    ArmijoExhaustedError, carrying the best step tried, when no step in
    the budget satisfies the test.
    """
    theta = np.asarray(theta, dtype=float)
    direction = np.asarray(direction, dtype=float)
    slope = float(np.dot(np.asarray(grad, dtype=float), direction))
    if not np.isfinite(slope) or slope <= 0.0:
        raise NonAscentDirectionError(
            f"directional derivative must be positive, got {slope:.6e}"
        )
    q0 = float(objective(theta))
    step = cfg.initial_step
    best_step, best_q = None, -np.inf
    for _ in range(cfg.max_backtracks + 1):
        q_trial = float(objective(theta + step * direction))
        if q_trial >= q0 + cfg.armijo_c * step * slope:
            return step
        if q_trial > best_q:
            best_step, best_q = step, q_trial
        step *= cfg.shrink_rho
    raise ArmijoExhaustedError(
        f"no step satisfied the sufficient-increase test in {cfg.max_backtracks + 1} tries",
        best_step=best_step,
    )


def bfgs_update(state: BfgsState, new_theta: np.ndarray, new_grad: np.ndarray) -> BfgsState:
    """Rank-two refresh of the inverse-curvature estimate.

    Uses the standard symmetric inverse update with the gradient change
    negated so that b_inv tracks the inverse of -Hessian (see BfgsState).
    A vanishing curvature denominator grad_delta . theta_delta resets
    b_inv to the identity instead of dividing by it.
    """
    new_theta = np.asarray(new_theta, dtype=float)
    new_grad = np.asarray(new_grad, dtype=float)
    if new_theta.shape != state.prev_theta.shape or new_grad.shape != state.prev_grad.shape:
        raise DimensionError(
            f"update shapes {new_theta.shape}/{new_grad.shape} do not match state "
            f"{state.prev_theta.shape}/{state.prev_grad.shape}"
        )
    s = new_theta - state.prev_theta
    dg = new_grad - state.prev_grad
    den = float(np.dot(dg, s))
    if abs(den) < 1e-12 * np.linalg.norm(dg) * np.linalg.norm(s) or den == 0.0:
        return BfgsState(np.eye(new_theta.size), new_grad, new_theta)
    y = -dg
    ys = -den
    b = state.b_inv
    by = b @ y
    yby = float(np.dot(y, by))
    b_new = (
        b
        + ((ys + yby) / ys**2) * np.outer(s, s)
        - (np.outer(by, s) + np.outer(s, by)) / ys
    )
    b_new = 0.5 * (b_new + b_new.T)
    return BfgsState(b_new, new_grad, new_theta)


def _newton_direction(hessian: np.ndarray, grad: np.ndarray) -> np.ndarray:
    # Ascent Newton step: solve (lam*I - H) d = g.  H is negative
    # semidefinite, so the system is positive definite for any lam > 0;
    # lam also covers rank deficiency of the outer-product sums.
    lam = 1e-8 * (1.0 + np.linalg.norm(hessian, np.inf))
    eye = np.eye(grad.size)
    for _ in range(6):
        try:
            factor = cho_factor(lam * eye - hessian, lower=True, check_finite=False)
            return cho_solve(factor, grad, check_finite=False)
        except np.linalg.LinAlgError:
            lam *= 10.0
    raise NumericalError("curvature solve failed despite regularization retries")


def maximize_q(
    params: ModelParams,
    pi: Responsibilities,
    data: Dataset,
    optimizer: Optimizer = Optimizer.GRADIENT_ASCENT,
    line_search: LineSearchConfig = LineSearchConfig(),
    grad_tol: float = GRAD_TOL,
    max_inner: int = MAX_INNER_ITERS,
) -> ModelParams:
    """One maximization step: ascend Q from params under fixed responsibilities.

    Stops when the gradient sup-norm falls below grad_tol, the iteration
    budget runs out (a generalized, partial maximization), or the line
    search can make no further progress.  Every accepted step passes the
    Armijo test, so the returned parameters never have a lower Q.
    """
    optimizer = Optimizer(optimizer)
    theta = params.flatten()

    def q_at(t: np.ndarray) -> float:
        return q_value(params.with_flat(t), pi, data)

    grad = q_gradient(params, pi, data)
    state = None
    for _ in range(max_inner):
        if np.max(np.abs(grad)) < grad_tol:
            break
        if optimizer is Optimizer.GRADIENT_ASCENT:
            direction = grad
        elif optimizer is Optimizer.NEWTON:
            direction = _newton_direction(q_hessian(params.with_flat(theta), pi, data), grad)
        else:
            if state is None:
                state = initial_bfgs_state(theta, grad)
            direction = state.b_inv @ grad
        try:
            step = backtracking_search(q_at, theta, direction, grad, line_search)
        except (NonAscentDirectionError, ArmijoExhaustedError):
            break
        theta = theta + step * direction
        grad = q_gradient(params.with_flat(theta), pi, data)
        if optimizer is Optimizer.BFGS:
            state = bfgs_update(state, theta, grad)
    return params.with_flat(theta)
