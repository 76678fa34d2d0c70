"""Learners for the continuous part of the data.

* :class:`LMRegressor` - one hidden layer of ``tanh`` units trained by
  Levenberg-Marquardt on the sum of squared errors.
* :class:`GridRBFRegressor` - decay-RBF units on a uniform grid of centers,
  output weights from ridge-regularized least squares.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .detect import Dataset
from .errors import (
    DimensionMismatch,
    GridTooLarge,
    IllConditioned,
    NonFiniteLoss,
    SingularNormalEquations,
)
from .kernels import DecayKernel, make_kernel
from .numerics import Box, ErrorReport, rmse

__all__ = [
    "TrainConfig",
    "LMRegressor",
    "GridRBFRegressor",
    "fit_mlp_lm",
    "fit_grid_rbf",
    "mlp_forward",
    "mlp_jacobian",
    "check_input_dim",
]

MAX_GRID_CENTERS = 100_000
MAX_CONDITION = 1e12


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 1000
    goal_mse: float = 1e-12
    mu_init: float = 1e-3
    mu_up: float = 10.0
    mu_down: float = 0.1
    mu_max: float = 1e10
    seed: int = 42
    n_init: int = 10

    def __post_init__(self):
        if not (self.mu_up > 1 > self.mu_down > 0):
            raise ValueError("need mu_up > 1 > mu_down > 0")
        if self.goal_mse < 0:
            raise ValueError("goal_mse must be nonnegative")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be positive")
        if self.n_init < 1:
            raise ValueError("n_init must be positive")


def check_input_dim(estimator, X):
    """Validate ``X`` for prediction and enforce the fitted input dimension."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        # a single point for d > 1, a column of points for d == 1
        X = X[:, None] if estimator.n_features_in_ == 1 else X[None, :]
    X = check_array(X)
    if X.shape[1] != estimator.n_features_in_:
        raise DimensionMismatch(
            f"expected {estimator.n_features_in_} input coordinates, got {X.shape[1]}"
        )
    return X


# -- single hidden layer network -------------------------------------------------

def _unpack(theta, n_hidden, d):
    w = theta[: n_hidden * d].reshape(n_hidden, d)
    b = theta[n_hidden * d: n_hidden * (d + 1)]
    c = theta[n_hidden * (d + 1): n_hidden * (d + 2)]
    return w, b, c, theta[-1]


def mlp_forward(theta, U, n_hidden):
    """Network output for standardized inputs ``U`` (N, d)."""
    w, b, c, c0 = _unpack(theta, n_hidden, U.shape[1])
    return np.tanh(U @ w.T + b) @ c + c0


def mlp_jacobian(theta, U, n_hidden):
    """Jacobian of the network output w.r.t. the flat parameter vector ``theta``.

    Parameter order is ``[input_weights (row-major), input_biases,
    output_weights, output_bias]``.
    """
    N, d = U.shape
    w, b, c, _ = _unpack(theta, n_hidden, d)
    H = np.tanh(U @ w.T + b)
    dH = (1.0 - H * H) * c  # (N, n)
    J_w = (dH[:, :, None] * U[:, None, :]).reshape(N, n_hidden * d)
    return np.hstack([J_w, dH, H, np.ones((N, 1))])


class LMRegressor(RegressorMixin, BaseEstimator):
    """Single hidden layer ``tanh`` network trained by Levenberg-Marquardt.

    Inputs are mapped affinely onto ``[-1, 1]^d`` using the training range;
    the map is stored (``input_offset_``, ``input_scale_``) and applied at
    prediction time.  Weights start uniform in ``[-0.5, 0.5]``.

    Parameters
    ----------
    hidden_count : int, default=4
    max_epochs : int, default=1000
    goal_mse : float, default=1e-12
    mu_init, mu_up, mu_down, mu_max : float
        Damping schedule: a step that lowers the SSE is accepted and the
        damping multiplied by ``mu_down``; otherwise damping is multiplied
        by ``mu_up`` and the step retried.  Training stops once damping
        exceeds ``mu_max``.
    random_state : int, default=42
    n_init : int, default=10
        Independent initializations drawn in sequence from one seeded
        generator; the run with the lowest final SSE is kept.  Small
        networks stall in poor local minima for a sizeable share of
        random starts, restarts make the fit insensitive to that.

    Attributes
    ----------
    input_weights_, input_biases_, output_weights_, output_bias_
    sse_history_ : list of float
        SSE after initialization and after every accepted step.
    n_epochs_ : int
    train_time_ : float
        Wall-clock seconds spent in :meth:`fit`.
    stop_reason_ : str
    """

    def __init__(
        self,
        hidden_count=4,
        max_epochs=1000,
        goal_mse=1e-12,
        mu_init=1e-3,
        mu_up=10.0,
        mu_down=0.1,
        mu_max=1e10,
        random_state=42,
        n_init=10,
    ):
        self.hidden_count = hidden_count
        self.max_epochs = max_epochs
        self.goal_mse = goal_mse
        self.mu_init = mu_init
        self.mu_up = mu_up
        self.mu_down = mu_down
        self.mu_max = mu_max
        self.random_state = random_state
        self.n_init = n_init

    @classmethod
    def from_config(cls, hidden_count: int, cfg: TrainConfig) -> "LMRegressor":
        return cls(
            hidden_count=hidden_count,
            max_epochs=cfg.max_epochs,
            goal_mse=cfg.goal_mse,
            mu_init=cfg.mu_init,
            mu_up=cfg.mu_up,
            mu_down=cfg.mu_down,
            mu_max=cfg.mu_max,
            random_state=cfg.seed,
            n_init=cfg.n_init,
        )

    def _standardize(self, X):
        return (X - self.input_offset_) * self.input_scale_

    def fit(self, X, y):
        t0 = time.perf_counter()
        TrainConfig(self.max_epochs, self.goal_mse, self.mu_init, self.mu_up,
                    self.mu_down, self.mu_max, self.random_state, self.n_init)
        if self.hidden_count < 1:
            raise ValueError("hidden_count must be >= 1")
        X, y = check_X_y(X, y, y_numeric=True)
        N, d = X.shape
        n = self.hidden_count

        lo, hi = X.min(axis=0), X.max(axis=0)
        span = np.where(hi > lo, hi - lo, 2.0)
        self.input_offset_ = (lo + hi) / 2.0
        self.input_scale_ = 2.0 / span
        U = self._standardize(X)

        rng = np.random.default_rng(self.random_state)
        best = None
        for _ in range(self.n_init):
            theta0 = rng.uniform(-0.5, 0.5, size=n * (d + 2) + 1)
            run = self._train(theta0, U, y)
            if best is None or run[1][-1] < best[1][-1]:
                best = run
        theta, history, epochs, stop = best
        sse = history[-1]

        w, b, c, c0 = _unpack(theta, n, d)
        self.input_weights_ = w.copy()
        self.input_biases_ = b.copy()
        self.output_weights_ = c.copy()
        self.output_bias_ = float(c0)
        self.coef_flat_ = theta
        self.sse_history_ = history
        self.n_epochs_ = epochs
        self.stop_reason_ = stop
        self.n_features_in_ = d
        self.train_rmse_ = float(np.sqrt(sse / N))
        self.train_time_ = time.perf_counter() - t0
        return self

    def _train(self, theta, U, y):
        """One Levenberg-Marquardt run from ``theta``; returns (theta, history, epochs, stop)."""
        N = U.shape[0]
        n = self.hidden_count
        e = mlp_forward(theta, U, n) - y
        sse = float(e @ e)
        if not np.isfinite(sse):
            raise NonFiniteLoss("initial loss is not finite")
        history = [sse]
        goal_sse = self.goal_mse * N
        mu = self.mu_init
        eye = np.eye(theta.size)
        epochs = 0
        stop = "max_epochs"

        for epochs in range(1, self.max_epochs + 1):
            if sse <= goal_sse:
                epochs -= 1
                stop = "goal"
                break
            J = mlp_jacobian(theta, U, n)
            JtJ = J.T @ J
            g = J.T @ e
            accepted = False
            solved_any = False
            while mu <= self.mu_max:
                try:
                    step = np.linalg.solve(JtJ + mu * eye, -g)
                    solved_any = True
                except np.linalg.LinAlgError:
                    mu *= self.mu_up
                    continue
                cand = theta + step
                e_new = mlp_forward(cand, U, n) - y
                sse_new = float(e_new @ e_new)
                if np.isfinite(sse_new) and sse_new < sse:
                    theta, e, sse = cand, e_new, sse_new
                    mu *= self.mu_down
                    accepted = True
                    break
                mu *= self.mu_up
            if not accepted:
                if not solved_any:
                    raise SingularNormalEquations("damped normal equations unsolvable up to mu_max")
                stop = "mu_max"
                break
            history.append(sse)
        else:
            epochs = self.max_epochs
            if sse <= goal_sse:
                stop = "goal"
        return theta, history, epochs, stop

    def predict(self, X):
        check_is_fitted(self, "coef_flat_")
        X = check_input_dim(self, X)
        U = self._standardize(X)
        # einsum keeps each row's reduction independent of the batch size
        H = np.tanh(np.einsum("ij,kj->ik", U, self.input_weights_) + self.input_biases_)
        return np.einsum("ik,k->i", H, self.output_weights_) + self.output_bias_

    @property
    def neuron_count(self):
        return self.hidden_count


# -- uniform grid decay RBF -------------------------------------------------------

def _resolve_kernel(kernel) -> DecayKernel:
    if isinstance(kernel, DecayKernel):
        return kernel
    return make_kernel(kernel)


def grid_centers(box: Box, partitions: int) -> np.ndarray:
    axes = [np.linspace(lo, hi, partitions + 1) for lo, hi in zip(box.lower, box.upper)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, box.dim)


def _distances(X, C):
    diff = X[:, None, :] - C[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


class GridRBFRegressor(RegressorMixin, BaseEstimator):
    """Decay RBF units on a uniform grid, weights by ridge least squares.

    Each axis of ``box`` is cut into ``partitions`` equal pieces, giving
    ``(partitions + 1) ** d`` centers.  All units share the scale
    ``scale_multiplier * partitions / edge`` (``edge`` is the longest box
    side), so the unit width follows the grid spacing.

    Parameters
    ----------
    partitions : int, default=16
    scale_multiplier : float, default=0.4
        Units about 2.5 grid spacings wide; at 1.0 a Gaussian sum cannot
        reproduce smooth targets much better than a few percent.
    ridge : float, default=1e-10
    kernel : str or DecayKernel, default="gaussian"
    box : Box, optional
        Defaults to the bounding box of the training inputs.

    Attributes
    ----------
    centers_ : ndarray of shape (n_centers, d)
    scale_ : float
    weights_ : ndarray of shape (n_centers,)
    condition_ : float
        Condition estimate of the ridge-augmented system.
    """

    def __init__(self, partitions=16, scale_multiplier=0.4, ridge=1e-10, kernel="gaussian", box=None):
        self.partitions = partitions
        self.scale_multiplier = scale_multiplier
        self.ridge = ridge
        self.kernel = kernel
        self.box = box

    def _design(self, X):
        return self.kernel_.profile(self.scale_ * _distances(X, self.centers_))

    def fit(self, X, y):
        t0 = time.perf_counter()
        X, y = check_X_y(X, y, y_numeric=True)
        d = X.shape[1]
        s = int(self.partitions)
        if s < 1:
            raise ValueError("partitions must be >= 1")
        if not self.scale_multiplier > 0:
            raise ValueError("scale_multiplier must be positive")
        if self.ridge < 0:
            raise ValueError("ridge must be nonnegative")
        if (s + 1) ** d > MAX_GRID_CENTERS:
            raise GridTooLarge(f"{(s + 1) ** d} centers exceed {MAX_GRID_CENTERS}")

        box = self.box
        if box is None:
            box = Box(tuple(X.min(axis=0)), tuple(X.max(axis=0)))
        elif box.dim != d:
            raise DimensionMismatch(f"box is {box.dim}-D but inputs are {d}-D")
        lo, hi = np.asarray(box.lower), np.asarray(box.upper)
        if np.any(X < lo - 1e-12 * (hi - lo)) or np.any(X > hi + 1e-12 * (hi - lo)):
            raise ValueError("training inputs must lie inside the box")

        self.box_ = box
        self.kernel_ = _resolve_kernel(self.kernel)
        self.centers_ = grid_centers(box, s)
        self.scale_ = float(self.scale_multiplier * s / np.max(hi - lo))
        Phi = self._design(X)

        U, sv, Vt = np.linalg.svd(Phi, full_matrices=False)
        lam = float(self.ridge)
        smax = sv[0] if sv.size else 0.0
        smin = sv[-1] if Phi.shape[0] >= Phi.shape[1] else 0.0
        with np.errstate(divide="ignore"):
            cond = np.sqrt((smax ** 2 + lam) / (smin ** 2 + lam)) if smax > 0 else np.inf
        self.condition_ = float(cond)
        if not cond <= MAX_CONDITION:
            raise IllConditioned(float(cond), lam)
        filt = sv / (sv ** 2 + lam)
        self.weights_ = Vt.T @ (filt * (U.T @ y))
        if not np.all(np.isfinite(self.weights_)):
            raise IllConditioned(float(cond), lam)

        self.n_features_in_ = d
        self.train_rmse_ = rmse(Phi @ self.weights_, y)
        self.n_epochs_ = 0
        self.train_time_ = time.perf_counter() - t0
        return self

    def predict(self, X):
        check_is_fitted(self, "weights_")
        X = check_input_dim(self, X)
        out = np.empty(X.shape[0])
        step = max(1, 2_000_000 // max(1, self.centers_.shape[0]))
        for i in range(0, X.shape[0], step):
            out[i:i + step] = np.einsum("ij,j->i", self._design(X[i:i + step]), self.weights_)
        return out

    @property
    def neuron_count(self):
        return int(self.centers_.shape[0])


def _report(model, train: Dataset) -> ErrorReport:
    return ErrorReport(
        train_time=model.train_time_,
        train_rmse=model.train_rmse_,
        test_rmse=None,
        neuron_count=model.neuron_count,
        epochs_used=model.n_epochs_,
    )


def fit_mlp_lm(train: Dataset, hidden_count: int, cfg: Optional[TrainConfig] = None):
    """Train :class:`LMRegressor` on ``train``; returns ``(model, ErrorReport)``."""
    model = LMRegressor.from_config(hidden_count, cfg or TrainConfig())
    model.fit(train.inputs, train.targets)
    return model, _report(model, train)


def fit_grid_rbf(train: Dataset, box: Box, partitions_per_axis: int, scale_multiplier: float = 0.4,
                 ridge: float = 1e-10, kernel="gaussian"):
    """Fit :class:`GridRBFRegressor` on ``train``; returns the fitted model."""
    model = GridRBFRegressor(partitions_per_axis, scale_multiplier, ridge, kernel, box)
    return model.fit(train.inputs, train.targets)
