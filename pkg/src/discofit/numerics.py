"""Quadrature, RMSE and run-comparison ratios."""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np
from scipy.stats import qmc

from .errors import EmptyInput, InvalidBaseline, LengthMismatch, NoConvergenceWarning

__all__ = [
    "Box",
    "QuadratureConfig",
    "QuadratureResult",
    "ErrorReport",
    "l2_norm",
    "integrate_cells",
    "tensor_cells",
    "rmse",
    "ratio_metrics",
]

# points per chunk when evaluating integrands, bounds peak memory
_CHUNK = 1 << 18
_QMC_POINTS = 1 << 20


@dataclass(frozen=True)
class Box:
    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lower))
        hi = tuple(float(v) for v in np.atleast_1d(self.upper))
        if len(lo) == 0 or len(lo) != len(hi):
            raise ValueError("box bounds must be non-empty and of equal length")
        if not all(a < b for a, b in zip(lo, hi)):
            raise ValueError("box needs lower[i] < upper[i] on every axis")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def volume(self) -> float:
        return float(np.prod(np.subtract(self.upper, self.lower)))

    @classmethod
    def around(cls, points, pad: float) -> "Box":
        """Bounding box of ``points`` (n, d) padded by ``pad`` on every side."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return cls(tuple(pts.min(axis=0) - pad), tuple(pts.max(axis=0) + pad))


@dataclass(frozen=True)
class QuadratureConfig:
    """Gauss-Legendre settings; ``points_per_axis`` doubles on each refinement."""

    points_per_axis: int = 64
    refinement_limit: int = 4
    rel_tol: float = 1e-8

    def __post_init__(self):
        if self.points_per_axis < 2:
            raise ValueError("points_per_axis must be >= 2")
        if self.refinement_limit < 1:
            raise ValueError("refinement_limit must be >= 1")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")


class QuadratureResult(NamedTuple):
    value: float
    converged: bool
    points_per_axis: int
    error_estimate: float


@dataclass
class ErrorReport:
    """Timing and error summary for one training run."""

    train_time: float
    train_rmse: float
    test_rmse: Optional[float]
    neuron_count: int
    epochs_used: int

    def __post_init__(self):
        for name in ("train_time", "train_rmse", "neuron_count", "epochs_used"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.test_rmse is not None and self.test_rmse < 0:
            raise ValueError("test_rmse must be nonnegative")


def tensor_cells(breakpoints: Sequence[np.ndarray]):
    """Lower/upper corners of the tensor partition defined by per-axis breakpoints."""
    axes = [np.unique(np.asarray(b, dtype=float)) for b in breakpoints]
    for a in axes:
        if a.size < 2:
            raise ValueError("each axis needs at least two breakpoints")
    lows = [a[:-1] for a in axes]
    highs = [a[1:] for a in axes]
    lower = np.stack(np.meshgrid(*lows, indexing="ij"), axis=-1).reshape(-1, len(axes))
    upper = np.stack(np.meshgrid(*highs, indexing="ij"), axis=-1).reshape(-1, len(axes))
    return lower, upper


def _reference_rule(n: int, d: int):
    nodes, weights = np.polynomial.legendre.leggauss(n)
    # map [-1, 1] -> [0, 1]
    nodes = 0.5 * (nodes + 1.0)
    weights = 0.5 * weights
    grid = np.stack(np.meshgrid(*([nodes] * d), indexing="ij"), axis=-1).reshape(-1, d)
    w = weights
    for _ in range(d - 1):
        w = np.multiply.outer(w, weights)
    return grid, w.reshape(-1)


def integrate_cells(f: Callable, lower: np.ndarray, upper: np.ndarray, n: int) -> float:
    """Tensor Gauss-Legendre integral of ``f`` summed over axis-aligned cells.

    ``f`` takes an ``(N, d)`` array and returns ``N`` values.  Cells are
    processed in a fixed order so the sum is deterministic.
    """
    lower = np.atleast_2d(np.asarray(lower, dtype=float))
    upper = np.atleast_2d(np.asarray(upper, dtype=float))
    d = lower.shape[1]
    ref, w = _reference_rule(n, d)
    widths = upper - lower
    vols = np.prod(widths, axis=1)
    per_cell = ref.shape[0]
    cells_per_chunk = max(1, _CHUNK // per_cell)
    total = 0.0
    for start in range(0, lower.shape[0], cells_per_chunk):
        lo = lower[start:start + cells_per_chunk]
        wd = widths[start:start + cells_per_chunk]
        pts = lo[:, None, :] + wd[:, None, :] * ref[None, :, :]
        vals = np.asarray(f(pts.reshape(-1, d)), dtype=float).reshape(lo.shape[0], per_cell)
        total += float(np.sum((vals @ w) * vols[start:start + cells_per_chunk]))
    return total


def _refine(integrate: Callable[[int], float], cfg: QuadratureConfig) -> QuadratureResult:
    n = cfg.points_per_axis
    prev = integrate(n)
    for _ in range(cfg.refinement_limit):
        n *= 2
        cur = integrate(n)
        diff = abs(cur - prev)
        if diff <= cfg.rel_tol * abs(cur) or (cur == 0.0 and prev == 0.0):
            return QuadratureResult(cur, True, n, diff)
        prev = cur
    return QuadratureResult(prev, False, n, diff)


def l2_squared(f, lower, upper, cfg: Optional[QuadratureConfig] = None) -> QuadratureResult:
    """``integral of f**2`` over the given cells with doubling refinement."""
    cfg = cfg or QuadratureConfig()
    lower = np.atleast_2d(np.asarray(lower, dtype=float))
    upper = np.atleast_2d(np.asarray(upper, dtype=float))

    def sq(x):
        v = np.asarray(f(x), dtype=float)
        return v * v

    return _refine(lambda n: integrate_cells(sq, lower, upper, n), cfg)


def _qmc_l2_squared(f, box: Box, cfg: QuadratureConfig, seed: int = 0) -> QuadratureResult:
    # 8 independently scrambled Sobol replicas give a standard-error estimate
    d = box.dim
    lo = np.asarray(box.lower)
    span = np.asarray(box.upper) - lo
    reps = 8
    m = int(math.log2(_QMC_POINTS // reps))
    estimates = []
    for k in range(reps):
        u = qmc.Sobol(d, scramble=True, seed=seed + k).random_base2(m)
        vals = np.concatenate([
            np.square(np.asarray(f(lo + span * u[i:i + _CHUNK]), dtype=float))
            for i in range(0, u.shape[0], _CHUNK)
        ])
        estimates.append(vals.mean() * box.volume)
    est = np.asarray(estimates)
    mean = float(est.mean())
    stderr = float(est.std(ddof=1) / math.sqrt(reps))
    converged = stderr <= cfg.rel_tol * abs(mean) or mean == 0.0
    return QuadratureResult(mean, converged, 0, stderr)


def l2_norm(
    f: Callable,
    box: Box,
    cfg: Optional[QuadratureConfig] = None,
    *,
    breakpoints: Optional[Sequence[Sequence[float]]] = None,
    full_output: bool = False,
):
    """L2 norm of ``f`` over ``box``.

    Parameters
    ----------
    f : callable
        Vectorized integrand, ``(N, d) -> (N,)``.
    box : Box
        Integration domain.
    cfg : QuadratureConfig, optional
        Starting order, number of doublings and relative tolerance.
    breakpoints : sequence of arrays, optional
        Extra per-axis split points; the box is cut into a tensor partition
        and the rule is applied per cell.  Use this to resolve narrow
        features such as bumps.
    full_output : bool
        Return a :class:`QuadratureResult` (with the norm, not its square)
        instead of a float.

    Notes
    -----
    For ``d >= 4`` the tensor rule is replaced by scrambled Sobol sampling
    with ``2**20`` points; ``error_estimate`` is then a standard error.
    When refinement stops before ``rel_tol`` is met a
    :class:`NoConvergenceWarning` is emitted and the last estimate returned.
    """
    cfg = cfg or QuadratureConfig()
    if box.dim >= 4:
        res = _qmc_l2_squared(f, box, cfg)
    else:
        axes = []
        for i in range(box.dim):
            pts = [box.lower[i], box.upper[i]]
            if breakpoints is not None:
                b = np.asarray(breakpoints[i], dtype=float)
                pts.extend(b[(b > box.lower[i]) & (b < box.upper[i])])
            axes.append(np.asarray(pts))
        lower, upper = tensor_cells(axes)
        res = l2_squared(f, lower, upper, cfg)
    if not res.converged:
        warnings.warn(
            f"L2 quadrature did not reach rel_tol={cfg.rel_tol:g}", NoConvergenceWarning, stacklevel=2
        )
    value = math.sqrt(max(res.value, 0.0))
    if full_output:
        err = res.error_estimate / (2 * value) if value > 0 else math.sqrt(res.error_estimate)
        return QuadratureResult(value, res.converged, res.points_per_axis, err)
    return value


def rmse(predicted, actual) -> float:
    """Root mean square error with divisor equal to the number of points."""
    p = np.asarray(predicted, dtype=float).ravel()
    a = np.asarray(actual, dtype=float).ravel()
    if p.size != a.size:
        raise LengthMismatch(f"{p.size} predictions vs {a.size} targets")
    if p.size == 0:
        raise EmptyInput("rmse of an empty sequence")
    return float(np.sqrt(np.mean(np.square(p - a))))


def ratio_metrics(report_a: ErrorReport, report_b: ErrorReport) -> dict:
    """Ratios of run ``b`` against baseline run ``a``: ``rtt``, ``rtrr``, ``rter``."""
    base = {
        "train_time": report_a.train_time,
        "train_rmse": report_a.train_rmse,
        "test_rmse": report_a.test_rmse,
    }
    for name, value in base.items():
        if value is None or not value > 0:
            raise InvalidBaseline(f"baseline {name} must be strictly positive, got {value!r}")
    if report_b.test_rmse is None:
        raise ValueError("report_b has no test_rmse")
    return {
        "rtt": report_b.train_time / report_a.train_time,
        "rtrr": report_b.train_rmse / report_a.train_rmse,
        "rter": report_b.test_rmse / report_a.test_rmse,
    }
