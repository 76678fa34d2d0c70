"""Split sampled data into a smooth subset and isolated jump candidates.

Each row gets a leave-self-out prediction from its nearest neighbours; rows
whose residual sits far outside the bulk of residuals (measured in scaled
median absolute deviations) are jump candidates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.spatial import cKDTree
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted, check_X_y

from .errors import DuplicateInputs, NotAJump, TooFewPoints

__all__ = [
    "Dataset",
    "JumpPoint",
    "DetectionConfig",
    "JumpDetector",
    "detect_jumps",
    "estimate_jump_height",
    "mad",
]

MAD_SCALE = 1.4826


@dataclass(frozen=True, eq=False)
class Dataset:
    """Sampled points; ``inputs`` is (n, d), ``targets`` is (n,)."""

    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.inputs, dtype=float)
        y = np.asarray(self.targets, dtype=float).ravel()
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2:
            raise ValueError("inputs must be an (n, d) matrix")
        if x.shape[0] < 1:
            raise ValueError("dataset needs at least one row")
        if x.shape[0] != y.shape[0]:
            raise ValueError(f"{x.shape[0]} input rows vs {y.shape[0]} targets")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("dataset entries must be finite")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "targets", y)

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    def __len__(self):
        return self.inputs.shape[0]

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(self.inputs[rows], self.targets[rows])


@dataclass(frozen=True)
class JumpPoint:
    location: tuple
    height: float
    source_index: int

    def __post_init__(self):
        if self.height == 0 or not np.isfinite(self.height):
            raise ValueError("a jump needs a finite nonzero height")
        object.__setattr__(self, "location", tuple(float(v) for v in np.atleast_1d(self.location)))


@dataclass(frozen=True)
class DetectionConfig:
    neighbor_count: int = 8
    threshold_multiplier: float = 6.0
    min_points: int = 20

    def __post_init__(self):
        if self.neighbor_count < 3:
            raise ValueError("neighbor_count must be >= 3")
        if not self.threshold_multiplier > 0:
            raise ValueError("threshold_multiplier must be positive")
        if self.min_points < 1:
            raise ValueError("min_points must be positive")


def mad(values) -> float:
    """Median absolute deviation scaled to match a normal standard deviation."""
    v = np.asarray(values, dtype=float)
    return MAD_SCALE * float(np.median(np.abs(v - np.median(v))))


def _bisquare(u):
    return np.where(np.abs(u) < 1.0, np.square(1.0 - np.square(u)), 0.0)


def _local_linear(x0, xs, ys, robust_iters=2):
    """Intercept at ``x0`` of a bisquare-reweighted linear fit through (xs, ys)."""
    design = np.column_stack([np.ones(xs.shape[0]), xs - x0])
    w = np.ones(xs.shape[0])
    coef = None
    for it in range(robust_iters + 1):
        sw = np.sqrt(w)
        coef, *_ = np.linalg.lstsq(design * sw[:, None], ys * sw, rcond=None)
        if it == robust_iters:
            break
        res = ys - design @ coef
        scale = 6.0 * np.median(np.abs(res))
        if scale <= 1e-14 * (np.max(np.abs(ys)) + 1.0):
            break
        w_new = _bisquare(res / scale)
        # keep the fit determined: fall back to the previous weights if too few survive
        if np.count_nonzero(w_new) < design.shape[1] + 1:
            break
        w = w_new
    return float(coef[0])


def _check_duplicates(x, y):
    order = np.lexsort(x.T[::-1])
    xs = x[order]
    same = np.all(xs[1:] == xs[:-1], axis=1)
    if np.any(same):
        i = order[np.nonzero(same)[0][0]]
        j = order[np.nonzero(same)[0][0] + 1]
        lo, hi = sorted((int(i), int(j)))
        if y[lo] != y[hi]:
            raise DuplicateInputs(f"rows {lo} and {hi} share an input but have different targets")
        raise DuplicateInputs(f"rows {lo} and {hi} are duplicate inputs")


def neighbor_residuals(x: np.ndarray, y: np.ndarray, k: int) -> np.ndarray:
    """Leave-self-out residuals ``y_i - prediction_i`` from ``k`` nearest neighbours.

    The prediction is a robust (bisquare-reweighted) local linear fit through
    the neighbours, evaluated at ``x_i``.  Distance ties are broken by
    lowest row index.
    """
    n = x.shape[0]
    k = min(k, n - 1)
    tree = cKDTree(x)
    # query extra neighbours so ties at the k-th distance can be resolved by index
    q = min(n, k + 1 + 8)
    dist, idx = tree.query(x, k=q)
    dist = np.atleast_2d(dist)
    idx = np.atleast_2d(idx)
    pred = np.empty(n)
    for i in range(n):
        keep = idx[i] != i
        di, ii = dist[i][keep], idx[i][keep]
        order = np.lexsort((ii, np.round(di, 12)))
        nb = ii[order[:k]]
        if x.shape[1] + 2 > nb.size:
            pred[i] = float(np.median(y[nb]))
        else:
            pred[i] = _local_linear(x[i], x[nb], y[nb])
    return y - pred


class JumpDetector(BaseEstimator):
    """Flag isolated spikes in sampled data.

    Parameters
    ----------
    neighbor_count : int, default=8
        Neighbours used for each leave-self-out prediction.
    threshold_multiplier : float, default=6.0
        A row is flagged when its residual is more than this many scaled
        MADs away from the median residual.
    min_points : int, default=20
        Smallest dataset accepted.

    Attributes
    ----------
    residuals_ : ndarray of shape (n_samples,)
    threshold_ : float
        Flagging threshold in target units.
    flagged_ : ndarray of bool
    jumps_ : list of JumpPoint
        Candidates with provisional heights (the residuals).
    """

    def __init__(self, neighbor_count=8, threshold_multiplier=6.0, min_points=20):
        self.neighbor_count = neighbor_count
        self.threshold_multiplier = threshold_multiplier
        self.min_points = min_points

    def fit(self, X, y):
        cfg = DetectionConfig(self.neighbor_count, self.threshold_multiplier, self.min_points)
        X, y = check_X_y(X, y, y_numeric=True)
        n = X.shape[0]
        if n < cfg.min_points or n < 4:
            raise TooFewPoints(f"{n} rows, need at least {max(cfg.min_points, 4)}")
        _check_duplicates(X, y)

        r = neighbor_residuals(X, y, cfg.neighbor_count)
        centre = float(np.median(r))
        spread = mad(r)
        # residuals of exactly representable data are pure rounding noise
        floor = 1e-8 * float(np.max(np.abs(y)))
        self.threshold_ = max(cfg.threshold_multiplier * spread, floor)
        self.residuals_ = r
        self.flagged_ = np.abs(r - centre) > self.threshold_
        self.jumps_ = [
            JumpPoint(tuple(X[i]), float(r[i]), int(i)) for i in np.nonzero(self.flagged_)[0]
        ]
        self.n_features_in_ = X.shape[1]
        return self

    def split(self, data: "Dataset") -> Tuple["Dataset", List[JumpPoint]]:
        check_is_fitted(self, "flagged_")
        return data.subset(np.nonzero(~self.flagged_)[0]), list(self.jumps_)


def detect_jumps(data: Dataset, cfg: Optional[DetectionConfig] = None):
    """Return ``(continuous_subset, candidates, threshold)``.

    ``continuous_subset`` keeps the unflagged rows in their original order.
    """
    cfg = cfg or DetectionConfig()
    det = JumpDetector(cfg.neighbor_count, cfg.threshold_multiplier, cfg.min_points)
    det.fit(data.inputs, data.targets)
    continuous, jumps = det.split(data)
    return continuous, jumps, det.threshold_


def estimate_jump_height(candidate: JumpPoint, target: float, smooth_model, threshold: float) -> JumpPoint:
    """Refine a candidate's height against a smooth model fit without it.

    The height is ``target - smooth_model.predict(location)``; anything no
    larger than ``threshold`` in magnitude raises :class:`NotAJump`.
    """
    x = np.asarray(candidate.location, dtype=float)[None, :]
    height = float(target) - float(np.asarray(smooth_model.predict(x)).ravel()[0])
    if not abs(height) > threshold:
        raise NotAJump(
            f"row {candidate.source_index}: refined height {height:.3e} within threshold {threshold:.3e}"
        )
    return JumpPoint(candidate.location, height, candidate.source_index)
