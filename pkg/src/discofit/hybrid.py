"""Smooth learner plus constructed bump network, and its model file."""

from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile
import time
from pathlib import Path
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, clone
from sklearn.utils.validation import check_is_fitted

from .detect import Dataset, DetectionConfig, JumpPoint, detect_jumps, estimate_jump_height
from .errors import CorruptFile, NotAJump, UnsupportedVersion
from .kernels import DecayKernel, estimate_tail_bounds, make_kernel
from .numerics import Box, ErrorReport, QuadratureConfig, rmse
from .singular import (
    SingularNetwork,
    build_singular_network,
    certify,
    interference_scale,
    seed_scale,
)
from .smooth import GridRBFRegressor, LMRegressor, TrainConfig, check_input_dim

__all__ = [
    "HybridRegressor",
    "fit_hybrid",
    "eval_hybrid",
    "make_learner",
    "save_model",
    "load_model",
    "dumps_model",
    "loads_model",
    "FORMAT",
]

FORMAT_NAME = "discofit-model"
FORMAT_VERSION = 1
FORMAT = f"{FORMAT_NAME}/{FORMAT_VERSION}"


def make_learner(spec, train_cfg: Optional[TrainConfig] = None):
    """Build a smooth learner from ``"mlp:N"`` / ``"gridrbf:S"`` or pass an estimator through."""
    if not isinstance(spec, str):
        return spec
    name, _, arg = spec.partition(":")
    if name == "mlp":
        return LMRegressor.from_config(int(arg or 4), train_cfg or TrainConfig())
    if name == "gridrbf":
        return GridRBFRegressor(partitions=int(arg or 16))
    raise ValueError(f"unknown learner {spec!r}; expected mlp:N or gridrbf:S")


class HybridRegressor(RegressorMixin, BaseEstimator):
    """Jump-aware regressor: smooth learner plus one decay-RBF unit per jump.

    Fitting runs jump detection, trains ``smooth`` on the rows that were
    not flagged, refines each candidate's height against that fit (dropping
    candidates that turn out to be small and refitting once), then builds
    and certifies the bump network with L2 budget ``epsilon``.

    The starting scale also keeps the bumps' combined value at every other
    training input below ``epsilon / (10 m)``.

    Parameters
    ----------
    smooth : estimator, default=LMRegressor(hidden_count=4)
    epsilon : float, default=0.01
        L2 budget for the constructed part.
    kernel : str or DecayKernel, default="gaussian"
    neighbor_count, threshold_multiplier, min_points
        Jump detection settings, see :class:`~discofit.detect.JumpDetector`.
    quadrature : QuadratureConfig, optional
        Per-cell quadrature used when certifying.

    Attributes
    ----------
    smooth_ : fitted estimator
    singular_ : SingularNetwork or None
        ``None`` when no jumps were found.
    jumps_ : list of JumpPoint
    continuous_mask_ : ndarray of bool
        Rows the smooth learner was trained on.
    detection_threshold_ : float
    domain_ : Box
    report_ : ErrorReport
    """

    def __init__(
        self,
        smooth=None,
        epsilon=0.01,
        kernel="gaussian",
        neighbor_count=8,
        threshold_multiplier=6.0,
        min_points=20,
        quadrature=None,
    ):
        self.smooth = smooth
        self.epsilon = epsilon
        self.kernel = kernel
        self.neighbor_count = neighbor_count
        self.threshold_multiplier = threshold_multiplier
        self.min_points = min_points
        self.quadrature = quadrature

    def _kernel(self) -> DecayKernel:
        return self.kernel if isinstance(self.kernel, DecayKernel) else make_kernel(self.kernel)

    def fit(self, X, y):
        t0 = time.perf_counter()
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        data = Dataset(X, y)
        n = len(data)
        cfg = DetectionConfig(self.neighbor_count, self.threshold_multiplier, self.min_points)
        _, candidates, threshold = detect_jumps(data, cfg)
        base = self.smooth if self.smooth is not None else LMRegressor()

        mask = np.ones(n, dtype=bool)
        mask[[c.source_index for c in candidates]] = False
        smooth = clone(base).fit(data.inputs[mask], data.targets[mask])
        jumps, dropped = self._refine(candidates, data, smooth, threshold)
        if dropped:
            mask[[c.source_index for c in dropped]] = True
            smooth = clone(base).fit(data.inputs[mask], data.targets[mask])
            jumps, dropped_again = self._refine(jumps, data, smooth, threshold)
            mask[[c.source_index for c in dropped_again]] = True

        self.smooth_ = smooth
        self.jumps_ = jumps
        self.continuous_mask_ = mask
        self.detection_threshold_ = float(threshold)
        self.n_features_in_ = data.dim
        self.domain_ = _domain(data.inputs)
        self.singular_ = self._construct(jumps, data) if jumps else None

        smooth_time = getattr(smooth, "train_time_", 0.0)
        self.report_ = ErrorReport(
            train_time=time.perf_counter() - t0,
            train_rmse=rmse(self.predict(data.inputs), data.targets),
            test_rmse=None,
            neuron_count=int(getattr(smooth, "neuron_count", 0)) + len(jumps),
            epochs_used=int(getattr(smooth, "n_epochs_", 0)),
        )
        self.smooth_train_time_ = float(smooth_time)
        self.provenance_ = {
            "learner": type(smooth).__name__,
            "seed": getattr(smooth, "random_state", None),
            "kernel": self._kernel().kind,
            "epsilon": float(self.epsilon),
            "rows": int(n),
            "jumps_found": len(jumps),
            "candidates": len(candidates),
        }
        return self

    @staticmethod
    def _refine(candidates, data, smooth, threshold):
        kept, dropped = [], []
        for c in candidates:
            try:
                kept.append(estimate_jump_height(c, data.targets[c.source_index], smooth, threshold))
            except NotAJump:
                dropped.append(c)
        return kept, dropped

    def _construct(self, jumps, data: Dataset) -> SingularNetwork:
        kernel = self._kernel()
        tail = estimate_tail_bounds(kernel)
        eps = float(self.epsilon)
        m = len(jumps)
        if tail.conforming:
            start = seed_scale(jumps, tail, eps, kernel)
        else:
            start = 1.0
        # keep the bumps negligible at every other sampled input
        centers = np.array([j.location for j in jumps])
        others = np.delete(data.inputs, [j.source_index for j in jumps], axis=0)
        pool = np.vstack([others, centers])
        diff = centers[:, None, :] - pool[None, :, :]
        dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        dist[dist == 0] = np.inf
        separation = float(dist.min())
        if math.isfinite(separation):
            hsum = float(np.sum(np.abs([j.height for j in jumps])))
            start = max(start, interference_scale(kernel, separation, eps / (10.0 * m * hsum)))
        network = build_singular_network(jumps, kernel, start)
        return certify(network, eps, cfg=self.quadrature)

    def predict(self, X):
        check_is_fitted(self, "smooth_")
        X = check_input_dim(self, X)
        out = np.asarray(self.smooth_.predict(X), dtype=float)
        if self.singular_ is not None:
            out = out + self.singular_.predict(X)
        return out

    def leakage(self, X):
        """``sum_j |h_j| |phi(A ||x - x_j||)|`` at each row: the bumps' reach."""
        check_is_fitted(self, "smooth_")
        X = check_input_dim(self, X)
        if self.singular_ is None:
            return np.zeros(X.shape[0])
        net = self.singular_
        out = np.zeros(X.shape[0])
        for c, h in zip(net.centers, net.heights):
            out += abs(h) * np.abs(net.kernel.profile(net.scale * np.linalg.norm(X - c, axis=1)))
        return out

    @property
    def certified_residual(self) -> float:
        check_is_fitted(self, "smooth_")
        return 0.0 if self.singular_ is None else float(self.singular_.certified_residual)


def _domain(X) -> Box:
    lo, hi = X.min(axis=0), X.max(axis=0)
    flat = hi <= lo
    return Box(tuple(np.where(flat, lo - 0.5, lo)), tuple(np.where(flat, hi + 0.5, hi)))


def fit_hybrid(
    data: Dataset,
    epsilon: float,
    learner="mlp:4",
    detect_cfg: Optional[DetectionConfig] = None,
    train_cfg: Optional[TrainConfig] = None,
    quad_cfg: Optional[QuadratureConfig] = None,
):
    """Run the whole pipeline on ``data``; returns ``(model, report)``."""
    detect_cfg = detect_cfg or DetectionConfig()
    model = HybridRegressor(
        smooth=make_learner(learner, train_cfg),
        epsilon=epsilon,
        neighbor_count=detect_cfg.neighbor_count,
        threshold_multiplier=detect_cfg.threshold_multiplier,
        min_points=detect_cfg.min_points,
        quadrature=quad_cfg,
    )
    model.fit(data.inputs, data.targets)
    return model, model.report_


def eval_hybrid(model: HybridRegressor, x) -> np.ndarray:
    return model.predict(x)


# -- model file -----------------------------------------------------------------

def _floats(a):
    return [float(v) for v in np.asarray(a, dtype=float).ravel()]


def _kernel_doc(kernel: DecayKernel):
    doc = {"kind": kernel.kind}
    if kernel.kind == "custom":
        if kernel.table is None:
            raise ValueError("only table-based custom kernels can be saved")
        doc["table"] = {"radii": _floats(kernel.table[0]), "values": _floats(kernel.table[1])}
    return doc


def _kernel_from_doc(doc) -> DecayKernel:
    if doc["kind"] == "custom":
        return make_kernel("custom", (doc["table"]["radii"], doc["table"]["values"]))
    return make_kernel(doc["kind"])


def _box_doc(box: Optional[Box]):
    if box is None:
        return None
    return {"lower": list(box.lower), "upper": list(box.upper)}


def _box_from_doc(doc) -> Optional[Box]:
    return None if doc is None else Box(tuple(doc["lower"]), tuple(doc["upper"]))


def _quad_doc(q: Optional[QuadratureConfig]):
    if q is None:
        return None
    return {"points_per_axis": q.points_per_axis, "refinement_limit": q.refinement_limit, "rel_tol": q.rel_tol}


def _smooth_doc(est):
    common = {
        "train_rmse": float(est.train_rmse_),
        "train_time": float(est.train_time_),
        "epochs_used": int(est.n_epochs_),
        "input_dim": int(est.n_features_in_),
    }
    if isinstance(est, LMRegressor):
        params = {k: v for k, v in est.get_params().items()}
        return {
            "type": "mlp",
            "params": params,
            "hidden_count": int(est.hidden_count),
            "input_weights": [_floats(r) for r in est.input_weights_],
            "input_biases": _floats(est.input_biases_),
            "output_weights": _floats(est.output_weights_),
            "output_bias": float(est.output_bias_),
            "input_offset": _floats(est.input_offset_),
            "input_scale": _floats(est.input_scale_),
            "stop_reason": est.stop_reason_,
            **common,
        }
    if isinstance(est, GridRBFRegressor):
        return {
            "type": "grid_rbf",
            "partitions_per_axis": int(est.partitions),
            "scale_multiplier": float(est.scale_multiplier),
            "ridge": float(est.ridge),
            "kernel": _kernel_doc(est.kernel_),
            "box": _box_doc(est.box_),
            "fixed_box": est.box is not None,
            "centers": [_floats(r) for r in est.centers_],
            "scale": float(est.scale_),
            "weights": _floats(est.weights_),
            "condition": float(est.condition_),
            **common,
        }
    raise ValueError(f"cannot serialize smooth learner of type {type(est).__name__}")


def _smooth_from_doc(doc):
    if doc["type"] == "mlp":
        est = LMRegressor(**doc["params"])
        n, d = int(doc["hidden_count"]), int(doc["input_dim"])
        est.input_weights_ = np.array(doc["input_weights"], dtype=float).reshape(n, d)
        est.input_biases_ = np.array(doc["input_biases"], dtype=float)
        est.output_weights_ = np.array(doc["output_weights"], dtype=float)
        est.output_bias_ = float(doc["output_bias"])
        est.coef_flat_ = np.concatenate([
            est.input_weights_.ravel(), est.input_biases_, est.output_weights_, [est.output_bias_]
        ])
        est.input_offset_ = np.array(doc["input_offset"], dtype=float)
        est.input_scale_ = np.array(doc["input_scale"], dtype=float)
        est.stop_reason_ = doc["stop_reason"]
        est.sse_history_ = []
    elif doc["type"] == "grid_rbf":
        kernel = _kernel_from_doc(doc["kernel"])
        box = _box_from_doc(doc["box"])
        est = GridRBFRegressor(
            partitions=doc["partitions_per_axis"],
            scale_multiplier=doc["scale_multiplier"],
            ridge=doc["ridge"],
            kernel=kernel if kernel.kind == "custom" else kernel.kind,
            box=box if doc["fixed_box"] else None,
        )
        est.kernel_ = kernel
        est.box_ = box
        est.centers_ = np.array(doc["centers"], dtype=float).reshape(-1, int(doc["input_dim"]))
        est.scale_ = float(doc["scale"])
        est.weights_ = np.array(doc["weights"], dtype=float)
        est.condition_ = float(doc["condition"])
    else:
        raise CorruptFile(f"unknown smooth learner type {doc['type']!r}")
    est.train_rmse_ = float(doc["train_rmse"])
    est.train_time_ = float(doc["train_time"])
    est.n_epochs_ = int(doc["epochs_used"])
    est.n_features_in_ = int(doc["input_dim"])
    return est


def _singular_doc(net: Optional[SingularNetwork]):
    if net is None:
        return None
    return {
        "kernel": _kernel_doc(net.kernel),
        "scale": float(net.scale),
        "jumps": [
            {"location": list(j.location), "height": float(j.height), "source_index": int(j.source_index)}
            for j in net.jumps
        ],
        "certified_residual": net.certified_residual,
        "budget": net.budget,
        "doublings": int(net.doublings),
    }


def _singular_from_doc(doc) -> Optional[SingularNetwork]:
    if doc is None:
        return None
    jumps = tuple(JumpPoint(tuple(j["location"]), j["height"], j["source_index"]) for j in doc["jumps"])
    return SingularNetwork(
        kernel=_kernel_from_doc(doc["kernel"]),
        scale=doc["scale"],
        jumps=jumps,
        certified_residual=doc["certified_residual"],
        budget=doc["budget"],
        doublings=doc["doublings"],
    )


def _report_doc(r: ErrorReport):
    return {
        "train_time": r.train_time,
        "train_rmse": r.train_rmse,
        "test_rmse": r.test_rmse,
        "neuron_count": r.neuron_count,
        "epochs_used": r.epochs_used,
    }


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def dumps_model(model: HybridRegressor) -> str:
    """Serialize a fitted :class:`HybridRegressor` to the versioned JSON format."""
    check_is_fitted(model, "smooth_")
    kernel = model._kernel()
    payload = {
        "input_dim": int(model.n_features_in_),
        "epsilon": float(model.epsilon),
        "kernel": _kernel_doc(kernel),
        "detection": {
            "neighbor_count": int(model.neighbor_count),
            "threshold_multiplier": float(model.threshold_multiplier),
            "min_points": int(model.min_points),
            "threshold": float(model.detection_threshold_),
        },
        "quadrature": _quad_doc(model.quadrature),
        "domain": _box_doc(model.domain_),
        "continuous_mask": [bool(v) for v in model.continuous_mask_],
        "smooth": _smooth_doc(model.smooth_),
        "singular": _singular_doc(model.singular_),
        "report": _report_doc(model.report_),
        "smooth_train_time": float(model.smooth_train_time_),
        "provenance": getattr(model, "provenance_", {}),
    }
    body = _canonical(payload)
    doc = {
        "format": FORMAT,
        "checksum": "sha256:" + hashlib.sha256(body.encode()).hexdigest(),
        "payload": payload,
    }
    return json.dumps(doc, sort_keys=True, indent=1, allow_nan=False) + "\n"


def loads_model(text: str) -> HybridRegressor:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CorruptFile(f"not a model document: {exc}") from None
    if not isinstance(doc, dict) or "format" not in doc:
        raise CorruptFile("missing format field")
    name, _, version = str(doc["format"]).partition("/")
    if name != FORMAT_NAME:
        raise CorruptFile(f"unknown format {doc['format']!r}")
    if not version.isdigit() or int(version) != FORMAT_VERSION:
        raise UnsupportedVersion(f"model format version {version!r} is not supported (need {FORMAT_VERSION})")
    payload = doc.get("payload")
    expected = "sha256:" + hashlib.sha256(_canonical(payload).encode()).hexdigest()
    if doc.get("checksum") != expected:
        raise CorruptFile("checksum mismatch")

    try:
        kernel = _kernel_from_doc(payload["kernel"])
        smooth = _smooth_from_doc(payload["smooth"])
        det = payload["detection"]
        q = payload["quadrature"]
        model = HybridRegressor(
            smooth=clone(smooth),
            epsilon=payload["epsilon"],
            kernel=kernel if kernel.kind == "custom" else kernel.kind,
            neighbor_count=det["neighbor_count"],
            threshold_multiplier=det["threshold_multiplier"],
            min_points=det["min_points"],
            quadrature=None if q is None else QuadratureConfig(**q),
        )
        model.smooth_ = smooth
        model.singular_ = _singular_from_doc(payload["singular"])
        model.jumps_ = [] if model.singular_ is None else list(model.singular_.jumps)
        model.continuous_mask_ = np.array(payload["continuous_mask"], dtype=bool)
        model.detection_threshold_ = float(det["threshold"])
        model.n_features_in_ = int(payload["input_dim"])
        model.domain_ = _box_from_doc(payload["domain"])
        model.report_ = ErrorReport(**payload["report"])
        model.smooth_train_time_ = float(payload["smooth_train_time"])
        model.provenance_ = payload["provenance"]
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, (CorruptFile, UnsupportedVersion)):
            raise
        raise CorruptFile(f"malformed model payload: {exc}") from None
    return model


def atomic_write(path, text: str):
    """Write ``text`` to ``path`` via a temporary file and rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def save_model(model: HybridRegressor, path) -> None:
    atomic_write(path, dumps_model(model))


def load_model(path) -> HybridRegressor:
    return loads_model(Path(path).read_text())
