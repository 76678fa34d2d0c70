"""Decay RBF kernel profiles.

A kernel is a radial profile ``psi(r)`` with ``psi(0) != 0``.  Everything
downstream uses the normalized profile ``phi(r) = psi(r) / psi(0)``, so
``phi(0) == 1`` and a bump ``h * phi(A * |x - t|)`` takes the value ``h``
at its center.  Multidimensional use always goes through the radius
``A * ||x - t||``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .errors import NonFinite, ZeroAtOrigin

__all__ = [
    "DecayKernel",
    "TailBound",
    "RadiusGrid",
    "make_kernel",
    "estimate_tail_bounds",
    "load_profile_table",
    "KERNEL_KINDS",
]

KERNEL_KINDS = ("gaussian", "mexican_hat", "morlet", "custom")

_MEXICAN_HAT_C = 2.0 / math.sqrt(3.0) * math.pi ** -0.25
_MORLET_C = 2.0 / math.sqrt(3.0)

# envelope table: sup_{s >= r} |phi(s)| sampled on [0, _ENV_RMAX]
_ENV_STEP = 1e-3
_ENV_RMAX = 40.0


def _gaussian(r):
    return np.exp(-np.square(r))


def _mexican_hat(r):
    r2 = np.square(r)
    return _MEXICAN_HAT_C * (1.0 - r2) * np.exp(-0.5 * r2)


def _morlet(r):
    return _MORLET_C * np.exp(-0.5 * np.square(r)) * np.cos(5.0 * r)


_BUILTINS = {
    "gaussian": _gaussian,
    "mexican_hat": _mexican_hat,
    "morlet": _morlet,
}


@dataclass(frozen=True)
class RadiusGrid:
    """Logarithmically spaced radii used for tail estimation."""

    r_min: float = 1e-3
    r_max: float = 20.0
    count: int = 4096

    def __post_init__(self):
        if not (0 < self.r_min < self.r_max):
            raise ValueError("need 0 < r_min < r_max")
        if self.r_max < 10:
            raise ValueError("r_max must be at least 10")
        if self.count < 16:
            raise ValueError("count must be at least 16")

    def radii(self) -> np.ndarray:
        return np.geomspace(self.r_min, self.r_max, self.count)


@dataclass(frozen=True, eq=False)
class DecayKernel:
    """Normalized decay RBF profile.

    Parameters
    ----------
    kind : str
        One of ``gaussian``, ``mexican_hat``, ``morlet`` or ``custom``.
    psi_at_zero : float
        The raw profile value ``psi(0)``.
    psi : callable
        Vectorized raw profile ``psi(r)`` for ``r >= 0``.
    table : tuple of ndarray, optional
        ``(radii, values)`` when the profile came from a table file; kept so
        the kernel can be serialized.
    """

    kind: str
    psi_at_zero: float
    psi: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    table: Optional[tuple] = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if not math.isfinite(self.psi_at_zero):
            raise NonFinite("psi(0) is not finite")
        if abs(self.psi_at_zero) < 1e-12:
            raise ZeroAtOrigin(f"|psi(0)| = {abs(self.psi_at_zero):.3e} < 1e-12")

    def profile(self, r):
        """Normalized profile ``phi(r) = psi(r) / psi(0)``."""
        r = np.abs(np.asarray(r, dtype=float))
        out = np.asarray(self.psi(r), dtype=float) / self.psi_at_zero
        # exact normalization at the origin regardless of rounding in psi
        return np.where(r == 0.0, 1.0, out)

    __call__ = profile

    @cached_property
    def _envelope_table(self) -> np.ndarray:
        r = np.arange(0.0, _ENV_RMAX + 2.5 * _ENV_STEP, _ENV_STEP)
        a = np.abs(self.profile(r))
        # bound |phi| inside each cell [r_i, r_i+1]: endpoint max plus first and
        # second difference margins (covers the excursion of a smooth profile)
        d1 = np.abs(np.diff(a))
        d2 = np.abs(np.diff(a, 2))
        d2 = np.maximum(np.concatenate([[d2[0]], d2]), np.concatenate([d2, [d2[-1]]]))
        cell = np.maximum(a[:-1], a[1:]) + d1 + d2
        cell = cell[:-1]
        return np.maximum.accumulate(cell[::-1])[::-1]

    def envelope(self, r):
        """Non-increasing majorant ``sup_{s >= r} |phi(s)|`` (grid-sampled).

        Values are taken at the grid point at or below ``r`` so the result
        never undershoots the sampled supremum.
        """
        r = np.abs(np.asarray(r, dtype=float))
        tab = self._envelope_table
        idx = np.floor(r / _ENV_STEP)
        idx = np.clip(np.nan_to_num(idx, nan=0.0, posinf=len(tab) - 1), 0, len(tab) - 1)
        return tab[idx.astype(np.intp)]

    def negligible_radius(self, level: float = 1e-16) -> float:
        """Smallest sampled radius beyond which ``|phi| < level``.

        Returns ``inf`` when the profile never drops below ``level`` on the
        sampled range.
        """
        tab = self._envelope_table
        below = np.nonzero(tab < level)[0]
        if below.size == 0:
            return math.inf
        return float(below[0]) * _ENV_STEP

    @property
    def tail_floor(self) -> float:
        """Envelope value at the end of the sampled range (0 for true decay RBFs)."""
        return float(self._envelope_table[-1])


@dataclass(frozen=True)
class TailBound:
    """Numerical stand-in for the tail constants ``k1 e^{-r^2} <= |phi| <= k2 e^{-r^2}``."""

    k_lower: float
    k_upper: float
    tail_onset: float
    sup_bound: float
    conforming: bool


def _as_vectorized(fn):
    probe = np.array([0.0, 0.5, 1.0])
    try:
        out = np.asarray(fn(probe), dtype=float)
        if out.shape == probe.shape:
            return fn
    except Exception:
        pass
    return np.vectorize(lambda r: float(fn(float(r))), otypes=[float])


def make_kernel(kind: str = "gaussian", custom_profile=None) -> DecayKernel:
    """Construct a normalized decay kernel.

    ``custom_profile`` is required for ``kind="custom"`` and may be a callable
    ``psi(r)`` or a ``(radii, values)`` pair that is linearly interpolated
    (zero beyond the last radius).

    Raises
    ------
    ZeroAtOrigin
        If ``|psi(0)| < 1e-12``.
    NonFinite
        If ``psi`` is not finite at any probe radius.
    """
    table = None
    if kind == "custom":
        if custom_profile is None:
            raise ValueError("kind='custom' needs custom_profile")
        if callable(custom_profile):
            psi = _as_vectorized(custom_profile)
        else:
            radii, values = (np.asarray(a, dtype=float) for a in custom_profile)
            psi, table = _table_profile(radii, values)
    elif kind in _BUILTINS:
        if custom_profile is not None:
            raise ValueError("custom_profile only applies to kind='custom'")
        psi = _BUILTINS[kind]
    else:
        raise ValueError(f"unknown kernel kind {kind!r}; expected one of {KERNEL_KINDS}")

    probe = np.concatenate([[0.0], RadiusGrid().radii(), [_ENV_RMAX]])
    with np.errstate(all="ignore"):
        values = np.asarray(psi(probe), dtype=float)
    if not np.all(np.isfinite(values)):
        bad = probe[~np.isfinite(values)][0]
        raise NonFinite(f"psi is not finite at r={bad!r}")
    return DecayKernel(kind=kind, psi_at_zero=float(values[0]), psi=psi, table=table)


def _table_profile(radii, values):
    if radii.ndim != 1 or radii.shape != values.shape or radii.size < 2:
        raise ValueError("profile table needs matching 1-D radius and value columns (>= 2 rows)")
    if radii[0] != 0.0:
        raise ValueError("profile table must start at radius 0")
    if np.any(np.diff(radii) <= 0):
        raise ValueError("profile table radii must be strictly increasing")
    if not (np.all(np.isfinite(radii)) and np.all(np.isfinite(values))):
        raise NonFinite("profile table contains non-finite entries")
    radii = radii.copy()
    values = values.copy()
    radii.setflags(write=False)
    values.setflags(write=False)

    def psi(r):
        return np.interp(r, radii, values, right=0.0)

    return psi, (radii, values)


def load_profile_table(path) -> DecayKernel:
    """Read a ``radius,value`` table file into a custom kernel.

    Lines starting with ``#`` and blank lines are ignored; an optional
    non-numeric header line is skipped.
    """
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected 'radius,value'")
        try:
            rows.append((float(parts[0]), float(parts[1])))
        except ValueError:
            if rows:
                raise ValueError(f"{path}:{lineno}: non-numeric entry") from None
            continue  # header
    if not rows:
        raise ValueError(f"{path}: empty profile table")
    arr = np.array(rows)
    return make_kernel("custom", (arr[:, 0], arr[:, 1]))


def estimate_tail_bounds(kernel: DecayKernel, grid: Optional[RadiusGrid] = None) -> TailBound:
    """Estimate the tail sandwich constants of ``kernel`` on a radius grid.

    The ratio ``|phi(r)| e^{r^2}`` is sampled on ``grid``.  The tail onset is
    the smallest sampled radius after which the ratio changes by less than
    1% per step; ``k_lower``/``k_upper`` are the extreme ratios from there
    on.  A kernel whose ratio at ``r_max`` exceeds ten times the ratio at
    ``r_max / 2`` is reported as non-conforming (its tail is heavier than
    Gaussian).
    """
    grid = grid or RadiusGrid()
    r = grid.radii()
    phi = np.abs(kernel.profile(r))
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        ratio = np.where(phi > 0, np.exp(np.log(phi) + np.square(r)), 0.0)

    sup_bound = float(max(1.0, phi.max()))
    finite = np.isfinite(ratio)

    with np.errstate(divide="ignore", invalid="ignore"):
        denom = np.maximum(np.abs(ratio[:-1]), np.finfo(float).tiny)
        step_change = np.abs(np.diff(ratio)) / denom
    step_change = np.where(np.isfinite(step_change), step_change, np.inf)
    step_change[(ratio[:-1] == 0) & (ratio[1:] == 0)] = 0.0
    varying = np.nonzero(step_change >= 0.01)[0]
    onset_idx = 0 if varying.size == 0 else int(varying[-1]) + 1
    onset_idx = min(onset_idx, r.size - 1)

    tail = ratio[onset_idx:]
    tail = tail[np.isfinite(tail)]
    if tail.size == 0:
        k_lower = k_upper = math.inf
    else:
        k_lower, k_upper = float(tail.min()), float(tail.max())

    half = np.searchsorted(r, grid.r_max / 2.0)
    half = min(half, r.size - 1)
    conforming = bool(
        finite.all() and not (ratio[-1] > 10.0 * ratio[half])
    )
    return TailBound(
        k_lower=k_lower,
        k_upper=k_upper,
        tail_onset=float(r[onset_idx]),
        sup_bound=sup_bound,
        conforming=conforming,
    )
