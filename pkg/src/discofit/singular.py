"""Constructed bump networks for isolated jumps.

A set of jumps ``(x_j, h_j)`` is represented by

    NW(x) = sum_j h_j * phi(A * ||x - x_j||)

with one unit per jump and a shared scale ``A``.  Because ``phi(0) == 1`` a
single unit reproduces its height exactly at its center, and since the
jump part of the target is zero almost everywhere, the L2 error of the
construction is just ``||NW||_2``.  :func:`certify` computes an upper bound
for that norm by quadrature plus an analytic exterior remainder, doubling
``A`` until the bound drops below the requested budget.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.special import gammaln
from scipy.stats import chi2

from .detect import JumpPoint
from .errors import BudgetUnreachable, CoincidentCenters, DimensionMismatch, NonConformingKernel
from .kernels import _ENV_STEP, DecayKernel, TailBound, estimate_tail_bounds
from .numerics import Box, QuadratureConfig, l2_squared, tensor_cells

__all__ = [
    "SingularNetwork",
    "Certificate",
    "seed_scale",
    "interference_scale",
    "build_singular_network",
    "certify",
    "certified_l2",
    "eval_singular",
    "gaussian_bump_norm",
    "DEFAULT_CERTIFY_QUADRATURE",
    "MAX_DOUBLINGS",
]

MAX_DOUBLINGS = 60
NEGLIGIBLE = 1e-16
DEFAULT_CERTIFY_QUADRATURE = QuadratureConfig(points_per_axis=16, refinement_limit=2, rel_tol=1e-9)

# per-cell split points around each center, in units of 1/A
_OFFSETS = (0.0, 1.0, 2.0, 3.0, 4.5)


def gaussian_bump_norm(height: float, scale: float, dim: int) -> float:
    """``|| height * exp(-scale**2 ||x||**2) ||_2`` over R^dim."""
    return abs(height) * (math.pi / 2.0) ** (dim / 4.0) * scale ** (-dim / 2.0)


def _centers_and_heights(jumps):
    centers = np.array([j.location for j in jumps], dtype=float)
    heights = np.array([j.height for j in jumps], dtype=float)
    return np.atleast_2d(centers), heights


def _min_separation(centers: np.ndarray) -> float:
    if centers.shape[0] < 2:
        return math.inf
    diff = centers[:, None, :] - centers[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    dist[np.diag_indices_from(dist)] = np.inf
    return float(dist.min())


@dataclass(frozen=True, eq=False)
class SingularNetwork:
    """One decay-RBF unit per jump with shared scale.

    ``certified_residual`` and ``budget`` are filled in by :func:`certify`.
    """

    kernel: DecayKernel
    scale: float
    jumps: tuple
    certified_residual: Optional[float] = None
    budget: Optional[float] = None
    doublings: int = 0

    def __post_init__(self):
        jumps = tuple(self.jumps)
        object.__setattr__(self, "jumps", jumps)
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ValueError("scale must be positive and finite")
        if not jumps:
            raise ValueError("a singular network needs at least one jump")
        dims = {len(j.location) for j in jumps}
        if len(dims) != 1:
            raise DimensionMismatch("jump locations have differing dimensions")
        if _min_separation(self.centers) == 0.0:
            raise CoincidentCenters("two jumps share a location")
        if self.certified_residual is not None and self.budget is not None:
            if not self.certified_residual < self.budget:
                raise ValueError("certified residual must be below the budget")

    @property
    def centers(self) -> np.ndarray:
        return _centers_and_heights(self.jumps)[0]

    @property
    def heights(self) -> np.ndarray:
        return _centers_and_heights(self.jumps)[1]

    @property
    def dim(self) -> int:
        return len(self.jumps[0].location)

    @property
    def n_units(self) -> int:
        return len(self.jumps)

    def predict(self, X) -> np.ndarray:
        return eval_singular(self, X)

    __call__ = predict

    def with_scale(self, scale: float) -> "SingularNetwork":
        return dataclasses.replace(self, scale=float(scale), certified_residual=None, budget=None)


def _kernel_sum(X, centers, heights, kernel, scale):
    out = np.zeros(X.shape[0])
    for c, h in zip(centers, heights):
        r = np.sqrt(np.sum(np.square(X - c), axis=1))
        out += h * kernel.profile(scale * r)
    return out


def eval_singular(network: SingularNetwork, X) -> np.ndarray:
    """``sum_j h_j phi(A ||x - x_j||)`` at each row of ``X``."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None] if network.dim == 1 else X[None, :]
    if X.ndim != 2 or X.shape[1] != network.dim:
        raise DimensionMismatch(f"expected {network.dim} input coordinates, got shape {X.shape}")
    return _kernel_sum(X, network.centers, network.heights, network.kernel, network.scale)


def _global_gaussian_constant(kernel: Optional[DecayKernel], tail: TailBound) -> float:
    """``k`` with ``|phi(r)| <= k e^{-r^2}`` for all ``r``.

    Past the tail onset this is ``k_upper``; below it each envelope cell
    ``[r_i, r_i + step]`` contributes ``envelope(r_i) e^{(r_i + step)^2}``.
    Without the kernel the cruder ``sup_bound e^{onset^2}`` is used.
    """
    if kernel is None:
        return max(tail.k_upper, tail.sup_bound * math.exp(tail.tail_onset ** 2))
    tab = kernel._envelope_table
    n = min(tab.size, int(math.floor(tail.tail_onset / _ENV_STEP)) + 1)
    r_right = (np.arange(n) + 1) * _ENV_STEP
    with np.errstate(over="ignore"):
        head = float(np.max(tab[:n] * np.exp(np.square(r_right))))
    return max(tail.k_upper, head)


def seed_scale(
    jumps: Sequence[JumpPoint], tail: TailBound, epsilon: float, kernel: Optional[DecayKernel] = None
) -> float:
    """Starting scale for :func:`certify` from the kernel's tail constants.

    Passing ``kernel`` tightens the Gaussian majorant below the tail onset.

    Returns the largest of

    * ``2 |h_j| k_upper sqrt(pi) m / epsilon`` over jumps,
    * the scale at which a Gaussian majorant ``k exp(-r^2)`` of the profile
      gives each unit an L2 norm of at most ``epsilon / m`` in the jumps'
      dimension ``d``: ``((pi/2)^(d/4) |h_j| k m / epsilon)^(2/d)``,
    * for ``m >= 2``, the scale at which that majorant drops to
      ``epsilon / (10 m max|h|)`` at the closest pair distance.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if not tail.conforming:
        raise NonConformingKernel("kernel tail is heavier than Gaussian; start certify from A=1")
    centers, heights = _centers_and_heights(jumps)
    if heights.size == 0:
        raise ValueError("no jumps")
    m = heights.size
    d = centers.shape[1]
    habs = np.abs(heights)
    k = _global_gaussian_constant(kernel, tail)

    linear = float(np.max(2.0 * habs * tail.k_upper * math.sqrt(math.pi) * m / epsilon))
    l2 = float(np.max(((math.pi / 2.0) ** (d / 4.0) * habs * k * m / epsilon) ** (2.0 / d)))
    seed = max(linear, l2)

    if m >= 2:
        delta = _min_separation(centers)
        if delta == 0.0:
            raise CoincidentCenters("two jumps share a location")
        target = epsilon / (10.0 * m * habs.max())
        if k > target:
            seed = max(seed, math.sqrt(math.log(k / target)) / delta)
    return seed


def interference_scale(kernel: DecayKernel, separation: float, level: float) -> float:
    """Smallest scale with ``sup_{r >= separation} |phi(A r)| <= level``."""
    if not separation > 0:
        raise CoincidentCenters("zero separation")
    radius = kernel.negligible_radius(level)
    if math.isinf(radius):
        raise BudgetUnreachable(f"profile never drops below {level:.3e}")
    return max(radius, _ENV_STEP) / separation


def build_singular_network(jumps: Sequence[JumpPoint], kernel: DecayKernel, scale: float) -> SingularNetwork:
    return SingularNetwork(kernel=kernel, scale=float(scale), jumps=tuple(jumps))


class Certificate(NamedTuple):
    residual: float
    interior: float
    exterior: float
    skipped_mass: float
    n_cells: int
    converged: bool


def _radial_tail(kernel: DecayKernel, start: float, dim: int) -> float:
    """Upper bound on ``int_{||y|| >= start} envelope(||y||)^2 dy`` (unit scale)."""
    tab = kernel._envelope_table
    if kernel.tail_floor > 0:
        return math.inf
    i0 = int(math.floor(start / _ENV_STEP))
    if i0 >= tab.size:
        return 0.0
    s_right = (np.arange(i0, tab.size) + 1) * _ENV_STEP
    # left-point envelope is non-increasing, right-point radius weight maximal
    integrand = np.square(tab[i0:]) * s_right ** (dim - 1)
    surface = 2.0 * math.exp(0.5 * dim * math.log(math.pi) - gammaln(dim / 2.0))
    return float(surface * integrand.sum() * _ENV_STEP)


def _exterior_bound(network, tail, rho, dim):
    """Minkowski bound on the L2 norm of NW outside a region at distance ``rho_j`` from center j."""
    A = network.scale
    kernel = network.kernel
    total = 0.0
    for h, r in zip(network.heights, rho):
        start = A * r
        if tail.conforming and start >= tail.tail_onset:
            k = tail.k_upper
            mass = k * k * (math.pi / (2.0 * A * A)) ** (dim / 2.0) * chi2.sf(4.0 * start * start, dim)
        else:
            mass = _radial_tail(kernel, start, dim) / A ** dim
        total += abs(h) * math.sqrt(mass)
    return total


def certified_l2(
    network: SingularNetwork,
    box: Optional[Box] = None,
    cfg: Optional[QuadratureConfig] = None,
    tail: Optional[TailBound] = None,
) -> Certificate:
    """Upper bound for ``||NW||_{L2(R^d)}`` at the network's current scale.

    The region near the centers is covered by a tensor partition with split
    points at fixed multiples of ``1/A`` around every center; cells where the
    kernel envelope bounds ``|NW|`` below ``1e-16 * sum|h|`` are not
    integrated, their worst-case mass is added instead.  The part of R^d
    outside ``box`` is bounded analytically per unit.
    """
    cfg = cfg or DEFAULT_CERTIFY_QUADRATURE
    kernel = network.kernel
    tail = tail or estimate_tail_bounds(kernel)
    centers, heights = network.centers, network.heights
    A = network.scale
    d = network.dim
    hsum = float(np.abs(heights).sum())

    R = kernel.negligible_radius(NEGLIGIBLE)
    if math.isinf(R):
        return Certificate(math.inf, math.inf, math.inf, 0.0, 0, False)
    if tail.conforming:
        R = max(R, tail.tail_onset)
    pad = R / A
    span = float(np.max(np.abs(centers))) if centers.size else 0.0
    if not pad > 1e4 * np.spacing(max(span, 1.0)):
        raise BudgetUnreachable(f"scale {A:.3e} is too large to resolve around the centers in double precision")
    if box is None:
        box = Box.around(centers, pad)
    elif box.dim != d:
        raise DimensionMismatch(f"box is {box.dim}-D, network is {d}-D")
    lo, hi = np.asarray(box.lower), np.asarray(box.upper)

    offsets = np.array(sorted({s * o for o in (*_OFFSETS, R) if o <= R for s in (-1.0, 1.0)}))
    axes = []
    for i in range(d):
        pts = (centers[:, i][:, None] + offsets[None, :] / A).ravel()
        pts = pts[(pts > lo[i]) & (pts < hi[i])]
        axes.append(np.concatenate([[lo[i], hi[i]], pts]))
    lower, upper = tensor_cells(axes)

    bound = np.zeros(lower.shape[0])
    for c, h in zip(centers, heights):
        gap = np.maximum(np.maximum(lower - c, c - upper), 0.0)
        dist = np.sqrt(np.sum(gap * gap, axis=1))
        bound += abs(h) * kernel.envelope(A * dist)
    keep = bound > NEGLIGIBLE * hsum
    vol = np.prod(upper - lower, axis=1)
    skipped = float(np.sum(np.square(bound[~keep]) * vol[~keep]))

    def nw(x):
        return _kernel_sum(x, centers, heights, kernel, A)

    if np.any(keep):
        q = l2_squared(nw, lower[keep], upper[keep], cfg)
        inner_sq, err, converged = q.value, q.error_estimate, q.converged
    else:
        inner_sq, err, converged = 0.0, 0.0, True
    interior = math.sqrt(max(inner_sq, 0.0) + err + skipped)

    # distance from each center to the complement of the box
    rho = np.minimum(centers - lo, hi - centers).min(axis=1)
    if np.any(rho < 0):
        raise ValueError("box must contain every center")
    exterior = _exterior_bound(network, tail, rho, d)
    return Certificate(interior + exterior, interior, exterior, skipped, int(keep.sum()), converged)


def certify(
    network: SingularNetwork,
    epsilon: float,
    box: Optional[Box] = None,
    cfg: Optional[QuadratureConfig] = None,
    max_doublings: int = MAX_DOUBLINGS,
) -> SingularNetwork:
    """Double the scale until the certified L2 residual is below ``epsilon``.

    Returns a copy of ``network`` at the accepted scale with
    ``certified_residual`` and ``budget`` set.

    Raises
    ------
    BudgetUnreachable
        If ``max_doublings`` doublings do not bring the residual under
        ``epsilon``.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    tail = estimate_tail_bounds(network.kernel)
    current = network
    for k in range(max_doublings + 1):
        cert = certified_l2(current, box, cfg, tail)
        if cert.residual < epsilon:
            return dataclasses.replace(
                current, certified_residual=float(cert.residual), budget=float(epsilon),
                doublings=network.doublings + k,
            )
        current = current.with_scale(2.0 * current.scale)
    raise BudgetUnreachable(
        f"residual {cert.residual:.3e} still >= {epsilon:g} after {max_doublings} doublings"
    )
