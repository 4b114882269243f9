"""Conditional kernel density baseline with rule-of-thumb bandwidths.

Estimates f(y | x) as the ratio of a joint to a marginal Gaussian
product-kernel density.  All x-kernel constants cancel in the ratio, so
conditionals reduce to a weighted mixture of Gaussians centred at the
training responses.  Moments and quantiles come from trapezoid
integration of that mixture on a fixed grid of 1000 subdivisions.

Scalar responses only; this is a benchmark baseline, not a general
estimator.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataio import PairedDataset

__all__ = [
    "BandwidthError",
    "UnsupportedRegionError",
    "GridCoverageError",
    "GridSpec",
    "CondMoments",
    "CkdeFit",
    "SUBDIVISIONS",
    "reference_bandwidth",
    "column_spread",
    "fit",
    "default_grid",
    "cond_density",
    "cond_moments",
    "cond_quantile",
    "batch_conditionals",
]

# Trapezoid integration always uses this many subdivisions (nodes - 1).
SUBDIVISIONS = 1000

# Marginal covariate densities below this are treated as "outside the
# support" rather than divided by.
_MARGINAL_FLOOR = 1e-300

# Fraction of probability mass allowed to fall outside the integration
# grid before results carry a warning flag.
_TAIL_TOLERANCE = 0.01

_LOG_ROOT_2PI = 0.5 * math.log(2.0 * math.pi)


class BandwidthError(ValueError):
    """A column has no usable spread for the bandwidth rule."""


class UnsupportedRegionError(ValueError):
    """The covariate point lies where the marginal density underflows."""


class GridCoverageError(ValueError):
    """The integration grid does not reach the requested quantile."""


@dataclass(frozen=True)
class GridSpec:
    """Uniform integration grid: [lo, hi] split into ``subdivisions`` panels."""

    lo: float
    hi: float
    subdivisions: int = SUBDIVISIONS

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ValueError(f"grid needs hi > lo, got [{self.lo}, {self.hi}]")
        if self.subdivisions < 2:
            raise ValueError(f"subdivisions must be >= 2, got {self.subdivisions}")

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.subdivisions + 1)


@dataclass(frozen=True)
class CondMoments:
    """Conditional mean and SD plus a grid-coverage warning flag."""

    mean: float
    sd: float
    tail_warning: bool


@dataclass(frozen=True)
class CkdeFit:
    """Fitted baseline: training rows in canonical order plus bandwidths.

    Rows are sorted lexicographically by (covariates, response) at fit
    time so that summation order, and therefore every float result, is
    identical no matter how the input rows were permuted.
    """

    X: np.ndarray
    Y: np.ndarray
    h_x: np.ndarray
    h_y: float
    kernel_order: int

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]


def reference_bandwidth(sigma: float, n: int, n_vars: int, kernel_order: int = 2) -> float:
    """Rule-of-thumb bandwidth 1.06 * sigma * n^(-1 / (2k + J)).

    ``n_vars`` is the total number of jointly smoothed variables J;
    ``kernel_order`` k is 2 for the Gaussian kernel used here.
    """
    if kernel_order != 2:
        raise ValueError(f"unsupported kernel order {kernel_order}; only 2 is implemented")
    if sigma <= 0.0:
        raise BandwidthError(f"spread must be positive, got {sigma}")
    if n < 2:
        raise ValueError(f"need at least 2 rows, got {n}")
    if n_vars < 1:
        raise ValueError(f"n_vars must be >= 1, got {n_vars}")
    # Base-2 power so that power-of-two n with an integer root (e.g.
    # 1024^(1/5) = 4) comes out exact instead of one ulp off.
    return 1.06 * sigma * 2.0 ** (math.log2(n) * (-1.0 / (2 * kernel_order + n_vars)))


def column_spread(col: np.ndarray) -> float:
    """Robust spread min(sample SD, IQR / 1.349) used by the bandwidth rule."""
    col = np.asarray(col, dtype=np.float64).reshape(-1)
    if col.size < 2:
        raise ValueError("need at least 2 values")
    sd = float(np.std(col, ddof=1))
    q25, q75 = np.percentile(col, [25.0, 75.0])
    return min(sd, (q75 - q25) / 1.349)


def fit(data: PairedDataset, kernel_order: int = 2) -> CkdeFit:
    """Fit the baseline on paired data (scalar response only).

    Each of the d + 1 joint variables gets its own bandwidth from
    :func:`reference_bandwidth`; a zero-spread column is an error.
    """
    if data.q != 1:
        raise ValueError("the kernel baseline handles a scalar response only")
    if data.n < 2:
        raise ValueError(f"need at least 2 rows to fit, got {data.n}")
    joint = np.hstack([data.X, data.Y])
    n_vars = joint.shape[1]
    hs = np.empty(n_vars)
    for j in range(n_vars):
        spread = column_spread(joint[:, j])
        if spread <= 0.0:
            raise BandwidthError(
                f"joint variable {j} has zero spread; bandwidth would be degenerate"
            )
        hs[j] = reference_bandwidth(spread, data.n, n_vars, kernel_order)
    order = np.lexsort(tuple(joint[:, k] for k in reversed(range(n_vars))))
    return CkdeFit(
        X=data.X[order].copy(),
        Y=data.Y[order, 0].copy(),
        h_x=hs[:-1],
        h_y=float(hs[-1]),
        kernel_order=kernel_order,
    )


def default_grid(f: CkdeFit) -> GridSpec:
    """Integration range: observed response range padded by 4 max bandwidths."""
    pad = 4.0 * max(float(np.max(f.h_x)), f.h_y)
    return GridSpec(float(f.Y.min()) - pad, float(f.Y.max()) + pad)


def _log_weights(f: CkdeFit, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.shape[0] != f.d:
        raise ValueError(f"x has {x.shape[0]} coordinates, fit expects {f.d}")
    z = (x[None, :] - f.X) / f.h_x[None, :]
    return -0.5 * np.sum(z * z, axis=1)


def _weights(f: CkdeFit, x: np.ndarray) -> np.ndarray:
    """Normalised mixture weights over training rows, with an underflow check.

    The check is on the actual marginal density estimate at x (kernel
    constants included), computed in log space so distant points in
    high dimension do not overflow the float range.
    """
    lw = _log_weights(f, x)
    shift = float(lw.max())
    w = np.exp(lw - shift)
    total = float(w.sum())
    log_marginal = (
        shift + math.log(total / f.n)
        - float(np.sum(np.log(f.h_x))) - f.d * _LOG_ROOT_2PI
    )
    if log_marginal < math.log(_MARGINAL_FLOOR):
        raise UnsupportedRegionError(
            f"marginal covariate density underflows ({log_marginal:.1f} in log) at {x!r}"
        )
    return w / total


def cond_density(f: CkdeFit, x: np.ndarray, y: float | np.ndarray) -> float | np.ndarray:
    """Estimated conditional density f(y | x); y may be a scalar or array."""
    w = _weights(f, x)
    y_arr = np.asarray(y, dtype=np.float64)
    z = (y_arr[..., None] - f.Y) / f.h_y
    dens = np.exp(-0.5 * z * z) @ w / (f.h_y * math.sqrt(2.0 * math.pi))
    return float(dens) if y_arr.ndim == 0 else dens


def _grid_density(f: CkdeFit, w: np.ndarray, grid: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    ys = grid.nodes
    z = (ys[:, None] - f.Y[None, :]) / f.h_y
    kernel = np.exp(-0.5 * z * z) / (f.h_y * math.sqrt(2.0 * math.pi))
    return ys, kernel @ w


def _moments_from_curve(ys: np.ndarray, dens: np.ndarray) -> CondMoments:
    mass = float(np.trapezoid(dens, ys))
    mean = float(np.trapezoid(ys * dens, ys))
    var = float(np.trapezoid((ys - mean) ** 2 * dens, ys))
    return CondMoments(mean, math.sqrt(max(var, 0.0)), (1.0 - mass) > _TAIL_TOLERANCE)


def cond_moments(f: CkdeFit, x: np.ndarray, grid: GridSpec | None = None) -> CondMoments:
    """Conditional mean and SD by trapezoid integration of the density.

    A result whose grid misses more than 1% of the probability mass is
    flagged, not rejected.
    """
    grid = default_grid(f) if grid is None else grid
    ys, dens = _grid_density(f, _weights(f, x), grid)
    return _moments_from_curve(ys, dens)


def _cdf_nodes(ys: np.ndarray, dens: np.ndarray) -> np.ndarray:
    panels = 0.5 * (dens[1:] + dens[:-1]) * np.diff(ys)
    return np.concatenate([[0.0], np.cumsum(panels)])


def _invert_cdf(ys: np.ndarray, cdf: np.ndarray, tau: float) -> float:
    if tau > cdf[-1]:
        raise GridCoverageError(
            f"grid CDF tops out at {cdf[-1]:.6f} < tau = {tau}; widen the grid"
        )
    i = int(np.searchsorted(cdf, tau, side="left"))
    if i == 0:
        return float(ys[0])
    gap = cdf[i] - cdf[i - 1]
    if gap <= 0.0:
        return float(ys[i])
    frac = (tau - cdf[i - 1]) / gap
    return float(ys[i - 1] + frac * (ys[i] - ys[i - 1]))


def cond_quantile(f: CkdeFit, x: np.ndarray, tau: float, grid: GridSpec | None = None) -> float:
    """Conditional tau-quantile by inverting the grid CDF with linear
    interpolation between nodes."""
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must be in (0, 1), got {tau}")
    grid = default_grid(f) if grid is None else grid
    ys, dens = _grid_density(f, _weights(f, x), grid)
    return _invert_cdf(ys, _cdf_nodes(ys, dens), tau)


def batch_conditionals(
    f: CkdeFit,
    xs: np.ndarray,
    taus: tuple[float, ...] = (),
    grid: GridSpec | None = None,
):
    """Moments and quantiles for a stack of covariate points.

    Shares one response-kernel matrix across all points, which is much
    faster than calling the per-point functions in a loop.  Returns
    (means, sds, {tau: quantiles}, tail_warnings).
    """
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2 or xs.shape[1] != f.d:
        raise ValueError(f"xs must be (k, {f.d}), got {xs.shape}")
    for tau in taus:
        if not 0.0 < tau < 1.0:
            raise ValueError(f"tau must be in (0, 1), got {tau}")
    grid = default_grid(f) if grid is None else grid
    ys = grid.nodes
    z = (ys[:, None] - f.Y[None, :]) / f.h_y
    kernel = np.exp(-0.5 * z * z) / (f.h_y * math.sqrt(2.0 * math.pi))
    k = xs.shape[0]
    means = np.empty(k)
    sds = np.empty(k)
    warns = np.zeros(k, dtype=bool)
    quants = {tau: np.empty(k) for tau in taus}
    for i in range(k):
        w = _weights(f, xs[i])
        dens = kernel @ w
        mom = _moments_from_curve(ys, dens)
        means[i], sds[i], warns[i] = mom.mean, mom.sd, mom.tail_warning
        if taus:
            cdf = _cdf_nodes(ys, dens)
            for tau in taus:
                quants[tau][i] = _invert_cdf(ys, cdf, tau)
    return means, sds, quants, warns
