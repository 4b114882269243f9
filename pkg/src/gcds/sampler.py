"""Monte Carlo conditional estimates from a trained sampler.

Given a fitted generator, conditional functionals at a point x are
estimated from J noise draws pushed through the network:

* mean and SD use the plain J-divisor moment estimates;
* the tau-quantile is the ceil(tau * J)-th order statistic;
* densities come from a Gaussian kernel smooth of the draws.

Draw sets are small value objects so estimates stay attached to the
point and seed that produced them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import nn
from .ioutil import atomic_write_text
from .trainer import TrainedGenerator

__all__ = [
    "DEFAULT_J",
    "ConditionalSampleSet",
    "DensityCurve",
    "sample_conditional",
    "mc_mean_sd",
    "mc_quantile",
    "prediction_interval",
    "silverman_bandwidth",
    "kde_curve",
    "density_curve_from_draws",
    "export_density_csv",
    "export_draws_csv",
]

DEFAULT_J = 10_000


@dataclass(frozen=True)
class ConditionalSampleSet:
    """J generator draws at one covariate point."""

    x: np.ndarray
    draws: np.ndarray
    j_draws: int
    seed: int

    def __post_init__(self):
        draws = np.asarray(self.draws, dtype=np.float64)
        object.__setattr__(self, "draws", draws)
        object.__setattr__(self, "x", np.asarray(self.x, dtype=np.float64))
        if draws.ndim != 2 or draws.shape[0] != self.j_draws:
            raise ValueError(f"draws must be (j_draws, q), got {draws.shape}")

    @property
    def q(self) -> int:
        return self.draws.shape[1]


@dataclass(frozen=True)
class DensityCurve:
    """A conditional density estimate evaluated on a grid."""

    grid: np.ndarray
    values: np.ndarray
    bandwidth: float

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=np.float64)
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)
        if grid.ndim != 1 or grid.shape != values.shape or grid.size < 2:
            raise ValueError("grid and values must be matching 1-D arrays of length >= 2")


def sample_conditional(
    gen: TrainedGenerator, x: np.ndarray, j_draws: int = DEFAULT_J, seed: int = 0
) -> ConditionalSampleSet:
    """Draw j_draws responses from the fitted sampler at covariate x.

    Noise is standard normal from the given seed; the covariate is
    standardised with the generator's training statistics and the
    output is mapped back to the original response scale.
    """
    if j_draws < 1:
        raise ValueError(f"j_draws must be >= 1, got {j_draws}")
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.shape[0] != gen.d:
        raise ValueError(f"x has {x.shape[0]} coordinates, generator expects {gen.d}")
    rng = np.random.default_rng(seed)
    eta = rng.standard_normal((j_draws, gen.noise_dim))
    xs = (x - gen.norm.x_mean) / gen.norm.x_scale
    batch = np.hstack([eta, np.tile(xs, (j_draws, 1))])
    out, _ = nn.forward(gen.net, batch)
    draws = out * gen.norm.y_scale + gen.norm.y_mean
    return ConditionalSampleSet(x, draws, j_draws, seed)


def mc_mean_sd(s: ConditionalSampleSet) -> tuple[np.ndarray, np.ndarray]:
    """Componentwise Monte Carlo mean and SD of the draws.

    The SD uses divisor J (not J - 1); at least two draws are required
    for it to mean anything.
    """
    if s.j_draws < 2:
        raise ValueError("need at least 2 draws for an SD estimate")
    mean = s.draws.mean(axis=0)
    sd = np.sqrt(np.mean((s.draws - mean) ** 2, axis=0))
    return mean, sd


def _rank(tau: float, j: int) -> int:
    # ceil(tau * j) computed with a small downward nudge so float
    # products that land epsilon above an integer do not bump the rank.
    return max(1, min(j, math.ceil(tau * j - 1e-9)))


def mc_quantile(s: ConditionalSampleSet, tau: float) -> float:
    """Nearest-rank tau-quantile of the draws (scalar response only)."""
    if s.q != 1:
        raise ValueError("quantiles are defined for scalar responses only")
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must be in (0, 1), got {tau}")
    order = np.sort(s.draws[:, 0])
    return float(order[_rank(tau, s.j_draws) - 1])


def prediction_interval(s: ConditionalSampleSet, level: float) -> tuple[float, float]:
    """Central prediction interval at the given coverage level."""
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must be in (0, 1), got {level}")
    lo = mc_quantile(s, (1.0 - level) / 2.0)
    hi = mc_quantile(s, (1.0 + level) / 2.0)
    return lo, hi


def silverman_bandwidth(draws: np.ndarray) -> float:
    """Rule-of-thumb bandwidth 1.06 * min(SD, IQR/1.349) * J^(-1/5).

    The SD is the J-divisor Monte Carlo estimate, matching the moment
    convention used elsewhere in this module.
    """
    draws = np.asarray(draws, dtype=np.float64).reshape(-1)
    j = draws.size
    if j < 2:
        raise ValueError("need at least 2 draws for a bandwidth")
    sd = float(np.sqrt(np.mean((draws - draws.mean()) ** 2)))
    q25, q75 = np.percentile(draws, [25.0, 75.0])
    spread = min(sd, (q75 - q25) / 1.349)
    h = 1.06 * spread * j ** (-0.2)
    if h <= 0.0:
        raise ValueError("draws have no spread; bandwidth would be zero")
    return h


def kde_curve(
    s: ConditionalSampleSet,
    grid: np.ndarray,
    bandwidth: float | str = "silverman",
) -> DensityCurve:
    """Gaussian kernel density of the draws on an explicit grid.

    ``bandwidth`` is either a positive number or the string
    ``"silverman"``.  Scalar responses only.
    """
    if s.q != 1:
        raise ValueError("density curves are defined for scalar responses only")
    grid = np.asarray(grid, dtype=np.float64)
    if bandwidth == "silverman":
        h = silverman_bandwidth(s.draws[:, 0])
    else:
        h = float(bandwidth)
        if h <= 0.0:
            raise ValueError(f"bandwidth must be positive, got {h}")
    z = (grid[:, None] - s.draws[None, :, 0]) / h
    values = np.exp(-0.5 * z * z).mean(axis=1) / (h * math.sqrt(2.0 * math.pi))
    return DensityCurve(grid, values, h)


def density_curve_from_draws(
    s: ConditionalSampleSet,
    n_grid: int = 512,
    pad_bandwidths: float = 4.0,
    bandwidth: float | str = "silverman",
) -> DensityCurve:
    """Density curve on an automatic grid spanning the draws plus a
    bandwidth margin on each side."""
    if s.q != 1:
        raise ValueError("density curves are defined for scalar responses only")
    draws = s.draws[:, 0]
    h = silverman_bandwidth(draws) if bandwidth == "silverman" else float(bandwidth)
    lo = draws.min() - pad_bandwidths * h
    hi = draws.max() + pad_bandwidths * h
    return kde_curve(s, np.linspace(lo, hi, n_grid), h)


def export_density_csv(curve: DensityCurve, path: str) -> None:
    """Two-column CSV (grid point, density value) for plotting."""
    lines = ["y,density"]
    for g, v in zip(curve.grid, curve.values):
        lines.append(f"{repr(float(g))},{repr(float(v))}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def export_draws_csv(s: ConditionalSampleSet, path: str) -> None:
    """One column per response component, one row per draw."""
    header = "y" if s.q == 1 else ",".join(f"y{k + 1}" for k in range(s.q))
    lines = [header]
    for row in s.draws:
        lines.append(",".join(repr(float(v)) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")
