"""Benchmark simulation models with analytic conditional truths.

Five generating laws are provided, each with standard-normal
covariates:

* ``m1``   additive noise, nonlinear mean, 5 covariates
* ``m2``   same mean family with covariate-dependent noise scale
* ``m3``   30 covariates (first five informative), multiplicative
           log-normal-mixture noise
* ``m4``   a two-component location mixture whose conditional law is
           bimodal in the single covariate
* ``helix``  one covariate, two responses winding around a helix,
           with selectable noise level

For every scalar-response model the conditional mean, SD, CDF and
quantiles are available in closed form or by bisection of the analytic
CDF, which is what the benchmark harness scores estimators against.
All mixture constants are computed at runtime from the generating law
rather than copied in as decimal literals.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.stats import norm

from .dataio import ColumnSchema, PairedDataset

__all__ = [
    "MODEL_IDS",
    "SimModel",
    "TruthFunctionals",
    "make_model",
    "generate",
    "true_mean",
    "true_sd",
    "true_cdf",
    "true_quantile",
    "truth_functionals",
]

MODEL_IDS = ("m1", "m2", "m3", "m4", "helix")

_DIMS = {"m1": (5, 1), "m2": (5, 1), "m3": (30, 1), "m4": (1, 1), "helix": (1, 2)}

# m3 noise: exp(0.5 * e) with e an equal-weight mixture of N(-2, 1) and
# N(2, 1).  E[exp(t e)] per component is exp(t * mu + t^2 / 2).
_M3_COMPONENT_MEANS = (-2.0, 2.0)
_M3_NOISE_SD = 1.0
_M3_LOG_FACTOR = 0.5

# m4: response is +-x1 plus N(0, 0.25^2), each sign with probability 1/2.
_M4_COMPONENT_SD = 0.25

_BISECT_WIDTH = 1e-10
_BRACKET_SDS = 20.0


@dataclass(frozen=True)
class SimModel:
    """One benchmark generating law.

    ``d`` and ``q`` are fixed by the id; ``noise_sigma`` only applies to
    the helix model (its response noise SD).
    """

    id: str
    d: int = 0
    q: int = 0
    noise_sigma: float | None = None

    def __post_init__(self):
        if self.id not in MODEL_IDS:
            raise ValueError(f"unknown model id {self.id!r}; choose from {MODEL_IDS}")
        d, q = _DIMS[self.id]
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "q", q)
        if self.id == "helix":
            sigma = 0.6 if self.noise_sigma is None else float(self.noise_sigma)
            if sigma <= 0:
                raise ValueError(f"helix noise_sigma must be positive, got {sigma}")
            object.__setattr__(self, "noise_sigma", sigma)
        elif self.noise_sigma is not None:
            raise ValueError(f"noise_sigma only applies to the helix model, not {self.id!r}")


def make_model(model_id: str, noise_sigma: float | None = None) -> SimModel:
    return SimModel(id=model_id.lower(), noise_sigma=noise_sigma)


def _mix_exp_moment(t: float) -> float:
    """E[exp(t * e)] for the m3 noise mixture; log-normal moment per component."""
    var = _M3_NOISE_SD ** 2
    return 0.5 * sum(math.exp(t * mu + t * t * var / 2.0) for mu in _M3_COMPONENT_MEANS)


def _m3_signal(X: np.ndarray) -> np.ndarray:
    return 5.0 + X[:, 0] ** 2 / 3.0 + X[:, 1] ** 2 + X[:, 2] ** 2 + X[:, 3] + X[:, 4]


def _m12_mean(X: np.ndarray) -> np.ndarray:
    return X[:, 0] ** 2 + np.exp(X[:, 1] + X[:, 2] / 3.0)


def _m2_scale(X: np.ndarray) -> np.ndarray:
    return 0.5 + X[:, 1] ** 2 / 2.0 + X[:, 4] ** 2 / 2.0


# Helix response shape: y1 = 2x + U sin(2U) + noise, y2 = 2x + U cos(2U)
# + noise, U uniform on [0, 2pi].  Moments of the U terms are computed
# once by quadrature.
def _helix_u_moments() -> tuple[float, float, float, float]:
    two_pi = 2.0 * math.pi
    density = 1.0 / two_pi
    m_sin = quad(lambda u: u * math.sin(2 * u) * density, 0.0, two_pi)[0]
    m_cos = quad(lambda u: u * math.cos(2 * u) * density, 0.0, two_pi)[0]
    m_sin2 = quad(lambda u: (u * math.sin(2 * u)) ** 2 * density, 0.0, two_pi)[0]
    m_cos2 = quad(lambda u: (u * math.cos(2 * u)) ** 2 * density, 0.0, two_pi)[0]
    return m_sin, m_cos, m_sin2, m_cos2


_HELIX_MOMENTS = _helix_u_moments()


def generate(model: SimModel, n: int, seed: int) -> PairedDataset:
    """Draw n paired observations from the model.

    Covariates are always drawn first, then the model-specific noise in
    a fixed order, so a given (model, n, seed) triple is reproducible.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, model.d))
    if model.id == "m1":
        eps = rng.standard_normal(n)
        y = _m12_mean(X) + np.sin(X[:, 3] + X[:, 4]) + eps
        Y = y[:, None]
    elif model.id == "m2":
        eps = rng.standard_normal(n)
        y = _m12_mean(X) + X[:, 3] - X[:, 4] + _m2_scale(X) * eps
        Y = y[:, None]
    elif model.id == "m3":
        u = rng.random(n)
        z = rng.standard_normal(n)
        mu = np.where(u < 0.5, _M3_COMPONENT_MEANS[0], _M3_COMPONENT_MEANS[1])
        eps = mu + _M3_NOISE_SD * z
        y = _m3_signal(X) * np.exp(_M3_LOG_FACTOR * eps)
        Y = y[:, None]
    elif model.id == "m4":
        u = rng.random(n)
        z = rng.standard_normal(n)
        sign = np.where(u < 0.5, -1.0, 1.0)
        y = sign * X[:, 0] + _M4_COMPONENT_SD * z
        Y = y[:, None]
    else:  # helix
        u = rng.uniform(0.0, 2.0 * math.pi, n)
        e = rng.standard_normal((n, 2)) * model.noise_sigma
        x = X[:, 0]
        Y = np.column_stack([
            2.0 * x + u * np.sin(2.0 * u) + e[:, 0],
            2.0 * x + u * np.cos(2.0 * u) + e[:, 1],
        ])
    schema = tuple(
        [ColumnSchema(f"x{j + 1}", "continuous", "covariate") for j in range(model.d)]
        + [ColumnSchema("y" if model.q == 1 else f"y{k + 1}", "continuous", "response")
           for k in range(model.q)]
    )
    sigma_tag = "" if model.noise_sigma is None else f":sigma={model.noise_sigma}"
    return PairedDataset(X, Y, schema, f"{model.id}{sigma_tag}:n={n}:seed={seed}")


def _as_points(model: SimModel, x: np.ndarray) -> tuple[np.ndarray, bool]:
    pts = np.asarray(x, dtype=np.float64)
    single = pts.ndim == 1
    if single:
        pts = pts[None, :]
    if pts.ndim != 2 or pts.shape[1] != model.d:
        raise ValueError(f"x must have {model.d} coordinates for model {model.id!r}")
    return pts, single


def true_mean(model: SimModel, x: np.ndarray) -> float | np.ndarray:
    """Conditional mean of the response at covariate value(s) x.

    Accepts one point (1-D) or a stack of points (2-D); the helix model
    returns the componentwise mean of its two responses.
    """
    pts, single = _as_points(model, x)
    if model.id == "m1":
        out = _m12_mean(pts) + np.sin(pts[:, 3] + pts[:, 4])
    elif model.id == "m2":
        out = _m12_mean(pts) + pts[:, 3] - pts[:, 4]
    elif model.id == "m3":
        out = _m3_signal(pts) * _mix_exp_moment(_M3_LOG_FACTOR)
    elif model.id == "m4":
        out = np.zeros(pts.shape[0])
    else:
        m_sin, m_cos, _, _ = _HELIX_MOMENTS
        base = 2.0 * pts[:, 0]
        out = np.column_stack([base + m_sin, base + m_cos])
    return out[0] if single else out


def true_sd(model: SimModel, x: np.ndarray) -> float | np.ndarray:
    """Conditional standard deviation of the response at x (componentwise
    for the helix model)."""
    pts, single = _as_points(model, x)
    if model.id == "m1":
        out = np.ones(pts.shape[0])
    elif model.id == "m2":
        out = _m2_scale(pts)
    elif model.id == "m3":
        first = _mix_exp_moment(_M3_LOG_FACTOR)
        second = _mix_exp_moment(2.0 * _M3_LOG_FACTOR)
        out = np.abs(_m3_signal(pts)) * math.sqrt(second - first * first)
    elif model.id == "m4":
        out = np.sqrt(pts[:, 0] ** 2 + _M4_COMPONENT_SD ** 2)
    else:
        m_sin, m_cos, m_sin2, m_cos2 = _HELIX_MOMENTS
        s2 = model.noise_sigma ** 2
        v1 = m_sin2 - m_sin ** 2 + s2
        v2 = m_cos2 - m_cos ** 2 + s2
        out = np.column_stack([np.full(pts.shape[0], math.sqrt(v1)),
                               np.full(pts.shape[0], math.sqrt(v2))])
    return out[0] if single else out


def true_cdf(model: SimModel, x: np.ndarray, y: float) -> float:
    """Conditional CDF P(Y <= y | X = x) for scalar-response models."""
    if model.q != 1:
        raise ValueError(f"model {model.id!r} has a vector response; no scalar CDF")
    pts, single = _as_points(model, x)
    if not single:
        raise ValueError("true_cdf takes a single covariate point")
    if model.id in ("m1", "m2"):
        mu = float(true_mean(model, x))
        sd = float(true_sd(model, x))
        return float(norm.cdf((y - mu) / sd))
    if model.id == "m3":
        s = float(_m3_signal(pts)[0])
        if s == 0.0:
            raise ValueError("degenerate m3 point: signal term is exactly zero")
        f = _M3_LOG_FACTOR
        sd_e = abs(f) * _M3_NOISE_SD

        def mix_cdf(t: float) -> float:
            # CDF of f * e at t, e the two-component normal mixture.
            return 0.5 * sum(
                norm.cdf((t - f * mu) / sd_e) for mu in _M3_COMPONENT_MEANS
            )

        if s > 0.0:
            if y <= 0.0:
                return 0.0
            return float(mix_cdf(math.log(y / s)))
        if y >= 0.0:
            return 1.0
        return float(1.0 - mix_cdf(math.log(y / s)))
    # m4
    x1 = float(pts[0, 0])
    return float(
        0.5 * norm.cdf((y + x1) / _M4_COMPONENT_SD)
        + 0.5 * norm.cdf((y - x1) / _M4_COMPONENT_SD)
    )


def true_quantile(model: SimModel, x: np.ndarray, tau: float) -> float:
    """Conditional tau-quantile at x.

    Gaussian models invert the CDF in closed form; the mixture models
    bisect their analytic CDF down to a bracket width of 1e-10, starting
    from mean +- 20 SD.
    """
    if model.q != 1:
        raise ValueError(f"model {model.id!r} has a vector response; no scalar quantile")
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must be in (0, 1), got {tau}")
    if model.id in ("m1", "m2"):
        mu = float(true_mean(model, x))
        sd = float(true_sd(model, x))
        return mu + sd * float(norm.ppf(tau))
    mu = float(true_mean(model, x))
    sd = float(true_sd(model, x))
    lo = mu - _BRACKET_SDS * sd
    hi = mu + _BRACKET_SDS * sd
    f_lo = true_cdf(model, x, lo)
    f_hi = true_cdf(model, x, hi)
    if not (f_lo <= tau <= f_hi):
        raise RuntimeError(
            f"quantile bracket [{lo}, {hi}] does not contain tau={tau} "
            f"(CDF range [{f_lo}, {f_hi}])"
        )
    while hi - lo > _BISECT_WIDTH:
        mid = 0.5 * (lo + hi)
        if true_cdf(model, x, mid) < tau:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class TruthFunctionals:
    """Bound conditional truth functions for one model."""

    model: SimModel

    def cond_mean(self, x):
        return true_mean(self.model, x)

    def cond_sd(self, x):
        return true_sd(self.model, x)

    def cond_quantile(self, x, tau):
        return true_quantile(self.model, x, tau)

    def cond_cdf(self, x, y):
        return true_cdf(self.model, x, y)


def truth_functionals(model: SimModel) -> TruthFunctionals:
    return TruthFunctionals(model)
