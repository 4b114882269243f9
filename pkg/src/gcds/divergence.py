"""Variational divergence objectives for critic training.

The critic D is trained to maximise an empirical lower bound on an
f-divergence between the data law and the sampler law, of the form

    mean_fake D  -  mean_real f*(D)

where f* is the convex conjugate of the divergence generator.  For the
KL case the bound is used in its shifted form (optimal critic log of
the density ratio), which drops an additive constant 1; reported
divergence estimates add it back.

Two conventions are fixed here and relied on everywhere else:

* exp() applied to critic values is clamped at D <= EXP_CLIP, in the
  objective and its gradient consistently (gradient is zero beyond the
  clip point);
* each term is normalised by its own sample count, so fake and real
  batches may differ in length.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

__all__ = [
    "DivergenceKind",
    "DualObjectiveValue",
    "EXP_CLIP",
    "conjugate",
    "empirical_dual",
    "discriminator_upstream",
    "generator_upstream",
    "divergence_estimate",
]

# Critic values above this are flattened inside exp(); keeps the real
# term finite while the critic is still badly scaled early in training.
EXP_CLIP = 10.0

LOG2 = float(np.log(2.0))


class DivergenceKind(enum.Enum):
    KL = "kl"
    JS = "js"
    CHI2 = "chi2"


@dataclass(frozen=True)
class DualObjectiveValue:
    """Value of the empirical dual bound, split into its two terms.

    ``value = fake_term - real_term`` where ``fake_term`` is the mean
    critic value on sampler pairs and ``real_term`` is the mean
    conjugate-transformed critic value on data pairs.
    """

    value: float
    fake_term: float
    real_term: float


def conjugate(kind: DivergenceKind, t: np.ndarray | float) -> np.ndarray | float:
    """Convex conjugate f*(t) of the divergence generator.

    KL: exp(t - 1).  JS: -log(2 - exp(t)), defined for t < log 2.
    Chi-squared: t + t^2 / 4.
    """
    t = np.asarray(t, dtype=np.float64)
    if kind is DivergenceKind.KL:
        out = np.exp(t - 1.0)
    elif kind is DivergenceKind.JS:
        if np.any(t >= LOG2):
            raise ValueError(f"JS conjugate requires t < log 2 = {LOG2:.6f}")
        out = -np.log(2.0 - np.exp(t))
    elif kind is DivergenceKind.CHI2:
        out = t + 0.25 * t * t
    else:
        raise ValueError(f"unknown divergence kind {kind!r}")
    return out if out.ndim else float(out)


def _as_vector(d: np.ndarray, name: str) -> np.ndarray:
    d = np.asarray(d, dtype=np.float64)
    if d.ndim != 1 or d.size == 0:
        raise ValueError(f"{name} must be a nonempty 1-D array, got shape {d.shape}")
    return d


def empirical_dual(
    kind: DivergenceKind, d_fake: np.ndarray, d_real: np.ndarray
) -> DualObjectiveValue:
    """Empirical dual bound from critic values on fake and real pairs.

    ``d_fake`` holds D at (x, sampler output) pairs, ``d_real`` at
    (x, y) data pairs; the two may differ in length.  For KL the real
    term is mean exp(D) with the clamp; the identically-zero critic
    therefore scores exactly -1.
    """
    d_fake = _as_vector(d_fake, "d_fake")
    d_real = _as_vector(d_real, "d_real")
    fake_term = float(np.mean(d_fake))
    if kind is DivergenceKind.KL:
        real_term = float(np.mean(np.exp(np.minimum(d_real, EXP_CLIP))))
    elif kind is DivergenceKind.JS:
        if np.any(d_real >= LOG2):
            raise ValueError("JS dual requires critic values < log 2 on real pairs")
        real_term = float(np.mean(-np.log(2.0 - np.exp(d_real))))
    elif kind is DivergenceKind.CHI2:
        real_term = float(np.mean(d_real + 0.25 * d_real * d_real))
    else:
        raise ValueError(f"unknown divergence kind {kind!r}")
    return DualObjectiveValue(fake_term - real_term, fake_term, real_term)


def discriminator_upstream(
    kind: DivergenceKind, d_fake: np.ndarray, d_real: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Entrywise gradients of the dual value w.r.t. critic outputs.

    Returns (g_fake, g_real): d(value)/d(d_fake_i) = 1/n_fake for every
    kind; the real side is the negated conjugate derivative divided by
    n_real, with the KL exp-clamp contributing zero gradient beyond the
    clip point.
    """
    d_fake = _as_vector(d_fake, "d_fake")
    d_real = _as_vector(d_real, "d_real")
    g_fake = np.full(d_fake.shape, 1.0 / d_fake.size)
    if kind is DivergenceKind.KL:
        g_real = np.where(d_real < EXP_CLIP, -np.exp(np.minimum(d_real, EXP_CLIP)), 0.0)
    elif kind is DivergenceKind.JS:
        if np.any(d_real >= LOG2):
            raise ValueError("JS dual requires critic values < log 2 on real pairs")
        g_real = -np.exp(d_real) / (2.0 - np.exp(d_real))
    elif kind is DivergenceKind.CHI2:
        g_real = -(1.0 + 0.5 * d_real)
    else:
        raise ValueError(f"unknown divergence kind {kind!r}")
    return g_fake, g_real / d_real.size


def generator_upstream(kind: DivergenceKind, d_fake: np.ndarray) -> np.ndarray:
    """Gradient of the sampler objective mean D(fake) w.r.t. each critic value."""
    d_fake = _as_vector(d_fake, "d_fake")
    return np.full(d_fake.shape, 1.0 / d_fake.size)


def divergence_estimate(kind: DivergenceKind, dual: DualObjectiveValue) -> float:
    """Divergence estimate implied by a dual value.

    The KL objective is optimised in a form that drops an additive
    constant 1; adding it back makes the number directly comparable to
    the divergence being bounded.  JS and chi-squared drop nothing.
    """
    if kind is DivergenceKind.KL:
        return dual.value + 1.0
    return dual.value
