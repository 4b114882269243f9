"""Adversarial training of the conditional sampler.

Each round draws a fresh noise matrix, pushes every covariate row
through the generator to build a fake pool, and then

1. selects half a batch of real pairs and half a batch of fake pairs
   (without replacement within the round),
2. ascends the critic on the empirical dual bound for the configured
   divergence,
3. selects a fresh batch of covariates with fresh noise and descends
   the generator on the mean critic value of its output.

Both covariates and responses are standardised to zero mean and unit
variance before training; the fitted statistics travel with the
returned generator so sampling reports responses on the original scale.
All randomness is derived from the config seed through fixed stream
keys, making a run bit-for-bit reproducible.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .dataio import PairedDataset
from .divergence import (
    DivergenceKind,
    discriminator_upstream,
    empirical_dual,
    generator_upstream,
)
from .ioutil import atomic_write_text

__all__ = [
    "AdamParams",
    "TrainConfig",
    "TrainHistory",
    "Normalization",
    "TrainedGenerator",
    "TrainingDivergedError",
    "HISTORY_EVERY",
    "default_net_specs",
    "tabular_net_specs",
    "train",
    "save_generator",
    "load_generator",
]

# History rows are recorded every this many rounds.
HISTORY_EVERY = 100

# Stream keys for deriving independent RNG streams from the config seed.
_STREAM_G_INIT = 0
_STREAM_D_INIT = 1
_STREAM_ROUND = 2

# Column scales below this are treated as constant and left unscaled.
_SCALE_FLOOR = 1e-12


class TrainingDivergedError(RuntimeError):
    """Training produced a non-finite objective; carries the iteration."""

    def __init__(self, message: str, iteration: int):
        super().__init__(f"{message} (iteration {iteration})")
        self.iteration = iteration


@dataclass(frozen=True)
class AdamParams:
    lr: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    """Settings for one training run.

    ``noise_dim`` is the generator's noise input width; ``batch_size``
    must be even (half real, half fake in each critic step) and at most
    the number of training rows.
    """

    noise_dim: int
    batch_size: int = 128
    total_iterations: int = 20000
    d_steps_per_g_step: int = 1
    g_adam: AdamParams = field(default_factory=AdamParams)
    d_adam: AdamParams = field(default_factory=AdamParams)
    seed: int = 0
    divergence: DivergenceKind = DivergenceKind.KL

    def __post_init__(self):
        if self.noise_dim < 1:
            raise ValueError(f"noise_dim must be >= 1, got {self.noise_dim}")
        if self.batch_size < 2 or self.batch_size % 2 != 0:
            raise ValueError(
                f"batch_size must be even and >= 2 so each critic step sees both "
                f"real and fake pairs, got {self.batch_size}"
            )
        if self.total_iterations < 1:
            raise ValueError(f"total_iterations must be >= 1, got {self.total_iterations}")
        if self.d_steps_per_g_step < 1:
            raise ValueError(f"d_steps_per_g_step must be >= 1, got {self.d_steps_per_g_step}")


@dataclass
class TrainHistory:
    """Objective trace: one row per recorded round."""

    iterations: np.ndarray
    d_objective: np.ndarray
    g_term: np.ndarray

    def to_csv(self, path: str) -> None:
        lines = ["iteration,d_objective,g_term"]
        for it, d, g in zip(self.iterations, self.d_objective, self.g_term):
            lines.append(f"{int(it)},{repr(float(d))},{repr(float(g))}")
        atomic_write_text(path, "\n".join(lines) + "\n")


@dataclass(frozen=True)
class Normalization:
    """Per-column affine standardisation fitted on the training data."""

    x_mean: np.ndarray
    x_scale: np.ndarray
    y_mean: np.ndarray
    y_scale: np.ndarray

    @staticmethod
    def fit(X: np.ndarray, Y: np.ndarray) -> "Normalization":
        def scale_of(a):
            s = a.std(axis=0)
            return np.where(s < _SCALE_FLOOR, 1.0, s)

        return Normalization(X.mean(axis=0), scale_of(X), Y.mean(axis=0), scale_of(Y))

    @staticmethod
    def identity(d: int, q: int) -> "Normalization":
        return Normalization(np.zeros(d), np.ones(d), np.zeros(q), np.ones(q))


@dataclass
class TrainedGenerator:
    """A fitted conditional sampler: network plus its input/output scaling."""

    net: nn.DenseNet
    noise_dim: int
    norm: Normalization

    @property
    def d(self) -> int:
        return self.net.spec.input_dim - self.noise_dim

    @property
    def q(self) -> int:
        return self.net.spec.output_dim


def default_net_specs(model) -> tuple[nn.NetworkSpec, nn.NetworkSpec, int]:
    """Published architecture defaults for a benchmark model.

    Returns (generator spec, critic spec, noise_dim).  The mixture-type
    models use a deeper, narrower generator; every critic is the same
    two-hidden-layer net over (covariates, response) pairs.
    """
    model_id, d, q = model.id, model.d, model.q
    if model_id in ("m1", "m2", "m3"):
        gen_hidden, noise_dim = (50,), 3
    elif model_id in ("m4", "helix"):
        gen_hidden, noise_dim = (40, 15), 4
    else:
        raise ValueError(f"no default architecture for model {model_id!r}")
    gen = nn.NetworkSpec(noise_dim + d, gen_hidden, q)
    disc = nn.NetworkSpec(d + q, (50, 25), 1)
    return gen, disc, noise_dim


def tabular_net_specs(d: int, q: int = 1) -> tuple[nn.NetworkSpec, nn.NetworkSpec, int]:
    """Architecture defaults for the real-data coverage study."""
    noise_dim = 5
    gen = nn.NetworkSpec(noise_dim + d, (50, 20), q)
    disc = nn.NetworkSpec(d + q, (50, 25), 1)
    return gen, disc, noise_dim


def _round_rng(seed: int, iteration: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(_STREAM_ROUND, iteration)))


def train(
    data: PairedDataset,
    gen_spec: nn.NetworkSpec,
    disc_spec: nn.NetworkSpec,
    cfg: TrainConfig,
    probe=None,
) -> tuple[TrainedGenerator, TrainHistory]:
    """Run the full minimax loop and return the fitted sampler.

    Parameters
    ----------
    data : PairedDataset
        Training pairs; standardised internally.
    gen_spec, disc_spec : NetworkSpec
        Generator must map (noise_dim + d) -> q; critic (d + q) -> 1.
    cfg : TrainConfig
    probe : callable, optional
        Called with a dict after every critic step (phase "d") and
        generator step (phase "g"); used by tests to audit the loop.

    Raises
    ------
    TrainingDivergedError
        If an objective value or gradient goes non-finite.
    """
    X, Y = data.X, data.Y
    n, d = X.shape
    q = Y.shape[1]
    m = cfg.noise_dim
    if gen_spec.input_dim != m + d:
        raise ValueError(
            f"generator input_dim {gen_spec.input_dim} != noise_dim {m} + covariates {d}"
        )
    if gen_spec.output_dim != q:
        raise ValueError(f"generator output_dim {gen_spec.output_dim} != responses {q}")
    if disc_spec.input_dim != d + q:
        raise ValueError(f"critic input_dim {disc_spec.input_dim} != covariates {d} + responses {q}")
    if disc_spec.output_dim != 1:
        raise ValueError(f"critic output_dim must be 1, got {disc_spec.output_dim}")
    if cfg.batch_size > n:
        raise ValueError(f"batch_size {cfg.batch_size} exceeds n = {n}")

    norm = Normalization.fit(X, Y)
    Xs = (X - norm.x_mean) / norm.x_scale
    Ys = (Y - norm.y_mean) / norm.y_scale

    gen = nn.init_network(gen_spec, np.random.SeedSequence(cfg.seed, spawn_key=(_STREAM_G_INIT,)))
    disc = nn.init_network(disc_spec, np.random.SeedSequence(cfg.seed, spawn_key=(_STREAM_D_INIT,)))
    g_state = nn.init_adam(gen_spec, **vars(cfg.g_adam))
    d_state = nn.init_adam(disc_spec, **vars(cfg.d_adam))

    half = cfg.batch_size // 2
    kind = cfg.divergence
    hist_it, hist_d, hist_g = [], [], []

    for it in range(1, cfg.total_iterations + 1):
        rng = _round_rng(cfg.seed, it)
        try:
            dual_value = np.nan
            for _ in range(cfg.d_steps_per_g_step):
                # Fresh fake pool over every training row.
                noise = rng.standard_normal((n, m))
                fake, _ = nn.forward(gen, np.hstack([noise, Xs]))
                idx_fake = rng.choice(n, half, replace=False)
                idx_real = rng.choice(n, half, replace=False)
                batch = np.vstack([
                    np.hstack([Xs[idx_fake], fake[idx_fake]]),
                    np.hstack([Xs[idx_real], Ys[idx_real]]),
                ])
                d_out, d_cache = nn.forward(disc, batch)
                d_fake, d_real = d_out[:half, 0], d_out[half:, 0]
                dual = empirical_dual(kind, d_fake, d_real)
                dual_value = dual.value
                if not np.isfinite(dual_value):
                    raise TrainingDivergedError("critic objective is non-finite", it)
                up_fake, up_real = discriminator_upstream(kind, d_fake, d_real)
                # Adam minimises, so feed the negated ascent direction.
                upstream = -np.concatenate([up_fake, up_real])[:, None]
                nn.adam_step(d_state, disc, nn.backward(disc, d_cache, upstream))
                if probe is not None:
                    probe({
                        "phase": "d", "iteration": it,
                        "d_fake": d_fake.copy(), "d_real": d_real.copy(),
                        "objective": dual_value,
                    })

            # Generator step on a fresh batch with fresh noise.
            idx = rng.choice(n, cfg.batch_size, replace=False)
            eta = rng.standard_normal((cfg.batch_size, m))
            g_in = np.hstack([eta, Xs[idx]])
            y_hat, g_cache = nn.forward(gen, g_in)
            dg_out, dg_cache = nn.forward(disc, np.hstack([Xs[idx], y_hat]))
            g_term = float(np.mean(dg_out[:, 0]))
            if not np.isfinite(g_term):
                raise TrainingDivergedError("generator objective is non-finite", it)
            g_up = generator_upstream(kind, dg_out[:, 0])[:, None]
            disc_grads = nn.backward(disc, dg_cache, g_up)
            gen_grads = nn.backward(gen, g_cache, disc_grads.d_input[:, d:])
            nn.adam_step(g_state, gen, gen_grads)
            if probe is not None:
                probe({"phase": "g", "iteration": it, "g_term": g_term})
        except nn.OptimizerError as exc:
            raise TrainingDivergedError(str(exc), it) from exc

        if it % HISTORY_EVERY == 0:
            hist_it.append(it)
            hist_d.append(dual_value)
            hist_g.append(g_term)

    history = TrainHistory(
        np.asarray(hist_it, dtype=np.int64),
        np.asarray(hist_d, dtype=np.float64),
        np.asarray(hist_g, dtype=np.float64),
    )
    return TrainedGenerator(gen, m, norm), history


# ---------------------------------------------------------------------------
# Generator checkpoints: the bare network record plus sampler metadata.

def save_generator(gen: TrainedGenerator, path: str, seed: int = 0, step: int = 0) -> None:
    record = {
        "format": "gcds-generator-v1",
        "network": nn.checkpoint_record(gen.net, seed=seed, step=step),
        "noise_dim": gen.noise_dim,
        "normalization": {
            "x_mean": [float(v) for v in gen.norm.x_mean],
            "x_scale": [float(v) for v in gen.norm.x_scale],
            "y_mean": [float(v) for v in gen.norm.y_mean],
            "y_scale": [float(v) for v in gen.norm.y_scale],
        },
    }
    atomic_write_text(path, json.dumps(record))


def load_generator(path: str) -> tuple[TrainedGenerator, int, int]:
    with open(path, "r", encoding="utf-8") as fh:
        record = json.load(fh)
    if record.get("format") != "gcds-generator-v1":
        raise ValueError(f"{path}: not a generator checkpoint")
    net, seed, step = nn.network_from_record(record["network"])
    nm = record["normalization"]
    norm = Normalization(
        np.asarray(nm["x_mean"], dtype=np.float64),
        np.asarray(nm["x_scale"], dtype=np.float64),
        np.asarray(nm["y_mean"], dtype=np.float64),
        np.asarray(nm["y_scale"], dtype=np.float64),
    )
    return TrainedGenerator(net, int(record["noise_dim"]), norm), seed, step

