"""Command-line experiment runner.

One invocation runs one command (simulate, train, evaluate, table,
density, coverage) and writes its artifacts into the output directory:
result files contain no timestamps, so rerunning with the same seed
reproduces them byte for byte.  Timestamps and host details go to a
separate meta file; the fully resolved configuration is echoed to
``resolved_config.json`` next to the results.

Configuration comes from built-in defaults, overridden by an optional
JSON config file (--config), overridden by command-line flags.
"""
from __future__ import annotations

import argparse
import dataclasses
import datetime
import json
import os
import platform
import socket
import sys
import time
import traceback

import numpy as np

from . import __version__
from . import dataio, sampler, simdata, trainer
from . import evaluation as ev
from .ioutil import atomic_write_text
from .trainer import TrainingDivergedError

COMMANDS = ("simulate", "train", "evaluate", "table", "density", "coverage")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_IO = 4
EXIT_UNEXPECTED = 1

# Quantile levels scored by `evaluate` when none are requested.
STANDARD_TAUS = (0.05, 0.25, 0.5, 0.75, 0.95)

KNOWN_METHODS = ("gcds", "ckde")


@dataclasses.dataclass
class ExperimentConfig:
    """Fully resolved settings for one command."""

    command: str
    out: str
    model: str | None = None
    methods: tuple[str, ...] = ("gcds",)
    seed: int = 0
    n_train: int = ev.DEFAULT_N_TRAIN
    k_test: int = ev.DEFAULT_K_TEST
    reps: int = ev.DEFAULT_N_REPS
    iters: int = 20000
    batch: int = 128
    j_draws: int = sampler.DEFAULT_J
    taus: tuple[float, ...] = ()
    x: tuple[float, ...] | None = None
    lr_g: float | None = None
    lr_d: float | None = None
    data: str | None = None
    schema: str | None = None
    checkpoint: str | None = None
    level: float = 0.9
    helix_sigma: float | None = None
    train_fraction: float = 0.9

    def to_dict(self) -> dict:
        payload = dataclasses.asdict(self)
        # The destination directory is run placement, not experiment
        # configuration; it lives in meta.json so result files compare
        # byte for byte across reruns into different directories.
        del payload["out"]
        payload["methods"] = list(self.methods)
        payload["taus"] = list(self.taus)
        payload["x"] = None if self.x is None else list(self.x)
        return payload


# Keys accepted in a JSON config file; identical to the dataclass fields
# minus the command itself.
_FILE_KEYS = tuple(
    f.name for f in dataclasses.fields(ExperimentConfig) if f.name != "command"
)

_SOURCE_COMMANDS = ("train", "evaluate", "table", "density", "coverage")


def _parse_float_list(text: str) -> tuple[float, ...]:
    return tuple(float(part) for part in text.split(",") if part.strip() != "")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gcds",
        description="Train and benchmark a generative conditional distribution sampler.",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="JSON config file; flags override its keys")
    parser.add_argument("--model", help="benchmark model id (m1, m2, m3, m4, helix)")
    parser.add_argument("--methods", help="comma list of methods: gcds,ckde")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out", help="output directory (required)")
    parser.add_argument("--n-train", type=int, dest="n_train")
    parser.add_argument("--k-test", type=int, dest="k_test")
    parser.add_argument("--reps", type=int)
    parser.add_argument("--iters", type=int)
    parser.add_argument("--batch", type=int)
    parser.add_argument("--j-draws", type=int, dest="j_draws")
    parser.add_argument("--tau", dest="taus", help="comma list of quantile levels")
    parser.add_argument("--x", help="comma list: covariate point for density")
    parser.add_argument("--lr-g", type=float, dest="lr_g")
    parser.add_argument("--lr-d", type=float, dest="lr_d")
    parser.add_argument("--data", help="CSV of training pairs (real-data commands)")
    parser.add_argument("--schema", help="schema JSON describing --data columns")
    parser.add_argument("--checkpoint", help="generator checkpoint to reuse (density)")
    parser.add_argument("--level", type=float, help="prediction-interval level")
    parser.add_argument("--helix-sigma", type=float, dest="helix_sigma")
    parser.add_argument("--train-fraction", type=float, dest="train_fraction")
    return parser


def resolve_config(argv: list[str]) -> ExperimentConfig:
    """Merge defaults, config file, and flags into one config.

    Raises ValueError for unreadable or unknown config-file content;
    callers translate that into a config-error exit.
    """
    args = build_parser().parse_args(argv)
    merged: dict = {}
    if args.config is not None:
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                file_cfg = json.load(fh)
        except OSError as exc:
            raise ValueError(f"cannot read config file: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ValueError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(file_cfg, dict):
            raise ValueError("config file must hold a JSON object")
        # A run's resolved_config.json names its command, so it can be
        # fed straight back through --config; it must agree with the
        # command on the command line.
        file_command = file_cfg.pop("command", None)
        if file_command is not None and file_command != args.command:
            raise ValueError(
                f"config file was written for command {file_command!r}, "
                f"not {args.command!r}"
            )
        unknown = sorted(set(file_cfg) - set(_FILE_KEYS))
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        merged.update(file_cfg)
    for key in _FILE_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    for key in ("methods",):
        if isinstance(merged.get(key), str):
            merged[key] = tuple(p.strip() for p in merged[key].split(",") if p.strip())
    for key in ("taus", "x"):
        if isinstance(merged.get(key), str):
            merged[key] = _parse_float_list(merged[key])
    for key in ("methods", "taus", "x"):
        if isinstance(merged.get(key), list):
            merged[key] = tuple(merged[key])
    if isinstance(merged.get("model"), str):
        merged["model"] = merged["model"].lower()
    if "out" not in merged:
        raise ValueError("an output directory is required (--out DIR)")
    try:
        return ExperimentConfig(command=args.command, **merged)
    except TypeError as exc:
        raise ValueError(f"bad config value: {exc}") from exc


def validate(cfg: ExperimentConfig) -> list[str]:
    """All reasons the config would fail downstream; empty when runnable."""
    bad: list[str] = []
    if cfg.command not in COMMANDS:
        bad.append(f"unknown command {cfg.command!r}; choose from {', '.join(COMMANDS)}")
        return bad
    if not cfg.out:
        bad.append("output directory must be non-empty")

    has_model = cfg.model is not None
    has_data = cfg.data is not None
    if has_model and cfg.model not in simdata.MODEL_IDS:
        bad.append(
            f"unknown model id {cfg.model!r}; choose from {', '.join(simdata.MODEL_IDS)}"
        )
    if cfg.command == "simulate":
        if not has_model:
            bad.append("simulate needs --model")
        if has_data:
            bad.append("simulate generates its own data; --data is not accepted")
    elif cfg.command in _SOURCE_COMMANDS:
        if cfg.command in ("evaluate", "table", "density"):
            if not has_model:
                bad.append(f"{cfg.command} needs --model (benchmark models only)")
        elif not has_model and not has_data:
            bad.append(f"{cfg.command} needs --model or --data")
        if has_model and has_data:
            bad.append("give either --model or --data, not both")
    if has_data and cfg.schema is None:
        bad.append("--data needs --schema describing its columns")
    if cfg.schema is not None and not has_data:
        bad.append("--schema is only meaningful with --data")

    trains = cfg.command in ("train", "evaluate", "table", "coverage") or (
        cfg.command == "density" and cfg.checkpoint is None
    )
    if cfg.batch < 2 or cfg.batch % 2 != 0:
        bad.append(
            f"batch size must be even and >= 2 (half real, half fake per critic "
            f"step), got {cfg.batch}"
        )
    if trains and has_model and cfg.batch > cfg.n_train:
        bad.append(f"batch size {cfg.batch} exceeds training size {cfg.n_train}")
    if cfg.n_train < 2:
        bad.append(f"n_train must be >= 2, got {cfg.n_train}")
    if cfg.k_test < 1:
        bad.append(f"k_test must be >= 1, got {cfg.k_test}")
    if cfg.reps < 1:
        bad.append(f"reps must be >= 1, got {cfg.reps}")
    if cfg.iters < 1:
        bad.append(f"iters must be >= 1, got {cfg.iters}")
    if cfg.j_draws < 2:
        bad.append(f"j_draws must be >= 2, got {cfg.j_draws}")
    for label, lr in (("lr_g", cfg.lr_g), ("lr_d", cfg.lr_d)):
        if lr is not None and lr <= 0:
            bad.append(f"{label} must be positive, got {lr}")
    if not 0.0 < cfg.level < 1.0:
        bad.append(f"level must be in (0, 1), got {cfg.level}")
    if not 0.0 < cfg.train_fraction < 1.0:
        bad.append(f"train_fraction must be in (0, 1), got {cfg.train_fraction}")
    for tau in cfg.taus:
        if not 0.0 < tau < 1.0:
            bad.append(f"tau must be in (0, 1), got {tau}")
    if cfg.command == "table" and cfg.taus:
        bad.append("table reports mean/sd only; use evaluate for quantiles")
    unknown_methods = [m for m in cfg.methods if m not in KNOWN_METHODS]
    if unknown_methods:
        bad.append(
            f"unknown methods: {', '.join(unknown_methods)}; "
            f"choose from {', '.join(KNOWN_METHODS)}"
        )
    if not cfg.methods:
        bad.append("at least one method is required")
    if cfg.helix_sigma is not None:
        if cfg.model != "helix":
            bad.append("--helix-sigma only applies to the helix model")
        elif cfg.helix_sigma <= 0:
            bad.append(f"helix sigma must be positive, got {cfg.helix_sigma}")
    if cfg.command == "density":
        if cfg.x is None or len(cfg.x) == 0:
            bad.append("density needs --x, the covariate point to condition on")
        elif has_model and cfg.model in simdata.MODEL_IDS:
            d = simdata.make_model(cfg.model).d
            if len(cfg.x) != d:
                bad.append(
                    f"--x has {len(cfg.x)} coordinates; model {cfg.model} has {d}"
                )
    if cfg.checkpoint is not None and cfg.command != "density":
        bad.append("--checkpoint is only used by density")
    return bad


# ---------------------------------------------------------------------------
# Command implementations.  Each returns a list of artifact file names.

def _make_model(cfg: ExperimentConfig) -> simdata.SimModel:
    return simdata.make_model(cfg.model, noise_sigma=cfg.helix_sigma)


def _out_path(cfg: ExperimentConfig, name: str) -> str:
    return os.path.join(cfg.out, name)


def _load_real_data(cfg: ExperimentConfig) -> dataio.PairedDataset:
    schema = dataio.load_schema(cfg.schema)
    ds = dataio.load_csv(cfg.data, schema)
    if any(c.kind == "categorical" for c in ds.schema):
        ds = dataio.one_hot(ds)
    return ds


def _train_on(cfg: ExperimentConfig, train_ds, specs) -> tuple:
    gen_spec, disc_spec, noise_dim = specs
    tc = trainer.TrainConfig(
        noise_dim=noise_dim,
        batch_size=cfg.batch,
        total_iterations=cfg.iters,
        g_adam=trainer.AdamParams(lr=cfg.lr_g),
        d_adam=trainer.AdamParams(lr=cfg.lr_d),
        seed=ev.derive_seed(cfg.seed, 0, 2),
    )
    return trainer.train(train_ds, gen_spec, disc_spec, tc)


def _training_source(cfg: ExperimentConfig):
    """(dataset, specs) for commands that fit a sampler once."""
    if cfg.model is not None:
        model = _make_model(cfg)
        ds = simdata.generate(model, cfg.n_train, ev.derive_seed(cfg.seed, 0, 0))
        return ds, trainer.default_net_specs(model)
    ds = _load_real_data(cfg)
    return ds, trainer.tabular_net_specs(ds.d, ds.q)


def cmd_simulate(cfg: ExperimentConfig) -> list[str]:
    model = _make_model(cfg)
    ds = simdata.generate(model, cfg.n_train, cfg.seed)
    dataio.save_csv(ds, _out_path(cfg, "data.csv"))
    dataio.save_schema(ds.schema, _out_path(cfg, "data_schema.json"))
    return ["data.csv", "data_schema.json"]


def cmd_train(cfg: ExperimentConfig) -> list[str]:
    train_ds, specs = _training_source(cfg)
    gen, history = _train_on(cfg, train_ds, specs)
    trainer.save_generator(
        gen, _out_path(cfg, "generator.json"), seed=cfg.seed, step=cfg.iters
    )
    history.to_csv(_out_path(cfg, "history.csv"))
    return ["generator.json", "history.csv"]


def cmd_metrics(cfg: ExperimentConfig) -> list[str]:
    taus = cfg.taus
    if cfg.command == "evaluate" and not taus:
        taus = STANDARD_TAUS
    table = ev.run_experiment(
        _make_model(cfg),
        methods=cfg.methods,
        n_train=cfg.n_train,
        k_test=cfg.k_test,
        taus=taus,
        n_reps=cfg.reps,
        seed=cfg.seed,
        iterations=cfg.iters,
        batch_size=cfg.batch,
        lr_g=cfg.lr_g,
        lr_d=cfg.lr_d,
        j_draws=cfg.j_draws,
    )
    table.to_csv(_out_path(cfg, "metrics.csv"))
    table.to_json(_out_path(cfg, "metrics.json"))
    return ["metrics.csv", "metrics.json"]


def cmd_density(cfg: ExperimentConfig) -> list[str]:
    x = np.asarray(cfg.x, dtype=np.float64)
    written: list[str] = []
    if cfg.checkpoint is not None:
        gen, _seed, _step = trainer.load_generator(cfg.checkpoint)
        if x.shape[0] != gen.d:
            raise ValueError(
                f"--x has {x.shape[0]} coordinates; checkpoint expects {gen.d}"
            )
    else:
        train_ds, specs = _training_source(cfg)
        gen, history = _train_on(cfg, train_ds, specs)
        trainer.save_generator(
            gen, _out_path(cfg, "generator.json"), seed=cfg.seed, step=cfg.iters
        )
        history.to_csv(_out_path(cfg, "history.csv"))
        written += ["generator.json", "history.csv"]
    if gen.q != 1:
        raise ValueError("density curves are for scalar responses only")
    s = sampler.sample_conditional(
        gen, x, j_draws=cfg.j_draws, seed=ev.derive_seed(cfg.seed, 0, 3)
    )
    curve = sampler.density_curve_from_draws(s)
    sampler.export_density_csv(curve, _out_path(cfg, "density.csv"))
    sampler.export_draws_csv(s, _out_path(cfg, "draws.csv"))
    return written + ["density.csv", "draws.csv"]


def cmd_coverage(cfg: ExperimentConfig) -> list[str]:
    if cfg.model is not None:
        model = _make_model(cfg)
        if model.q != 1:
            raise ValueError("coverage study needs a scalar response")
        train_ds = simdata.generate(model, cfg.n_train, ev.derive_seed(cfg.seed, 0, 0))
        test_ds = simdata.generate(model, cfg.k_test, ev.derive_seed(cfg.seed, 0, 1))
        specs = trainer.default_net_specs(model)
    else:
        ds = _load_real_data(cfg)
        train_ds, test_ds = dataio.split(
            ds, cfg.train_fraction, seed=ev.derive_seed(cfg.seed, 0, 0)
        )
        specs = trainer.tabular_net_specs(ds.d, ds.q)
    result = ev.run_coverage_study(
        train_ds,
        test_ds,
        specs=specs,
        level=cfg.level,
        iterations=cfg.iters,
        batch_size=cfg.batch,
        lr_g=cfg.lr_g,
        lr_d=cfg.lr_d,
        j_draws=cfg.j_draws,
        seed=cfg.seed,
    )
    result.to_json(_out_path(cfg, "coverage.json"))
    lines = ["lo,hi"]
    for lo, hi in result.intervals:
        lines.append(f"{repr(float(lo))},{repr(float(hi))}")
    atomic_write_text(_out_path(cfg, "intervals.csv"), "\n".join(lines) + "\n")
    return ["coverage.json", "intervals.csv"]


_RUNNERS = {
    "simulate": cmd_simulate,
    "train": cmd_train,
    "evaluate": cmd_metrics,
    "table": cmd_metrics,
    "density": cmd_density,
    "coverage": cmd_coverage,
}


def _write_meta(cfg: ExperimentConfig, started: float, files: list[str]) -> None:
    meta = {
        "started_utc": datetime.datetime.fromtimestamp(
            started, tz=datetime.timezone.utc
        ).isoformat(),
        "duration_seconds": time.time() - started,
        "host": socket.gethostname(),
        "platform": platform.platform(),
        "package_version": __version__,
        "out_dir": os.path.abspath(cfg.out),
        "artifacts": files,
    }
    atomic_write_text(_out_path(cfg, "meta.json"), json.dumps(meta, indent=2) + "\n")


def _write_error(cfg: ExperimentConfig, exc: Exception, code: int) -> None:
    record = {
        "error": type(exc).__name__,
        "message": str(exc),
        "exit_code": code,
        "command": cfg.command,
    }
    try:
        atomic_write_text(
            _out_path(cfg, "error.json"), json.dumps(record, indent=2) + "\n"
        )
    except OSError:
        pass  # the error itself may be an unwritable output directory


def run(cfg: ExperimentConfig) -> int:
    """Execute one resolved config; returns the process exit code."""
    violations = validate(cfg)
    if violations:
        for v in violations:
            print(f"config error: {v}", file=sys.stderr)
        return EXIT_CONFIG
    if cfg.lr_g is None or cfg.lr_d is None:
        default_g, default_d = ev.default_learning_rates(cfg.model)
        cfg = dataclasses.replace(
            cfg,
            lr_g=default_g if cfg.lr_g is None else cfg.lr_g,
            lr_d=default_d if cfg.lr_d is None else cfg.lr_d,
        )
    started = time.time()
    try:
        os.makedirs(cfg.out, exist_ok=True)
        atomic_write_text(
            _out_path(cfg, "resolved_config.json"),
            json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n",
        )
        files = _RUNNERS[cfg.command](cfg)
    except TrainingDivergedError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        _write_error(cfg, exc, EXIT_DIVERGED)
        return EXIT_DIVERGED
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        _write_error(cfg, exc, EXIT_CONFIG)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        _write_error(cfg, exc, EXIT_IO)
        return EXIT_IO
    except Exception as exc:  # pragma: no cover - defensive
        traceback.print_exc()
        _write_error(cfg, exc, EXIT_UNEXPECTED)
        return EXIT_UNEXPECTED
    _write_meta(cfg, started, ["resolved_config.json"] + files)
    print(f"wrote {', '.join(files)} to {cfg.out}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = resolve_config(argv)
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
