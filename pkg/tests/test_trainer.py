import numpy as np
import pytest

from gcds import dataio as dio
from gcds import divergence as dv
from gcds import nn, sampler, simdata, trainer


def toy_dataset(n=64, d=1, seed=0, y_fn=None):
    schema = tuple(
        [dio.ColumnSchema(f"x{j + 1}", "continuous", "covariate") for j in range(d)]
        + [dio.ColumnSchema("y", "continuous", "response")]
    )
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    Y = rng.standard_normal((n, 1)) if y_fn is None else y_fn(X)
    return dio.PairedDataset(X, Y, schema, "toy")


def tiny_specs(d=1, q=1, m=1, hidden=(8,)):
    return nn.NetworkSpec(m + d, hidden, q), nn.NetworkSpec(d + q, hidden, 1)


class TestTrainConfig:
    def test_odd_batch_rejected_with_reason(self):
        with pytest.raises(ValueError, match="real and fake"):
            trainer.TrainConfig(noise_dim=1, batch_size=7)

    def test_other_bounds(self):
        with pytest.raises(ValueError):
            trainer.TrainConfig(noise_dim=0)
        with pytest.raises(ValueError):
            trainer.TrainConfig(noise_dim=1, batch_size=0)
        with pytest.raises(ValueError):
            trainer.TrainConfig(noise_dim=1, total_iterations=0)
        with pytest.raises(ValueError):
            trainer.TrainConfig(noise_dim=1, d_steps_per_g_step=0)


class TestTrainValidation:
    def test_generator_width_must_match(self):
        ds = toy_dataset()
        gen_spec, disc_spec = tiny_specs(m=2)  # noise_dim below says 1
        cfg = trainer.TrainConfig(noise_dim=1, batch_size=16, total_iterations=1)
        with pytest.raises(ValueError, match="input_dim"):
            trainer.train(ds, gen_spec, disc_spec, cfg)

    def test_critic_output_must_be_scalar(self):
        ds = toy_dataset()
        gen_spec = nn.NetworkSpec(2, (8,), 1)
        disc_spec = nn.NetworkSpec(2, (8,), 2)
        cfg = trainer.TrainConfig(noise_dim=1, batch_size=16, total_iterations=1)
        with pytest.raises(ValueError, match="output_dim"):
            trainer.train(ds, gen_spec, disc_spec, cfg)

    def test_batch_cannot_exceed_n(self):
        ds = toy_dataset(n=10)
        gen_spec, disc_spec = tiny_specs()
        cfg = trainer.TrainConfig(noise_dim=1, batch_size=16, total_iterations=1)
        with pytest.raises(ValueError, match="exceeds"):
            trainer.train(ds, gen_spec, disc_spec, cfg)


class TestDeterminism:
    def test_repeat_run_is_bit_identical(self):
        ds = toy_dataset(n=64)
        gen_spec, disc_spec = tiny_specs()
        cfg = trainer.TrainConfig(noise_dim=1, batch_size=16, total_iterations=120, seed=5)
        gen_a, hist_a = trainer.train(ds, gen_spec, disc_spec, cfg)
        gen_b, hist_b = trainer.train(ds, gen_spec, disc_spec, cfg)
        assert np.array_equal(nn.flatten_params(gen_a.net), nn.flatten_params(gen_b.net))
        assert np.array_equal(hist_a.iterations, hist_b.iterations)
        assert np.array_equal(hist_a.d_objective, hist_b.d_objective)
        assert np.array_equal(hist_a.g_term, hist_b.g_term)

    def test_seed_changes_the_run(self):
        ds = toy_dataset(n=64)
        gen_spec, disc_spec = tiny_specs()
        cfg_a = trainer.TrainConfig(noise_dim=1, batch_size=16, total_iterations=50, seed=5)
        cfg_b = trainer.TrainConfig(noise_dim=1, batch_size=16, total_iterations=50, seed=6)
        gen_a, _ = trainer.train(ds, gen_spec, disc_spec, cfg_a)
        gen_b, _ = trainer.train(ds, gen_spec, disc_spec, cfg_b)
        assert not np.array_equal(nn.flatten_params(gen_a.net), nn.flatten_params(gen_b.net))


class TestLoopStructure:
    def test_probe_sees_d_steps_then_g_step(self):
        ds = toy_dataset(n=32)
        gen_spec, disc_spec = tiny_specs()
        cfg = trainer.TrainConfig(
            noise_dim=1, batch_size=8, total_iterations=6, d_steps_per_g_step=2, seed=1
        )
        events = []
        trainer.train(ds, gen_spec, disc_spec, cfg, probe=events.append)
        per_round = len(events) // 6
        assert per_round == 3
        for r in range(6):
            phases = [e["phase"] for e in events[r * 3:(r + 1) * 3]]
            assert phases == ["d", "d", "g"]
            assert all(e["iteration"] == r + 1 for e in events[r * 3:(r + 1) * 3])

    def test_probe_objective_matches_recomputation(self):
        ds = toy_dataset(n=32)
        gen_spec, disc_spec = tiny_specs()
        cfg = trainer.TrainConfig(noise_dim=1, batch_size=8, total_iterations=5, seed=2)
        events = []
        trainer.train(ds, gen_spec, disc_spec, cfg, probe=events.append)
        for e in events:
            if e["phase"] != "d":
                continue
            redo = dv.empirical_dual(dv.DivergenceKind.KL, e["d_fake"], e["d_real"])
            assert redo.value == e["objective"]
            assert e["d_fake"].shape == (4,) and e["d_real"].shape == (4,)

    def test_history_records_last_d_and_g_of_round(self):
        ds = toy_dataset(n=32)
        gen_spec, disc_spec = tiny_specs()
        cfg = trainer.TrainConfig(noise_dim=1, batch_size=8, total_iterations=200, seed=3)
        events = []
        gen, hist = trainer.train(ds, gen_spec, disc_spec, cfg, probe=events.append)
        assert list(hist.iterations) == [100, 200]
        by_round = {}
        for e in events:
            by_round.setdefault(e["iteration"], []).append(e)
        for k, it in enumerate(hist.iterations):
            d_events = [e for e in by_round[it] if e["phase"] == "d"]
            g_events = [e for e in by_round[it] if e["phase"] == "g"]
            assert hist.d_objective[k] == d_events[-1]["objective"]
            assert hist.g_term[k] == g_events[-1]["g_term"]

    def test_history_csv_round_trip(self, tmp_path):
        hist = trainer.TrainHistory(
            np.array([100, 200]), np.array([-1.5, -1.2]), np.array([0.3, 0.1])
        )
        path = str(tmp_path / "history.csv")
        hist.to_csv(path)
        lines = open(path).read().splitlines()
        assert lines[0] == "iteration,d_objective,g_term"
        assert lines[1] == "100,-1.5,0.3"


class TestNormalization:
    def test_fit_standardizes(self):
        rng = np.random.default_rng(0)
        X = 3.0 + 2.0 * rng.standard_normal((500, 2))
        Y = -1.0 + 0.5 * rng.standard_normal((500, 1))
        norm = trainer.Normalization.fit(X, Y)
        assert np.allclose(norm.x_mean, X.mean(axis=0))
        assert np.allclose(norm.x_scale, X.std(axis=0))
        assert np.allclose(norm.y_scale, Y.std(axis=0))

    def test_constant_column_gets_unit_scale(self):
        X = np.ones((10, 1))
        Y = np.zeros((10, 1))
        norm = trainer.Normalization.fit(X, Y)
        assert norm.x_scale[0] == 1.0
        assert norm.y_scale[0] == 1.0

    def test_trained_generator_carries_data_statistics(self):
        ds = toy_dataset(n=64, seed=9)
        gen_spec, disc_spec = tiny_specs()
        cfg = trainer.TrainConfig(noise_dim=1, batch_size=16, total_iterations=2, seed=0)
        gen, _ = trainer.train(ds, gen_spec, disc_spec, cfg)
        assert np.allclose(gen.norm.x_mean, ds.X.mean(axis=0))
        assert np.allclose(gen.norm.y_mean, ds.Y.mean(axis=0))
        assert gen.d == 1 and gen.q == 1


class TestDivergenceHandling:
    def test_non_finite_objective_reports_iteration(self, monkeypatch):
        ds = toy_dataset(n=32)
        gen_spec, disc_spec = tiny_specs()
        cfg = trainer.TrainConfig(noise_dim=1, batch_size=8, total_iterations=5, seed=1)

        calls = {"n": 0}
        real = dv.empirical_dual

        def flaky(kind, d_fake, d_real):
            calls["n"] += 1
            if calls["n"] == 3:
                return dv.DualObjectiveValue(float("nan"), 0.0, 0.0)
            return real(kind, d_fake, d_real)

        monkeypatch.setattr(trainer, "empirical_dual", flaky)
        with pytest.raises(trainer.TrainingDivergedError) as exc:
            trainer.train(ds, gen_spec, disc_spec, cfg)
        assert exc.value.iteration == 3
        assert "iteration 3" in str(exc.value)

    def test_optimizer_error_is_wrapped(self, monkeypatch):
        ds = toy_dataset(n=32)
        gen_spec, disc_spec = tiny_specs()
        cfg = trainer.TrainConfig(noise_dim=1, batch_size=8, total_iterations=5, seed=1)

        def boom(state, net, grads):
            raise nn.OptimizerError("non-finite gradient", step=1)

        monkeypatch.setattr(trainer.nn, "adam_step", boom)
        with pytest.raises(trainer.TrainingDivergedError) as exc:
            trainer.train(ds, gen_spec, disc_spec, cfg)
        assert exc.value.iteration == 1


class TestEndToEnd:
    def test_degenerate_response_collapses_to_zero(self):
        # Y identically 0: after 2000 rounds the sampler must emit draws
        # with mean (and spread) near 0 at any covariate value.
        ds = toy_dataset(n=500, seed=0, y_fn=lambda X: np.zeros((X.shape[0], 1)))
        gen_spec = nn.NetworkSpec(3, (16,), 1)
        disc_spec = nn.NetworkSpec(2, (16,), 1)
        cfg = trainer.TrainConfig(
            noise_dim=2,
            batch_size=64,
            total_iterations=2000,
            seed=0,
            g_adam=trainer.AdamParams(lr=1e-3),
            d_adam=trainer.AdamParams(lr=1e-3),
        )
        gen, _ = trainer.train(ds, gen_spec, disc_spec, cfg)
        s = sampler.sample_conditional(gen, np.array([0.3]), j_draws=2000, seed=1)
        assert abs(float(s.draws.mean())) <= 0.1
        assert float(s.draws.std()) <= 0.1


class TestArchitectureDefaults:
    def test_benchmark_specs(self):
        gen, disc, m = trainer.default_net_specs(simdata.make_model("m1"))
        assert (gen.input_dim, gen.hidden_widths, gen.output_dim) == (8, (50,), 1)
        assert (disc.input_dim, disc.hidden_widths, disc.output_dim) == (6, (50, 25), 1)
        assert m == 3
        gen4, _, m4 = trainer.default_net_specs(simdata.make_model("m4"))
        assert (gen4.input_dim, gen4.hidden_widths) == (5, (40, 15))
        assert m4 == 4
        genh, disch, _ = trainer.default_net_specs(simdata.make_model("helix"))
        assert genh.output_dim == 2
        assert disch.input_dim == 3

    def test_tabular_specs(self):
        gen, disc, m = trainer.tabular_net_specs(10)
        assert gen.input_dim == 15 and disc.input_dim == 11
        assert m == 5


class TestCheckpoints:
    def test_round_trip_bit_exact(self, tmp_path):
        ds = toy_dataset(n=64, seed=4)
        gen_spec, disc_spec = tiny_specs()
        cfg = trainer.TrainConfig(noise_dim=1, batch_size=16, total_iterations=10, seed=7)
        gen, _ = trainer.train(ds, gen_spec, disc_spec, cfg)
        path = str(tmp_path / "gen.json")
        trainer.save_generator(gen, path, seed=7, step=10)
        loaded, seed, step = trainer.load_generator(path)
        assert (seed, step) == (7, 10)
        assert np.array_equal(nn.flatten_params(loaded.net), nn.flatten_params(gen.net))
        assert np.array_equal(loaded.norm.x_mean, gen.norm.x_mean)
        assert np.array_equal(loaded.norm.y_scale, gen.norm.y_scale)
        assert loaded.noise_dim == gen.noise_dim
        a = sampler.sample_conditional(gen, np.array([0.5]), j_draws=32, seed=3)
        b = sampler.sample_conditional(loaded, np.array([0.5]), j_draws=32, seed=3)
        assert np.array_equal(a.draws, b.draws)

    def test_wrong_format_rejected(self, tmp_path):
        path = tmp_path / "not_gen.json"
        path.write_text('{"format": "something-else"}')
        with pytest.raises(ValueError, match="checkpoint"):
            trainer.load_generator(str(path))
