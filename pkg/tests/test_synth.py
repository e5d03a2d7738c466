import numpy as np
import pytest

from abe.curves import stop_at_extremum
from abe.divergence import stopping_time
from abe.errors import EngineError
from abe.moments import moments_of_array
from abe.snapshots import SOURCE_VALID, TARGET, load_run
from abe.synth import (
    ScenarioSpec,
    ToyTrainSpec,
    emit_scenario,
    encode_moment_batch,
    generate_scenario,
    toy_init_params,
    toy_loss_and_grad,
    toy_train,
)
from abe.trajectory import build_trajectory


class TestScenario:
    def test_noise_free_exact_recovery(self):
        spec = ScenarioSpec(layers=4, checkpoints=11, planted_layer=1,
                            planted_moment=3, breakpoint=5, seed=0)
        source, target, truth = generate_scenario(spec)
        assert truth == (1, 3, 5)
        report = stopping_time(target, source, 10)
        assert report.diverged
        assert (report.critical_layer, report.critical_moment, report.t_hat) == truth

    def test_breakpoint_at_last_minus_one_still_detected(self):
        spec = ScenarioSpec(layers=2, checkpoints=11, planted_layer=0,
                            planted_moment=2, breakpoint=9, seed=1)
        source, target, truth = generate_scenario(spec)
        report = stopping_time(target, source, 10)
        # the window after the breakpoint holds a single point, so detection
        # leans on the two-point window that starts one checkpoint earlier
        assert report.diverged
        assert (report.critical_layer, report.critical_moment) == truth[:2]
        assert abs(report.t_hat - truth[2]) <= 1

    def test_determinism(self):
        spec = ScenarioSpec(layers=3, checkpoints=9, planted_layer=2,
                            planted_moment=1, breakpoint=4, noise_sigma=0.05, seed=7)
        a = generate_scenario(spec)
        b = generate_scenario(spec)
        assert a[0].values.tobytes() == b[0].values.tobytes()
        assert a[1].values.tobytes() == b[1].values.tobytes()

    def test_null_scenario_never_diverges(self):
        for seed in range(10):
            spec = ScenarioSpec(layers=3, checkpoints=12, seed=seed,
                                noise_sigma=0.01)
            source, target, truth = generate_scenario(spec)
            assert truth is None
            report = stopping_time(target, source, 11)
            assert not report.diverged
            assert report.t_hat == 11

    def test_spec_validation(self):
        with pytest.raises(EngineError):
            ScenarioSpec(layers=0, checkpoints=5)
        with pytest.raises(EngineError):
            ScenarioSpec(layers=1, checkpoints=5, planted_layer=0)
        with pytest.raises(EngineError):
            ScenarioSpec(layers=1, checkpoints=5, planted_layer=0,
                         planted_moment=2, breakpoint=4)
        with pytest.raises(EngineError):
            ScenarioSpec(layers=1, checkpoints=5, planted_layer=3,
                         planted_moment=2, breakpoint=2)
        with pytest.raises(EngineError):
            ScenarioSpec(layers=1, checkpoints=5, noise_sigma=-1.0)


class TestMomentEncoding:
    def test_round_trip_exact_in_band(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            g = (
                rng.uniform(-0.06, 0.06),
                10.0 + rng.uniform(-0.06, 0.06),
                30.0 + rng.uniform(-0.06, 0.06),
                rng.uniform(-0.06, 0.06),
            )
            batch = encode_moment_batch(*g)
            m = moments_of_array(batch)
            np.testing.assert_allclose(m.as_tuple(), g, rtol=0, atol=1e-12)

    def test_infeasible_vector_rejected(self):
        with pytest.raises(EngineError):
            encode_moment_batch(0.0, 1.0, 0.5, 0.0)  # m3 < m2

    def test_emitted_run_recovers_planted_truth(self, tmp_path):
        spec = ScenarioSpec(layers=3, checkpoints=12, planted_layer=2,
                            planted_moment=4, breakpoint=6, seed=11)
        truth_doc = emit_scenario(spec, tmp_path)
        run = load_run(tmp_path / "manifest.json")
        target = build_trajectory(run, TARGET)
        source = build_trajectory(run, SOURCE_VALID)
        report = stopping_time(target, source, 11)
        assert report.diverged
        assert report.critical_layer == truth_doc["planted_layer"]
        assert report.critical_moment == truth_doc["planted_moment"]
        assert report.t_hat == truth_doc["breakpoint"]

    def test_emitted_curves_peak_as_planted(self, tmp_path):
        spec = ScenarioSpec(layers=1, checkpoints=10, planted_layer=0,
                            planted_moment=1, breakpoint=4, seed=2)
        emit_scenario(spec, tmp_path)
        from abe.curves import load_curve_csv

        valid = load_curve_csv(tmp_path / "valid_curve.csv")
        target = load_curve_csv(tmp_path / "target_curve.csv")
        assert stop_at_extremum(valid) == 9
        assert stop_at_extremum(target) == 4


class TestToyTrainer:
    def test_gradient_check_central_differences(self):
        rng = np.random.default_rng(42)
        params = toy_init_params(5, (6, 4), 3, rng)
        x = rng.normal(0, 1, (12, 5))
        y = rng.integers(0, 3, 12)
        _, grads = toy_loss_and_grad(params, x, y)
        h = 1e-6
        checked = 0
        for k, (w, b) in enumerate(params):
            flat_w = w.ravel()
            for idx in range(0, flat_w.size, max(1, flat_w.size // 10)):
                orig = flat_w[idx]
                flat_w[idx] = orig + h
                up, _ = toy_loss_and_grad(params, x, y)
                flat_w[idx] = orig - h
                down, _ = toy_loss_and_grad(params, x, y)
                flat_w[idx] = orig
                numeric = (up - down) / (2 * h)
                analytic = grads[k][0].ravel()[idx]
                assert numeric == pytest.approx(analytic, rel=1e-5, abs=1e-8)
                checked += 1
        assert checked >= 30

    def test_deterministic_byte_identical_outputs(self, tmp_path):
        spec = ToyTrainSpec(seed=42, epochs=12, record_every=4,
                            n_valid=64, n_target_query=40, n_target_fit=16)
        dir_a = tmp_path / "a"
        dir_b = tmp_path / "b"
        toy_train(spec, dir_a)
        toy_train(spec, dir_b)
        files_a = sorted(p.relative_to(dir_a) for p in dir_a.rglob("*") if p.is_file())
        files_b = sorted(p.relative_to(dir_b) for p in dir_b.rglob("*") if p.is_file())
        assert files_a == files_b
        for rel in files_a:
            assert (dir_a / rel).read_bytes() == (dir_b / rel).read_bytes()

    def test_run_is_loadable_and_complete(self, tmp_path):
        spec = ToyTrainSpec(seed=3, epochs=12, record_every=4,
                            n_valid=64, n_target_query=40, n_target_fit=16)
        run, valid_curve, target_curve = toy_train(spec, tmp_path)
        assert run.checkpoints == (4, 8, 12)
        assert run.n_layers == len(spec.hidden_dims)
        snapshot = run.snapshot(TARGET, 8)
        assert snapshot.n_examples == spec.n_target_unlabelled
        assert valid_curve.checkpoint_indices.tolist() == [4, 8, 12]
        assert np.all(valid_curve.values >= 0) and np.all(valid_curve.values <= 1)

    def test_spec_validation(self):
        with pytest.raises(EngineError):
            ToyTrainSpec(seed=0, epochs=0)
        with pytest.raises(EngineError):
            ToyTrainSpec(seed=0, n_target_unlabelled=0)
        with pytest.raises(EngineError):
            ToyTrainSpec(seed=0, shift=-1.0)
        with pytest.raises(EngineError):
            ToyTrainSpec(seed=0, label_noise=1.5)
        with pytest.raises(EngineError):
            ToyTrainSpec(seed=0, epochs=8, record_every=4)
