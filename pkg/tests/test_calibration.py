import itertools
import math

import numpy as np
import pytest

from zparity.calibration import (
    NoiseParams,
    ReadoutRecords,
    fit_readout,
    load_config,
    log_likelihood,
    save_config,
    simulate_repeated_readout,
)
from zparity.errors import ConfigError
from zparity.instrument import ReadoutModel


def enumeration_log_likelihood(records, model, init_fidelities=(1.0, 1.0)):
    """Brute-force likelihood over all hidden-state paths; test-side oracle."""
    table = model.table
    if records.prepared == "0":
        pi = [init_fidelities[0], 1 - init_fidelities[0]]
    elif records.prepared == "1":
        pi = [1 - init_fidelities[1], init_fidelities[1]]
    else:
        pi = [0.5, 0.5]
    total = 0.0
    for trial in np.asarray(records.trials):
        prob = 0.0
        for path in itertools.product((0, 1), repeat=4):
            term = pi[path[0]]
            for t, a in enumerate(trial):
                term *= table[path[t], a, path[t + 1]]
            prob += term
        if prob <= 0.0:
            return float("-inf")
        total += math.log(prob)
    return total


NOISELESS = ReadoutModel.from_fidelities(1.0, 1.0, 1.0, 1.0)
TRUTH = ReadoutModel.from_fidelities(0.95, 0.995, 0.943, 0.991)


def truth_params(**kwargs) -> NoiseParams:
    return NoiseParams(readout=TRUTH, init_fid_0=1.0, init_fid_1=1.0, **kwargs)


class TestConfig:
    def test_empty_file_gives_defaults(self, tmp_path):
        path = tmp_path / "empty.toml"
        path.write_text("")
        params = load_config(path)
        assert params.readout.same_state_prob(0) == pytest.approx(0.943)
        assert params.readout.same_state_prob(1) == pytest.approx(0.991)
        assert params.t2star == pytest.approx((9.9, 11.2, 17.3))
        assert params.total_time == pytest.approx(10.0)

    def test_out_of_range_key_named(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("[readout]\nq0 = 1.2\n")
        with pytest.raises(ConfigError, match="readout.q0"):
            load_config(path)

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("[readout]\nq7 = 0.5\n")
        with pytest.raises(ConfigError, match="readout.q7"):
            load_config(path)

    def test_unknown_section_rejected(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("[lasers]\npower = 1\n")
        with pytest.raises(ConfigError, match="lasers"):
            load_config(path)

    def test_gate_probability_error_named(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("[gates]\np_gate = 1.5\n")
        with pytest.raises(ConfigError, match="gates.p_gate"):
            load_config(path)

    def test_nonpositive_time_error_named(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("[t2star]\ntimes_ms = [9.9, 0.0, 17.3]\n")
        with pytest.raises(ConfigError, match="t2star.times_ms"):
            load_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "nope.toml")

    def test_round_trip_is_lossless(self, tmp_path, tuned_params):
        path = tmp_path / "roundtrip.toml"
        save_config(tuned_params, path)
        loaded = load_config(path)
        np.testing.assert_array_equal(loaded.readout.table, tuned_params.readout.table)
        assert loaded.readout.dephase_on_flip == tuned_params.readout.dephase_on_flip
        for field in ("init_fid_0", "init_fid_1", "p_gate", "p_echo", "t2star",
                      "segment_time", "total_time", "phi0", "phi1"):
            assert getattr(loaded, field) == getattr(tuned_params, field)

    def test_ideal_config_round_trip_with_inf(self, tmp_path, ideal_params):
        path = tmp_path / "ideal.toml"
        save_config(ideal_params, path)
        assert load_config(path).t2star == (math.inf, math.inf, math.inf)


class TestSimulateRepeatedReadout:
    def test_noiseless_prepared_zero_all_zero(self):
        params = NoiseParams(readout=NOISELESS, init_fid_0=1.0, init_fid_1=1.0)
        records = simulate_repeated_readout(params, 1000, "0", seed=1)
        assert not records.trials.any()

    def test_first_two_readouts_zero_fraction_matches_q0(self):
        # perfect assignment, perfect init: P(r1=0, r2=0 | prepared 0) = q0
        model = ReadoutModel.from_fidelities(1.0, 1.0, 0.943, 1.0)
        params = NoiseParams(readout=model, init_fid_0=1.0, init_fid_1=1.0)
        n = 100_000
        records = simulate_repeated_readout(params, n, "0", seed=2)
        frac = float(np.mean((records.trials[:, 0] == 0) & (records.trials[:, 1] == 0)))
        se = math.sqrt(0.943 * (1 - 0.943) / n)
        assert abs(frac - 0.943) < 5 * se

    def test_mixed_first_readout_marginal(self):
        f0, f1 = 0.95, 0.995
        model = ReadoutModel.from_fidelities(f0, f1, 0.943, 0.991)
        params = NoiseParams(readout=model)
        n = 100_000
        records = simulate_repeated_readout(params, n, "mixed", seed=3)
        expected = (f0 + 1 - f1) / 2
        frac = float(np.mean(records.trials[:, 0] == 0))
        se = math.sqrt(expected * (1 - expected) / n)
        assert abs(frac - expected) < 5 * se

    def test_deterministic_given_seed(self):
        params = truth_params()
        a = simulate_repeated_readout(params, 500, "mixed", seed=9)
        b = simulate_repeated_readout(params, 500, "mixed", seed=9)
        np.testing.assert_array_equal(a.trials, b.trials)

    def test_csv_round_trip(self):
        records = simulate_repeated_readout(truth_params(), 50, "mixed", seed=4)
        back = ReadoutRecords.from_csv(records.to_csv())
        np.testing.assert_array_equal(back.trials, records.trials)
        assert back.prepared == records.prepared


class TestLogLikelihood:
    def test_certain_observation_scores_zero(self):
        records = ReadoutRecords(trials=np.zeros((1, 3), dtype=np.uint8), prepared="0")
        assert log_likelihood(records, NOISELESS) == pytest.approx(0.0, abs=1e-15)

    def test_impossible_observation_gives_minus_infinity(self):
        records = ReadoutRecords(trials=np.array([[1, 0, 0]], dtype=np.uint8), prepared="0")
        assert log_likelihood(records, NOISELESS) == float("-inf")

    def test_forward_recursion_matches_path_enumeration(self):
        rng = np.random.default_rng(12)
        records = simulate_repeated_readout(truth_params(), 200, "mixed", seed=13)
        for _ in range(100):
            f0, f1, q0, q1 = rng.uniform(0.6, 0.999, size=4)
            candidate = ReadoutModel.from_fidelities(f0, f1, q0, q1)
            fast = log_likelihood(records, candidate)
            slow = enumeration_log_likelihood(records, candidate)
            assert fast == pytest.approx(slow, abs=1e-12 * max(1.0, abs(slow)))

    def test_generating_point_is_grid_maximum(self):
        records = simulate_repeated_readout(truth_params(), 100_000, "mixed", seed=21)
        base = np.array([0.95, 0.995, 0.943, 0.991])
        best = log_likelihood(records, ReadoutModel.from_fidelities(*base))
        for i in range(4):
            for delta in (-0.02, 0.02):
                shifted = base.copy()
                shifted[i] = np.clip(shifted[i] + delta, 0.01, 0.999)
                value = log_likelihood(records, ReadoutModel.from_fidelities(*shifted))
                assert value < best

    def test_corruption_lowers_likelihood(self):
        records = simulate_repeated_readout(truth_params(), 20_000, "mixed", seed=22)
        clean = log_likelihood(records, TRUTH)
        rng = np.random.default_rng(23)
        corrupted = np.array(records.trials)
        mask = rng.random(corrupted.shape) < 0.10
        corrupted[mask] ^= 1
        noisy_records = ReadoutRecords(trials=corrupted, prepared="mixed")
        assert log_likelihood(noisy_records, TRUTH) < clean


class TestFitReadout:
    def test_recovery_within_tolerance(self):
        records = simulate_repeated_readout(truth_params(), 200_000, "mixed", seed=31)
        fit = fit_readout(records, TRUTH, seed=31)
        truth = {"f0": 0.95, "f1": 0.995, "q0": 0.943, "q1": 0.991}
        for key, value in truth.items():
            assert abs(fit.fidelities[key] - value) < 0.01
            assert fit.std_errors[key] == pytest.approx(fit.std_errors[key])  # finite

    def test_noiseless_records_fit_to_boundary(self):
        params = NoiseParams(readout=NOISELESS, init_fid_0=1.0, init_fid_1=1.0)
        records = simulate_repeated_readout(params, 5000, "mixed", seed=32)
        fit = fit_readout(records, ReadoutModel.from_fidelities(0.9, 0.9, 0.9, 0.9), seed=32)
        for value in fit.fidelities.values():
            assert value > 1 - 1e-3

    def test_deterministic(self):
        records = simulate_repeated_readout(truth_params(), 20_000, "mixed", seed=33)
        first = fit_readout(records, TRUTH, seed=33)
        second = fit_readout(records, TRUTH, seed=33)
        assert first.fidelities == second.fidelities
        assert first.restart_index == second.restart_index

    def test_warns_on_few_trials(self):
        records = simulate_repeated_readout(truth_params(), 100, "mixed", seed=34)
        with pytest.warns(UserWarning, match="trials"):
            fit_readout(records, TRUTH, seed=34, n_restarts=2)

    def test_three_sigma_coverage(self):
        # simulate -> fit round trip: truth within 3 reported standard errors
        # in at least 95 of 100 seeded repetitions
        truth = {"f0": 0.95, "f1": 0.995, "q0": 0.943, "q1": 0.991}
        hits = 0
        for seed in range(100):
            records = simulate_repeated_readout(truth_params(), 100_000, "mixed", seed=seed)
            fit = fit_readout(records, TRUTH, seed=seed, n_restarts=3)
            ok = all(
                abs(fit.fidelities[k] - truth[k]) <= 3 * fit.std_errors[k] for k in truth
            )
            hits += ok
        assert hits >= 95


class TestParamValidation:
    def test_negative_time_rejected(self):
        with pytest.raises(ConfigError, match="t2star"):
            NoiseParams(readout=TRUTH, t2star=(1.0, -1.0, 1.0))

    def test_bad_probability_rejected(self):
        with pytest.raises(ConfigError, match="p_gate"):
            NoiseParams(readout=TRUTH, p_gate=1.5)

    def test_for_schedule_divides_total_time(self, tuned_params):
        assert tuned_params.for_schedule(4).segment_time == pytest.approx(2.5)
