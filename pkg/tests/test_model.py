from __future__ import annotations

import itertools
import math

import numpy as np
import pytest

from codedmec.model import (
    RequestState,
    ScenarioError,
    check_energy_feasible,
    compute_decision,
    deadline_feasible,
    expected_energy,
    local_compute_time,
    sample_requests,
    spectral_efficiency,
    state_probability,
    validate_scenario,
    zero_compute,
)
from conftest import make_scenario


class TestValidateScenario:
    def test_uniform_rows_accepted(self):
        s = make_scenario(num_devices=4, num_tasks=5, validate=False)
        assert validate_scenario(s) is s

    def test_bad_row_sum_rejected(self):
        p = np.full((2, 3), 0.3)   # rows sum to 0.9
        s = make_scenario(num_devices=2, num_tasks=3, popularity=p, validate=False)
        with pytest.raises(ScenarioError, match="popularity row sum != 1"):
            validate_scenario(s)

    def test_near_one_row_renormalized(self):
        p = np.full((1, 4), 0.25)
        p[0, 0] += 3e-8   # inside the renormalization band
        s = make_scenario(num_devices=1, num_tasks=4, popularity=p, validate=False)
        out = validate_scenario(s)
        assert abs(out.popularity.sum() - 1.0) < 1e-12

    def test_zero_slot_rejected(self):
        s = make_scenario(slot_seconds=0.0, validate=False)
        with pytest.raises(ScenarioError, match="slot_seconds must be positive"):
            validate_scenario(s)

    def test_zero_snr_rejected(self):
        s = make_scenario(validate=False)
        object.__setattr__(s, "snr_linear", np.array([1.0, 0.0, 1.0]))
        with pytest.raises(ScenarioError, match="snr_linear must be positive"):
            validate_scenario(s)


class TestSampleRequests:
    def test_single_task_degenerate(self):
        s = make_scenario(num_tasks=1)
        ss = sample_requests(s, 50, seed=1)
        assert np.all(ss.demands == 0)

    def test_sample_count(self):
        s = make_scenario()
        assert len(sample_requests(s, 1000, seed=3)) == 1000

    def test_reproducible_byte_for_byte(self):
        s = make_scenario()
        a = sample_requests(s, 200, seed=11)
        b = sample_requests(s, 200, seed=11)
        assert a.to_bytes() == b.to_bytes()
        c = sample_requests(s, 200, seed=12)
        assert a.to_bytes() != c.to_bytes()

    def test_empirical_frequencies_match_product_law(self):
        # uniform 2x2: each of the 4 joint states should appear ~1/4
        s = make_scenario(num_devices=2, num_tasks=2)
        ss = sample_requests(s, 100_000, seed=5)
        for ta, tb in itertools.product(range(2), repeat=2):
            freq = np.mean((ss.demands[:, 0] == ta) & (ss.demands[:, 1] == tb))
            assert freq == pytest.approx(0.25, abs=0.01)

    def test_nonuniform_marginals(self):
        p = np.array([[0.9, 0.1]])
        s = make_scenario(num_devices=1, num_tasks=2, popularity=p)
        ss = sample_requests(s, 50_000, seed=9)
        assert np.mean(ss.demands[:, 0] == 0) == pytest.approx(0.9, abs=0.01)

    def test_requires_positive_count(self):
        s = make_scenario()
        with pytest.raises(ValueError):
            sample_requests(s, 0, seed=1)


class TestStateProbability:
    def test_uniform_three_by_three(self):
        s = make_scenario(num_devices=3, num_tasks=3)
        q = RequestState.from_tasks([0, 1, 2], 3)
        assert state_probability(s, q) == pytest.approx(1 / 27)

    def test_single_device(self):
        p = np.array([[0.3, 0.7]])
        s = make_scenario(num_devices=1, num_tasks=2, popularity=p)
        q = RequestState.from_tasks([1], 2)
        assert state_probability(s, q) == pytest.approx(0.7)

    def test_hand_product(self):
        p = np.array([[0.2, 0.8], [0.5, 0.5]])
        s = make_scenario(num_devices=2, num_tasks=2, popularity=p)
        q = RequestState.from_tasks([1, 0], 2)
        assert state_probability(s, q) == pytest.approx(0.8 * 0.5)

    @pytest.mark.parametrize("K,F", [(2, 2), (3, 3), (4, 3), (2, 4)])
    def test_sums_to_one_over_all_states(self, K, F):
        rng = np.random.default_rng(K * 10 + F)
        p = rng.random((K, F)) + 0.05
        p /= p.sum(axis=1, keepdims=True)
        s = make_scenario(num_devices=K, num_tasks=F, popularity=p)
        total = sum(
            state_probability(s, RequestState.from_tasks(tasks, F))
            for tasks in itertools.product(range(F), repeat=K)
        )
        assert total == pytest.approx(1.0, abs=1e-9)


class TestPhysics:
    def test_unit_snr_gives_unit_efficiency(self):
        s = make_scenario(validate=False)
        object.__setattr__(s, "snr_linear", np.array([1.0, 1.0, 1.0]))
        assert spectral_efficiency(s, 0) == pytest.approx(1.0)

    def test_fifteen_db(self):
        s = make_scenario(snr_db=15.0)
        assert spectral_efficiency(s, 0) == pytest.approx(5.0279, abs=1e-3)

    def test_ten_db(self):
        s = make_scenario(snr_db=10.0)
        assert spectral_efficiency(s, 0) == pytest.approx(3.4594, abs=1e-3)

    def test_strictly_increasing_in_snr(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            lo = rng.uniform(0.01, 50.0)
            hi = lo + rng.uniform(0.01, 10.0)
            assert math.log2(1 + hi) > math.log2(1 + lo)

    def test_local_compute_time_five_ms(self):
        s = make_scenario(workload=5.0, cpu_freq=3e9)
        assert local_compute_time(s, 0, 0) == pytest.approx(5e-3)

    def test_zero_workload_zero_time(self):
        s = make_scenario(workload=[5.0, 0.0, 5.0], validate=False)
        assert local_compute_time(s, 0, 1) == 0.0

    def test_boundary_exactly_slot(self):
        s = make_scenario(workload=10.0, cpu_freq=1.5e9)
        assert local_compute_time(s, 0, 0) == pytest.approx(0.02)
        # no transmission time remains, so local compute is ruled out
        assert not deadline_feasible(s)[0, 0]


class TestExpectedEnergy:
    def test_all_zeros(self):
        s = make_scenario()
        assert expected_energy(s, zero_compute(s), 0) == 0.0

    def test_single_entry_hand_value(self):
        s = make_scenario(num_devices=1, num_tasks=100, energy_budget=150.0)
        x = np.zeros((1, 100))
        x[0, 3] = 1.0
        # 0.01 * 1e-24 * (3e9)^2 * 3e6 * 5 = 1.35 J
        assert expected_energy(s, compute_decision(x, s), 0) == pytest.approx(1.35)

    def test_all_local_within_budget(self):
        s = make_scenario(num_devices=1, num_tasks=100, energy_budget=150.0)
        x = compute_decision(np.ones((1, 100)), s)
        assert expected_energy(s, x, 0) == pytest.approx(135.0)
        assert check_energy_feasible(s, x)

    def test_linear_in_disjoint_supports(self):
        rng = np.random.default_rng(8)
        s = make_scenario(num_devices=2, num_tasks=6)
        half = rng.permutation(6)
        x1 = np.zeros((2, 6))
        x2 = np.zeros((2, 6))
        x1[:, half[:3]] = rng.random((2, 3))
        x2[:, half[3:]] = rng.random((2, 3))
        for k in range(2):
            assert expected_energy(s, x1 + x2, k) == pytest.approx(
                expected_energy(s, x1, k) + expected_energy(s, x2, k)
            )


class TestComputeDecision:
    def test_infeasible_pair_rejected(self):
        s = make_scenario(workload=[5.0, 20.0, 5.0])   # Iw/g = 20 ms at task 1
        x = np.zeros((3, 3))
        x[0, 1] = 1.0
        with pytest.raises(ValueError, match="cannot compute task 1"):
            compute_decision(x, s)

    def test_relaxed_bounds(self):
        s = make_scenario()
        with pytest.raises(ValueError):
            compute_decision(np.full((3, 3), 1.5), s, relaxed=True)

    def test_binary_entries_only(self):
        s = make_scenario()
        with pytest.raises(ValueError, match="binary"):
            compute_decision(np.full((3, 3), 0.5), s)
