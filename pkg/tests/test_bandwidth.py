from __future__ import annotations

import itertools
import math

import numpy as np
import pytest

from codedmec.bandwidth import (
    DeadlineError,
    average_bandwidth,
    case_rates,
    exact_average_bandwidth,
    breakdown_records,
    sampled_state_values,
    state_bandwidth,
)
from codedmec.delivery import derive_t, no_cache
from codedmec.model import (
    RequestState,
    SampleSet,
    compute_decision,
    sample_requests,
    zero_compute,
)
from conftest import make_scenario

A, B, C = 0, 1, 2


def example_one(s):
    cd = derive_t(np.ones(3, dtype=np.int64), 1, s)
    x = np.zeros((3, 3))
    x[1, B] = 1.0
    x[2, C] = 1.0
    return cd, compute_decision(x, s), RequestState.from_tasks([A, B, C], 3)


def samples_from(states, num_tasks):
    return SampleSet(demands=np.asarray(states, dtype=np.int64), num_tasks=num_tasks, seed=0)


class TestCaseRates:
    def test_empty_cases_contribute_zero(self, example_one_scenario):
        s = example_one_scenario
        cd = no_cache(s)
        x = compute_decision(np.ones((3, 3)), s)
        q = RequestState.from_tasks([A, B, C], 3)
        br = case_rates(s, cd, x, q)
        # everything ships whole inputs: no coded group, no output group
        assert br.coded.rate == 0.0 and br.coded.chan == 0.0
        assert br.whole_output == {}
        assert set(br.whole_input) == {A, B, C}

    def test_example_one_coded_rate_need(self, example_one_scenario):
        s = example_one_scenario
        cd, x, q = example_one(s)
        br = case_rates(s, cd, x, q)
        # coded size is one full input; 5 ms of the 20 ms slot is compute
        assert br.coded.rate == pytest.approx(3e6 / 0.015)
        assert br.coded.members == (1, 2)

    def test_whole_output_rate_need(self, example_one_scenario):
        s = example_one_scenario
        cd, x, q = example_one(s)
        br = case_rates(s, cd, x, q)
        assert br.whole_output[A].rate == pytest.approx(6e6 / 0.02)
        assert br.whole_output[A].members == (0,)

    def test_every_request_in_exactly_one_case(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            K = int(rng.integers(1, 6))
            F = int(rng.integers(1, 6))
            d = int(rng.integers(0, 2))
            s = make_scenario(num_devices=K, num_tasks=F,
                              cache_bits=float(rng.integers(0, 5)) * 3e6)
            cd = derive_t((rng.random(F) < 0.5).astype(np.int64), d, s)
            x = compute_decision((rng.random((K, F)) < 0.5).astype(float), s)
            q = RequestState.from_tasks(rng.integers(0, F, size=K), F)
            br = case_rates(s, cd, x, q)
            seen = list(br.coded.members)
            for g in br.whole_input.values():
                seen.extend(g.members)
            for g in br.whole_output.values():
                seen.extend(g.members)
            assert sorted(seen) == list(range(K))

    def test_rate_dominates_every_member(self):
        rng = np.random.default_rng(5)
        s = make_scenario(num_devices=4, num_tasks=3, cache_bits=6e6,
                          workload=[5.0, 7.0, 9.0], cpu_freq=[2e9, 3e9, 4e9, 2.5e9])
        cd = derive_t(np.array([1, 1, 0]), 1, s)
        for _ in range(30):
            x = compute_decision((rng.random((4, 3)) < 0.5).astype(float), s)
            q = RequestState.from_tasks(rng.integers(0, 3, size=4), 3)
            br = case_rates(s, cd, x, q)
            for f, g in br.whole_input.items():
                per_member = [s.input_bits / (s.slot_seconds - s.input_bits * s.workload[f] / s.cpu_freq[k]) for k in g.members]
                assert g.rate == pytest.approx(max(per_member))
                assert all(g.rate >= r - 1e-9 for r in per_member)

    def test_deadline_violation_is_named(self):
        s = make_scenario(workload=[5.0, 20.0, 5.0])
        x = np.zeros((3, 3))
        x[0, 1] = 1.0
        bad = compute_decision(np.zeros((3, 3)), s)
        object.__setattr__(bad, "matrix", x)
        q = RequestState.from_tasks([1, 0, 0], 3)
        with pytest.raises(DeadlineError, match="device 0 .*task 1"):
            case_rates(s, no_cache(s), bad, q)


class TestStateBandwidth:
    def test_single_output_unicast(self):
        # one device, one task, nothing cached or computed: 300 Mbit/s at
        # spectral efficiency 5 costs 60 MHz
        s = make_scenario(num_devices=1, num_tasks=1, cache_bits=0.0, validate=False)
        object.__setattr__(s, "snr_linear", np.array([2.0**5 - 1.0]))
        q = RequestState.from_tasks([0], 1)
        sb = state_bandwidth(s, no_cache(s), zero_compute(s), q)
        assert sb.value == pytest.approx(60e6)

    def test_whole_library_cached_costs_nothing(self):
        s = make_scenario(cache_bits=100e6)
        cd = derive_t(np.ones(3, dtype=np.int64), 1, s)
        x = compute_decision(np.ones((3, 3)), s)
        q = RequestState.from_tasks([0, 1, 2], 3)
        assert state_bandwidth(s, cd, x, q).value == 0.0

    def test_example_one_composition(self, example_one_scenario):
        s = example_one_scenario
        cd, x, q = example_one(s)
        inv = 1.0 / np.log2(1.0 + s.snr_linear)
        expected = (3e6 / 0.015) * max(inv[1], inv[2]) + (6e6 / 0.02) * inv[0]
        assert state_bandwidth(s, cd, x, q).value == pytest.approx(expected, rel=1e-12)

    def test_value_matches_breakdown_sum(self, example_one_scenario):
        s = example_one_scenario
        cd, x, q = example_one(s)
        sb = state_bandwidth(s, cd, x, q)
        assert sb.value == pytest.approx(sb.breakdown.value(), rel=1e-9)


class TestAverageBandwidth:
    def test_identical_states_collapse_to_single_value(self, example_one_scenario):
        s = example_one_scenario
        cd, x, q = example_one(s)
        ss = samples_from([q.task_ids] * 40, 3)
        assert average_bandwidth(s, cd, x, ss) == pytest.approx(
            state_bandwidth(s, cd, x, q).value
        )

    def test_vectorized_path_matches_per_state_path(self):
        rng = np.random.default_rng(11)
        for trial in range(20):
            K = int(rng.integers(1, 5))
            F = int(rng.integers(1, 5))
            d = int(rng.integers(0, 2))
            s = make_scenario(
                num_devices=K, num_tasks=F,
                cache_bits=float(rng.integers(0, 4)) * 3e6,
                snr_db=list(10 + 10 * rng.random(K)),
                workload=list(5 + 5 * rng.random(F)),
            )
            cd = derive_t((rng.random(F) < 0.5).astype(np.int64), d, s)
            x = compute_decision((rng.random((K, F)) < 0.5).astype(float), s)
            ss = sample_requests(s, 50, seed=trial)
            fast = sampled_state_values(s, cd, x, ss.demands)
            slow = [
                state_bandwidth(s, cd, x, RequestState.from_tasks(row, F)).value
                for row in ss.demands
            ]
            np.testing.assert_allclose(fast, slow, rtol=1e-12)

    def test_sampled_mean_approaches_exact_expectation(self):
        s = make_scenario(num_devices=2, num_tasks=2, cache_bits=3e6)
        cd = derive_t(np.array([1, 0]), 1, s)
        x = compute_decision(np.array([[1.0, 0.0], [1.0, 1.0]]), s)
        exact = exact_average_bandwidth(s, cd, x)
        ss = sample_requests(s, 40_000, seed=2)
        assert average_bandwidth(s, cd, x, ss) == pytest.approx(exact, rel=0.02)

    def test_doubling_output_doubles_traditional(self):
        s1 = make_scenario()
        s2 = make_scenario(output_bits=12e6)
        ss1 = sample_requests(s1, 100, seed=3)
        v1 = average_bandwidth(s1, no_cache(s1), zero_compute(s1), ss1)
        v2 = average_bandwidth(s2, no_cache(s2), zero_compute(s2), ss1)
        assert v2 == pytest.approx(2 * v1, rel=1e-12)

    def test_monotone_in_snr(self):
        s = make_scenario(snr_db=[10.0, 12.0, 14.0])
        better = make_scenario(snr_db=[11.0, 12.0, 14.0])
        cd = derive_t(np.array([1, 1, 0]), 1, s)
        x = compute_decision(np.eye(3), s)
        ss = sample_requests(s, 200, seed=4)
        assert average_bandwidth(better, cd, x, ss) <= average_bandwidth(s, cd, x, ss)

    def test_no_cache_no_compute_types_agree(self):
        rng = np.random.default_rng(13)
        for _ in range(10):
            K = int(rng.integers(1, 5))
            F = int(rng.integers(1, 5))
            s = make_scenario(num_devices=K, num_tasks=F,
                              snr_db=list(10 + 10 * rng.random(K)))
            ss = sample_requests(s, 100, seed=1)
            x = zero_compute(s)
            v_in = average_bandwidth(s, no_cache(s, d=1), x, ss)
            v_out = average_bandwidth(s, no_cache(s, d=0), x, ss)
            assert v_in == pytest.approx(v_out, rel=1e-12)

    def test_breakdown_records_are_tabular(self, example_one_scenario):
        s = example_one_scenario
        cd, x, q = example_one(s)
        ss = samples_from([q.task_ids] * 3, 3)
        recs = breakdown_records(s, cd, x, ss)
        assert len(recs) == 3
        assert recs[0]["coded_members"] == 2
        assert recs[0]["value_hz"] == pytest.approx(state_bandwidth(s, cd, x, q).value)
