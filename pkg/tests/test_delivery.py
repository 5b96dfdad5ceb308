from __future__ import annotations

import itertools
from fractions import Fraction
from math import comb

import numpy as np
import pytest

from codedmec.delivery import (
    CacheDecision,
    DeliveryError,
    Subfile,
    build_messages,
    coded_rate,
    coded_rate_oracle,
    count_served,
    decode,
    derive_t,
    format_delivery_trace,
    no_cache,
    place,
    served_devices,
)
from codedmec.model import RequestState, compute_decision
from conftest import make_scenario

A, B, C = 0, 1, 2


def example_one_decisions(s):
    cd = derive_t(np.ones(3, dtype=np.int64), 1, s)
    x = np.zeros((3, 3))
    x[1, B] = 1.0
    x[2, C] = 1.0
    return cd, compute_decision(x, s), RequestState.from_tasks([A, B, C], 3)


class TestDeriveT:
    def test_example_one_split(self, example_one_scenario):
        cd = derive_t(np.ones(3, dtype=np.int64), 1, example_one_scenario)
        assert cd.share_count == 1
        assert cd.num_cached == 3

    def test_zero_cache_resets_mask(self):
        s = make_scenario(cache_bits=0.0)
        cd = derive_t(np.array([1, 0, 1]), 1, s)
        assert cd.share_count == 0
        assert cd.num_cached == 0
        assert not cd.mask.any()

    def test_oversized_split_clamps_to_fleet(self):
        s = make_scenario(cache_bits=10 * 3e6)
        cd = derive_t(np.array([1, 0, 0]), 1, s)
        # raw floor gives 30; whole files cached at every device
        assert cd.share_count == 3

    def test_output_type_uses_output_size(self):
        s = make_scenario(cache_bits=6e6)
        assert derive_t(np.array([1, 0, 0]), 0, s).share_count == 3
        assert derive_t(np.array([1, 1, 1]), 0, s).share_count == 1

    def test_floor_is_exact_near_integer_ratio(self):
        # C*K/(N*I) lands exactly on 2: float rounding must not pull it to 1
        s = make_scenario(num_devices=3, cache_bits=2e6, input_bits=1e6)
        cd = derive_t(np.array([1, 1, 1]), 1, s)
        assert cd.share_count == 2


class TestPlace:
    def test_example_one_cache_contents(self, example_one_scenario):
        cd = derive_t(np.ones(3, dtype=np.int64), 1, example_one_scenario)
        pl = place(cd, example_one_scenario)
        for k in range(3):
            expected = {Subfile(f, frozenset({k})) for f in (A, B, C)}
            assert pl.device_subfiles[k] == expected
        assert pl.subfile_bits == Fraction(3_000_000, 3)

    def test_full_split_stores_whole_files(self):
        s = make_scenario(cache_bits=100e6)
        cd = derive_t(np.ones(3, dtype=np.int64), 1, s)
        assert cd.share_count == 3
        pl = place(cd, s)
        for k in range(3):
            assert pl.device_subfiles[k] == {
                Subfile(f, frozenset({0, 1, 2})) for f in range(3)
            }

    def test_binomial_counts(self):
        s = make_scenario(num_devices=4, num_tasks=3, cache_bits=1.5e6)
        cd = derive_t(np.array([1, 0, 0]), 1, s)
        assert cd.share_count == 2
        pl = place(cd, s)
        labels = set().union(*pl.device_subfiles)
        assert len(labels) == comb(4, 2)          # 6 subfiles in total
        for k in range(4):
            assert len(pl.device_subfiles[k]) == comb(3, 1)   # 3 each

    def test_capacity_never_exceeded(self):
        rng = np.random.default_rng(17)
        for _ in range(60):
            K = int(rng.integers(2, 6))
            F = int(rng.integers(1, 6))
            d = int(rng.integers(0, 2))
            s = make_scenario(
                num_devices=K,
                num_tasks=F,
                cache_bits=float(rng.integers(0, 30)) * 1e6 / 4,
                input_bits=3e6,
                output_bits=6e6,
            )
            mask = (rng.random(F) < 0.6).astype(np.int64)
            cd = derive_t(mask, d, s)
            pl = place(cd, s)
            assert pl.per_device_bits <= Fraction(s.cache_bits)


class TestBuildMessages:
    def test_example_one_golden_messages(self, example_one_scenario):
        s = example_one_scenario
        cd, x, q = example_one_decisions(s)
        served = served_devices(cd, x, q)
        assert served == {1: B, 2: C}
        msgs = build_messages(cd, served, s.num_devices)
        by_subset = {tuple(sorted(m.subset)): m.payload for m in msgs}
        assert by_subset == {
            (0, 1): frozenset({Subfile(B, frozenset({0}))}),
            (0, 2): frozenset({Subfile(C, frozenset({0}))}),
            (1, 2): frozenset({Subfile(B, frozenset({2})), Subfile(C, frozenset({1}))}),
        }
        assert all(m.bits == Fraction(3_000_000, 3) for m in msgs)

    def test_whole_library_cached_sends_nothing(self):
        s = make_scenario(cache_bits=100e6)
        cd = derive_t(np.ones(3, dtype=np.int64), 1, s)
        assert build_messages(cd, {0: 0, 1: 1}, 3) == []

    def test_single_served_device(self, example_one_scenario):
        s = example_one_scenario
        cd = derive_t(np.ones(3, dtype=np.int64), 1, s)
        msgs = build_messages(cd, {1: B}, 3)
        subsets = {tuple(sorted(m.subset)) for m in msgs}
        assert subsets == {(0, 1), (1, 2)}
        total = sum(m.bits for m in msgs)
        assert total == Fraction(2, 3) * Fraction(3_000_000)

    def test_total_bits_equal_size_times_rate(self):
        rng = np.random.default_rng(23)
        for _ in range(80):
            K = int(rng.integers(2, 8))
            t = int(rng.integers(1, K))
            m = int(rng.integers(1, K + 1))
            F = max(2, m)
            size = Fraction(6_000_000)
            cd = CacheDecision(
                mask=np.ones(F, dtype=np.int64),
                data_type=0,
                share_count=t,
                num_cached=F,
                data_bits=float(size),
            )
            served = {
                int(k): int(rng.integers(0, F))
                for k in rng.choice(K, size=m, replace=False)
            }
            msgs = build_messages(cd, served, K)
            total = sum((msg.bits for msg in msgs), Fraction(0))
            assert total == size * coded_rate(K, t, len(served))

    def test_uncached_demand_rejected(self, example_one_scenario):
        cd = derive_t(np.array([1, 0, 1]), 1, example_one_scenario)
        with pytest.raises(ValueError, match="not coded-cached"):
            build_messages(cd, {0: 1}, 3)


class TestDecode:
    def test_example_one_recovery(self, example_one_scenario):
        s = example_one_scenario
        cd, x, q = example_one_decisions(s)
        pl = place(cd, s)
        msgs = build_messages(cd, served_devices(cd, x, q), 3)
        got_b = decode(1, pl, msgs, B)
        assert got_b == {Subfile(B, frozenset({k})) for k in range(3)}
        got_c = decode(2, pl, msgs, C)
        assert got_c == {Subfile(C, frozenset({k})) for k in range(3)}

    def test_full_split_recovers_from_cache_alone(self):
        s = make_scenario(cache_bits=100e6)
        cd = derive_t(np.ones(3, dtype=np.int64), 1, s)
        pl = place(cd, s)
        assert decode(0, pl, [], 1) == {Subfile(1, frozenset({0, 1, 2}))}

    def test_missing_message_detected(self, example_one_scenario):
        s = example_one_scenario
        cd, x, q = example_one_decisions(s)
        pl = place(cd, s)
        msgs = build_messages(cd, served_devices(cd, x, q), 3)
        with pytest.raises(DeliveryError, match="missing"):
            decode(1, pl, msgs[:1], B)

    def test_random_instances_fully_decodable(self):
        rng = np.random.default_rng(29)
        for _ in range(200):
            K = int(rng.integers(2, 6))
            F = int(rng.integers(1, 5))
            t = int(rng.integers(1, K + 1))
            s = make_scenario(num_devices=K, num_tasks=F, cache_bits=1.0, validate=False)
            cd = CacheDecision(
                mask=np.ones(F, dtype=np.int64),
                data_type=int(rng.integers(0, 2)),
                share_count=t,
                num_cached=F,
                data_bits=3e6,
            )
            pl = place(cd, s)
            m = int(rng.integers(1, K + 1))
            served = {
                int(k): int(rng.integers(0, F))
                for k in rng.choice(K, size=m, replace=False)
            }
            msgs = build_messages(cd, served, K)
            for k, f in served.items():
                got = decode(k, pl, msgs, f)
                assert len(got) == comb(K, t)


class TestCodedRate:
    def test_full_split_is_free(self):
        assert coded_rate(4, 4, 3) == 0

    def test_example_one_rate(self):
        assert coded_rate(3, 1, 2) == Fraction(1)

    def test_partial_service_rates(self):
        assert coded_rate(3, 1, 1) == Fraction(2, 3)
        assert coded_rate(4, 2, 1) == Fraction(1, 2)

    def test_uncached_singletons(self):
        assert coded_rate(5, 0, 5) == Fraction(5)
        assert coded_rate(5, 0, 3) == Fraction(3)

    def test_matches_oracle_exhaustively_small(self):
        for K in range(1, 7):
            for t in range(K + 1):
                for m in range(K + 1):
                    assert coded_rate(K, t, m) == coded_rate_oracle(K, t, m)

    def test_branch_continuity_at_boundary(self):
        # both branch formulas agree exactly at the crossover service count
        for K in range(2, 9):
            for t in range(1, K):
                m = K - t
                summed = Fraction(
                    sum(comb(K - i, t) for i in range(1, m + 1)), comb(K, t)
                )
                assert summed == Fraction(K - t, 1 + t)

    def test_monotone_in_split_and_served(self):
        for K in range(2, 8):
            for m in range(K + 1):
                rates = [coded_rate(K, t, m) for t in range(K + 1)]
                assert all(a >= b for a, b in zip(rates, rates[1:]))
            for t in range(K + 1):
                rates = [coded_rate(K, t, m) for m in range(K + 1)]
                assert all(a <= b for a, b in zip(rates, rates[1:]))


class TestCountServed:
    def test_example_one(self, example_one_scenario):
        cd, x, q = example_one_decisions(example_one_scenario)
        assert count_served(cd, x, q) == 2

    def test_no_cache_counts_nothing(self, example_one_scenario):
        s = example_one_scenario
        _, x, q = example_one_decisions(s)
        assert count_served(no_cache(s), x, q) == 0

    def test_output_type_with_all_local(self, example_one_scenario):
        s = example_one_scenario
        cd = derive_t(np.ones(3, dtype=np.int64), 0, s)
        x = compute_decision(np.ones((3, 3)), s)
        q = RequestState.from_tasks([0, 1, 2], 3)
        assert count_served(cd, x, q) == 0

    def test_shared_demand_counts_each_device(self, example_one_scenario):
        s = example_one_scenario
        cd = derive_t(np.ones(3, dtype=np.int64), 1, s)
        x = compute_decision(np.ones((3, 3)), s)
        q = RequestState.from_tasks([B, B, B], 3)
        assert count_served(cd, x, q) == 3


class TestDeliveryTrace:
    def test_example_one_trace_lines(self, example_one_scenario):
        s = example_one_scenario
        cd, x, q = example_one_decisions(s)
        trace = format_delivery_trace(s, cd, x, q)
        lines = trace.splitlines()
        assert "coded\t1,2\tI(B_1)\t1000000.0" in lines
        assert "coded\t1,3\tI(C_1)\t1000000.0" in lines
        assert "coded\t2,3\tI(B_3)^I(C_2)\t1000000.0" in lines
        assert "output\t1\tO(A)\t6000000.0" in lines
        assert len([l for l in lines if l.startswith("coded")]) == 3
