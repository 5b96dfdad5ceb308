from __future__ import annotations

import numpy as np
import pytest

from codedmec.model import Scenario, validate_scenario


def make_scenario(
    num_devices=3,
    num_tasks=3,
    input_bits=3e6,
    output_bits=6e6,
    cache_bits=3e6,
    slot_seconds=0.02,
    energy_coeff=1e-24,
    workload=5.0,
    cpu_freq=3e9,
    energy_budget=150.0,
    popularity=None,
    snr_db=15.0,
    seed=7,
    validate=True,
) -> Scenario:
    """Small scenario with scalar or per-item fields; uniform popularity by
    default, SNR given in dB without fading."""
    K, F = num_devices, num_tasks
    w = np.full(F, workload, dtype=float) if np.isscalar(workload) else np.asarray(workload, float)
    g = np.full(K, cpu_freq, dtype=float) if np.isscalar(cpu_freq) else np.asarray(cpu_freq, float)
    e = np.full(K, energy_budget, dtype=float) if np.isscalar(energy_budget) else np.asarray(energy_budget, float)
    if popularity is None:
        p = np.full((K, F), 1.0 / F)
    else:
        p = np.asarray(popularity, dtype=float)
    db = np.full(K, snr_db, dtype=float) if np.isscalar(snr_db) else np.asarray(snr_db, float)
    s = Scenario(
        num_devices=K,
        num_tasks=F,
        input_bits=input_bits,
        output_bits=output_bits,
        cache_bits=cache_bits,
        slot_seconds=slot_seconds,
        energy_coeff=energy_coeff,
        workload=w,
        cpu_freq=g,
        energy_budget=e,
        popularity=p,
        snr_linear=10.0 ** (db / 10.0),
        seed=seed,
    )
    return validate_scenario(s) if validate else s


@pytest.fixture
def example_one_scenario() -> Scenario:
    # three devices, three tasks, cache holds exactly one input object;
    # every device computes a task in 5 ms
    return make_scenario(
        num_devices=3,
        num_tasks=3,
        cache_bits=3e6,
        workload=5.0,
        cpu_freq=3e9,
        snr_db=[15.0, 10.0, 12.0],
    )
