"""Coded caching with device computing: minimize multicast bandwidth by
jointly choosing what each device caches (input vs output, which tasks,
coded split) and which tasks it computes locally."""

from .model import (
    ComputeDecision,
    RequestState,
    SampleSet,
    Scenario,
    ScenarioError,
    check_energy_feasible,
    compute_decision,
    expected_energy,
    local_compute_time,
    sample_requests,
    spectral_efficiency,
    state_probability,
    validate_scenario,
    zero_compute,
)
from .delivery import (
    CacheDecision,
    CodedMessage,
    DeliveryError,
    Placement,
    build_messages,
    coded_rate,
    coded_rate_oracle,
    count_served,
    decode,
    derive_t,
    format_delivery_trace,
    no_cache,
    place,
)
from .bandwidth import (
    average_bandwidth,
    case_rates,
    exact_average_bandwidth,
    state_bandwidth,
)
from .admm import SolverParams, round_and_repair, solve_p2
from .cache_search import solve_p3, solve_p3_variant
from .baselines import (
    baseline_local_coded_cache,
    baseline_local_computing,
    baseline_traditional,
    baseline_uncoded_cache_computing,
    brute_force_joint,
)
from .config import build_scenario, load_config
from .sweep import run_sweep

__version__ = "0.1.0"
