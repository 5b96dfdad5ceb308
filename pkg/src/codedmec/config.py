"""Scenario ingestion from YAML key/value files.

Schema (units in the field names)::

    scenario:
      K: 6                 # devices
      F: 12                # tasks
      N_s: 200             # Monte Carlo request samples
      seed: 20250810       # master seed, fans out to named substreams
      I_bits: 3.0e6
      O_bits: 6.0e6
      C_bits: 1.8e7
      tau_s: 0.02
      alpha: 1.0e-24
      w:      {range: [5.0, 10.0]}          # or {values: [...]} or scalar
      g:      {range: [2.0e9, 4.0e9]}
      E:      {range: [40.0, 150.0]}
      snr_db: {range: [10.0, 20.0], fading: rayleigh}   # or fading: none
      popularity: {model: uniform}          # or zipf {exponent} or matrix {values}
    admm: {}              # SolverParams overrides, field names as keys

Range-samplers expand deterministically from the master seed: each field
draws from its own substream, keyed additionally by the replication index,
so sweeping an axis never re-randomizes the other fields.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np
import yaml

from .admm import SolverParams
from .model import SampleSet, Scenario, sample_requests, validate_scenario

__all__ = [
    "ExperimentConfig",
    "ConfigError",
    "load_config",
    "build_scenario",
    "realize",
    "DESK_CONFIG",
]

# substream labels for the master-seed fan-out
_STREAMS = {"w": 1, "g": 2, "E": 3, "snr_db": 4, "requests": 5}

DESK_CONFIG: dict = {
    "scenario": {
        "K": 6,
        "F": 12,
        "N_s": 200,
        "seed": 20250810,
        "I_bits": 3.0e6,
        "O_bits": 6.0e6,
        "C_bits": 1.8e7,
        "tau_s": 0.02,
        "alpha": 1.0e-24,
        "w": {"range": [5.0, 10.0]},
        "g": {"range": [2.0e9, 4.0e9]},
        "E": {"range": [40.0, 150.0]},
        "snr_db": {"range": [10.0, 20.0], "fading": "rayleigh"},
        "popularity": {"model": "uniform"},
    },
    "admm": {},
}


class ConfigError(ValueError):
    """The configuration file is malformed or incomplete."""


@dataclass(frozen=True)
class ExperimentConfig:
    raw: dict
    master_seed: int
    n_samples: int
    solver_params: SolverParams
    popularity_model: str

    @property
    def scenario_section(self) -> dict:
        return self.raw["scenario"]


def load_config(source) -> ExperimentConfig:
    """Parse a YAML path/string or an already-built dict."""
    if isinstance(source, dict):
        raw = source
    else:
        text = Path(source).read_text() if Path(str(source)).exists() else str(source)
        raw = yaml.safe_load(text)
    if not isinstance(raw, dict) or "scenario" not in raw:
        raise ConfigError("configuration must contain a 'scenario' section")
    sc = raw["scenario"]
    for key in ("K", "F", "N_s", "seed", "I_bits", "O_bits", "C_bits", "tau_s", "alpha"):
        if key not in sc:
            raise ConfigError(f"scenario section is missing '{key}'")
    admm = raw.get("admm") or {}
    known = {f.name for f in fields(SolverParams)}
    unknown = set(admm) - known
    if unknown:
        raise ConfigError(f"unknown admm parameter(s): {sorted(unknown)}")
    params = SolverParams(**admm).validated()
    pop = (sc.get("popularity") or {"model": "uniform"}).get("model", "uniform")
    return ExperimentConfig(
        raw=raw,
        master_seed=int(sc["seed"]),
        n_samples=int(sc["N_s"]),
        solver_params=params,
        popularity_model=pop,
    )


def _substream(master: int, name: str, replication: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=master, spawn_key=(_STREAMS[name], replication))
    return np.random.default_rng(ss)


def _substream_seed(master: int, name: str, replication: int) -> int:
    ss = np.random.SeedSequence(entropy=master, spawn_key=(_STREAMS[name], replication))
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return int(lo) | (int(hi) << 32)


def _expand(spec, count: int, rng: np.random.Generator, field: str) -> np.ndarray:
    """Materialize a per-item array from a scalar, a values list, or a
    uniform range-sampler."""
    if isinstance(spec, (int, float)):
        return np.full(count, float(spec))
    if not isinstance(spec, dict):
        raise ConfigError(f"'{field}' must be a scalar or a mapping")
    if "values" in spec:
        vals = np.asarray(spec["values"], dtype=float)
        if vals.shape != (count,):
            raise ConfigError(f"'{field}' values must have length {count}")
        return vals
    if "range" in spec:
        lo, hi = (float(v) for v in spec["range"])
        return rng.uniform(lo, hi, size=count)
    raise ConfigError(f"'{field}' needs 'values' or 'range'")


def _popularity(spec, num_devices: int, num_tasks: int) -> np.ndarray:
    spec = spec or {"model": "uniform"}
    model = spec.get("model", "uniform")
    if model == "uniform":
        return np.full((num_devices, num_tasks), 1.0 / num_tasks)
    if model == "zipf":
        expo = float(spec.get("exponent", 1.0))
        weights = 1.0 / np.arange(1, num_tasks + 1) ** expo
        row = weights / weights.sum()
        return np.tile(row, (num_devices, 1))
    if model == "matrix":
        p = np.asarray(spec["values"], dtype=float)
        if p.shape != (num_devices, num_tasks):
            raise ConfigError(
                f"popularity matrix must be {num_devices}x{num_tasks}, got {p.shape}"
            )
        return p
    raise ConfigError(f"unknown popularity model '{model}'")


def build_scenario(
    cfg: ExperimentConfig, replication: int = 0, overrides: dict | None = None
) -> Scenario:
    """Materialize a validated scenario for one experiment replication.

    ``overrides`` replaces scenario keys after parsing (sweep axes):
    scalars for ``C_bits``/``K``; a scalar for ``g`` pins every device.
    """
    sc = dict(cfg.scenario_section)
    if overrides:
        sc.update(overrides)
    master = int(sc["seed"])
    K, F = int(sc["K"]), int(sc["F"])

    w = _expand(sc["w"], F, _substream(master, "w", replication), "w")
    g = _expand(sc["g"], K, _substream(master, "g", replication), "g")
    e = _expand(sc["E"], K, _substream(master, "E", replication), "E")

    snr_spec = sc["snr_db"]
    rng = _substream(master, "snr_db", replication)
    fading = "rayleigh"
    if isinstance(snr_spec, dict):
        fading = snr_spec.get("fading", "rayleigh")
        snr_spec = {k: v for k, v in snr_spec.items() if k != "fading"}
    snr_db = _expand(snr_spec, K, rng, "snr_db")
    snr_linear = 10.0 ** (snr_db / 10.0)
    if fading == "rayleigh":
        snr_linear = snr_linear * rng.exponential(1.0, size=K)
    elif fading != "none":
        raise ConfigError(f"unknown fading model '{fading}'")

    scenario = Scenario(
        num_devices=K,
        num_tasks=F,
        input_bits=float(sc["I_bits"]),
        output_bits=float(sc["O_bits"]),
        cache_bits=float(sc["C_bits"]),
        slot_seconds=float(sc["tau_s"]),
        energy_coeff=float(sc["alpha"]),
        workload=w,
        cpu_freq=g,
        energy_budget=e,
        popularity=_popularity(sc.get("popularity"), K, F),
        snr_linear=snr_linear,
        seed=_substream_seed(master, "requests", replication),
    )
    return validate_scenario(scenario)


def realize(
    cfg: ExperimentConfig, replication: int = 0, overrides: dict | None = None
) -> tuple[Scenario, SampleSet]:
    """Scenario plus its request sample set for one replication."""
    scenario = build_scenario(cfg, replication, overrides)
    samples = sample_requests(scenario, cfg.n_samples, scenario.seed)
    return scenario, samples
