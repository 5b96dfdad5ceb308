"""Command-line interface.

Exit codes: 0 success, 2 configuration/validation error, 3 size-guard
violation (oracle asked for an instance beyond the enumeration budget).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .admm import format_trace, solve_p2
from .bandwidth import average_bandwidth, breakdown_records
from .baselines import SizeGuardError, brute_force_joint
from .cache_search import solve_p3
from .config import ConfigError, load_config, realize
from .delivery import derive_t, no_cache
from .model import ScenarioError, compute_decision, zero_compute

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_SIZE_GUARD = 3


def _add_config_arg(p: argparse.ArgumentParser) -> None:
    p.add_argument("config", help="scenario configuration file (YAML)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="codedmec",
        description="coded caching with device computing: bandwidth optimization",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a scenario configuration")
    _add_config_arg(p)

    p = sub.add_parser("evaluate", help="bandwidth of a given cache/compute decision")
    _add_config_arg(p)
    p.add_argument("--cache", help="JSON file with {'c': [...], 'd': 0|1}")
    p.add_argument("--compute", help="JSON file with {'x': [[...]]}")
    p.add_argument("--breakdown", help="write per-state breakdown CSV here")
    p.add_argument("--json", action="store_true", help="machine-readable output")

    p = sub.add_parser("optimize", help="run the full pipeline (compute then cache)")
    _add_config_arg(p)
    p.add_argument("--out", help="write the result JSON here")
    p.add_argument("--trace", help="write the solver trace CSV here")

    p = sub.add_parser("oracle", help="brute-force joint optimum (size-guarded)")
    _add_config_arg(p)
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("sweep", help="axis sweep over every policy")
    _add_config_arg(p)
    p.add_argument("--axis", required=True, choices=("cache_bits", "cpu_freq", "num_devices"))
    p.add_argument("--points", required=True, help="comma-separated axis values")
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--figures", help="also render summary figures into this directory")
    return parser


def _cmd_validate(args) -> int:
    cfg = load_config(args.config)
    scenario = realize(cfg)[0]
    print(f"scenario ok: K={scenario.num_devices} F={scenario.num_tasks} N_s={cfg.n_samples}")
    print(
        f"popularity model: {cfg.popularity_model}"
        + (" (uniform marginal assumed)" if cfg.popularity_model == "uniform" else "")
    )
    return EXIT_OK


def _load_decisions(args, scenario):
    if args.cache:
        spec = json.loads(Path(args.cache).read_text())
        cd = derive_t(np.asarray(spec["c"], dtype=np.int64), int(spec["d"]), scenario)
    else:
        cd = no_cache(scenario)
    if args.compute:
        spec = json.loads(Path(args.compute).read_text())
        x = compute_decision(np.asarray(spec["x"], dtype=float), scenario)
    else:
        x = zero_compute(scenario)
    return cd, x


def _cmd_evaluate(args) -> int:
    cfg = load_config(args.config)
    scenario, samples = realize(cfg)
    cd, x = _load_decisions(args, scenario)
    hz = average_bandwidth(scenario, cd, x, samples)
    if args.breakdown:
        records = breakdown_records(scenario, cd, x, samples)
        import csv

        with open(args.breakdown, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(records[0].keys()))
            writer.writeheader()
            writer.writerows(records)
    if args.json:
        print(json.dumps({"bandwidth_hz": hz}))
    else:
        print(f"average bandwidth: {hz / 1e6:.3f} MHz")
    return EXIT_OK


def _cmd_optimize(args) -> int:
    cfg = load_config(args.config)
    scenario, samples = realize(cfg)
    result = solve_p2(scenario, samples, cfg.solver_params)
    choice = solve_p3(result.x_star, scenario, samples)
    payload = {
        "bandwidth_hz": choice.bandwidth_hz,
        "cache": {
            "c": choice.cache.mask.tolist(),
            "d": choice.cache.data_type,
            "share_count": choice.cache.share_count,
        },
        "compute": {"x": result.x_star.matrix.astype(int).tolist()},
        "solver": {
            "iterations": result.iterations,
            "exit_reason": result.exit_reason,
            "no_cache_bandwidth_hz": result.objective_hz,
        },
        "search": {
            str(d): [
                {
                    "num": st.num,
                    "share_count": st.share_count,
                    "evaluated": st.evaluated,
                    "bandwidth_hz": st.bandwidth_hz,
                }
                for st in vr.steps
            ]
            for d, vr in choice.variants.items()
        },
    }
    text = json.dumps(payload, indent=2)
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text)
    if args.trace:
        Path(args.trace).write_text(format_trace(result.trace))
    return EXIT_OK


def _cmd_oracle(args) -> int:
    cfg = load_config(args.config)
    scenario, samples = realize(cfg)
    res = brute_force_joint(scenario, samples)
    payload = {
        "bandwidth_hz": res.bandwidth_hz,
        "cache": {"c": res.cache.mask.tolist(), "d": res.cache.data_type},
        "compute": {"x": res.x.matrix.astype(int).tolist()},
        "evaluations": res.evaluations,
    }
    if args.json:
        print(json.dumps(payload))
    else:
        print(json.dumps(payload, indent=2))
    return EXIT_OK


def _cmd_sweep(args) -> int:
    from .sweep import render_figures, run_sweep, write_results

    cfg = load_config(args.config)
    points = [float(v) for v in args.points.split(",") if v.strip()]
    rows, errors = run_sweep(cfg, args.axis, points, args.reps)
    write_results(rows, args.out, cfg, args.axis, errors)
    if args.figures:
        render_figures(rows, args.axis, args.figures)
    if errors:
        print(f"{len(errors)} evaluation(s) failed; see {Path(args.out).with_suffix('.meta.json')}")
    print(f"wrote {len(rows)} rows to {args.out}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "validate": _cmd_validate,
        "evaluate": _cmd_evaluate,
        "optimize": _cmd_optimize,
        "oracle": _cmd_oracle,
        "sweep": _cmd_sweep,
    }
    try:
        return handlers[args.command](args)
    except SizeGuardError as exc:
        print(f"size guard: {exc}", file=sys.stderr)
        return EXIT_SIZE_GUARD
    except (ScenarioError, ConfigError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
