"""Experiment driver: optimize, baseline, eval, and report verbs.

Artifacts are plain CSV/JSON files regenerated deterministically from the
run specification and seed. Heavy imports happen inside the command
handlers so that ``CELLBO_NUM_THREADS`` can cap BLAS threading before
numerical libraries load.

Exit codes: 0 success, 1 configuration error, 2 runtime failure,
3 iteration-cap termination (artifacts are still written).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_ITER_CAP = 3

N_EVAL_SEEDS = 20
BASELINE_TILT_DEG = -12.0

THREADS_ENV_VAR = "CELLBO_NUM_THREADS"

# Reference mean-SINR deltas (dB) the report annotates for sanity checks.
REF_DELTA_UAV_TRADEOFF_VS_BASELINE = 23.4
REF_DELTA_GUE_TRADEOFF_VS_BASELINE = 1.3
REF_DELTA_UAV_BOUND_VS_TRADEOFF = 1.2
REF_DELTA_GUE_BOUND_VS_TRADEOFF = 2.6


class ConfigError(Exception):
    """Invalid run configuration (bad file, unknown key, bad value)."""


def _float_repr(x) -> str:
    return repr(float(x))


def parse_config_file(path) -> dict[str, str]:
    """Flat ``key = value`` file with dotted sections and # comments."""
    entries: dict[str, str] = {}
    try:
        with open(path) as f:
            lines = f.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or not value:
            raise ConfigError(f"{path}:{lineno}: empty key or value")
        if key in entries:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        entries[key] = value
    return entries


def _coerce(value: str, target_type, key: str):
    try:
        if target_type is int:
            return int(value)
        if target_type is float:
            return float(value)
        if target_type is str:
            return value
        # Tuple-typed fields (corridors, tilt range) are given as JSON.
        parsed = json.loads(value)
        return _tuplify(parsed)
    except (ValueError, json.JSONDecodeError) as exc:
        raise ConfigError(f"bad value for {key!r}: {value!r}") from exc


def _tuplify(obj):
    if isinstance(obj, list):
        return tuple(_tuplify(v) for v in obj)
    return obj


def build_configs(entries: dict[str, str]):
    """Split flat entries into scenario/bo overrides plus run fields."""
    import typing

    from .bo import BoSettings
    from .deploy import ScenarioConfig

    scenario_types = typing.get_type_hints(ScenarioConfig)
    bo_types = typing.get_type_hints(BoSettings)
    scenario_kwargs = {}
    bo_kwargs = {}
    run_fields = {}

    for key, value in entries.items():
        if key.startswith("scenario."):
            name = key[len("scenario."):]
            if name not in scenario_types:
                raise ConfigError(f"unknown scenario key {name!r}")
            scenario_kwargs[name] = _coerce(value, scenario_types[name], key)
        elif key.startswith("bo."):
            name = key[len("bo."):]
            if name not in bo_types:
                raise ConfigError(f"unknown bo key {name!r}")
            bo_kwargs[name] = _coerce(value, bo_types[name], key)
        elif key == "lambda":
            run_fields["lambda"] = _coerce(value, float, key)
        elif key == "seed":
            run_fields["seed"] = _coerce(value, int, key)
        else:
            raise ConfigError(f"unknown config key {key!r}")

    try:
        scenario = ScenarioConfig(**scenario_kwargs)
        settings = BoSettings(**bo_kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return scenario, settings, run_fields


def _resolve_spec(args):
    """Merge config file and command-line flags into one run spec."""
    from dataclasses import replace

    entries = parse_config_file(args.config) if args.config else {}
    scenario, settings, run_fields = build_configs(entries)

    lam = args.lam if args.lam is not None else run_fields.get("lambda")
    seed = args.seed if args.seed is not None else run_fields.get("seed", 0)
    overrides = {}
    if getattr(args, "ei_variant", None) is not None:
        overrides["ei_variant"] = args.ei_variant
    if getattr(args, "max_iters", None) is not None:
        overrides["max_iterations"] = args.max_iters
    if overrides:
        try:
            settings = replace(settings, **overrides)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    return scenario, settings, lam, int(seed)


def _eval_seed(seed: int, i: int) -> int:
    import numpy as np

    from .deploy import canonical_seed

    ss = np.random.SeedSequence([canonical_seed(seed), 4, int(i)])
    return int(ss.generate_state(1, np.uint64)[0])


def evaluate_many(sim, setting, lam: float, seed: int, n_seeds: int = N_EVAL_SEEDS):
    """Evaluate one setting over fresh seeds, aggregating populations.

    Returns sorted per-population SINR pools, their means, the combined
    objective, and cell roles computed from per-BS service counts summed
    over all seeds.
    """
    import numpy as np

    from .netsim import ROLE_AERIAL, ROLE_GROUND, ROLE_OFF

    gue_all, uav_all = [], []
    n_bs = sim.cfg.n_bs
    uav_counts = np.zeros(n_bs, dtype=int)
    gue_counts = np.zeros(n_bs, dtype=int)
    for i in range(n_seeds):
        report = sim.evaluate(setting, lam, _eval_seed(seed, i))
        gue_all.append(report.sinr_db_gue)
        uav_all.append(report.sinr_db_uav)
        uav_counts += np.bincount(
            report.serving_bs[report.is_uav], minlength=n_bs
        )
        gue_counts += np.bincount(
            report.serving_bs[~report.is_uav], minlength=n_bs
        )

    gue = np.sort(np.concatenate(gue_all))
    uav = np.sort(np.concatenate(uav_all))
    roles = []
    mixed = []
    for b in range(n_bs):
        if uav_counts[b] > 0:
            roles.append(ROLE_AERIAL)
        elif gue_counts[b] > 0:
            roles.append(ROLE_GROUND)
        else:
            roles.append(ROLE_OFF)
        mixed.append(bool(uav_counts[b] > 0 and gue_counts[b] > 0))

    mean_gue = float(np.mean(gue))
    mean_uav = float(np.mean(uav))
    return {
        "gue_sinr_db": gue,
        "uav_sinr_db": uav,
        "gue_mean_sinr_db": mean_gue,
        "uav_mean_sinr_db": mean_uav,
        "objective_db": lam * mean_uav + (1.0 - lam) * mean_gue,
        "cell_roles": roles,
        "mixed_cells": mixed,
        "uav_served_by_bs": uav_counts.tolist(),
        "gue_served_by_bs": gue_counts.tolist(),
    }


def write_cdf_csv(path, gue_sorted, uav_sorted) -> None:
    """Per-population sorted SINR samples with empirical CDF levels."""
    with open(path, "w") as f:
        f.write("population,sinr_db,cdf\n")
        for name, pool in (("gue", gue_sorted), ("uav", uav_sorted)):
            n = len(pool)
            for i, v in enumerate(pool):
                f.write(f"{name},{_float_repr(v)},{_float_repr((i + 1) / n)}\n")


def _write_json(path, payload: dict) -> None:
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def write_best_config(path, setting, agg, lam, seed, best_objective_db) -> None:
    _write_json(
        path,
        {
            "tilts_deg": [float(v) for v in setting.tilts_deg],
            "powers_dbm": [float(v) for v in setting.powers_dbm],
            "cell_roles": agg["cell_roles"],
            "mixed_cells": agg["mixed_cells"],
            "lambda": lam,
            "seed": seed,
            "best_objective_db": best_objective_db,
        },
    )


def read_network_json(path):
    from .netsim import NetworkSetting

    try:
        with open(path) as f:
            blob = json.load(f)
        return NetworkSetting(
            tilts_deg=blob["tilts_deg"], powers_dbm=blob["powers_dbm"]
        ), blob
    except (OSError, KeyError, ValueError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot load network config {path}: {exc}") from exc


def _summary_payload(mode, lam, seed, agg, extra=None) -> dict:
    payload = {
        "mode": mode,
        "lambda": lam,
        "seed": seed,
        "n_eval_seeds": N_EVAL_SEEDS,
        "gue_mean_sinr_db": agg["gue_mean_sinr_db"],
        "uav_mean_sinr_db": agg["uav_mean_sinr_db"],
        "objective_db": agg["objective_db"],
        "n_cells_ground": agg["cell_roles"].count("ground"),
        "n_cells_aerial": agg["cell_roles"].count("aerial"),
        "n_cells_off": agg["cell_roles"].count("off"),
    }
    if extra:
        payload.update(extra)
    return payload


def cmd_optimize(args) -> int:
    from . import bo
    from .netsim import NetworkSimulator

    scenario, settings, lam, seed = _resolve_spec(args)
    if lam is None:
        raise ConfigError("optimize requires --lambda (or 'lambda' in the config)")
    if not 0.0 <= lam <= 1.0:
        raise ConfigError("lambda must lie in [0, 1]")
    os.makedirs(args.out, exist_ok=True)

    result = bo.run(scenario, lam, settings, seed)
    bo.write_trace_csv(
        result.trace, os.path.join(args.out, "trace.csv"), include_wall_time=False
    )

    sim = NetworkSimulator(scenario)
    agg = evaluate_many(sim, result.best_setting, lam, seed)
    write_cdf_csv(
        os.path.join(args.out, "sinr_cdf.csv"), agg["gue_sinr_db"], agg["uav_sinr_db"]
    )
    write_best_config(
        os.path.join(args.out, "best_config.json"),
        result.best_setting,
        agg,
        lam,
        seed,
        result.best_objective_db,
    )
    _write_json(
        os.path.join(args.out, "summary.json"),
        _summary_payload(
            "optimize",
            lam,
            seed,
            agg,
            extra={
                "iterations": result.n_iterations,
                "converged": result.converged,
                "best_objective_db": result.best_objective_db,
                "best_iteration": result.best_iteration,
                "n_uptilted": int((result.best_setting.tilts_deg > 0).sum()),
                "n_downtilted": int((result.best_setting.tilts_deg < 0).sum()),
            },
        ),
    )
    return EXIT_OK if result.converged else EXIT_ITER_CAP


def cmd_baseline(args) -> int:
    from .netsim import NetworkSetting, NetworkSimulator

    scenario, _, lam, seed = _resolve_spec(args)
    lam = 0.5 if lam is None else lam
    os.makedirs(args.out, exist_ok=True)

    sim = NetworkSimulator(scenario)
    setting = NetworkSetting.uniform(
        scenario.n_bs, BASELINE_TILT_DEG, scenario.max_power_dbm
    )
    agg = evaluate_many(sim, setting, lam, seed)
    write_cdf_csv(
        os.path.join(args.out, "sinr_cdf.csv"), agg["gue_sinr_db"], agg["uav_sinr_db"]
    )
    _write_json(
        os.path.join(args.out, "summary.json"),
        _summary_payload(
            "baseline",
            lam,
            seed,
            agg,
            extra={
                "tilt_deg": BASELINE_TILT_DEG,
                "power_dbm": scenario.max_power_dbm,
            },
        ),
    )
    return EXIT_OK


def cmd_eval(args) -> int:
    from .netsim import NetworkSimulator

    scenario, _, lam, seed = _resolve_spec(args)
    setting, blob = read_network_json(args.network_json)
    if lam is None:
        lam = blob.get("lambda")
    if lam is None:
        raise ConfigError("eval requires --lambda or a lambda in the network json")
    os.makedirs(args.out, exist_ok=True)

    sim = NetworkSimulator(scenario)
    agg = evaluate_many(sim, setting, lam, seed)
    write_cdf_csv(
        os.path.join(args.out, "sinr_cdf.csv"), agg["gue_sinr_db"], agg["uav_sinr_db"]
    )
    _write_json(
        os.path.join(args.out, "summary.json"),
        _summary_payload("eval", lam, seed, agg),
    )
    return EXIT_OK


def _load_summaries(run_dirs):
    summaries = {}
    for d in run_dirs:
        path = os.path.join(d, "summary.json")
        try:
            with open(path) as f:
                blob = json.load(f)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read {path}: {exc}") from exc
        if blob.get("mode") == "baseline":
            summaries["baseline"] = blob
        else:
            lam = blob.get("lambda")
            if lam is None:
                raise ConfigError(f"{path} has no lambda")
            summaries[f"lambda={lam:g}"] = blob
    return summaries


def cmd_report(args) -> int:
    summaries = _load_summaries(args.runs)
    required = ["baseline", "lambda=0", "lambda=0.5", "lambda=1"]
    missing = [k for k in required if k not in summaries]
    if missing:
        raise ConfigError(f"missing run artifacts for: {', '.join(missing)}")

    os.makedirs(args.out, exist_ok=True)
    rows = [
        (name, summaries[name]["gue_mean_sinr_db"], summaries[name]["uav_mean_sinr_db"])
        for name in required
    ]

    def mean(name, pop):
        return summaries[name][f"{pop}_mean_sinr_db"]

    deltas = [
        (
            "uav_tradeoff_vs_baseline",
            mean("lambda=0.5", "uav") - mean("baseline", "uav"),
            REF_DELTA_UAV_TRADEOFF_VS_BASELINE,
        ),
        (
            "gue_tradeoff_vs_baseline",
            mean("lambda=0.5", "gue") - mean("baseline", "gue"),
            REF_DELTA_GUE_TRADEOFF_VS_BASELINE,
        ),
        (
            "uav_bound_vs_tradeoff",
            mean("lambda=1", "uav") - mean("lambda=0.5", "uav"),
            REF_DELTA_UAV_BOUND_VS_TRADEOFF,
        ),
        (
            "gue_bound_vs_tradeoff",
            mean("lambda=0", "gue") - mean("lambda=0.5", "gue"),
            REF_DELTA_GUE_BOUND_VS_TRADEOFF,
        ),
    ]

    csv_path = os.path.join(args.out, "report.csv")
    with open(csv_path, "w") as f:
        f.write("config,gue_mean_sinr_db,uav_mean_sinr_db\n")
        for name, gue, uav in rows:
            f.write(f"{name},{_float_repr(gue)},{_float_repr(uav)}\n")
        f.write("delta,value_db,ref_db\n")
        for name, value, ref in deltas:
            f.write(f"{name},{_float_repr(value)},{_float_repr(ref)}\n")

    md_path = os.path.join(args.out, "report.md")
    with open(md_path, "w") as f:
        f.write("# Mean SINR comparison\n\n")
        f.write("| config | GUE mean SINR (dB) | UAV mean SINR (dB) |\n")
        f.write("|---|---|---|\n")
        for name, gue, uav in rows:
            f.write(f"| {name} | {gue:.2f} | {uav:.2f} |\n")
        f.write("\n## Deltas vs. reference values\n\n")
        f.write("| delta | value (dB) | reference (dB) |\n")
        f.write("|---|---|---|\n")
        for name, value, ref in deltas:
            f.write(f"| {name} | {value:.2f} | {ref:.1f} |\n")

    print(f"wrote {csv_path} and {md_path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cellbo",
        description="Cellular downlink simulator and tilt/power optimizer "
        "for UAV corridors",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, with_bo_flags=True):
        p.add_argument("--config", default=None, help="flat key=value config file")
        p.add_argument(
            "--lambda", dest="lam", type=float, default=None,
            help="UAV/GUE mixing ratio in [0, 1]",
        )
        p.add_argument("--seed", type=int, default=None, help="run seed (default 0)")
        p.add_argument("--out", required=True, help="output directory")
        if with_bo_flags:
            p.add_argument(
                "--ei-variant", choices=["paper", "textbook"], default=None,
                help="acquisition scaling: variance (paper) or std (textbook)",
            )
            p.add_argument(
                "--max-iters", type=int, default=None, help="iteration safety cap"
            )

    p_opt = sub.add_parser("optimize", help="run the Bayesian optimization loop")
    add_common(p_opt)
    p_opt.set_defaults(handler=cmd_optimize)

    p_base = sub.add_parser(
        "baseline", help="evaluate the all-downtilt full-power configuration"
    )
    add_common(p_base, with_bo_flags=False)
    p_base.set_defaults(handler=cmd_baseline)

    p_eval = sub.add_parser("eval", help="evaluate a saved network configuration")
    p_eval.add_argument("network_json", help="best_config.json from a previous run")
    add_common(p_eval, with_bo_flags=False)
    p_eval.set_defaults(handler=cmd_eval)

    p_rep = sub.add_parser("report", help="tabulate mean SINRs across runs")
    p_rep.add_argument("runs", nargs="+", help="run directories with summary.json")
    p_rep.add_argument("--out", required=True, help="output directory")
    p_rep.set_defaults(handler=cmd_report)
    return parser


def _apply_thread_override() -> None:
    threads = os.environ.get(THREADS_ENV_VAR)
    if not threads:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, threads)


def main(argv=None) -> int:
    _apply_thread_override()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def console_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_entry()
