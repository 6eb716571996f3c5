"""Per-cell round-robin Bayesian optimization of antenna tilts and powers.

Each iteration targets one base station (round-robin over all 57),
replaces its (tilt, power) pair by the best of 500 random candidates
scored with an expected-improvement acquisition on the Gaussian-process
surrogate, evaluates the resulting full configuration once on a fresh
simulation seed, augments the dataset, and refits the hyperparameters.
The loop over all base stations repeats until the best observed value
has gone ``l_max`` consecutive loops without improving (or an iteration
cap is hit).

Seed scheme (all deterministic in the run seed): initial-point draws use
``SeedSequence([seed, 3])``, candidate draws ``SeedSequence([seed, 2])``,
the i-th initial evaluation ``SeedSequence([seed, 0, i])``, and the n-th
iteration evaluation ``SeedSequence([seed, 1, n])``; the latter two are
reduced to integers so any recorded observation can be replayed exactly.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import ndtr

from .deploy import ScenarioConfig, canonical_seed
from .gp import GpHyper, GpModel, ObservationDataset, fit
from .netsim import NetworkSetting, NetworkSimulator

EI_PAPER = "paper"
EI_TEXTBOOK = "textbook"

_SQRT_2PI = np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class BoSettings:
    """Knobs of the optimization loop."""

    n_candidates: int = 500
    batch_size: int = 50
    xi: float = 0.01
    l_max: int = 3
    n_initial: int = 10
    max_iterations: int = 2000
    ei_variant: str = EI_PAPER

    def __post_init__(self) -> None:
        if self.n_candidates <= 0 or self.batch_size <= 0:
            raise ValueError("candidate counts must be positive")
        if self.n_candidates % self.batch_size:
            raise ValueError("n_candidates must be a whole number of batches")
        if not 0.0 <= self.xi < 1.0:
            raise ValueError("xi must lie in [0, 1)")
        if self.l_max < 1:
            raise ValueError("l_max must be at least 1")
        if self.n_initial < 2:
            raise ValueError("n_initial must be at least 2")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.ei_variant not in (EI_PAPER, EI_TEXTBOOK):
            raise ValueError(f"unknown ei_variant {self.ei_variant!r}")


@dataclass(frozen=True)
class TraceRow:
    """One iteration of the optimization loop."""

    n: int
    bs: int
    tilt_deg: float
    power_dbm: float
    objective_db: float
    best_objective_db: float
    wall_time_s: float


@dataclass
class BoResult:
    """Outcome of a run: recommended setting plus the full trace."""

    best_setting: NetworkSetting
    best_objective_db: float
    best_iteration: int
    trace: list[TraceRow]
    dataset: ObservationDataset
    converged: bool
    n_iterations: int
    lam: float
    seed: int
    settings: BoSettings


def bs_index(n: int, n_bs: int = 57) -> int:
    """1-based round-robin BS index at iteration n >= 1."""
    if n < 1:
        raise ValueError("iterations are 1-based")
    return (n - 1) % n_bs + 1


def evaluation_seed(run_seed: int, n: int) -> int:
    """Simulation seed of iteration n, derived from the run seed."""
    ss = np.random.SeedSequence([canonical_seed(run_seed), 1, int(n)])
    return int(ss.generate_state(1, np.uint64)[0])


def initial_evaluation_seed(run_seed: int, i: int) -> int:
    """Simulation seed of the i-th initial observation (0-based)."""
    ss = np.random.SeedSequence([canonical_seed(run_seed), 0, int(i)])
    return int(ss.generate_state(1, np.uint64)[0])


def expected_improvement(mu, var, f_hat_star, xi: float = 0.01, variant: str = EI_PAPER):
    """Expected-improvement score of posterior (mean, variance) pairs.

    The ``paper`` variant scales by the posterior variance where the
    ``textbook`` variant uses the standard deviation; at zero variance
    both reduce to max(0, mu - f_hat_star - xi).
    """
    mu = np.asarray(mu, dtype=float)
    var = np.asarray(var, dtype=float)
    if np.any(var < 0):
        raise ValueError("variance must be nonnegative")
    diff = mu - f_hat_star - xi
    scale = var if variant == EI_PAPER else np.sqrt(var)
    if variant not in (EI_PAPER, EI_TEXTBOOK):
        raise ValueError(f"unknown ei_variant {variant!r}")

    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        delta = np.where(scale > 0, diff / np.where(scale > 0, scale, 1.0), 0.0)
        dens = np.exp(-0.5 * delta**2) / _SQRT_2PI
        score = diff * ndtr(delta) + scale * dens
    return np.where(scale > 0, score, np.maximum(diff, 0.0))


def propose_candidates(
    setting: NetworkSetting,
    b: int,
    rng: np.random.Generator,
    settings: BoSettings,
    tilt_range: tuple[float, float] = (-90.0, 90.0),
    power_range: tuple[float, float] = (6.0, 46.0),
) -> np.ndarray:
    """Random candidate configurations varying only BS ``b`` (1-based).

    Returns an (n_candidates, 2 * n_bs) array of full decision vectors;
    consecutive ``batch_size`` slices form the scoring batches.
    """
    n_bs = setting.n_bs
    if not 1 <= b <= n_bs:
        raise ValueError("BS index out of range")
    x = setting.as_vector()
    cands = np.tile(x, (settings.n_candidates, 1))
    cands[:, b - 1] = rng.uniform(*tilt_range, size=settings.n_candidates)
    cands[:, n_bs + b - 1] = rng.uniform(*power_range, size=settings.n_candidates)
    return cands


def select_query(
    candidates: np.ndarray,
    model: GpModel,
    xi: float = 0.01,
    variant: str = EI_PAPER,
    batch_size: int = 50,
) -> np.ndarray:
    """Acquisition argmax over the candidate set.

    Posterior queries run batch by batch; the incumbent is the best
    posterior mean over all candidates, so scores are computed once all
    batches are predicted. Ties go to the lowest candidate index.
    """
    candidates = np.atleast_2d(np.asarray(candidates, dtype=float))
    means = np.empty(candidates.shape[0])
    variances = np.empty(candidates.shape[0])
    for start in range(0, candidates.shape[0], batch_size):
        sl = slice(start, start + batch_size)
        means[sl], variances[sl] = model.posterior(candidates[sl])
    f_hat_star = float(np.max(means))
    scores = expected_improvement(means, variances, f_hat_star, xi, variant)
    return candidates[int(np.argmax(scores))].copy()


def network_box(cfg: ScenarioConfig) -> tuple[np.ndarray, np.ndarray]:
    """Bounds of the stacked [tilts, powers] decision vector."""
    n = cfg.n_bs
    lo = np.concatenate(
        [np.full(n, cfg.tilt_range_deg[0]), np.full(n, cfg.min_power_dbm)]
    )
    hi = np.concatenate(
        [np.full(n, cfg.tilt_range_deg[1]), np.full(n, cfg.max_power_dbm)]
    )
    return lo, hi


def _initial_dataset(cfg, lam, settings, seed, eval_fn):
    lo, hi = network_box(cfg)
    rng = np.random.default_rng(np.random.SeedSequence([canonical_seed(seed), 3]))
    points = rng.uniform(lo, hi, size=(settings.n_initial, lo.shape[0]))
    values = [
        eval_fn(NetworkSetting.from_vector(x), lam, initial_evaluation_seed(seed, i))
        for i, x in enumerate(points)
    ]
    return ObservationDataset(points=points, values=values, box_lo=lo, box_hi=hi)


def run(
    cfg: ScenarioConfig,
    lam: float,
    settings: BoSettings,
    seed: int,
    evaluate_fn=None,
    checkpoint_dir=None,
) -> BoResult:
    """Full optimization run for one mixing ratio.

    ``evaluate_fn(setting, lam, seed) -> float`` defaults to a fresh
    system-level evaluation; injecting a stand-in keeps the loop testable
    without the simulator. When ``checkpoint_dir`` is set, the dataset
    and loop state are written there at every completed BS loop and the
    run can be continued with :func:`resume`.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1]")
    if evaluate_fn is None:
        sim = NetworkSimulator(cfg)
        evaluate_fn = lambda x, lam_, s: sim.evaluate(x, lam_, s).objective_db

    dataset = _initial_dataset(cfg, lam, settings, seed, evaluate_fn)
    hyper = fit(dataset)
    rng_cand = np.random.default_rng(np.random.SeedSequence([canonical_seed(seed), 2]))

    state = _LoopState(
        n_next=1,
        x_cur=NetworkSetting.uniform(cfg.n_bs, 0.0, cfg.max_power_dbm).as_vector(),
        best=-np.inf,
        best_n=0,
        best_x=None,
        loop_best=-np.inf,
        stall_loops=0,
        trace=[],
        converged=False,
    )
    return _optimize_loop(
        cfg, lam, settings, seed, evaluate_fn, dataset, hyper, rng_cand, state,
        checkpoint_dir,
    )


@dataclass
class _LoopState:
    """Mutable loop bookkeeping, checkpointable between BS loops."""

    n_next: int
    x_cur: np.ndarray
    best: float
    best_n: int
    best_x: np.ndarray | None
    loop_best: float
    stall_loops: int
    trace: list
    converged: bool


def _optimize_loop(
    cfg, lam, settings, seed, evaluate_fn, dataset, hyper, rng_cand, state,
    checkpoint_dir,
):
    n_bs = cfg.n_bs
    tilt_range = cfg.tilt_range_deg
    power_range = (cfg.min_power_dbm, cfg.max_power_dbm)

    iterations = range(state.n_next, settings.max_iterations + 1)
    if state.converged:
        iterations = range(0)
    for n in iterations:
        t0 = time.perf_counter()
        b = bs_index(n, n_bs)
        model = GpModel(dataset, hyper)
        cands = propose_candidates(
            NetworkSetting.from_vector(state.x_cur),
            b,
            rng_cand,
            settings,
            tilt_range,
            power_range,
        )
        state.x_cur = select_query(
            cands, model, settings.xi, settings.ei_variant, settings.batch_size
        )
        value = float(
            evaluate_fn(
                NetworkSetting.from_vector(state.x_cur), lam, evaluation_seed(seed, n)
            )
        )
        dataset.append(state.x_cur, value)
        hyper = fit(dataset, previous=hyper)

        if value > state.best:
            state.best = value
            state.best_n = n
            state.best_x = state.x_cur.copy()
        state.trace.append(
            TraceRow(
                n=n,
                bs=b,
                tilt_deg=float(state.x_cur[b - 1]),
                power_dbm=float(state.x_cur[n_bs + b - 1]),
                objective_db=value,
                best_objective_db=state.best,
                wall_time_s=time.perf_counter() - t0,
            )
        )

        if b == n_bs:
            if state.best > state.loop_best:
                state.loop_best = state.best
                state.stall_loops = 0
            else:
                state.stall_loops += 1
            state.n_next = n + 1
            if state.stall_loops > settings.l_max:
                state.converged = True
            if checkpoint_dir is not None:
                _write_checkpoint(
                    checkpoint_dir, cfg, lam, settings, seed, dataset, hyper,
                    rng_cand, state,
                )
            if state.converged:
                break

    return BoResult(
        best_setting=NetworkSetting.from_vector(state.best_x),
        best_objective_db=state.best,
        best_iteration=state.best_n,
        trace=state.trace,
        dataset=dataset,
        converged=state.converged,
        n_iterations=state.trace[-1].n,
        lam=lam,
        seed=int(seed),
        settings=settings,
    )


def write_trace_csv(trace, path, include_wall_time: bool = True) -> None:
    """Write the iteration trace; wall time is optional so that reruns
    of the same seed can produce byte-identical files."""
    cols = ["n", "bs", "tilt_deg", "power_dbm", "objective_db", "best_objective_db"]
    if include_wall_time:
        cols.append("wall_time_s")
    with open(path, "w") as f:
        f.write(",".join(cols) + "\n")
        for row in trace:
            vals = [
                str(row.n),
                str(row.bs),
                repr(row.tilt_deg),
                repr(row.power_dbm),
                repr(row.objective_db),
                repr(row.best_objective_db),
            ]
            if include_wall_time:
                vals.append(repr(row.wall_time_s))
            f.write(",".join(vals) + "\n")


def read_trace_csv(path) -> list[TraceRow]:
    rows = []
    with open(path) as f:
        header = f.readline().strip().split(",")
        has_wall = "wall_time_s" in header
        for line in f:
            parts = line.strip().split(",")
            rows.append(
                TraceRow(
                    n=int(parts[0]),
                    bs=int(parts[1]),
                    tilt_deg=float(parts[2]),
                    power_dbm=float(parts[3]),
                    objective_db=float(parts[4]),
                    best_objective_db=float(parts[5]),
                    wall_time_s=float(parts[6]) if has_wall else 0.0,
                )
            )
    return rows


def _write_checkpoint(
    directory, cfg, lam, settings, seed, dataset, hyper, rng_cand, state
):
    import os

    os.makedirs(directory, exist_ok=True)
    dataset.to_csv(os.path.join(directory, "dataset.csv"))
    blob = {
        "lambda": lam,
        "seed": int(seed),
        "settings": asdict(settings),
        "hyper": [hyper.lengthscale, hyper.signal_var, hyper.noise_var],
        "rng_candidates": _jsonable(rng_cand.bit_generator.state),
        "n_next": state.n_next,
        "x_cur": list(state.x_cur),
        "best": state.best if np.isfinite(state.best) else None,
        "best_n": state.best_n,
        "best_x": None if state.best_x is None else list(state.best_x),
        "loop_best": state.loop_best if np.isfinite(state.loop_best) else None,
        "stall_loops": state.stall_loops,
        "converged": state.converged,
        "trace": [asdict(row) for row in state.trace],
    }
    with open(os.path.join(directory, "state.json"), "w") as f:
        json.dump(blob, f, indent=2, sort_keys=True)
        f.write("\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


def resume(
    checkpoint_dir,
    cfg: ScenarioConfig,
    evaluate_fn=None,
    max_iterations: int | None = None,
) -> BoResult:
    """Continue a checkpointed run to completion.

    ``max_iterations`` optionally raises the cap recorded in the
    checkpoint, so a cap-terminated run can be extended.
    """
    import os

    with open(os.path.join(checkpoint_dir, "state.json")) as f:
        blob = json.load(f)

    if max_iterations is not None:
        blob["settings"]["max_iterations"] = int(max_iterations)
    settings = BoSettings(**blob["settings"])
    lam = blob["lambda"]
    seed = blob["seed"]
    if evaluate_fn is None:
        sim = NetworkSimulator(cfg)
        evaluate_fn = lambda x, lam_, s: sim.evaluate(x, lam_, s).objective_db

    lo, hi = network_box(cfg)
    dataset = ObservationDataset.from_csv(
        os.path.join(checkpoint_dir, "dataset.csv"), lo, hi
    )
    hyper = GpHyper(*blob["hyper"])
    rng_cand = np.random.default_rng()
    rng_cand.bit_generator.state = blob["rng_candidates"]

    state = _LoopState(
        n_next=blob["n_next"],
        x_cur=np.asarray(blob["x_cur"], dtype=float),
        best=-np.inf if blob["best"] is None else float(blob["best"]),
        best_n=blob["best_n"],
        best_x=None if blob["best_x"] is None else np.asarray(blob["best_x"], float),
        loop_best=-np.inf if blob["loop_best"] is None else float(blob["loop_best"]),
        stall_loops=blob["stall_loops"],
        trace=[TraceRow(**row) for row in blob["trace"]],
        converged=blob["converged"],
    )
    return _optimize_loop(
        cfg, lam, settings, seed, evaluate_fn, dataset, hyper, rng_cand, state,
        checkpoint_dir,
    )
