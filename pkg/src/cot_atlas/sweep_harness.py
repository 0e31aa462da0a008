"""Evaluation-grid executor: slope x condition x repetition sweeps.

Sliding sweeps cross the slope grid with torso-friction conditions,
walking sweeps with commanded-speed conditions (at a fixed foot-ground
friction). Every trial gets a seed derived by hashing (master seed, mode,
condition, slope, repetition), so the trial set is a pure function of the
grid: worker scheduling, worker count and completion order cannot change
any output byte. Failed trials (timeouts, infeasible stances) are
first-class results that are excluded from the mean and counted.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, replace

import numpy as np

from .energetics import cot_for_trial
from .terrain_dynamics import TerrainSpec, TrialConfig, simulate_trial

#: Environment variable capping the worker pool.
WORKERS_ENV_VAR = "COT_ATLAS_WORKERS"

DEFAULT_SLOPES = tuple(float(a) for a in range(0, 36, 5))
DEFAULT_SPEEDS = (0.1, 0.2, 0.3)
DEFAULT_FRICTIONS = (0.4, 0.5, 0.6, 0.7, 0.8)


class AllTrialsFailed(RuntimeError):
    """Every repetition at a grid point failed; the point has no mean."""


@dataclass(frozen=True)
class SweepGrid:
    """Slope grid, per-mode condition lists, repetitions and master seed."""

    slopes: tuple = DEFAULT_SLOPES
    speeds: tuple = DEFAULT_SPEEDS
    frictions: tuple = DEFAULT_FRICTIONS
    repetitions: int = 10
    master_seed: int = 0
    walk_mu_s: float = 0.7

    def __post_init__(self):
        if not self.slopes or not self.speeds or not self.frictions:
            raise ValueError("grid lists must be non-empty")
        if self.repetitions < 1:
            raise ValueError("repetitions must be at least 1")
        object.__setattr__(self, "slopes", tuple(float(a) for a in self.slopes))
        object.__setattr__(self, "speeds", tuple(float(v) for v in self.speeds))
        object.__setattr__(
            self, "frictions", tuple(float(m) for m in self.frictions)
        )

    def conditions(self, mode: str) -> tuple:
        return self.speeds if mode == "walk" else self.frictions

    def trial_count(self, mode: str) -> int:
        return len(self.slopes) * len(self.conditions(mode)) * self.repetitions


@dataclass
class CoTCurve:
    """CoT vs. slope for one condition (a speed or a friction level)."""

    mode: str
    speed: float
    mu_s: float
    slopes: np.ndarray
    cot_mean: np.ndarray
    cot_std: np.ndarray
    n_ok: np.ndarray
    n_fail: np.ndarray

    @property
    def condition_label(self) -> str:
        if self.mode == "walk":
            return f"walk v={self.speed:g}"
        return f"slide mu_s={self.mu_s:g}"

    def value_at(self, slope: float) -> float:
        idx = np.nonzero(np.isclose(self.slopes, slope))[0]
        return float(self.cot_mean[idx[0]]) if idx.size else float("nan")


@dataclass(frozen=True)
class TrialPlan:
    """One grid cell repetition: everything a worker needs to run it."""

    mode: str
    condition: float
    slope: float
    rep: int
    seed: int
    config: TrialConfig

    @property
    def trial_id(self) -> str:
        cond = f"v{self.condition:g}" if self.mode == "walk" else f"mu{self.condition:g}"
        return f"{self.mode}_{cond}_a{self.slope:g}_r{self.rep:03d}"


@dataclass(frozen=True)
class TrialOutcome:
    plan_id: str
    ok: bool
    cot: float = float("nan")
    energy: float = float("nan")
    distance: float = float("nan")
    error: str = ""


def trial_seed(master_seed: int, mode: str, condition: float, slope: float, rep: int) -> int:
    """Stable per-trial seed: a pure function of the grid coordinates."""
    key = f"{master_seed}|{mode}|{condition:.17g}|{slope:.17g}|{rep}"
    digest = hashlib.sha256(key.encode("ascii")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def plan_trials(grid: SweepGrid, mode: str, base: TrialConfig) -> list:
    """Expand the grid into per-trial plans in fixed (condition, slope, rep) order."""
    if mode not in ("slide", "walk"):
        raise ValueError(f"mode must be 'slide' or 'walk', got {mode!r}")
    plans = []
    for condition in grid.conditions(mode):
        for slope in grid.slopes:
            for rep in range(grid.repetitions):
                seed = trial_seed(grid.master_seed, mode, condition, slope, rep)
                if mode == "walk":
                    terrain = TerrainSpec(
                        alpha_deg=slope,
                        mu_s=grid.walk_mu_s,
                        g=base.terrain.g,
                        mu_foot_s=base.terrain.mu_foot_s,
                        allow_extended=base.terrain.allow_extended,
                    )
                    config = replace(
                        base, mode="walk", terrain=terrain, walk_speed=condition,
                        seed=seed,
                    )
                else:
                    terrain = TerrainSpec(
                        alpha_deg=slope,
                        mu_s=condition,
                        g=base.terrain.g,
                        mu_foot_s=base.terrain.mu_foot_s,
                        allow_extended=base.terrain.allow_extended,
                    )
                    config = replace(base, mode="slide", terrain=terrain, seed=seed)
                plans.append(
                    TrialPlan(
                        mode=mode, condition=condition, slope=slope, rep=rep,
                        seed=seed, config=config,
                    )
                )
    return plans


def execute_trial(plan: TrialPlan, log_writer=None) -> TrialOutcome:
    """Run one planned trial; failures become recorded outcomes, not raises."""
    try:
        log = simulate_trial(plan.config)
        if log_writer is not None:
            log_writer(plan.trial_id, log)
        res = cot_for_trial(log, plan.config.robot, plan.config.terrain)
        return TrialOutcome(
            plan_id=plan.trial_id, ok=True,
            cot=res.cot, energy=res.energy, distance=res.distance,
        )
    except Exception as exc:  # per-trial failures never abort the sweep
        return TrialOutcome(
            plan_id=plan.trial_id, ok=False,
            error=f"{type(exc).__name__}: {exc}",
        )


def aggregate(values) -> tuple:
    """Sample mean and unbiased std over successful repetitions.

    values holds floats for successes and None for failures. Raises
    AllTrialsFailed when nothing succeeded. A single success has zero std.
    """
    vals = [v for v in values if v is not None]
    n_fail = len(values) - len(vals)
    if not values:
        raise ValueError("aggregate needs at least one result")
    if not vals:
        raise AllTrialsFailed(f"all {n_fail} repetitions failed")
    mean = float(np.mean(vals))
    std = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
    return mean, std, len(vals), n_fail


def resolve_workers(requested=None) -> int:
    """Worker count: requested (or cpu count), capped by COT_ATLAS_WORKERS."""
    workers = requested if requested is not None else (os.cpu_count() or 1)
    cap = os.environ.get(WORKERS_ENV_VAR)
    if cap is not None:
        workers = min(workers, max(1, int(cap)))
    return max(1, workers)


def _worker_execute(args):
    plan, writer = args
    return execute_trial(plan, writer)


def run_sweep(
    grid: SweepGrid,
    mode: str,
    base: TrialConfig | None = None,
    workers: int | None = None,
    log_writer=None,
) -> tuple:
    """Run the full grid for one mode.

    Returns (curves, outcomes): one CoTCurve per condition with per-slope
    aggregates, plus the flat per-trial outcome list in plan order.
    Results are reduced in fixed grid order whatever the worker pool does;
    log_writer (optional, picklable) receives (trial_id, TrialLog) inside
    the workers, which write to disjoint paths.
    """
    base = base or TrialConfig()
    plans = plan_trials(grid, mode, base)
    n_workers = resolve_workers(workers)

    if n_workers <= 1 or len(plans) <= 1:
        outcomes = [execute_trial(p, log_writer) for p in plans]
    else:
        import multiprocessing as mp

        ctx = mp.get_context("fork")
        with ctx.Pool(processes=n_workers) as pool:
            outcomes = pool.map(
                _worker_execute, [(p, log_writer) for p in plans], chunksize=1
            )

    curves = []
    reps = grid.repetitions
    n_slopes = len(grid.slopes)
    idx = 0
    for condition in grid.conditions(mode):
        mean = np.full(n_slopes, np.nan)
        std = np.full(n_slopes, np.nan)
        n_ok = np.zeros(n_slopes, dtype=int)
        n_fail = np.zeros(n_slopes, dtype=int)
        for si in range(n_slopes):
            cell = outcomes[idx : idx + reps]
            idx += reps
            values = [o.cot if o.ok else None for o in cell]
            try:
                mean[si], std[si], n_ok[si], n_fail[si] = aggregate(values)
            except AllTrialsFailed:
                n_ok[si] = 0
                n_fail[si] = reps
        curves.append(
            CoTCurve(
                mode=mode,
                speed=condition if mode == "walk" else base.slide.v,
                mu_s=grid.walk_mu_s if mode == "walk" else condition,
                slopes=np.array(grid.slopes),
                cot_mean=mean,
                cot_std=std,
                n_ok=n_ok,
                n_fail=n_fail,
            )
        )
    return curves, outcomes
