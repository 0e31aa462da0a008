import numpy as np
import pytest

from cot_atlas.sweep_harness import (
    AllTrialsFailed,
    CoTCurve,
    SweepGrid,
    aggregate,
    execute_trial,
    plan_trials,
    resolve_workers,
    run_sweep,
    trial_seed,
)
from cot_atlas.terrain_dynamics import TrialConfig


def small_grid(**kw):
    defaults = dict(
        slopes=(10.0, 30.0),
        frictions=(0.4, 0.6),
        speeds=(0.1,),
        repetitions=2,
        master_seed=99,
    )
    defaults.update(kw)
    return SweepGrid(**defaults)


def fast_base(**kw):
    defaults = dict(ramp_length=0.4, timeout=30.0)
    defaults.update(kw)
    return TrialConfig(**defaults)


class TestGrid:
    def test_default_grid_matches_protocol(self):
        g = SweepGrid()
        assert len(g.slopes) == 8
        assert g.slopes[0] == 0.0 and g.slopes[-1] == 35.0
        assert g.speeds == (0.1, 0.2, 0.3)
        assert g.frictions == (0.4, 0.5, 0.6, 0.7, 0.8)
        assert g.repetitions == 10
        assert g.trial_count("slide") == 8 * 5 * 10 == 400
        assert g.trial_count("walk") == 8 * 3 * 10 == 240

    def test_validation(self):
        with pytest.raises(ValueError):
            SweepGrid(slopes=())
        with pytest.raises(ValueError):
            SweepGrid(repetitions=0)


class TestSeeding:
    def test_seed_is_pure_function_of_coordinates(self):
        s1 = trial_seed(42, "slide", 0.4, 10.0, 3)
        s2 = trial_seed(42, "slide", 0.4, 10.0, 3)
        assert s1 == s2

    def test_seed_separates_coordinates(self):
        seeds = {
            trial_seed(42, "slide", 0.4, 10.0, 0),
            trial_seed(42, "slide", 0.4, 10.0, 1),
            trial_seed(42, "slide", 0.4, 15.0, 0),
            trial_seed(42, "slide", 0.5, 10.0, 0),
            trial_seed(42, "walk", 0.4, 10.0, 0),
            trial_seed(43, "slide", 0.4, 10.0, 0),
        }
        assert len(seeds) == 6

    def test_plans_in_fixed_order(self):
        grid = small_grid()
        plans = plan_trials(grid, "slide", fast_base())
        keys = [(p.condition, p.slope, p.rep) for p in plans]
        assert keys == sorted(keys, key=lambda k: (k[0], k[1], k[2]))
        assert len(plans) == grid.trial_count("slide")

    def test_walk_plans_pin_surface_friction(self):
        plans = plan_trials(small_grid(), "walk", fast_base())
        assert all(p.config.terrain.mu_s == 0.7 for p in plans)
        assert all(p.config.walk_speed == 0.1 for p in plans)


class TestAggregate:
    def test_constant_values(self):
        mean, std, n_ok, n_fail = aggregate([1.0, 1.0, 1.0])
        assert mean == 1.0 and std == 0.0 and n_ok == 3 and n_fail == 0

    def test_two_values_hand_arithmetic(self):
        mean, std, n_ok, _ = aggregate([1.0, 2.0])
        assert mean == pytest.approx(1.5)
        assert std == pytest.approx(np.sqrt(0.5), rel=1e-12)

    def test_failures_counted_not_averaged(self):
        mean, std, n_ok, n_fail = aggregate([1.0, None, 3.0, None, None])
        assert mean == pytest.approx(2.0)
        assert n_ok == 2 and n_fail == 3

    def test_single_result_zero_std(self):
        mean, std, n_ok, n_fail = aggregate([2.5])
        assert std == 0.0

    def test_all_failed(self):
        with pytest.raises(AllTrialsFailed):
            aggregate([None, None])


class TestExecuteTrial:
    def test_failure_is_recorded_not_raised(self):
        grid = small_grid(slopes=(35.0,), speeds=(0.1,))
        plans = plan_trials(grid, "walk", fast_base())
        outcome = execute_trial(plans[0])
        assert not outcome.ok
        assert "FrictionConeInfeasible" in outcome.error

    def test_success_carries_metrics(self):
        plans = plan_trials(small_grid(slopes=(30.0,), frictions=(0.4,), repetitions=1),
                            "slide", fast_base())
        outcome = execute_trial(plans[0])
        assert outcome.ok
        assert outcome.cot > 0 and outcome.distance >= 0.4


class TestRunSweep:
    def test_small_sliding_sweep_shape(self):
        grid = small_grid()
        curves, outcomes = run_sweep(grid, "slide", fast_base(), workers=1)
        assert len(curves) == 2  # one per friction
        assert len(outcomes) == grid.trial_count("slide")
        for curve in curves:
            assert curve.mode == "slide"
            np.testing.assert_array_equal(curve.slopes, [10.0, 30.0])
            assert (curve.n_ok + curve.n_fail == grid.repetitions).all()

    def test_determinism_across_runs(self):
        grid = small_grid(repetitions=2)
        c1, o1 = run_sweep(grid, "slide", fast_base(), workers=1)
        c2, o2 = run_sweep(grid, "slide", fast_base(), workers=1)
        for a, b in zip(c1, c2):
            np.testing.assert_array_equal(a.cot_mean, b.cot_mean)
            np.testing.assert_array_equal(a.cot_std, b.cot_std)
        assert [o.cot for o in o1] == [o.cot for o in o2]

    def test_single_rep_no_jitter_zero_std(self):
        grid = small_grid(repetitions=1)
        base = fast_base(jitter=False)
        curves, _ = run_sweep(grid, "slide", base, workers=1)
        for curve in curves:
            assert (curve.cot_std[np.isfinite(curve.cot_std)] == 0.0).all()

    def test_jittered_reps_have_positive_std(self):
        grid = small_grid(slopes=(20.0,), frictions=(0.5,), repetitions=3)
        curves, _ = run_sweep(grid, "slide", fast_base(), workers=1)
        assert curves[0].cot_std[0] > 0.0

    def test_failed_grid_point_marked_absent(self):
        grid = small_grid(slopes=(35.0,), speeds=(0.1,), repetitions=2)
        curves, outcomes = run_sweep(grid, "walk", fast_base(), workers=1)
        assert np.isnan(curves[0].cot_mean[0])
        assert curves[0].n_fail[0] == 2
        assert all(not o.ok for o in outcomes)

    def test_worker_pool_matches_inline(self):
        grid = small_grid(slopes=(20.0,), frictions=(0.4, 0.6), repetitions=2)
        c1, _ = run_sweep(grid, "slide", fast_base(), workers=1)
        c2, _ = run_sweep(grid, "slide", fast_base(), workers=2)
        for a, b in zip(c1, c2):
            np.testing.assert_array_equal(a.cot_mean, b.cot_mean)

    def test_env_var_caps_workers(self, monkeypatch):
        monkeypatch.setenv("COT_ATLAS_WORKERS", "1")
        assert resolve_workers(8) == 1
        monkeypatch.delenv("COT_ATLAS_WORKERS")
        assert resolve_workers(3) == 3


class TestCurveApi:
    def test_value_lookup(self):
        curve = CoTCurve(
            mode="slide", speed=0.2, mu_s=0.4,
            slopes=np.array([0.0, 5.0]),
            cot_mean=np.array([2.0, 1.5]),
            cot_std=np.zeros(2),
            n_ok=np.array([10, 10]),
            n_fail=np.zeros(2, dtype=int),
        )
        assert curve.value_at(5.0) == 1.5
        assert np.isnan(curve.value_at(99.0))
        assert "mu_s" in curve.condition_label
