import math

import numpy as np
import pytest

from cot_atlas.crossover_analysis import (
    ALWAYS_SLIDE,
    ALWAYS_WALK,
    CROSSINGS,
    CrossoverResult,
    Crossing,
    DeltaCurve,
    InsufficientOverlap,
    crossover_ordering_report,
    delta_cot,
    find_crossovers,
)
from cot_atlas.sweep_harness import CoTCurve


def curve(mode, slopes, means, stds=None, speed=0.1, mu=0.6):
    slopes = np.asarray(slopes, dtype=float)
    means = np.asarray(means, dtype=float)
    stds = np.zeros_like(means) if stds is None else np.asarray(stds, dtype=float)
    return CoTCurve(
        mode=mode, speed=speed, mu_s=mu,
        slopes=slopes, cot_mean=means, cot_std=stds,
        n_ok=np.full(len(slopes), 10), n_fail=np.zeros(len(slopes), dtype=int),
    )


def delta(slopes, values, speed=0.1, mu=0.6):
    return DeltaCurve(
        walk_speed=speed, mu_s=mu,
        slopes=np.asarray(slopes, dtype=float),
        delta=np.asarray(values, dtype=float),
        std=np.zeros(len(slopes)),
    )


class TestDeltaCot:
    def test_identical_curves_zero_delta(self):
        w = curve("walk", [0, 5, 10], [1.0, 1.1, 1.2])
        s = curve("slide", [0, 5, 10], [1.0, 1.1, 1.2])
        d = delta_cot(w, s)
        np.testing.assert_array_equal(d.delta, np.zeros(3))

    def test_subtraction_example(self):
        w = curve("walk", [0, 5], [0.4, 0.5])
        s = curve("slide", [0, 5], [0.9, 0.3])
        d = delta_cot(w, s)
        np.testing.assert_allclose(d.delta, [0.5, -0.2])

    def test_std_propagation_three_four_five(self):
        w = curve("walk", [0, 5], [1.0, 1.0], stds=[0.3, 0.3])
        s = curve("slide", [0, 5], [1.0, 1.0], stds=[0.4, 0.4])
        d = delta_cot(w, s)
        np.testing.assert_allclose(d.std, [0.5, 0.5])

    def test_absent_points_dropped_and_reported(self):
        w = curve("walk", [0, 5, 10, 15], [1.0, 1.0, np.nan, 1.0])
        s = curve("slide", [0, 5, 10, 15], [2.0, 2.0, 2.0, 2.0])
        d = delta_cot(w, s)
        np.testing.assert_array_equal(d.slopes, [0.0, 5.0, 15.0])
        assert d.dropped_slopes == (10.0,)

    def test_insufficient_overlap(self):
        w = curve("walk", [0, 5], [1.0, np.nan])
        s = curve("slide", [0, 5], [2.0, 2.0])
        with pytest.raises(InsufficientOverlap):
            delta_cot(w, s)

    def test_antisymmetry(self):
        w = curve("walk", [0, 5, 10], [0.7, 0.9, 1.4], stds=[0.1, 0.2, 0.3])
        s = curve("slide", [0, 5, 10], [1.5, 0.8, 0.3], stds=[0.2, 0.1, 0.4])
        d_ws = delta_cot(w, s)
        d_sw = delta_cot(s, w)
        np.testing.assert_allclose(d_sw.delta, -d_ws.delta)
        np.testing.assert_allclose(d_sw.std, d_ws.std)


class TestFindCrossovers:
    def test_linear_interpolation_example(self):
        # {5: +0.5, 10: -0.3} -> 5 + 5 * 0.5/0.8 = 8.125
        res = find_crossovers(delta([5, 10], [0.5, -0.3]))
        assert res.classification == CROSSINGS
        assert res.crossings[0].alpha_star == pytest.approx(8.125, abs=1e-12)
        assert res.crossings[0].bracket == (5.0, 10.0)

    def test_alpha_star_strictly_inside_bracket(self):
        rng = np.random.default_rng(31)
        for _ in range(200):
            d0 = rng.uniform(0.01, 2.0)
            d1 = -rng.uniform(0.01, 2.0)
            res = find_crossovers(delta([0, 5], [d0, d1]))
            (c,) = res.crossings
            assert c.bracket[0] < c.alpha_star < c.bracket[1]

    def test_zero_at_grid_point(self):
        res = find_crossovers(delta([0, 5, 10], [1.0, 0.0, -1.0]))
        assert res.classification == CROSSINGS
        assert len(res.crossings) == 1
        assert res.crossings[0].alpha_star == 5.0
        assert res.crossings[0].bracket == (0.0, 10.0)

    def test_strictly_negative_always_slide(self):
        res = find_crossovers(delta([0, 5, 10], [-0.2, -0.5, -1.0]))
        assert res.classification == ALWAYS_SLIDE
        assert res.crossings == ()
        assert res.ordering_angle == -math.inf

    def test_strictly_positive_always_walk(self):
        res = find_crossovers(delta([0, 5, 10], [0.2, 0.5, 1.0]))
        assert res.classification == ALWAYS_WALK
        assert res.ordering_angle == math.inf

    def test_multiple_sign_changes_all_reported(self):
        res = find_crossovers(delta([0, 5, 10, 15], [1.0, -1.0, 1.0, -1.0]))
        assert len(res.crossings) == 3
        alphas = [c.alpha_star for c in res.crossings]
        assert alphas == sorted(alphas)

    def test_antisymmetry_swaps_classification(self):
        d = delta([0, 5, 10], [0.4, 0.1, -0.6])
        neg = DeltaCurve(
            walk_speed=d.walk_speed, mu_s=d.mu_s, slopes=d.slopes,
            delta=-d.delta, std=d.std,
        )
        res = find_crossovers(d)
        res_neg = find_crossovers(neg)
        assert res.classification == CROSSINGS == res_neg.classification
        assert res.crossings[0].alpha_star == pytest.approx(
            res_neg.crossings[0].alpha_star, abs=1e-12
        )
        always = find_crossovers(delta([0, 5], [-1.0, -2.0]))
        always_neg = find_crossovers(delta([0, 5], [1.0, 2.0]))
        assert always.classification == ALWAYS_SLIDE
        assert always_neg.classification == ALWAYS_WALK

    def test_refined_grid_brackets_coarse_alpha(self):
        # linear underlying delta: refined grid must bracket the coarse root
        f = lambda a: 0.8 - 0.09 * a
        coarse = find_crossovers(delta([0, 5, 10, 15], [f(a) for a in (0, 5, 10, 15)]))
        fine = find_crossovers(
            delta(np.arange(0, 15.1, 2.5), [f(a) for a in np.arange(0, 15.1, 2.5)])
        )
        a_c = coarse.crossings[0].alpha_star
        a_f = fine.crossings[0].alpha_star
        assert abs(a_f - a_c) <= 5.0
        assert fine.crossings[0].bracket[0] >= coarse.crossings[0].bracket[0]
        assert fine.crossings[0].bracket[1] <= coarse.crossings[0].bracket[1]


class TestOrderingReport:
    def make_result(self, v, mu, angle):
        if angle == -math.inf:
            return CrossoverResult(v, mu, ALWAYS_SLIDE)
        if angle == math.inf:
            return CrossoverResult(v, mu, ALWAYS_WALK)
        return CrossoverResult(v, mu, CROSSINGS, (Crossing(angle, (0.0, 35.0)),))

    def test_monotone_flags_true_for_sorted_input(self):
        results = [
            self.make_result(0.1, 0.4, 3.0),
            self.make_result(0.1, 0.6, 7.0),
            self.make_result(0.1, 0.8, 12.0),
            self.make_result(0.3, 0.4, -math.inf),
            self.make_result(0.3, 0.6, 4.0),
            self.make_result(0.3, 0.8, 9.0),
        ]
        rep = crossover_ordering_report(results)
        assert rep.friction_monotone
        assert rep.speed_monotone
        assert rep.by_speed[0.1] == ((0.4, 3.0), (0.6, 7.0), (0.8, 12.0))

    def test_friction_violation_detected(self):
        results = [
            self.make_result(0.1, 0.4, 9.0),
            self.make_result(0.1, 0.6, 7.0),
        ]
        rep = crossover_ordering_report(results)
        assert not rep.friction_monotone

    def test_speed_violation_detected(self):
        results = [
            self.make_result(0.1, 0.4, 3.0),
            self.make_result(0.3, 0.4, 8.0),
        ]
        rep = crossover_ordering_report(results)
        assert not rep.speed_monotone

    def test_always_slide_sorts_earliest(self):
        results = [
            self.make_result(0.1, 0.4, -math.inf),
            self.make_result(0.1, 0.6, 5.0),
        ]
        rep = crossover_ordering_report(results)
        assert rep.friction_monotone
