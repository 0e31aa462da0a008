"""Walking-vs-sliding CoT difference curves and transition angles.

The difference is taken as sliding minus walking, so positive values mean
sliding costs more. A sign change between grid slopes brackets a
transition angle, located by linear interpolation; an exact zero counts
as a crossing at the grid point itself. Curves that never change sign
classify the whole condition pair as always-slide-preferred (strictly
negative) or always-walk-preferred (strictly positive). Mean curves drive
the detection; the propagated standard deviation is reported alongside
but never gates the classification.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .sweep_harness import CoTCurve

CROSSINGS = "crossings"
ALWAYS_SLIDE = "always_slide_preferred"
ALWAYS_WALK = "always_walk_preferred"


class InsufficientOverlap(ValueError):
    """Fewer than two slopes carry valid means in both input curves."""


@dataclass(frozen=True)
class DeltaCurve:
    """Pointwise CoT_slide - CoT_walk over the common slope grid."""

    walk_speed: float
    mu_s: float
    slopes: np.ndarray
    delta: np.ndarray
    std: np.ndarray
    dropped_slopes: tuple = ()


@dataclass(frozen=True)
class Crossing:
    """One sign change: interpolated angle plus its bracketing interval."""

    alpha_star: float
    bracket: tuple


@dataclass(frozen=True)
class CrossoverResult:
    walk_speed: float
    mu_s: float
    classification: str
    crossings: tuple = ()

    @property
    def ordering_angle(self) -> float:
        """First transition angle; -inf/+inf for the no-crossing classes."""
        if self.classification == ALWAYS_SLIDE:
            return -math.inf
        if self.classification == ALWAYS_WALK:
            return math.inf
        return self.crossings[0].alpha_star


@dataclass(frozen=True)
class OrderingReport:
    """Transition angles arranged along both grid axes with trend flags."""

    by_speed: dict  # walk_speed -> tuple of (mu_s, ordering_angle)
    by_friction: dict  # mu_s -> tuple of (walk_speed, ordering_angle)
    friction_monotone: bool  # alpha* non-decreasing in mu_s at fixed speed
    speed_monotone: bool  # alpha* non-increasing in speed at fixed mu_s


def delta_cot(walk: CoTCurve, slide: CoTCurve) -> DeltaCurve:
    """Pointwise slide-minus-walk difference on the common valid slopes."""
    common = []
    dropped = []
    for si, slope in enumerate(slide.slopes):
        wi = np.nonzero(np.isclose(walk.slopes, slope))[0]
        if wi.size == 0:
            dropped.append(float(slope))
            continue
        wv = walk.cot_mean[wi[0]]
        sv = slide.cot_mean[si]
        if not (np.isfinite(wv) and np.isfinite(sv)):
            dropped.append(float(slope))
            continue
        sd = math.sqrt(
            float(np.nan_to_num(walk.cot_std[wi[0]])) ** 2
            + float(np.nan_to_num(slide.cot_std[si])) ** 2
        )
        common.append((float(slope), float(sv - wv), sd))
    for slope in walk.slopes:
        if not np.isclose(slide.slopes, slope).any():
            dropped.append(float(slope))
    if len(common) < 2:
        raise InsufficientOverlap(
            f"only {len(common)} common valid slopes between "
            f"{walk.condition_label} and {slide.condition_label}"
        )
    common.sort(key=lambda row: row[0])
    slopes, deltas, stds = zip(*common)
    return DeltaCurve(
        walk_speed=walk.speed,
        mu_s=slide.mu_s,
        slopes=np.array(slopes),
        delta=np.array(deltas),
        std=np.array(stds),
        dropped_slopes=tuple(sorted(set(dropped))),
    )


def find_crossovers(delta: DeltaCurve) -> CrossoverResult:
    """Locate all sign changes of the difference curve.

    Strict sign changes interpolate linearly inside their grid interval;
    an exact zero is a crossing at the grid point with its neighbors as
    the bracket. Strictly one-signed curves classify as always-preferred.
    """
    a = delta.slopes
    d = delta.delta
    n = len(d)
    if n < 2:
        raise InsufficientOverlap("need at least two points to scan for crossings")
    crossings = []
    for i in range(n):
        if d[i] == 0.0:
            lo = a[i - 1] if i > 0 else a[i] - (a[i + 1] - a[i])
            hi = a[i + 1] if i < n - 1 else a[i] + (a[i] - a[i - 1])
            crossings.append(Crossing(float(a[i]), (float(lo), float(hi))))
    for i in range(n - 1):
        if d[i] * d[i + 1] < 0.0:
            frac = abs(d[i]) / (abs(d[i]) + abs(d[i + 1]))
            alpha = a[i] + (a[i + 1] - a[i]) * frac
            crossings.append(Crossing(float(alpha), (float(a[i]), float(a[i + 1]))))
    crossings.sort(key=lambda c: c.alpha_star)
    if crossings:
        classification = CROSSINGS
    elif (d < 0).all():
        classification = ALWAYS_SLIDE
    else:
        classification = ALWAYS_WALK
    return CrossoverResult(
        walk_speed=delta.walk_speed,
        mu_s=delta.mu_s,
        classification=classification,
        crossings=tuple(crossings),
    )


def crossover_ordering_report(results) -> OrderingReport:
    """Arrange transition angles along both axes and test the two trends.

    results is an iterable of CrossoverResult over a common (speed,
    friction) grid. Always-slide-preferred sorts as -inf (the earliest
    possible transition), always-walk-preferred as +inf.
    """
    results = list(results)
    speeds = sorted({r.walk_speed for r in results})
    frictions = sorted({r.mu_s for r in results})
    table = {(r.walk_speed, r.mu_s): r.ordering_angle for r in results}

    by_speed = {}
    friction_monotone = True
    for v in speeds:
        row = tuple(
            (mu, table[(v, mu)]) for mu in frictions if (v, mu) in table
        )
        by_speed[v] = row
        angles = [ang for _, ang in row]
        if any(b < a_ for a_, b in zip(angles, angles[1:])):
            friction_monotone = False

    by_friction = {}
    speed_monotone = True
    for mu in frictions:
        row = tuple(
            (v, table[(v, mu)]) for v in speeds if (v, mu) in table
        )
        by_friction[mu] = row
        angles = [ang for _, ang in row]
        if any(b > a_ for a_, b in zip(angles, angles[1:])):
            speed_monotone = False

    return OrderingReport(
        by_speed=by_speed,
        by_friction=by_friction,
        friction_monotone=friction_monotone,
        speed_monotone=speed_monotone,
    )
