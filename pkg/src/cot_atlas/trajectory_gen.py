"""Cartesian front-foot reference generator for torso-sliding locomotion.

The sliding stroke is a phase-locked sinusoid in the hip frame: the
longitudinal offset is a sine scaled by the commanded speed with a reduced
forward amplitude, the lateral offset is identically zero, and the vertical
offset oscillates about a constant clearance depth so the foot presses
during the backstroke and lightens (or lifts) during the recovery stroke.
Only the two front legs are driven; hind legs stay frozen at the home pose.

Amplitudes multiply the commanded speed directly. Taken literally the
products v*L and v*H carry units of m^2/s; set ``normalize_by_v_ref`` to
divide by ``v_ref`` (1 m/s) so amplitudes read as lengths. Both modes are
numerically identical at v_ref = 1 and the literal form is the default.

Reference velocities are the exact time derivatives of the active branch.
At the sine zero crossings the branch switches; the velocity there is
defined by the incoming branch (left limit), which is deterministic and
leaves only a bounded kink for the impedance damping to absorb.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit

LEG_ORDER = ("lf", "rf", "lh", "rh")


@dataclass(frozen=True)
class SlideTrajParams:
    """Stroke parameters of the sliding motion generator.

    f: stroke frequency (Hz); f_s: task servo rate (Hz); l_swing /
    l_plus: backward / reduced-forward longitudinal amplitudes (m);
    h_swing: vertical modulation amplitude (m); z0: constant clearance
    depth below home (m); v: commanded forward speed (m/s);
    alpha_filter: home-pose smoothing gain; phase_offset: initial stroke
    phase (rad), the per-trial jitter hook.
    """

    f: float = 1.5
    f_s: float = 500.0
    l_swing: float = 0.15
    l_plus: float = 0.05
    h_swing: float = 0.06
    z0: float = 0.05
    v: float = 0.2
    alpha_filter: float = 0.05
    phase_offset: float = 0.0
    normalize_by_v_ref: bool = False
    v_ref: float = 1.0

    def __post_init__(self):
        if self.f <= 0:
            raise ValueError("stroke frequency must be positive")
        if self.f_s < 10 * self.f:
            raise ValueError("servo rate must be at least 10x the stroke frequency")
        if self.l_swing <= 0 or not (0 < self.l_plus <= self.l_swing):
            raise ValueError("require 0 < l_plus <= l_swing and l_swing > 0")
        if self.h_swing < 0:
            raise ValueError("h_swing must be non-negative")
        if self.z0 <= 0:
            raise ValueError("z0 must be positive")
        if self.v < 0:
            raise ValueError("commanded speed must be non-negative")
        if not (0 < self.alpha_filter < 1):
            raise ValueError("alpha_filter must lie in (0, 1)")
        if self.v_ref <= 0:
            raise ValueError("v_ref must be positive")

    @property
    def v_scale(self) -> float:
        """Amplitude scale: v, optionally normalized by the reference speed."""
        return self.v / self.v_ref if self.normalize_by_v_ref else self.v

    def with_phase(self, phase_offset: float) -> "SlideTrajParams":
        return replace(self, phase_offset=phase_offset)


def _default_home_legs():
    # Front feet reach forward with ground clearance z0 (the -z0 stroke
    # offset brings them exactly to the torso-seated ground line); hind
    # feet retracted and tucked.
    return {
        "lf": np.array([0.28, 0.083, -0.07]),
        "rf": np.array([0.28, -0.083, -0.07]),
        "lh": np.array([-0.18, 0.083, -0.05]),
        "rh": np.array([-0.18, -0.083, -0.05]),
    }


@dataclass
class HomePose:
    """Per-leg nominal foot positions in each leg's hip frame."""

    legs: dict = field(default_factory=_default_home_legs)

    def __post_init__(self):
        legs = {}
        for name in LEG_ORDER:
            if name not in self.legs:
                raise ValueError(f"home pose missing leg {name!r}")
            legs[name] = np.asarray(self.legs[name], dtype=float).copy()
            if legs[name].shape != (3,):
                raise ValueError("home points must be 3-vectors")
        self.legs = legs

    def __getitem__(self, leg: str) -> np.ndarray:
        return self.legs[leg]

    def copy(self) -> "HomePose":
        return HomePose({k: v.copy() for k, v in self.legs.items()})

    def check_front_clearance(self, min_clearance_z: float):
        """Front feet must sit at or above the clearance line (hip frame z)."""
        for leg in ("lf", "rf"):
            if self.legs[leg][2] < min_clearance_z:
                raise ValueError(
                    f"front leg {leg} home z={self.legs[leg][2]:.3f} below "
                    f"clearance {min_clearance_z:.3f}; foot would drag during sliding"
                )


@dataclass(frozen=True)
class FootReference:
    """Cartesian reference sample: position and its analytic derivative."""

    position: np.ndarray
    velocity: np.ndarray


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------


@njit(cache=True)
def _phase(f, f_s, phase_offset, k):
    t = k / f_s
    phi = 2.0 * math.pi * f * t + phase_offset
    return phi, math.sin(phi), math.cos(phi)


@njit(cache=True)
def _front_swing(f, f_s, phase_offset, l_swing, l_plus, h_swing, z0, v_scale, k):
    """Offsets and velocities (x, y, z, vx, vy, vz) of the front-leg stroke."""
    if v_scale <= 0.0:
        return 0.0, 0.0, -z0, 0.0, 0.0, 0.0
    phi, s, c = _phase(f, f_s, phase_offset, k)
    omega = 2.0 * math.pi * f
    amp = l_plus if s >= 0.0 else l_swing
    x = v_scale * amp * s
    z = -z0 + v_scale * h_swing * c
    if s == 0.0:
        # branch switch: use the incoming branch (left limit)
        amp_v = l_swing if c > 0.0 else l_plus
    else:
        amp_v = amp
    vx = v_scale * amp_v * omega * c
    vz = -v_scale * h_swing * omega * s
    return x, 0.0, z, vx, 0.0, vz


# ---------------------------------------------------------------------------
# public API
# ---------------------------------------------------------------------------


def phase(params: SlideTrajParams, k: int):
    """Stroke phase at step k: (phi_k, sin(phi_k), cos(phi_k)) with t_k = k/f_s."""
    if k < 0:
        raise ValueError("step index must be non-negative")
    return _phase(params.f, params.f_s, params.phase_offset, k)


def front_swing(params: SlideTrajParams, k: int) -> np.ndarray:
    """Front-leg stroke offsets (x, y, z) at step k; y is identically zero."""
    x, y, z, _, _, _ = _front_swing(
        params.f, params.f_s, params.phase_offset,
        params.l_swing, params.l_plus, params.h_swing, params.z0,
        params.v_scale, k,
    )
    return np.array((x, y, z))


def foot_reference(params: SlideTrajParams, k: int, home_point) -> FootReference:
    """Complete front-foot reference: home + stroke offsets, steering omitted.

    Both front legs stroke in phase, so the same reference applies to LF
    and RF given their own home points.
    """
    x, y, z, vx, vy, vz = _front_swing(
        params.f, params.f_s, params.phase_offset,
        params.l_swing, params.l_plus, params.h_swing, params.z0,
        params.v_scale, k,
    )
    home = np.asarray(home_point, dtype=float)
    return FootReference(
        position=home + np.array((x, y, z)),
        velocity=np.array((vx, vy, vz)),
    )


def smooth_home(current: HomePose, target: HomePose, alpha_filter: float) -> HomePose:
    """First-order home-pose update: (1 - alpha) * current + alpha * target."""
    if not (0 < alpha_filter < 1):
        raise ValueError("alpha_filter must lie in (0, 1)")
    return HomePose(
        {
            leg: (1.0 - alpha_filter) * current[leg] + alpha_filter * target[leg]
            for leg in LEG_ORDER
        }
    )
