"""Controllers: joint-space impedance law, crawl-gait surrogate, mode switch.

The walking side of the workbench is a deliberately simple quasi-static
crawl surrogate (the reference platform's model-predictive walking
controller is out of scope). It generates statically stable foot
references: stance feet hold their world anchor while the base advances,
swing feet step ahead along a half-sine height profile with smooth
(zero-slip) liftoff and touchdown velocities. Cadence is locked to the
commanded speed so each stance foot sweeps the same symmetric span around
its hip regardless of speed; the configured cycle_time only applies when
the commanded speed is zero (all feet hold).

Torque generation for sliding is the diagonal joint-space impedance law;
the switch guarantees exactly one controller's output reaches the plant at
any control tick.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .trajectory_gen import LEG_ORDER, FootReference

#: Crawl phase offsets (fraction of cycle); swing order LH, RF, RH, LF.
CRAWL_OFFSETS = {"lf": 0.0, "rf": 0.5, "lh": 0.75, "rh": 0.25}


class ControlMode(enum.Enum):
    WALKING = "walk"
    SLIDING = "slide"


@dataclass(frozen=True)
class ImpedanceGains:
    """Diagonal joint stiffness/damping and the per-joint torque ceiling."""

    k_q: tuple = (100.0, 100.0, 100.0)
    d_q: tuple = (5.0, 5.0, 5.0)
    tau_max: float = 44.0

    def __post_init__(self):
        if len(self.k_q) != 3 or len(self.d_q) != 3:
            raise ValueError("gains are per-joint 3-vectors")
        if any(k <= 0 for k in self.k_q) or any(d <= 0 for d in self.d_q):
            raise ValueError("stiffness and damping entries must be positive")
        if self.tau_max <= 0:
            raise ValueError("tau_max must be positive")


@dataclass(frozen=True)
class GaitSchedule:
    """Crawl-gait surrogate parameters."""

    gait: str = "crawl"
    duty_factor: float = 0.8
    step_length: float = 0.10
    step_height: float = 0.05
    cycle_time: float = 1.0

    def __post_init__(self):
        if self.gait != "crawl":
            raise ValueError(f"unsupported gait {self.gait!r}")
        if not (0.5 < self.duty_factor < 1.0):
            raise ValueError("duty factor must lie in (0.5, 1)")
        if 4.0 * self.duty_factor < 3.0:
            raise ValueError(
                "crawl needs duty factor >= 0.75 so at least 3 legs stay in stance"
            )
        if self.step_length <= 0:
            raise ValueError("step_length must be positive")
        if self.step_height < 0:
            raise ValueError("step_height must be non-negative")
        if self.cycle_time <= 0:
            raise ValueError("cycle_time must be positive")

    def effective_cycle_time(self, v: float) -> float:
        """Cycle time at commanded speed v; stride per cycle equals step_length."""
        return self.step_length / v if v > 0 else self.cycle_time


def impedance_torque(gains: ImpedanceGains, q_des, qd_des, q, qd):
    """Joint torques K_q (q_des - q) + D_q (qd_des - qd), clipped at tau_max.

    Returns (tau, saturated) where saturated marks the clipped joints so the
    trial log can report saturation events.
    """
    k = np.asarray(gains.k_q, dtype=float)
    d = np.asarray(gains.d_q, dtype=float)
    tau = k * (np.asarray(q_des, float) - np.asarray(q, float)) + d * (
        np.asarray(qd_des, float) - np.asarray(qd, float)
    )
    saturated = np.abs(tau) > gains.tau_max
    if saturated.any():
        tau = np.clip(tau, -gains.tau_max, gains.tau_max)
    return tau, saturated


def controller_switch(mode: ControlMode, walk_out, slide_out):
    """Route exactly one controller's torques to the plant.

    The inactive side may be None; outputs are never blended and a switch
    takes effect at a control-tick boundary.
    """
    if mode is ControlMode.WALKING:
        if walk_out is None:
            raise ValueError("walking mode active but no walking torques supplied")
        return walk_out
    if mode is ControlMode.SLIDING:
        if slide_out is None:
            raise ValueError("sliding mode active but no sliding torques supplied")
        return slide_out
    raise ValueError(f"unknown control mode {mode!r}")


# ---------------------------------------------------------------------------
# crawl reference kernel
# ---------------------------------------------------------------------------


@njit(cache=True)
def _walk_leg_ref(t, offset, duty, step_len, step_h, cycle_time, stance_h, v):
    """Sagittal crawl reference for one leg in the hip frame.

    Returns (stance, x, z, vx, vz, ax, az). The base reference advances at
    exactly v, so stance feet move backward at -v in the hip frame; swing
    blends from -v to -v with net forward displacement equal to the sweep,
    giving zero foot velocity in the world frame at both contact events.
    """
    if v <= 0.0:
        return 1, 0.0, -stance_h, 0.0, 0.0, 0.0, 0.0
    t_c = step_len / v
    u = t / t_c + offset
    phi = u - math.floor(u)
    stride = step_len
    if phi < duty:
        x = stride * (0.5 * duty - phi)
        return 1, x, -stance_h, -v, 0.0, 0.0, 0.0
    t_sw = (1.0 - duty) * t_c
    s = (phi - duty) / (1.0 - duty)
    r = 0.5 * (1.0 - math.cos(math.pi * s))
    dr = 0.5 * math.pi * math.sin(math.pi * s)
    ddr = 0.5 * math.pi * math.pi * math.cos(math.pi * s)
    x = -0.5 * stride * duty + stride * r - v * t_sw * s
    vx = stride * dr / t_sw - v
    ax = stride * ddr / (t_sw * t_sw)
    z = -stance_h + step_h * math.sin(math.pi * s)
    vz = step_h * math.pi * math.cos(math.pi * s) / t_sw
    az = -step_h * math.pi * math.pi * math.sin(math.pi * s) / (t_sw * t_sw)
    return 0, x, z, vx, vz, ax, az


def walking_tick(schedule: GaitSchedule, robot, terrain, t: float, v: float):
    """Crawl references for all four legs at time t and commanded speed v.

    robot supplies the stance height and per-leg geometry (duck-typed
    RobotSpec); terrain is accepted for interface parity with the force
    stage but does not shape the slope-aligned kinematic reference.
    Returns (refs, stance) with refs a dict of per-leg FootReference in the
    hip frame and stance the tuple of leg names currently in ground contact.
    """
    del terrain
    refs = {}
    stance = []
    for leg in LEG_ORDER:
        st, x, z, vx, vz, _, _ = _walk_leg_ref(
            t,
            CRAWL_OFFSETS[leg],
            schedule.duty_factor,
            schedule.step_length,
            schedule.step_height,
            schedule.cycle_time,
            robot.walk_stance_height,
            v,
        )
        geom = robot.legs[leg]
        y = geom.side * geom.hip_offset
        refs[leg] = FootReference(
            position=np.array((x, y, z)), velocity=np.array((vx, 0.0, vz))
        )
        if st:
            stance.append(leg)
    return refs, tuple(stance)
