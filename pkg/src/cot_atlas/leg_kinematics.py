"""Closed-form kinematics for a 3-DOF quadruped leg.

This module is the single source of truth for the leg frame and sign
conventions used everywhere else in the package:

* Hip frame: x forward, y left, z up. Origin on the hip abduction (HAA)
  axis, which coincides with the x axis.
* Joint order is (q_haa, q_hfe, q_kfe). HAA rotates about +x; HFE and KFE
  rotate about +y. All rotations follow the right-hand rule, so a positive
  HFE sweeps the extended leg backward (toward -x).
* Zero configuration: leg fully extended and pointing straight down, foot
  at (0, side * hip_offset, -(l_thigh + l_shank)).
* ``side`` is +1 for left legs and -1 for right legs; it only places the
  lateral abduction-link offset.
* The knee branch is selected by the geometry: "knee-back" keeps
  q_kfe <= 0 (knee point behind the hip-foot chord), "knee-forward" keeps
  q_kfe >= 0. The inverse kinematics returns exactly one branch.

The inverse solution places the foot below the abduction axis within the
rotated leg plane; any target in the reachable annulus is attained by
rotating HAA, so FK(IK(p)) == p on the full workspace, while IK(FK(q)) == q
holds on the principal branch sampled by the tests.

Scalar kernels are numba-compiled because the terrain simulators call them
hundreds of thousands of times per trial; the public functions are thin
numpy wrappers over the same kernels.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from numba import njit

KNEE_BACK = "knee-back"
KNEE_FORWARD = "knee-forward"

#: Unreachability / near-singularity margin on the leg-plane distance (m).
REACH_EPS = 1e-6

#: |det J| at or below this is treated as singular for velocity inversion.
SINGULAR_DET_TOL = 1e-8


class UnreachableError(ValueError):
    """Foot target lies outside the leg workspace annulus."""


class SingularJacobianError(ValueError):
    """Jacobian is singular; Cartesian velocity cannot be inverted."""


class NearSingularWarning(UserWarning):
    """Target is within REACH_EPS of full extension/retraction.

    The position solution is still valid but velocity inversion will be
    ill-conditioned there.
    """


@dataclass(frozen=True)
class LegGeometry:
    """Link dimensions and branch configuration of one leg.

    hip_offset is the lateral abduction-link offset (m), l_thigh and
    l_shank the two leg segment lengths (m).
    """

    hip_offset: float = 0.083
    l_thigh: float = 0.25
    l_shank: float = 0.25
    side: int = 1
    knee_branch: str = KNEE_BACK

    def __post_init__(self):
        if self.l_thigh <= 0 or self.l_shank <= 0:
            raise ValueError("leg segment lengths must be positive")
        if self.hip_offset < 0:
            raise ValueError("hip_offset must be non-negative")
        if self.side not in (1, -1):
            raise ValueError("side must be +1 (left) or -1 (right)")
        if self.knee_branch not in (KNEE_BACK, KNEE_FORWARD):
            raise ValueError(f"unknown knee branch {self.knee_branch!r}")

    @property
    def knee_sign(self) -> float:
        return -1.0 if self.knee_branch == KNEE_BACK else 1.0


# ---------------------------------------------------------------------------
# scalar kernels
# ---------------------------------------------------------------------------


@njit(cache=True)
def _fk(d, a, b, side, q1, q2, q3):
    s2 = math.sin(q2)
    c2 = math.cos(q2)
    s23 = math.sin(q2 + q3)
    c23 = math.cos(q2 + q3)
    xp = -a * s2 - b * s23
    yp = side * d
    zp = -a * c2 - b * c23
    s1 = math.sin(q1)
    c1 = math.cos(q1)
    return xp, yp * c1 - zp * s1, yp * s1 + zp * c1


@njit(cache=True)
def _knee_fk(d, a, side, q1, q2):
    # Knee-joint point: thigh segment only.
    xp = -a * math.sin(q2)
    yp = side * d
    zp = -a * math.cos(q2)
    s1 = math.sin(q1)
    c1 = math.cos(q1)
    return xp, yp * c1 - zp * s1, yp * s1 + zp * c1


@njit(cache=True)
def _wrap_pi(q):
    # Wrap an atan2 difference (always in (-2pi, 2pi]) to (-pi, pi].
    if q > math.pi:
        q -= 2.0 * math.pi
    elif q <= -math.pi:
        q += 2.0 * math.pi
    return q


@njit(cache=True)
def _ik(d, a, b, side, knee_sign, x, y, z, eps):
    """Return (status, q1, q2, q3).

    status: 0 ok, 1 unreachable, 2 solvable but within eps of a
    workspace-boundary singularity.
    """
    r2 = y * y + z * z
    in2 = r2 - d * d
    if in2 < 0.0:
        return 1, 0.0, 0.0, 0.0
    w = math.sqrt(in2)  # in-plane distance below the abduction axis
    dd2 = x * x + in2
    dd = math.sqrt(dd2)
    lo = abs(a - b)
    hi = a + b
    if dd >= hi or dd <= lo:
        return 1, 0.0, 0.0, 0.0
    status = 0
    if dd > hi - eps or dd < lo + eps:
        status = 2

    q1 = _wrap_pi(math.atan2(z, y) - math.atan2(-w, side * d))

    cq3 = (dd2 - a * a - b * b) / (2.0 * a * b)
    if cq3 > 1.0:
        cq3 = 1.0
    elif cq3 < -1.0:
        cq3 = -1.0
    q3 = knee_sign * math.acos(cq3)

    k1 = a + b * math.cos(q3)
    k2 = b * math.sin(q3)
    q2 = _wrap_pi(math.atan2(-x, w) - math.atan2(k2, k1))
    return status, q1, q2, q3


@njit(cache=True)
def _jacobian9(d, a, b, side, q1, q2, q3):
    """Row-major entries of J with foot velocity = J @ qdot."""
    s2 = math.sin(q2)
    c2 = math.cos(q2)
    s23 = math.sin(q2 + q3)
    c23 = math.cos(q2 + q3)
    xp = -a * s2 - b * s23
    yp = side * d
    zp = -a * c2 - b * c23
    s1 = math.sin(q1)
    c1 = math.cos(q1)
    y = yp * c1 - zp * s1
    z = yp * s1 + zp * c1
    return (
        0.0, zp, -b * c23,
        -z, s1 * xp, -s1 * b * s23,
        y, -c1 * xp, c1 * b * s23,
    )


@njit(cache=True)
def _det3(j):
    return (
        j[0] * (j[4] * j[8] - j[5] * j[7])
        - j[1] * (j[3] * j[8] - j[5] * j[6])
        + j[2] * (j[3] * j[7] - j[4] * j[6])
    )


@njit(cache=True)
def _solve3(j, b0, b1, b2):
    """Solve J v = b by cofactors; returns (det, v0, v1, v2)."""
    det = _det3(j)
    if det == 0.0:
        return 0.0, 0.0, 0.0, 0.0
    inv = 1.0 / det
    v0 = (
        b0 * (j[4] * j[8] - j[5] * j[7])
        - j[1] * (b1 * j[8] - j[5] * b2)
        + j[2] * (b1 * j[7] - j[4] * b2)
    ) * inv
    v1 = (
        j[0] * (b1 * j[8] - j[5] * b2)
        - b0 * (j[3] * j[8] - j[5] * j[6])
        + j[2] * (j[3] * b2 - b1 * j[6])
    ) * inv
    v2 = (
        j[0] * (j[4] * b2 - b1 * j[7])
        - j[1] * (j[3] * b2 - b1 * j[6])
        + b0 * (j[3] * j[7] - j[4] * j[6])
    ) * inv
    return det, v0, v1, v2


# ---------------------------------------------------------------------------
# public API
# ---------------------------------------------------------------------------


def forward_kinematics(geom: LegGeometry, q) -> np.ndarray:
    """Foot position in the hip frame for joint vector q = (haa, hfe, kfe)."""
    q1, q2, q3 = float(q[0]), float(q[1]), float(q[2])
    return np.array(
        _fk(geom.hip_offset, geom.l_thigh, geom.l_shank, geom.side, q1, q2, q3)
    )


def knee_position(geom: LegGeometry, q) -> np.ndarray:
    """Knee-joint point in the hip frame (used by the lumped limb-mass model)."""
    return np.array(
        _knee_fk(geom.hip_offset, geom.l_thigh, geom.side, float(q[0]), float(q[1]))
    )


def is_reachable(geom: LegGeometry, p) -> bool:
    """True when p lies strictly inside the workspace annulus (REACH_EPS margin)."""
    x, y, z = float(p[0]), float(p[1]), float(p[2])
    in2 = y * y + z * z - geom.hip_offset**2
    if in2 < 0.0:
        return False
    dd = math.sqrt(x * x + in2)
    return (
        abs(geom.l_thigh - geom.l_shank) + REACH_EPS
        < dd
        < geom.l_thigh + geom.l_shank - REACH_EPS
    )


def inverse_kinematics(geom: LegGeometry, p) -> np.ndarray:
    """Joint vector reaching foot position p on the configured knee branch.

    Raises UnreachableError outside the workspace annulus; emits
    NearSingularWarning within REACH_EPS of full extension/retraction.
    """
    status, q1, q2, q3 = _ik(
        geom.hip_offset,
        geom.l_thigh,
        geom.l_shank,
        geom.side,
        geom.knee_sign,
        float(p[0]),
        float(p[1]),
        float(p[2]),
        REACH_EPS,
    )
    if status == 1:
        raise UnreachableError(
            f"foot target {np.asarray(p, dtype=float)} outside workspace of {geom}"
        )
    if status == 2:
        warnings.warn(
            "IK target within 1e-6 m of a workspace boundary; velocity "
            "inversion will be ill-conditioned",
            NearSingularWarning,
            stacklevel=2,
        )
    return np.array((q1, q2, q3))


def jacobian(geom: LegGeometry, q) -> np.ndarray:
    """3x3 Jacobian J with foot velocity = J @ qdot."""
    j = _jacobian9(
        geom.hip_offset, geom.l_thigh, geom.l_shank, geom.side,
        float(q[0]), float(q[1]), float(q[2]),
    )
    return np.array(j).reshape(3, 3)


def jacobian_determinant(geom: LegGeometry, q) -> float:
    """det J = l_thigh*l_shank*sin(q_kfe)*(l_thigh*cos(q_hfe)+l_shank*cos(q_hfe+q_kfe))."""
    j = _jacobian9(
        geom.hip_offset, geom.l_thigh, geom.l_shank, geom.side,
        float(q[0]), float(q[1]), float(q[2]),
    )
    return _det3(j)


def joint_velocities_from_foot(geom: LegGeometry, q, foot_vel) -> np.ndarray:
    """Solve J qdot = foot_vel. Raises SingularJacobianError near singularities."""
    j = _jacobian9(
        geom.hip_offset, geom.l_thigh, geom.l_shank, geom.side,
        float(q[0]), float(q[1]), float(q[2]),
    )
    det, v0, v1, v2 = _solve3(
        j, float(foot_vel[0]), float(foot_vel[1]), float(foot_vel[2])
    )
    if abs(det) <= SINGULAR_DET_TOL:
        raise SingularJacobianError(
            f"|det J| = {abs(det):.3e} <= {SINGULAR_DET_TOL}; trajectory "
            "passed through a singular pose"
        )
    return np.array((v0, v1, v2))


def torques_from_foot_force(geom: LegGeometry, q, foot_force, tau_free=None) -> np.ndarray:
    """Joint torques transmitting a foot contact force: J^T F + tau_free."""
    j = jacobian(geom, q)
    tau = j.T @ np.asarray(foot_force, dtype=float)
    if tau_free is not None:
        tau = tau + np.asarray(tau_free, dtype=float)
    return tau
