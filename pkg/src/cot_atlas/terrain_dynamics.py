"""Deterministic fixed-step physics backends under lunar gravity.

Two plants share one logging contract:

* Slider: a sagittal-plane torso on a rigid incline. Base height and
  pitch are constrained (torso seated flat on the slope); the along-slope
  base translation integrates gravity, regularized torso Coulomb friction
  and front-foot thrust reactions with semi-implicit Euler. Legs are
  massless force transmitters: each control tick solves the quasi-static
  equilibrium between the joint-space impedance law and the penalty
  ground contact, so the foot deflects off its reference exactly as much
  as the transmitted load demands. Logged torques satisfy
  tau = J(q)^T F at the logged posture.

* Walker: a quasi-static crawl. The base tracks the commanded speed;
  stance ground reactions solve a least-norm normal-force distribution
  under the sagittal force/moment balance with equal tangential shares,
  cone-capped and redistributed. Saturated cones declare slip, which adds
  a regularized downhill slip displacement to the traveled distance.

The control loop runs at the trajectory servo rate; the slider integrates
two physics substeps per control tick (1 ms at the 500 Hz default).
Everything is a pure function of (config, seed): reruns are bit-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit

from .controllers import CRAWL_OFFSETS, GaitSchedule, ImpedanceGains, _walk_leg_ref
from .energetics import TrialLog
from .leg_kinematics import (
    LegGeometry,
    SingularJacobianError,
    UnreachableError,
    _fk,
    _ik,
    _jacobian9,
    _knee_fk,
    _det3,
    _solve3,
    inverse_kinematics,
    jacobian,
    joint_velocities_from_foot,
)
from .trajectory_gen import LEG_ORDER, HomePose, SlideTrajParams, _front_swing

PHYSICS_DT = 1e-3  # fixed physics substep (s)
BLOWUP_LIMIT = 1e6

_STATUS_OK = 0
_STATUS_TIMEOUT = 1
_STATUS_UNREACHABLE = 2
_STATUS_SINGULAR = 3
_STATUS_BLOWUP = 4
_STATUS_CONE = 5
_STATUS_TIPPING = 6


class NumericalBlowup(RuntimeError):
    """A state variable exceeded 1e6; gains or contact stiffness unstable."""


class TrialTimeout(RuntimeError):
    """Ramp length was not covered within the configured timeout."""


class FrictionConeInfeasible(RuntimeError):
    """No stance force distribution satisfies every friction cone."""


def _default_legs():
    return {
        "lf": LegGeometry(side=1),
        "rf": LegGeometry(side=-1),
        "lh": LegGeometry(side=1),
        "rh": LegGeometry(side=-1),
    }


def _default_hips():
    return {"lf": 0.24, "rf": 0.24, "lh": -0.24, "rh": -0.24}


@dataclass(frozen=True)
class TerrainSpec:
    """Slope, Coulomb friction pairs and gravity.

    mu_s is the swept surface friction: torso-ground for sliding,
    foot-ground for walking (the walking grids pin it to 0.7). The
    sliding feet keep their own fixed grip pair mu_foot_s/mu_foot_d so
    sweeping the surface friction changes the drag, not the thrust.
    Dynamic coefficients default to 0.85x their static partners. Values
    outside the grid ranges (alpha in [0, 35] deg, mu_s in [0.4, 0.8]) or
    explicit dynamic-friction overrides require allow_extended.
    """

    alpha_deg: float = 0.0
    mu_s: float = 0.6
    mu_d: float = None
    mu_foot_s: float = 0.7
    mu_foot_d: float = None
    g: float = 1.625
    allow_extended: bool = False

    def __post_init__(self):
        if self.g <= 0:
            raise ValueError("gravity must be positive")
        if self.mu_s < 0 or self.mu_foot_s < 0:
            raise ValueError("static friction coefficients must be non-negative")
        if not self.allow_extended:
            if not (0.0 <= self.alpha_deg <= 35.0):
                raise ValueError(
                    f"alpha_deg={self.alpha_deg} outside [0, 35]; pass "
                    "allow_extended to accept"
                )
            if not (0.4 <= self.mu_s <= 0.8):
                raise ValueError(
                    f"mu_s={self.mu_s} outside [0.4, 0.8]; pass allow_extended "
                    "to accept"
                )
            if self.mu_d is not None and not math.isclose(
                self.mu_d, 0.85 * self.mu_s, rel_tol=1e-12
            ):
                raise ValueError(
                    "mu_d override requires allow_extended (default is 0.85*mu_s)"
                )
        if self.mu_d is None:
            object.__setattr__(self, "mu_d", 0.85 * self.mu_s)
        if self.mu_foot_d is None:
            object.__setattr__(self, "mu_foot_d", 0.85 * self.mu_foot_s)
        if self.mu_d < 0 or self.mu_foot_d < 0:
            raise ValueError("dynamic friction coefficients must be non-negative")

    @property
    def alpha_rad(self) -> float:
        return math.radians(self.alpha_deg)


@dataclass(frozen=True)
class RobotSpec:
    """Platform mass, torso contact patch, leg layout and lumped limb masses."""

    mass: float = 24.0
    torso_patch_length: float = 0.60
    torso_patch_width: float = 0.30
    legs: dict = field(default_factory=_default_legs)
    hip_x: dict = field(default_factory=_default_hips)
    limb_point_masses: tuple = (0.2, 0.05)  # (knee, foot) kg
    hip_height_slide: float = 0.12
    walk_stance_height: float = 0.35

    def __post_init__(self):
        if self.mass <= 0:
            raise ValueError("mass must be positive")
        if self.torso_patch_length <= 0 or self.torso_patch_width <= 0:
            raise ValueError("torso contact patch dimensions must be positive")
        for leg in LEG_ORDER:
            if leg not in self.legs:
                raise ValueError(f"missing leg geometry for {leg!r}")
            if leg not in self.hip_x:
                raise ValueError(f"missing hip position for {leg!r}")
        if any(m < 0 for m in self.limb_point_masses):
            raise ValueError("limb point masses must be non-negative")
        if self.hip_height_slide <= 0 or self.walk_stance_height <= 0:
            raise ValueError("reference heights must be positive")


@dataclass(frozen=True)
class ContactModel:
    """Penalty contact regularization."""

    k_n: float = 2e4
    d_n: float = 100.0
    v_stick: float = 1e-3

    def __post_init__(self):
        if self.k_n <= 0:
            raise ValueError("k_n must be positive")
        if self.d_n < 0:
            raise ValueError("d_n must be non-negative")
        if self.v_stick <= 0:
            raise ValueError("v_stick must be positive")


@dataclass
class SimState:
    """Plant state snapshot; slider/walker internals ride along."""

    t: float = 0.0
    base_x: float = 0.0
    base_v: float = 0.0
    base_height: float = 0.0  # held by constraint
    base_pitch: float = 0.0  # held by constraint (slope-aligned)
    q: np.ndarray = field(default_factory=lambda: np.zeros((4, 3)))
    qd: np.ndarray = field(default_factory=lambda: np.zeros((4, 3)))
    tau: np.ndarray = field(default_factory=lambda: np.zeros((4, 3)))
    foot_force: np.ndarray = field(default_factory=lambda: np.zeros((4, 3)))
    foot_contact: np.ndarray = field(default_factory=lambda: np.zeros(4, dtype=bool))
    deflection: np.ndarray = field(default_factory=lambda: np.zeros((4, 3)))
    slip_distance: float = 0.0
    audit: dict = field(default_factory=dict)

    def check_finite(self):
        if (
            abs(self.base_x) > BLOWUP_LIMIT
            or abs(self.base_v) > BLOWUP_LIMIT
            or not np.isfinite(self.q).all()
        ):
            raise NumericalBlowup(
                f"state exceeded {BLOWUP_LIMIT:g}: base_x={self.base_x:.3e}, "
                f"base_v={self.base_v:.3e}"
            )


@dataclass(frozen=True)
class TrialConfig:
    """Everything one trial needs; a pure function of this plus the seed."""

    mode: str = "slide"  # 'slide' | 'walk'
    terrain: TerrainSpec = field(default_factory=TerrainSpec)
    robot: RobotSpec = field(default_factory=RobotSpec)
    slide: SlideTrajParams = field(default_factory=SlideTrajParams)
    gains: ImpedanceGains = field(default_factory=ImpedanceGains)
    gait: GaitSchedule = field(default_factory=GaitSchedule)
    contact: ContactModel = field(default_factory=ContactModel)
    home: HomePose = field(default_factory=HomePose)
    walk_speed: float = 0.1
    ramp_length: float = 3.0
    timeout: float = 120.0
    seed: int = 0
    jitter: bool = True
    walker_limb_masses: bool = True
    slider_tau_free: bool = False

    def __post_init__(self):
        if self.mode not in ("slide", "walk"):
            raise ValueError(f"mode must be 'slide' or 'walk', got {self.mode!r}")
        if self.ramp_length <= 0:
            raise ValueError("ramp_length must be positive")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.walk_speed < 0:
            raise ValueError("walk_speed must be non-negative")


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------


@njit(cache=True)
def _coulomb(normal_force, v_t, mu_s, mu_d, v_stick):
    """Regularized Coulomb tangential force for a given normal load.

    Kinetic outside the stick band, linear in the slip velocity inside it
    (peak mu_s * N at the band edge).
    """
    if normal_force <= 0.0:
        return 0.0
    if abs(v_t) > v_stick:
        return -math.copysign(1.0, v_t) * mu_d * normal_force
    return -mu_s * normal_force * (v_t / v_stick)


@njit(cache=True)
def _base_substep(v, x, applied, n_torso, mass, mu_s, mu_d, v_stick, dt):
    """One semi-implicit Euler substep of the along-slope torso translation.

    Returns (v_new, x_new, f_fric, regime) with regime 0 = stuck,
    1 = kinetic, 2 = kinetic with a zero-crossing clamp (came to rest).
    applied = gravity tangential + foot thrust reactions.
    """
    if abs(v) <= v_stick and abs(applied) <= mu_s * n_torso:
        return 0.0, x, -applied, 0
    if v != 0.0:
        sgn = math.copysign(1.0, v)
    elif applied != 0.0:
        sgn = math.copysign(1.0, applied)
    else:
        sgn = 0.0
    f_fric = -sgn * mu_d * n_torso
    a = (applied + f_fric) / mass
    v_new = v + dt * a
    regime = 1
    if v != 0.0 and v_new * v < 0.0:
        v_new = 0.0  # friction cannot reverse motion within a substep
        regime = 2
    x_new = x + dt * v_new
    return v_new, x_new, f_fric, regime


@njit(cache=True)
def _slider_leg_tick(
    d_off, a_len, b_len, side, knee_sign,
    hx, hy, hz,
    off_x, off_y, off_z, vel_x, vel_y, vel_z,
    defl, foot_prev, vel_prev,
    base_v, hip_h,
    kq0, kq1, kq2, dq0, dq1, dq2, dt,
    mu_f_s, mu_f_d, v_stick, k_n, d_n,
):
    """Quasi-static impedance/contact equilibrium for one front leg.

    Mutates defl (3,), foot_prev (3,), vel_prev (3,) in place and returns
    (status, q0..q2, qd0..qd2, fx, n_force).
    """
    px = hx + off_x
    py = hy + off_y
    pz = hz + off_z
    st, qr0, qr1, qr2 = _ik(d_off, a_len, b_len, side, knee_sign, px, py, pz, 1e-6)
    if st == 1:
        return 2, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0
    j = _jacobian9(d_off, a_len, b_len, side, qr0, qr1, qr2)
    det = _det3(j)
    if abs(det) <= 1e-8:
        return 3, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0
    _, qdr0, qdr1, qdr2 = _solve3(j, vel_x, vel_y, vel_z)

    # tangential regime frozen from the previous realized foot velocity
    v_t = base_v + vel_prev[0]
    r_t = _coulomb(1.0, v_t, mu_f_s, mu_f_d, v_stick)

    g0 = kq0 + dq0 / dt
    g1 = kq1 + dq1 / dt
    g2 = kq2 + dq2 / dt
    # normal-direction compliance sets the fixed-point relaxation
    c_eff = j[6] * j[6] / g0 + j[7] * j[7] / g1 + j[8] * j[8] / g2
    lam = 1.0 / (1.0 + k_n * c_eff)

    dp0 = defl[0]
    dp1 = defl[1]
    dp2 = defl[2]
    e0 = dp0
    e1 = dp1
    e2 = dp2
    fx = 0.0
    n_f = 0.0
    for _ in range(80):
        fx_c, fy_c, fz_c = _fk(
            d_off, a_len, b_len, side, qr0 - e0, qr1 - e1, qr2 - e2
        )
        pen = -(hip_h + fz_c)
        if pen > 0.0:
            vn = (fz_c - foot_prev[2]) / dt
            n_f = k_n * pen - d_n * vn
            if n_f < 0.0:
                n_f = 0.0
        else:
            n_f = 0.0
        fx = r_t * n_f
        # massless-leg equilibrium: impedance deflection opposes the load,
        # K*delta + D*ddelta = -J^T F, so the foot yields away from contact
        t0 = -(j[0] * fx + j[6] * n_f)
        t1 = -(j[1] * fx + j[7] * n_f)
        t2 = -(j[2] * fx + j[8] * n_f)
        tgt0 = (t0 + (dq0 / dt) * dp0) / g0
        tgt1 = (t1 + (dq1 / dt) * dp1) / g1
        tgt2 = (t2 + (dq2 / dt) * dp2) / g2
        n0 = e0 + lam * (tgt0 - e0)
        n1 = e1 + lam * (tgt1 - e1)
        n2 = e2 + lam * (tgt2 - e2)
        step = abs(n0 - e0) + abs(n1 - e1) + abs(n2 - e2)
        e0, e1, e2 = n0, n1, n2
        if step < 1e-13:
            break

    q0 = qr0 - e0
    q1 = qr1 - e1
    q2 = qr2 - e2
    fx_c, fy_c, fz_c = _fk(d_off, a_len, b_len, side, q0, q1, q2)
    pen = -(hip_h + fz_c)
    if pen > 0.0:
        vn = (fz_c - foot_prev[2]) / dt
        n_f = k_n * pen - d_n * vn
        if n_f < 0.0:
            n_f = 0.0
    else:
        n_f = 0.0
    fx = r_t * n_f

    qd0 = qdr0 - (e0 - dp0) / dt
    qd1 = qdr1 - (e1 - dp1) / dt
    qd2 = qdr2 - (e2 - dp2) / dt

    vel_prev[0] = (fx_c - foot_prev[0]) / dt
    vel_prev[1] = (fy_c - foot_prev[1]) / dt
    vel_prev[2] = (fz_c - foot_prev[2]) / dt
    foot_prev[0] = fx_c
    foot_prev[1] = fy_c
    foot_prev[2] = fz_c
    defl[0] = e0
    defl[1] = e1
    defl[2] = e2
    return 0, q0, q1, q2, qd0, qd1, qd2, fx, n_f


@njit(cache=True)
def _run_slider_trial(
    alpha, mu_s, mu_d, mu_f_s, mu_f_d, g, mass, hip_h,
    d_off, a_len, b_len, knee_sign,
    home_lf, home_rf, q_lh, q_rh,
    f, f_s, phase0, l_swing, l_plus, h_swing, z0, v_scale,
    kq, dq, tau_max,
    k_n, d_n, v_stick,
    dt_ctrl, n_sub, dt_phys,
    x0, ramp_length, max_ticks,
    out_t, out_q, out_qd, out_tau, out_ff, out_fv, out_contact,
    out_base_x, out_sat, out_audit,
):
    """Whole-trial slider loop; fills the log arrays, returns (status, n)."""
    base_x = x0
    base_v = 0.0
    sin_a = math.sin(alpha)
    cos_a = math.cos(alpha)
    w_t = mass * g * sin_a
    w_n = mass * g * cos_a

    defl = np.zeros((2, 3))
    foot_prev = np.zeros((2, 3))
    vel_prev = np.zeros((2, 3))
    homes = np.empty((2, 3))
    homes[0, 0] = home_lf[0]
    homes[0, 1] = home_lf[1]
    homes[0, 2] = home_lf[2]
    homes[1, 0] = home_rf[0]
    homes[1, 1] = home_rf[1]
    homes[1, 2] = home_rf[2]
    sides = np.empty(2)
    sides[0] = 1.0
    sides[1] = -1.0

    # initialize previous foot states from the k = 0 reference
    ox, oy, oz, ovx, ovy, ovz = _front_swing(
        f, f_s, phase0, l_swing, l_plus, h_swing, z0, v_scale, 0
    )
    for li in range(2):
        st, q0, q1, q2 = _ik(
            d_off, a_len, b_len, sides[li], knee_sign,
            homes[li, 0] + ox, homes[li, 1] + oy, homes[li, 2] + oz, 1e-6,
        )
        if st == 1:
            return _STATUS_UNREACHABLE, 0
        px, py, pz = _fk(d_off, a_len, b_len, sides[li], q0, q1, q2)
        foot_prev[li, 0] = px
        foot_prev[li, 1] = py
        foot_prev[li, 2] = pz
        vel_prev[li, 0] = ovx
        vel_prev[li, 1] = ovy
        vel_prev[li, 2] = ovz

    for k in range(max_ticks):
        t = k * dt_ctrl
        ox, oy, oz, ovx, ovy, ovz = _front_swing(
            f, f_s, phase0, l_swing, l_plus, h_swing, z0, v_scale, k
        )
        sum_fx = 0.0
        sum_n = 0.0
        any_sat = 0
        for li in range(2):
            st, q0, q1, q2, qd0, qd1, qd2, fx, n_f = _slider_leg_tick(
                d_off, a_len, b_len, sides[li], knee_sign,
                homes[li, 0], homes[li, 1], homes[li, 2],
                ox, oy, oz, ovx, ovy, ovz,
                defl[li], foot_prev[li], vel_prev[li],
                base_v, hip_h,
                kq[0], kq[1], kq[2], dq[0], dq[1], dq[2], dt_ctrl,
                mu_f_s, mu_f_d, v_stick, k_n, d_n,
            )
            if st != 0:
                return (_STATUS_UNREACHABLE if st == 2 else _STATUS_SINGULAR), k
            jq = _jacobian9(d_off, a_len, b_len, sides[li], q0, q1, q2)
            # massless transmitter: logged torque transmits the contact load
            # at the logged posture
            for ji in range(3):
                tau_j = jq[ji] * fx + jq[6 + ji] * n_f
                if tau_j > tau_max:
                    tau_j = tau_max
                    any_sat = 1
                elif tau_j < -tau_max:
                    tau_j = -tau_max
                    any_sat = 1
                out_tau[k, 3 * li + ji] = tau_j
            out_q[k, 3 * li + 0] = q0
            out_q[k, 3 * li + 1] = q1
            out_q[k, 3 * li + 2] = q2
            out_qd[k, 3 * li + 0] = qd0
            out_qd[k, 3 * li + 1] = qd1
            out_qd[k, 3 * li + 2] = qd2
            out_ff[k, 3 * li + 0] = fx
            out_ff[k, 3 * li + 2] = n_f
            out_fv[k, 3 * li + 0] = jq[0] * qd0 + jq[1] * qd1 + jq[2] * qd2
            out_fv[k, 3 * li + 1] = jq[3] * qd0 + jq[4] * qd1 + jq[5] * qd2
            out_fv[k, 3 * li + 2] = jq[6] * qd0 + jq[7] * qd1 + jq[8] * qd2
            out_contact[k, li] = 1 if n_f > 0.0 else 0
            sum_fx += fx
            sum_n += n_f

        # hind legs frozen at home
        for ji in range(3):
            out_q[k, 6 + ji] = q_lh[ji]
            out_q[k, 9 + ji] = q_rh[ji]

        applied = w_t + sum_fx
        n_torso = w_n - sum_n
        if n_torso < 0.0:
            n_torso = 0.0
        for _s in range(n_sub):
            v_prev = base_v
            base_v, base_x, f_fric, regime = _base_substep(
                base_v, base_x, applied, n_torso, mass, mu_s, mu_d, v_stick, dt_phys
            )
            dx_mid = dt_phys * 0.5 * (v_prev + base_v)
            out_audit[0] += w_t * dx_mid  # gravity work
            out_audit[1] += sum_fx * dx_mid  # foot thrust work on the base
            if regime != 0:
                out_audit[2] += f_fric * dx_mid  # torso friction work (<= 0)
            if regime == 2:
                out_audit[3] += 1.0  # zero-crossing clamps

        out_t[k] = t
        out_base_x[k] = base_x
        out_sat[k] = any_sat

        if abs(base_x) > BLOWUP_LIMIT or abs(base_v) > BLOWUP_LIMIT:
            return _STATUS_BLOWUP, k + 1
        if base_x - x0 >= ramp_length:
            return _STATUS_OK, k + 1
    return _STATUS_TIMEOUT, max_ticks


@njit(cache=True)
def _stance_forces(arms, n_st, w_n, w_t, mu_s, h_com, n_out, t_out):
    """Least-norm normal forces + cone-capped equal tangential shares.

    Normal forces solve min ||N||^2 subject to sum N = w_n and
    sum N*arm = h_com * w_t (center of pressure shifted downhill by the
    tangential load acting at CoM height). Tangential shares start equal
    and are redistributed by waterfill under per-foot cone caps.

    Returns (status, deficit): status 0 ok, 5 cone infeasible, 6 tipping
    (some normal force would need to be negative). deficit is the
    pre-redistribution sum of cap violations, the slip magnitude driver.
    """
    s1 = float(n_st)
    sa = 0.0
    saa = 0.0
    for i in range(n_st):
        sa += arms[i]
        saa += arms[i] * arms[i]
    det = s1 * saa - sa * sa
    if det <= 1e-12:
        return 6, 0.0
    b2 = h_com * w_t
    c1 = (saa * w_n - sa * b2) / det
    c2 = (s1 * b2 - sa * w_n) / det
    cap_total = 0.0
    for i in range(n_st):
        n_i = c1 + c2 * arms[i]
        if n_i < -1e-9 * w_n:
            return 6, 0.0
        if n_i < 0.0:
            n_i = 0.0
        n_out[i] = n_i
        cap_total += mu_s * n_i
    if cap_total + 1e-12 * max(1.0, w_t) < w_t:
        return 5, 0.0

    t_eq = w_t / s1
    deficit = 0.0
    for i in range(n_st):
        c = mu_s * n_out[i]
        if t_eq > c:
            deficit += t_eq - c

    # waterfill in ascending cap order
    order = np.empty(n_st, dtype=np.int64)
    for i in range(n_st):
        order[i] = i
    for i in range(n_st):
        best = i
        for jj in range(i + 1, n_st):
            if mu_s * n_out[order[jj]] < mu_s * n_out[order[best]]:
                best = jj
        tmp = order[i]
        order[i] = order[best]
        order[best] = tmp
    rem = w_t
    cnt = n_st
    for oi in range(n_st):
        i = order[oi]
        share = rem / cnt
        cap = mu_s * n_out[i]
        ti = share if share < cap else cap
        if cnt == 1:
            ti = rem  # absorb rounding; feasibility already established
        t_out[i] = ti
        rem -= ti
        cnt -= 1
    return 0, deficit


@njit(cache=True)
def _walker_leg_kinematics(d_off, a_len, b_len, side, knee_sign, x, y, z, vx, vz):
    """IK + joint rates for a walker reference point; status as in _ik."""
    st, q0, q1, q2 = _ik(d_off, a_len, b_len, side, knee_sign, x, y, z, 1e-6)
    if st == 1:
        return 2, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0
    j = _jacobian9(d_off, a_len, b_len, side, q0, q1, q2)
    det = _det3(j)
    if abs(det) <= 1e-8:
        return 3, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0
    _, qd0, qd1, qd2 = _solve3(j, vx, 0.0, vz)
    return 0, q0, q1, q2, qd0, qd1, qd2


@njit(cache=True)
def _knee_jacobian6(d_off, a_len, side, q0, q1):
    """Nonzero columns (q_haa, q_hfe) of the knee-point Jacobian."""
    s1 = math.sin(q0)
    c1 = math.cos(q0)
    s2 = math.sin(q1)
    c2 = math.cos(q1)
    y_k = side * d_off * c1 + a_len * c2 * s1
    z_k = side * d_off * s1 - a_len * c2 * c1
    return (
        0.0, -a_len * c2,
        -z_k, -a_len * s2 * s1,
        y_k, a_len * s2 * c1,
    )


@njit(cache=True)
def _run_walker_trial(
    alpha, mu_s, g, mass, h_com, stance_h,
    duty, step_len, step_h, cycle_time, v_cmd,
    offsets, hips,
    d_offs, a_lens, b_lens, sides, ksigns,
    m_knee, m_foot, use_limb_masses,
    d_n, tau_max,
    dt_ctrl, x0, t_jit, ramp_length, max_ticks,
    out_t, out_q, out_qd, out_tau, out_ff, out_fv, out_contact,
    out_base_x, out_sat, out_stats,
):
    """Whole-trial quasi-static walker loop.

    out_stats: [max_balance_residual, total_slip_displacement].
    """
    base_x = x0
    sin_a = math.sin(alpha)
    cos_a = math.cos(alpha)
    w_t = mass * g * sin_a
    w_n = mass * g * cos_a
    gx = g * sin_a
    gz = -g * cos_a

    arms = np.empty(4)
    n_buf = np.empty(4)
    t_buf = np.empty(4)
    stance_idx = np.empty(4, dtype=np.int64)
    q_tick = np.empty((4, 3))
    qd_tick = np.empty((4, 3))
    j_tick = np.empty((4, 9))
    ax_tick = np.empty(4)
    az_tick = np.empty(4)
    x_tick = np.empty(4)

    for k in range(max_ticks):
        t = t_jit + k * dt_ctrl
        n_st = 0
        for li in range(4):
            st_flag, x, z, vx, vz, ax, az = _walk_leg_ref(
                t, offsets[li], duty, step_len, step_h, cycle_time, stance_h, v_cmd
            )
            y = sides[li] * d_offs[li]
            status, q0, q1, q2, qd0, qd1, qd2 = _walker_leg_kinematics(
                d_offs[li], a_lens[li], b_lens[li], sides[li], ksigns[li],
                x, y, z, vx, vz,
            )
            if status != 0:
                return (
                    (_STATUS_UNREACHABLE if status == 2 else _STATUS_SINGULAR),
                    k,
                )
            q_tick[li, 0] = q0
            q_tick[li, 1] = q1
            q_tick[li, 2] = q2
            qd_tick[li, 0] = qd0
            qd_tick[li, 1] = qd1
            qd_tick[li, 2] = qd2
            jj = _jacobian9(
                d_offs[li], a_lens[li], b_lens[li], sides[li], q0, q1, q2
            )
            for ji in range(9):
                j_tick[li, ji] = jj[ji]
            ax_tick[li] = ax
            az_tick[li] = az
            x_tick[li] = x
            if st_flag == 1:
                arms[n_st] = hips[li] + x
                stance_idx[n_st] = li
                n_st += 1

        if n_st < 3:
            return _STATUS_TIPPING, k
        status, deficit = _stance_forces(
            arms, n_st, w_n, w_t, mu_s, h_com, n_buf, t_buf
        )
        if status != 0:
            return (_STATUS_CONE if status == 5 else _STATUS_TIPPING), k

        # balance residual bookkeeping
        rn = -w_n
        rt = -w_t
        for si in range(n_st):
            rn += n_buf[si]
            rt += t_buf[si]
        res = abs(rn) + abs(rt)
        if res > out_stats[0]:
            out_stats[0] = res

        any_sat = 0
        for li in range(4):
            fx = 0.0
            fz = 0.0
            in_stance = 0
            for si in range(n_st):
                if stance_idx[si] == li:
                    fx = -t_buf[si]  # braking force points uphill
                    fz = n_buf[si]
                    in_stance = 1
                    break
            tf0 = 0.0
            tf1 = 0.0
            tf2 = 0.0
            if use_limb_masses == 1:
                # lumped limb model: foot point mass along the reference,
                # knee point mass via finite differences of the posture
                afx = 0.0 if in_stance == 1 else ax_tick[li]
                afz = 0.0 if in_stance == 1 else az_tick[li]
                ffx = m_foot * (afx - gx)
                ffz = m_foot * (afz - gz)
                # knee acceleration from neighbor postures
                _, xm, zm, vxm, vzm, _, _ = _walk_leg_ref(
                    t - dt_ctrl, offsets[li], duty, step_len, step_h,
                    cycle_time, stance_h, v_cmd,
                )
                _, xp, zp, vxp, vzp, _, _ = _walk_leg_ref(
                    t + dt_ctrl, offsets[li], duty, step_len, step_h,
                    cycle_time, stance_h, v_cmd,
                )
                y = sides[li] * d_offs[li]
                stm, qm0, qm1, _qm2 = _ik(
                    d_offs[li], a_lens[li], b_lens[li], sides[li], ksigns[li],
                    xm, y, zm, 1e-6,
                )
                stp, qp0, qp1, _qp2 = _ik(
                    d_offs[li], a_lens[li], b_lens[li], sides[li], ksigns[li],
                    xp, y, zp, 1e-6,
                )
                if stm != 1 and stp != 1:
                    kxm, kym, kzm = _knee_fk(
                        d_offs[li], a_lens[li], sides[li], qm0, qm1
                    )
                    kx0, ky0, kz0 = _knee_fk(
                        d_offs[li], a_lens[li], sides[li], q_tick[li, 0], q_tick[li, 1]
                    )
                    kxp, kyp, kzp = _knee_fk(
                        d_offs[li], a_lens[li], sides[li], qp0, qp1
                    )
                    akx = (kxp - 2.0 * kx0 + kxm) / (dt_ctrl * dt_ctrl)
                    aky = (kyp - 2.0 * ky0 + kym) / (dt_ctrl * dt_ctrl)
                    akz = (kzp - 2.0 * kz0 + kzm) / (dt_ctrl * dt_ctrl)
                else:
                    akx = 0.0
                    aky = 0.0
                    akz = 0.0
                fkx = m_knee * (akx - gx)
                fky = m_knee * aky
                fkz = m_knee * (akz - gz)
                jk = _knee_jacobian6(
                    d_offs[li], a_lens[li], sides[li], q_tick[li, 0], q_tick[li, 1]
                )
                tf0 = (
                    j_tick[li, 0] * ffx + j_tick[li, 6] * ffz
                    + jk[0] * fkx + jk[2] * fky + jk[4] * fkz
                )
                tf1 = (
                    j_tick[li, 1] * ffx + j_tick[li, 7] * ffz
                    + jk[1] * fkx + jk[3] * fky + jk[5] * fkz
                )
                tf2 = j_tick[li, 2] * ffx + j_tick[li, 8] * ffz
            for ji in range(3):
                tau_j = (
                    j_tick[li, ji] * fx + j_tick[li, 6 + ji] * fz
                )
                if ji == 0:
                    tau_j += tf0
                elif ji == 1:
                    tau_j += tf1
                else:
                    tau_j += tf2
                if tau_j > tau_max:
                    tau_j = tau_max
                    any_sat = 1
                elif tau_j < -tau_max:
                    tau_j = -tau_max
                    any_sat = 1
                out_tau[k, 3 * li + ji] = tau_j
                out_q[k, 3 * li + ji] = q_tick[li, ji]
                out_qd[k, 3 * li + ji] = qd_tick[li, ji]
            out_ff[k, 3 * li + 0] = fx
            out_ff[k, 3 * li + 2] = fz
            out_fv[k, 3 * li + 0] = (
                j_tick[li, 0] * qd_tick[li, 0]
                + j_tick[li, 1] * qd_tick[li, 1]
                + j_tick[li, 2] * qd_tick[li, 2]
            )
            out_fv[k, 3 * li + 1] = (
                j_tick[li, 3] * qd_tick[li, 0]
                + j_tick[li, 4] * qd_tick[li, 1]
                + j_tick[li, 5] * qd_tick[li, 2]
            )
            out_fv[k, 3 * li + 2] = (
                j_tick[li, 6] * qd_tick[li, 0]
                + j_tick[li, 7] * qd_tick[li, 1]
                + j_tick[li, 8] * qd_tick[li, 2]
            )
            out_contact[k, li] = in_stance

        slip = 0.0
        if deficit > 0.0:
            slip = deficit / d_n * dt_ctrl
            out_stats[1] += slip
        base_x += v_cmd * dt_ctrl + slip

        out_t[k] = k * dt_ctrl
        out_base_x[k] = base_x
        out_sat[k] = any_sat

        if abs(base_x) > BLOWUP_LIMIT:
            return _STATUS_BLOWUP, k + 1
        if base_x - x0 >= ramp_length:
            return _STATUS_OK, k + 1
    return _STATUS_TIMEOUT, max_ticks


# ---------------------------------------------------------------------------
# public API
# ---------------------------------------------------------------------------


def coulomb_friction(normal_force, tangential_velocity, mu_s, mu_d, v_stick) -> float:
    """Regularized Coulomb law; kinetic outside the stick band, linear inside."""
    if normal_force < 0:
        raise ValueError("normal force must be non-negative")
    return _coulomb(
        float(normal_force), float(tangential_velocity),
        float(mu_s), float(mu_d), float(v_stick),
    )


def step_slider(
    state: SimState,
    torques,
    terrain: TerrainSpec,
    robot: RobotSpec,
    contact: ContactModel,
    dt: float,
) -> SimState:
    """One semi-implicit physics substep of the slider base.

    The per-foot contact forces in state (solved by the control-tick leg
    equilibrium) act on the base together with gravity and torso Coulomb
    friction. Audit fields record the per-step work terms of gravity,
    feet and friction plus the friction regime.
    """
    if not (0 < dt <= 2e-3):
        raise ValueError("dt must lie in (0, 2 ms]")
    torques = np.asarray(torques, dtype=float)
    if not np.isfinite(torques).all():
        raise ValueError("torques must be finite")

    alpha = terrain.alpha_rad
    w_t = robot.mass * terrain.g * math.sin(alpha)
    w_n = robot.mass * terrain.g * math.cos(alpha)
    contact_mask = np.asarray(state.foot_contact, dtype=bool)
    sum_fx = float(state.foot_force[contact_mask, 0].sum())
    sum_n = float(state.foot_force[contact_mask, 2].sum())
    applied = w_t + sum_fx
    n_torso = max(0.0, w_n - sum_n)

    v_new, x_new, f_fric, regime = _base_substep(
        state.base_v, state.base_x, applied, n_torso,
        robot.mass, terrain.mu_s, terrain.mu_d, contact.v_stick, dt,
    )
    dx_mid = dt * 0.5 * (state.base_v + v_new)
    new = replace(
        state,
        t=state.t + dt,
        base_x=x_new,
        base_v=v_new,
        base_height=robot.hip_height_slide,
        tau=torques.reshape(4, 3).copy(),
        q=state.q.copy(),
        qd=state.qd.copy(),
        foot_force=state.foot_force.copy(),
        foot_contact=state.foot_contact.copy(),
        deflection=state.deflection.copy(),
        audit={
            "w_gravity": w_t * dx_mid,
            "w_feet": sum_fx * dx_mid,
            "w_friction": (f_fric * dx_mid) if regime != 0 else 0.0,
            "friction_force": f_fric,
            "normal_torso": n_torso,
            "regime": ("stick", "kinetic", "kinetic_clamped")[regime],
        },
    )
    new.check_finite()
    return new


def step_walker(
    state: SimState,
    foot_refs: dict,
    stance,
    terrain: TerrainSpec,
    robot: RobotSpec,
    dt: float,
    contact: ContactModel | None = None,
) -> SimState:
    """One quasi-static walker tick.

    foot_refs are hip-frame FootReference objects from the crawl
    generator; stance names the legs in ground contact (>= 3). The
    commanded base speed is implied by the stance references (stance feet
    move at -v in the hip frame). Raises FrictionConeInfeasible when no
    cone-respecting force distribution exists.
    """
    stance = tuple(stance)
    if len(stance) < 3:
        raise ValueError("quasi-static walker requires at least 3 stance legs")
    contact = contact or ContactModel()
    alpha = terrain.alpha_rad
    w_t = robot.mass * terrain.g * math.sin(alpha)
    w_n = robot.mass * terrain.g * math.cos(alpha)
    v_cmd = -float(foot_refs[stance[0]].velocity[0])

    arms = np.empty(len(stance))
    for i, leg in enumerate(stance):
        arms[i] = robot.hip_x[leg] + float(foot_refs[leg].position[0])
    n_buf = np.empty(4)
    t_buf = np.empty(4)
    status, deficit = _stance_forces(
        arms, len(stance), w_n, w_t, terrain.mu_s,
        robot.walk_stance_height, n_buf, t_buf,
    )
    if status == 5:
        raise FrictionConeInfeasible(
            f"tan(alpha)={math.tan(alpha):.3f} exceeds mu_s={terrain.mu_s}; "
            "no tangential distribution fits the cones"
        )
    if status == 6:
        raise FrictionConeInfeasible(
            "stance would need a negative normal force (tipping); no valid "
            "force distribution"
        )

    q = np.zeros((4, 3))
    qd = np.zeros((4, 3))
    tau = np.zeros((4, 3))
    forces = np.zeros((4, 3))
    contact_flags = np.zeros(4, dtype=bool)
    residual_n = -w_n
    residual_t = -w_t
    for i, leg in enumerate(LEG_ORDER):
        geom = robot.legs[leg]
        ref = foot_refs[leg]
        q[i] = inverse_kinematics(geom, ref.position)
        qd[i] = joint_velocities_from_foot(geom, q[i], ref.velocity)
        if leg in stance:
            si = stance.index(leg)
            forces[i] = (-t_buf[si], 0.0, n_buf[si])
            contact_flags[i] = True
            residual_n += n_buf[si]
            residual_t += t_buf[si]
            tau[i] = jacobian(geom, q[i]).T @ forces[i]

    slip = deficit / contact.d_n * dt if deficit > 0 else 0.0
    new = replace(
        state,
        t=state.t + dt,
        base_x=state.base_x + v_cmd * dt + slip,
        base_v=v_cmd,
        base_height=robot.walk_stance_height,
        q=q,
        qd=qd,
        tau=tau,
        foot_force=forces,
        foot_contact=contact_flags,
        slip_distance=state.slip_distance + slip,
        audit={
            "balance_residual": abs(residual_n) + abs(residual_t),
            "slip": slip,
            "slipped": deficit > 0,
            "normal_forces": n_buf[: len(stance)].copy(),
            "tangential_forces": t_buf[: len(stance)].copy(),
        },
    )
    new.check_finite()
    return new


def _resolve_jitter(config: TrialConfig):
    """Seeded zero-mean start jitter: base position and stroke/gait phase."""
    if not config.jitter:
        return 0.0, 0.0
    rng = np.random.default_rng(config.seed)
    dx0 = float(rng.uniform(-0.01, 0.01))
    if config.mode == "slide":
        phase = float(rng.uniform(0.0, 2.0 * math.pi))
    else:
        cycle = config.gait.effective_cycle_time(config.walk_speed)
        phase = float(rng.uniform(0.0, cycle))
    return dx0, phase


def simulate_trial(config: TrialConfig) -> TrialLog:
    """Run one trial to ramp completion and return its log.

    Raises TrialTimeout when the ramp is not covered in time, and
    propagates dynamics errors (NumericalBlowup, FrictionConeInfeasible,
    UnreachableError, SingularJacobianError). Reruns with the same config
    are bit-identical.
    """
    dt_ctrl = 1.0 / config.slide.f_s
    n_sub = max(1, round(dt_ctrl / PHYSICS_DT))
    dt_phys = dt_ctrl / n_sub
    max_ticks = int(math.ceil(config.timeout / dt_ctrl))
    x0, phase = _resolve_jitter(config)

    n12 = (max_ticks, 12)
    out_t = np.zeros(max_ticks)
    out_q = np.zeros(n12)
    out_qd = np.zeros(n12)
    out_tau = np.zeros(n12)
    out_ff = np.zeros(n12)
    out_fv = np.zeros(n12)
    out_contact = np.zeros((max_ticks, 4), dtype=np.int8)
    out_base_x = np.zeros(max_ticks)
    out_sat = np.zeros(max_ticks, dtype=np.int8)

    terrain = config.terrain
    robot = config.robot
    meta = {
        "mode": config.mode,
        "alpha_deg": terrain.alpha_deg,
        "mu_s": terrain.mu_s,
        "mu_d": terrain.mu_d,
        "g": terrain.g,
        "mass": robot.mass,
        "seed": config.seed,
        "provenance": "internal",
        "dt": dt_ctrl,
        "x0": x0,
        "phase_jitter": phase,
        "ramp_length": config.ramp_length,
    }

    if config.mode == "slide":
        slide = config.slide.with_phase(config.slide.phase_offset + phase)
        geom_lf = robot.legs["lf"]
        clearance = -robot.hip_height_slide + 1e-3
        config.home.check_front_clearance(clearance)
        q_lh = inverse_kinematics(robot.legs["lh"], config.home["lh"])
        q_rh = inverse_kinematics(robot.legs["rh"], config.home["rh"])
        audit = np.zeros(4)
        status, n = _run_slider_trial(
            terrain.alpha_rad, terrain.mu_s, terrain.mu_d,
            terrain.mu_foot_s, terrain.mu_foot_d, terrain.g,
            robot.mass, robot.hip_height_slide,
            geom_lf.hip_offset, geom_lf.l_thigh, geom_lf.l_shank,
            geom_lf.knee_sign,
            np.asarray(config.home["lf"], dtype=float),
            np.asarray(config.home["rf"], dtype=float),
            np.asarray(q_lh, dtype=float), np.asarray(q_rh, dtype=float),
            slide.f, slide.f_s, slide.phase_offset,
            slide.l_swing, slide.l_plus, slide.h_swing, slide.z0, slide.v_scale,
            np.asarray(config.gains.k_q, dtype=float),
            np.asarray(config.gains.d_q, dtype=float),
            config.gains.tau_max,
            config.contact.k_n, config.contact.d_n, config.contact.v_stick,
            dt_ctrl, n_sub, dt_phys,
            x0, config.ramp_length, max_ticks,
            out_t, out_q, out_qd, out_tau, out_ff, out_fv, out_contact,
            out_base_x, out_sat, audit,
        )
        meta["cmd_speed"] = slide.v
        meta["audit_w_gravity"] = audit[0]
        meta["audit_w_feet"] = audit[1]
        meta["audit_w_friction"] = audit[2]
        meta["audit_clamps"] = audit[3]
        cmd = np.full(max_ticks, slide.v)
    else:
        offsets = np.array([CRAWL_OFFSETS[leg] for leg in LEG_ORDER])
        hips = np.array([robot.hip_x[leg] for leg in LEG_ORDER])
        d_offs = np.array([robot.legs[leg].hip_offset for leg in LEG_ORDER])
        a_lens = np.array([robot.legs[leg].l_thigh for leg in LEG_ORDER])
        b_lens = np.array([robot.legs[leg].l_shank for leg in LEG_ORDER])
        sides = np.array([float(robot.legs[leg].side) for leg in LEG_ORDER])
        ksigns = np.array([robot.legs[leg].knee_sign for leg in LEG_ORDER])
        m_knee, m_foot = robot.limb_point_masses
        stats = np.zeros(2)
        status, n = _run_walker_trial(
            terrain.alpha_rad, terrain.mu_s, terrain.g, robot.mass,
            robot.walk_stance_height, robot.walk_stance_height,
            config.gait.duty_factor, config.gait.step_length,
            config.gait.step_height, config.gait.cycle_time, config.walk_speed,
            offsets, hips, d_offs, a_lens, b_lens, sides, ksigns,
            m_knee, m_foot, 1 if config.walker_limb_masses else 0,
            config.contact.d_n, config.gains.tau_max,
            dt_ctrl, x0, phase, config.ramp_length, max_ticks,
            out_t, out_q, out_qd, out_tau, out_ff, out_fv, out_contact,
            out_base_x, out_sat, stats,
        )
        meta["cmd_speed"] = config.walk_speed
        meta["max_balance_residual"] = stats[0]
        meta["slip_distance"] = stats[1]
        cmd = np.full(max_ticks, config.walk_speed)

    if status == _STATUS_TIMEOUT:
        raise TrialTimeout(
            f"{config.mode} trial (alpha={terrain.alpha_deg} deg, "
            f"mu_s={terrain.mu_s}) did not cover {config.ramp_length} m in "
            f"{config.timeout} s"
        )
    if status == _STATUS_UNREACHABLE:
        raise UnreachableError("foot reference left the leg workspace mid-trial")
    if status == _STATUS_SINGULAR:
        raise SingularJacobianError("trajectory passed through a singular pose")
    if status == _STATUS_BLOWUP:
        raise NumericalBlowup("state exceeded 1e6; unstable gains or stiffness")
    if status == _STATUS_CONE:
        raise FrictionConeInfeasible(
            f"tan(alpha) exceeds mu_s={terrain.mu_s} for walking at "
            f"alpha={terrain.alpha_deg} deg"
        )
    if status == _STATUS_TIPPING:
        raise FrictionConeInfeasible(
            f"stance force distribution infeasible (tipping) at "
            f"alpha={terrain.alpha_deg} deg"
        )

    sl = slice(0, n)
    return TrialLog(
        t=out_t[sl].copy(),
        q=out_q[sl].copy(),
        qd=out_qd[sl].copy(),
        tau=out_tau[sl].copy(),
        foot_force=out_ff[sl].copy(),
        foot_vel=out_fv[sl].copy(),
        contact=out_contact[sl].copy(),
        base_x=out_base_x[sl].copy(),
        cmd_speed=cmd[sl].copy(),
        saturated=out_sat[sl].copy(),
        metadata=meta,
    )
