"""Mechanical energy and Cost of Transport estimation.

Two signal paths feed the same energy integral: the joint path uses the
logged joint torques and rates directly, the Cartesian path reconstructs
them from foot forces and velocities through the leg Jacobian (the route
used for externally produced logs, where only foot-level data exist).

Energy is the trapezoidal integral of the summed absolute joint powers at
the log cadence; absolute values mean braking work is charged, never
credited. The distance in the CoT denominator is the along-slope path
length of the base over the active-locomotion window, which equals the
displacement for straight ramp traversals but stays robust to small
oscillations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .leg_kinematics import SINGULAR_DET_TOL, LegGeometry, _det3, _jacobian9, _solve3

LEG_ORDER = ("lf", "rf", "lh", "rh")
JOINT_NAMES = tuple(
    f"{leg}_{j}" for leg in LEG_ORDER for j in ("haa", "hfe", "kfe")
)

#: Commanded-speed threshold defining the active-locomotion window (m/s).
ACTIVE_SPEED_TOL = 1e-4

#: Trials that moved less than this are degenerate for CoT purposes (m).
MIN_DISTANCE = 1e-3

#: Fraction of singular rows above which reconstruction is rejected.
MAX_SINGULAR_ROW_FRACTION = 0.01


class WindowOutOfRange(ValueError):
    """Requested integration window is empty or outside the log span."""


class ZeroDistance(ValueError):
    """Trial did not move; CoT is undefined."""


class TooManySingularRows(ValueError):
    """More than 1% of the window hit singular poses during reconstruction."""


@dataclass
class TrialLog:
    """Uniformly sampled trial record.

    Joint columns are ordered (lf, rf, lh, rh) x (haa, hfe, kfe); foot
    force/velocity columns use the same per-leg layout. base_x is the
    along-slope base position. metadata carries mode, terrain, robot
    parameters, seed and provenance.
    """

    t: np.ndarray
    q: np.ndarray
    qd: np.ndarray
    tau: np.ndarray
    foot_force: np.ndarray
    foot_vel: np.ndarray
    contact: np.ndarray
    base_x: np.ndarray
    cmd_speed: np.ndarray
    saturated: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        n = self.t.shape[0]
        if n < 2:
            raise ValueError("trial log needs at least two samples")
        steps = np.diff(self.t)
        if not (steps > 0).all():
            raise ValueError("log timestamps must be strictly increasing")
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=1e-12):
            raise ValueError("log timestamps must be uniformly spaced")
        for name in ("q", "qd", "tau", "foot_force", "foot_vel"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (n, 12):
                raise ValueError(f"{name} must have shape (n, 12)")
            setattr(self, name, arr)
        self.contact = np.asarray(self.contact)
        if self.contact.shape != (n, 4):
            raise ValueError("contact must have shape (n, 4)")
        for name in ("base_x", "cmd_speed", "saturated"):
            arr = np.asarray(getattr(self, name))
            if arr.shape != (n,):
                raise ValueError(f"{name} must have shape (n,)")

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    def __len__(self) -> int:
        return self.t.shape[0]


@dataclass(frozen=True)
class CoTResult:
    """Energy, distance and their dimensionless ratio for one trial."""

    energy: float
    distance: float
    cot: float
    mode: str
    alpha_deg: float
    mu_s: float
    speed: float
    per_joint_energy: np.ndarray
    signal_path: str
    window: tuple
    excluded_rows: int = 0


def _window_indices(log: TrialLog, t0: float, tf: float):
    if not (t0 < tf):
        raise WindowOutOfRange(f"need t0 < tf, got [{t0}, {tf}]")
    tol = 1e-9 * max(1.0, abs(float(log.t[-1])))
    if t0 < log.t[0] - tol or tf > log.t[-1] + tol:
        raise WindowOutOfRange(
            f"window [{t0}, {tf}] outside log span [{log.t[0]}, {log.t[-1]}]"
        )
    i0 = int(np.searchsorted(log.t, t0 - tol, side="left"))
    i1 = int(np.searchsorted(log.t, tf + tol, side="right")) - 1
    if i1 - i0 < 1:
        raise WindowOutOfRange("window contains fewer than two samples")
    return i0, i1


def joint_power(tau: np.ndarray, qd: np.ndarray, joints=None) -> np.ndarray:
    """Summed absolute per-joint mechanical power for each sample."""
    p = np.abs(tau * qd)
    if joints is not None:
        p = p[:, joints]
    return p.sum(axis=1)


def mechanical_energy(log: TrialLog, t0: float, tf: float, joints=None) -> float:
    """Trapezoidal integral of the absolute joint power over [t0, tf].

    Window endpoints snap inward to the nearest sample; non-grid endpoints
    therefore never create partial cells, keeping the integral exactly
    additive over shared sample points.
    """
    i0, i1 = _window_indices(log, t0, tf)
    p = joint_power(log.tau[i0 : i1 + 1], log.qd[i0 : i1 + 1], joints)
    return float(np.trapezoid(p, log.t[i0 : i1 + 1]))


def cost_of_transport(energy: float, mass: float, g: float, distance: float) -> float:
    """CoT = E / (m g d)."""
    if mass <= 0 or g <= 0:
        raise ValueError("mass and gravity must be positive")
    if distance <= MIN_DISTANCE:
        raise ZeroDistance(
            f"distance {distance:.3e} m <= {MIN_DISTANCE} m; trial did not move"
        )
    return energy / (mass * g * distance)


def reconstruct_joint_signals(log: TrialLog, robot, use_tau_free: bool = False):
    """Rebuild per-joint (tau, qd) from foot forces/velocities and posture.

    tau = J^T F_f (+ limb-acceleration torques when use_tau_free is set,
    estimated from central differences of the logged posture); qd solves
    J qd = xdot_f. Rows within the singularity tolerance of any leg are
    excluded and counted; more than 1% exclusions raises
    TooManySingularRows.

    Returns (tau, qd, excluded) with excluded a boolean row mask.
    """
    n = len(log)
    tau = np.zeros((n, 12))
    qd = np.zeros((n, 12))
    excluded = np.zeros(n, dtype=bool)
    legs = [robot.legs[leg] for leg in LEG_ORDER]

    for i in range(n):
        for li, geom in enumerate(legs):
            sl = slice(3 * li, 3 * li + 3)
            f = log.foot_force[i, sl]
            v = log.foot_vel[i, sl]
            if not (f.any() or v.any()):
                # leg carries no Cartesian data this row (e.g. hind legs in
                # front-feet-only external logs): zero contribution
                continue
            qrow = log.q[i, sl]
            j9 = _jacobian9(
                geom.hip_offset, geom.l_thigh, geom.l_shank, geom.side,
                qrow[0], qrow[1], qrow[2],
            )
            det = _det3(j9)
            if abs(det) <= SINGULAR_DET_TOL:
                excluded[i] = True
                continue
            jm = np.array(j9).reshape(3, 3)
            tau[i, sl] = jm.T @ f
            _, v0, v1, v2 = _solve3(j9, v[0], v[1], v[2])
            qd[i, sl] = (v0, v1, v2)

    if use_tau_free:
        tau += _tau_free_from_log(log, robot)

    frac = excluded.mean()
    if frac > MAX_SINGULAR_ROW_FRACTION:
        raise TooManySingularRows(
            f"{frac:.1%} of rows near-singular (limit "
            f"{MAX_SINGULAR_ROW_FRACTION:.0%})"
        )
    return tau, qd, excluded


def _tau_free_from_log(log: TrialLog, robot) -> np.ndarray:
    """Lumped two-point-mass limb torques from logged postures (FD accel)."""
    from .leg_kinematics import _fk, _knee_fk

    n = len(log)
    dt = log.dt
    g = float(log.metadata.get("g", 1.625))
    alpha = np.deg2rad(float(log.metadata.get("alpha_deg", 0.0)))
    g_vec = np.array([g * np.sin(alpha), 0.0, -g * np.cos(alpha)])
    m_knee, m_foot = robot.limb_point_masses
    out = np.zeros((n, 12))
    for li, leg in enumerate(LEG_ORDER):
        geom = robot.legs[leg]
        sl = slice(3 * li, 3 * li + 3)
        foot = np.empty((n, 3))
        knee = np.empty((n, 3))
        for i in range(n):
            qrow = log.q[i, sl]
            foot[i] = _fk(
                geom.hip_offset, geom.l_thigh, geom.l_shank, geom.side,
                qrow[0], qrow[1], qrow[2],
            )
            knee[i] = _knee_fk(geom.hip_offset, geom.l_thigh, geom.side, qrow[0], qrow[1])
        a_foot = np.zeros((n, 3))
        a_knee = np.zeros((n, 3))
        a_foot[1:-1] = (foot[2:] - 2 * foot[1:-1] + foot[:-2]) / dt**2
        a_knee[1:-1] = (knee[2:] - 2 * knee[1:-1] + knee[:-2]) / dt**2
        for i in range(n):
            qrow = log.q[i, sl]
            j9 = _jacobian9(
                geom.hip_offset, geom.l_thigh, geom.l_shank, geom.side,
                qrow[0], qrow[1], qrow[2],
            )
            jm = np.array(j9).reshape(3, 3)
            jk = np.zeros((3, 3))
            # knee point depends on (q_haa, q_hfe) only
            h = 1e-7
            for col in range(2):
                qp = qrow.copy()
                qm = qrow.copy()
                qp[col] += h
                qm[col] -= h
                kp = np.array(
                    _knee_fk(geom.hip_offset, geom.l_thigh, geom.side, qp[0], qp[1])
                )
                km = np.array(
                    _knee_fk(geom.hip_offset, geom.l_thigh, geom.side, qm[0], qm[1])
                )
                jk[:, col] = (kp - km) / (2 * h)
            f_foot = m_foot * (a_foot[i] - g_vec)
            f_knee = m_knee * (a_knee[i] - g_vec)
            out[i, sl] = jm.T @ f_foot + jk.T @ f_knee
    return out


def active_window(log: TrialLog):
    """[t0, tf] spanned by commanded motion above ACTIVE_SPEED_TOL."""
    idx = np.nonzero(log.cmd_speed > ACTIVE_SPEED_TOL)[0]
    if idx.size < 2:
        raise WindowOutOfRange("no active locomotion window in log")
    return float(log.t[idx[0]]), float(log.t[idx[-1]])


def path_length(log: TrialLog, t0: float, tf: float) -> float:
    """Along-slope path length of the base over [t0, tf]."""
    i0, i1 = _window_indices(log, t0, tf)
    return float(np.abs(np.diff(log.base_x[i0 : i1 + 1])).sum())


def cot_for_trial(
    log: TrialLog,
    robot,
    terrain,
    signal_path: str = "auto",
    joints: str = "all",
) -> CoTResult:
    """CoT over the active-locomotion window of one trial.

    signal_path: 'joint' integrates the logged joint signals, 'cartesian'
    reconstructs them through the Jacobian first, 'auto' picks 'cartesian'
    for externally ingested logs and 'joint' otherwise. joints: 'all'
    charges all 12 actuated joints, 'active' only the legs that made
    ground contact during the window.
    """
    if signal_path == "auto":
        signal_path = (
            "cartesian" if log.metadata.get("provenance") == "external" else "joint"
        )
    if signal_path not in ("joint", "cartesian"):
        raise ValueError(f"unknown signal path {signal_path!r}")
    if joints not in ("all", "active"):
        raise ValueError(f"joints must be 'all' or 'active', got {joints!r}")

    t0, tf = active_window(log)
    i0, i1 = _window_indices(log, t0, tf)
    sel = slice(i0, i1 + 1)

    excluded_rows = 0
    if signal_path == "cartesian":
        tau, qd, excluded = reconstruct_joint_signals(log, robot)
        tau, qd = tau[sel], qd[sel]
        keep = ~excluded[sel]
        excluded_rows = int((~keep).sum())
    else:
        tau, qd = log.tau[sel], log.qd[sel]
        keep = np.ones(tau.shape[0], dtype=bool)

    joint_idx = None
    if joints == "active":
        active_legs = [
            li for li in range(4) if log.contact[sel][:, li].any()
        ]
        joint_idx = [3 * li + j for li in active_legs for j in range(3)]
        if not joint_idx:
            joint_idx = list(range(12))

    p_joint = np.abs(tau * qd)
    if joint_idx is not None:
        mask = np.zeros(12, dtype=bool)
        mask[joint_idx] = True
        p_joint = p_joint * mask
    t_win = log.t[sel][keep]
    if t_win.shape[0] < 2:
        raise WindowOutOfRange("active window reduced below two usable samples")
    per_joint = np.trapezoid(p_joint[keep], t_win, axis=0)
    energy = float(per_joint.sum())

    d = path_length(log, t0, tf)
    cot = cost_of_transport(energy, robot.mass, terrain.g, d)
    return CoTResult(
        energy=energy,
        distance=d,
        cot=cot,
        mode=str(log.metadata.get("mode", "unknown")),
        alpha_deg=float(log.metadata.get("alpha_deg", np.nan)),
        mu_s=float(log.metadata.get("mu_s", np.nan)),
        speed=float(log.metadata.get("cmd_speed", np.nan)),
        per_joint_energy=per_joint,
        signal_path=signal_path,
        window=(t0, tf),
        excluded_rows=excluded_rows,
    )
