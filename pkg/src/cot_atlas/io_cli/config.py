"""Sectioned key-value run configuration: strict parsing and lossless echo.

The format is plain INI. Parsing is strict: unknown sections or keys are
errors so typos cannot silently fall back to defaults, and every value
failing its range check raises InvariantViolation unless extended ranges
were explicitly allowed. An empty file is a complete, valid configuration
(all defaults). serialize_config echoes every resolved value with 17
significant digits, so load -> serialize -> load is the identity.
"""

from __future__ import annotations

import io
import re
from configparser import ConfigParser, Error as ConfigParserError
from dataclasses import dataclass, field, replace

import numpy as np

from .. import __version__
from ..controllers import GaitSchedule, ImpedanceGains
from ..sweep_harness import SweepGrid
from ..terrain_dynamics import ContactModel, RobotSpec, TerrainSpec, TrialConfig
from ..trajectory_gen import LEG_ORDER, HomePose, SlideTrajParams
from ..leg_kinematics import LegGeometry


class ParseError(ValueError):
    """Malformed config text; carries the offending line when known."""

    def __init__(self, message, lineno=None, column=None):
        self.lineno = lineno
        self.column = column
        loc = f" (line {lineno}" + (f", col {column}" if column else "") + ")" if lineno else ""
        super().__init__(message + loc)


class UnknownKey(ValueError):
    """A section or key not in the schema (strict mode catches typos)."""


class InvariantViolation(ValueError):
    """A parsed value violates a model invariant or allowed range."""


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".17g")
    if isinstance(value, (tuple, list, np.ndarray)):
        return ", ".join(format(float(v), ".17g") for v in value)
    return str(value)


def _parse_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _parse_floats(raw: str) -> tuple:
    return tuple(float(tok) for tok in raw.split(",") if tok.strip())


#: section -> key -> converter. The schema is the single list of valid keys.
_SCHEMA = {
    "run": {
        "mode": str,
        "seed": int,
        "out_dir": str,
        "workers": int,
        "save_trial_logs": _parse_bool,
        "joints": str,
        "allow_extended_ranges": _parse_bool,
    },
    "terrain": {
        "alpha_deg": float,
        "mu_s": float,
        "mu_d": float,
        "mu_foot_s": float,
        "g": float,
    },
    "robot": {
        "mass": float,
        "torso_patch_length": float,
        "torso_patch_width": float,
        "hip_offset": float,
        "l_thigh": float,
        "l_shank": float,
        "hip_x_front": float,
        "hip_x_hind": float,
        "knee_branch_front": str,
        "knee_branch_hind": str,
        "limb_mass_knee": float,
        "limb_mass_foot": float,
        "hip_height_slide": float,
        "walk_stance_height": float,
    },
    "slide_traj": {
        "f": float,
        "f_s": float,
        "l_swing": float,
        "l_plus": float,
        "h_swing": float,
        "z0": float,
        "v": float,
        "alpha_filter": float,
        "normalize_by_v_ref": _parse_bool,
        "v_ref": float,
    },
    "home": {leg: _parse_floats for leg in LEG_ORDER},
    "gains": {
        "kq": _parse_floats,
        "dq": _parse_floats,
        "tau_max": float,
    },
    "gait": {
        "duty_factor": float,
        "step_length": float,
        "step_height": float,
        "cycle_time": float,
    },
    "contact": {
        "k_n": float,
        "d_n": float,
        "v_stick": float,
    },
    "protocol": {
        "ramp_length": float,
        "timeout": float,
        "jitter": _parse_bool,
        "walker_limb_masses": _parse_bool,
        "walk_speed": float,
    },
    "sweep": {
        "slopes": _parse_floats,
        "speeds": _parse_floats,
        "frictions": _parse_floats,
        "repetitions": int,
        "walk_mu_s": float,
    },
}


@dataclass
class RunConfig:
    """Fully resolved run configuration; the manifest echoes all of it."""

    mode: str = "slide"
    seed: int = 0
    out_dir: str = "runs/out"
    workers: int | None = None
    save_trial_logs: bool = False
    joints: str = "all"
    allow_extended: bool = False
    terrain: TerrainSpec = field(default_factory=TerrainSpec)
    robot: RobotSpec = field(default_factory=RobotSpec)
    slide: SlideTrajParams = field(default_factory=SlideTrajParams)
    home: HomePose = field(default_factory=HomePose)
    gains: ImpedanceGains = field(default_factory=ImpedanceGains)
    gait: GaitSchedule = field(default_factory=GaitSchedule)
    contact: ContactModel = field(default_factory=ContactModel)
    grid: SweepGrid = field(default_factory=SweepGrid)
    ramp_length: float = 3.0
    timeout: float = 120.0
    jitter: bool = True
    walker_limb_masses: bool = True
    walk_speed: float = 0.1

    def trial_config(self) -> TrialConfig:
        """TrialConfig for a single `simulate` run (or a sweep template)."""
        return TrialConfig(
            mode=self.mode,
            terrain=self.terrain,
            robot=self.robot,
            slide=self.slide,
            gains=self.gains,
            gait=self.gait,
            contact=self.contact,
            home=self.home.copy(),
            walk_speed=self.walk_speed,
            ramp_length=self.ramp_length,
            timeout=self.timeout,
            seed=self.seed,
            jitter=self.jitter,
            walker_limb_masses=self.walker_limb_masses,
        )


def _find_key_line(text: str, section: str, key: str):
    in_section = False
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if stripped.startswith("[") and stripped.endswith("]"):
            in_section = stripped[1:-1].strip() == section
        elif in_section and re.match(rf"\s*{re.escape(key)}\s*[=:]", line):
            return lineno
    return None


def _read_raw(text: str) -> dict:
    parser = ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except ConfigParserError as exc:
        lineno = getattr(exc, "lineno", None)
        if lineno is None:
            errors = getattr(exc, "errors", None)
            if errors:
                lineno = errors[0][0]
        raise ParseError(f"malformed config: {exc.message.splitlines()[0]}", lineno) from exc

    raw = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise UnknownKey(f"unknown section [{section}]")
        for key, value in parser.items(section):
            if key not in _SCHEMA[section]:
                raise UnknownKey(f"unknown key {key!r} in section [{section}]")
            raw[(section, key)] = value
    return raw


def load_config_text(text: str, overrides=None, allow_extended=False) -> RunConfig:
    """Parse config text, apply CLI-style overrides, resolve all defaults."""
    raw = _read_raw(text)
    for (section, key), value in (overrides or {}).items():
        if section not in _SCHEMA or key not in _SCHEMA[section]:
            raise UnknownKey(f"unknown override {section}.{key}")
        raw[(section, key)] = value

    parsed = {}
    for (section, key), value in raw.items():
        conv = _SCHEMA[section][key]
        try:
            parsed[(section, key)] = conv(value) if not isinstance(value, (int, float, bool, tuple)) else value
        except ValueError as exc:
            lineno = _find_key_line(text, section, key)
            raise ParseError(
                f"bad value for {section}.{key}: {exc}", lineno
            ) from exc

    def get(section, key, default):
        return parsed.get((section, key), default)

    allow = bool(get("run", "allow_extended_ranges", False)) or allow_extended

    try:
        terrain = TerrainSpec(
            alpha_deg=get("terrain", "alpha_deg", 0.0),
            mu_s=get("terrain", "mu_s", 0.6),
            mu_d=get("terrain", "mu_d", None),
            mu_foot_s=get("terrain", "mu_foot_s", 0.7),
            g=get("terrain", "g", 1.625),
            allow_extended=allow,
        )
        front = dict(
            hip_offset=get("robot", "hip_offset", 0.083),
            l_thigh=get("robot", "l_thigh", 0.25),
            l_shank=get("robot", "l_shank", 0.25),
            knee_branch=get("robot", "knee_branch_front", "knee-back"),
        )
        hind = dict(front, knee_branch=get("robot", "knee_branch_hind", "knee-back"))
        hip_front = get("robot", "hip_x_front", 0.24)
        hip_hind = get("robot", "hip_x_hind", -0.24)
        robot = RobotSpec(
            mass=get("robot", "mass", 24.0),
            torso_patch_length=get("robot", "torso_patch_length", 0.60),
            torso_patch_width=get("robot", "torso_patch_width", 0.30),
            legs={
                "lf": LegGeometry(side=1, **front),
                "rf": LegGeometry(side=-1, **front),
                "lh": LegGeometry(side=1, **hind),
                "rh": LegGeometry(side=-1, **hind),
            },
            hip_x={"lf": hip_front, "rf": hip_front, "lh": hip_hind, "rh": hip_hind},
            limb_point_masses=(
                get("robot", "limb_mass_knee", 0.2),
                get("robot", "limb_mass_foot", 0.05),
            ),
            hip_height_slide=get("robot", "hip_height_slide", 0.12),
            walk_stance_height=get("robot", "walk_stance_height", 0.35),
        )
        slide = SlideTrajParams(
            f=get("slide_traj", "f", 1.5),
            f_s=get("slide_traj", "f_s", 500.0),
            l_swing=get("slide_traj", "l_swing", 0.15),
            l_plus=get("slide_traj", "l_plus", 0.05),
            h_swing=get("slide_traj", "h_swing", 0.06),
            z0=get("slide_traj", "z0", 0.05),
            v=get("slide_traj", "v", 0.2),
            alpha_filter=get("slide_traj", "alpha_filter", 0.05),
            normalize_by_v_ref=get("slide_traj", "normalize_by_v_ref", False),
            v_ref=get("slide_traj", "v_ref", 1.0),
        )
        default_home = HomePose()
        home = HomePose(
            {
                leg: parsed.get(("home", leg), tuple(default_home[leg]))
                for leg in LEG_ORDER
            }
        )
        gains = ImpedanceGains(
            k_q=get("gains", "kq", (100.0, 100.0, 100.0)),
            d_q=get("gains", "dq", (5.0, 5.0, 5.0)),
            tau_max=get("gains", "tau_max", 44.0),
        )
        gait = GaitSchedule(
            duty_factor=get("gait", "duty_factor", 0.8),
            step_length=get("gait", "step_length", 0.10),
            step_height=get("gait", "step_height", 0.05),
            cycle_time=get("gait", "cycle_time", 1.0),
        )
        contact = ContactModel(
            k_n=get("contact", "k_n", 2e4),
            d_n=get("contact", "d_n", 100.0),
            v_stick=get("contact", "v_stick", 1e-3),
        )
        grid = SweepGrid(
            slopes=get("sweep", "slopes", SweepGrid().slopes),
            speeds=get("sweep", "speeds", SweepGrid().speeds),
            frictions=get("sweep", "frictions", SweepGrid().frictions),
            repetitions=get("sweep", "repetitions", 10),
            master_seed=get("run", "seed", 0),
            walk_mu_s=get("sweep", "walk_mu_s", 0.7),
        )
        cfg = RunConfig(
            mode=get("run", "mode", "slide"),
            seed=get("run", "seed", 0),
            out_dir=get("run", "out_dir", "runs/out"),
            workers=parsed.get(("run", "workers")),
            save_trial_logs=get("run", "save_trial_logs", False),
            joints=get("run", "joints", "all"),
            allow_extended=allow,
            terrain=terrain,
            robot=robot,
            slide=slide,
            home=home,
            gains=gains,
            gait=gait,
            contact=contact,
            grid=grid,
            ramp_length=get("protocol", "ramp_length", 3.0),
            timeout=get("protocol", "timeout", 120.0),
            jitter=get("protocol", "jitter", True),
            walker_limb_masses=get("protocol", "walker_limb_masses", True),
            walk_speed=get("protocol", "walk_speed", 0.1),
        )
    except ValueError as exc:
        if isinstance(exc, (ParseError, UnknownKey)):
            raise
        raise InvariantViolation(str(exc)) from exc

    if cfg.mode not in ("slide", "walk"):
        raise InvariantViolation(f"run.mode must be 'slide' or 'walk', got {cfg.mode!r}")
    if cfg.joints not in ("all", "active"):
        raise InvariantViolation(f"run.joints must be 'all' or 'active', got {cfg.joints!r}")
    return cfg


def load_config(path, overrides=None, allow_extended=False) -> RunConfig:
    """Load and resolve a config file; missing keys take documented defaults."""
    with open(path, "r", encoding="utf-8") as fh:
        return load_config_text(fh.read(), overrides, allow_extended)


def serialize_config(cfg: RunConfig) -> str:
    """Echo the fully resolved configuration (the manifest body)."""
    out = io.StringIO()

    def emit(section, pairs):
        out.write(f"[{section}]\n")
        for key, value in pairs:
            out.write(f"{key} = {_fmt(value)}\n")
        out.write("\n")

    emit("run", [
        ("mode", cfg.mode),
        ("seed", cfg.seed),
        ("out_dir", cfg.out_dir),
        ("save_trial_logs", cfg.save_trial_logs),
        ("joints", cfg.joints),
        ("allow_extended_ranges", cfg.allow_extended),
    ] + ([("workers", cfg.workers)] if cfg.workers is not None else []))
    emit("terrain", [
        ("alpha_deg", cfg.terrain.alpha_deg),
        ("mu_s", cfg.terrain.mu_s),
        ("mu_d", cfg.terrain.mu_d),
        ("mu_foot_s", cfg.terrain.mu_foot_s),
        ("g", cfg.terrain.g),
    ])
    lf = cfg.robot.legs["lf"]
    lh = cfg.robot.legs["lh"]
    emit("robot", [
        ("mass", cfg.robot.mass),
        ("torso_patch_length", cfg.robot.torso_patch_length),
        ("torso_patch_width", cfg.robot.torso_patch_width),
        ("hip_offset", lf.hip_offset),
        ("l_thigh", lf.l_thigh),
        ("l_shank", lf.l_shank),
        ("hip_x_front", cfg.robot.hip_x["lf"]),
        ("hip_x_hind", cfg.robot.hip_x["lh"]),
        ("knee_branch_front", lf.knee_branch),
        ("knee_branch_hind", lh.knee_branch),
        ("limb_mass_knee", cfg.robot.limb_point_masses[0]),
        ("limb_mass_foot", cfg.robot.limb_point_masses[1]),
        ("hip_height_slide", cfg.robot.hip_height_slide),
        ("walk_stance_height", cfg.robot.walk_stance_height),
    ])
    emit("slide_traj", [
        ("f", cfg.slide.f),
        ("f_s", cfg.slide.f_s),
        ("l_swing", cfg.slide.l_swing),
        ("l_plus", cfg.slide.l_plus),
        ("h_swing", cfg.slide.h_swing),
        ("z0", cfg.slide.z0),
        ("v", cfg.slide.v),
        ("alpha_filter", cfg.slide.alpha_filter),
        ("normalize_by_v_ref", cfg.slide.normalize_by_v_ref),
        ("v_ref", cfg.slide.v_ref),
    ])
    emit("home", [(leg, cfg.home[leg]) for leg in LEG_ORDER])
    emit("gains", [
        ("kq", cfg.gains.k_q),
        ("dq", cfg.gains.d_q),
        ("tau_max", cfg.gains.tau_max),
    ])
    emit("gait", [
        ("duty_factor", cfg.gait.duty_factor),
        ("step_length", cfg.gait.step_length),
        ("step_height", cfg.gait.step_height),
        ("cycle_time", cfg.gait.cycle_time),
    ])
    emit("contact", [
        ("k_n", cfg.contact.k_n),
        ("d_n", cfg.contact.d_n),
        ("v_stick", cfg.contact.v_stick),
    ])
    emit("protocol", [
        ("ramp_length", cfg.ramp_length),
        ("timeout", cfg.timeout),
        ("jitter", cfg.jitter),
        ("walker_limb_masses", cfg.walker_limb_masses),
        ("walk_speed", cfg.walk_speed),
    ])
    emit("sweep", [
        ("slopes", cfg.grid.slopes),
        ("speeds", cfg.grid.speeds),
        ("frictions", cfg.grid.frictions),
        ("repetitions", cfg.grid.repetitions),
        ("walk_mu_s", cfg.grid.walk_mu_s),
    ])
    return out.getvalue()


def manifest_text(cfg: RunConfig) -> str:
    """Config echo plus the version string: reproduces the run byte-for-byte.

    The version rides in a comment so the manifest itself is a loadable
    config file.
    """
    return (
        f"# cot-atlas run manifest\n# version = {__version__}\n\n"
        + serialize_config(cfg)
    )
