"""File formats: trial logs, external Cartesian logs, curves, crossovers.

All CSV writers emit a fixed column order, dot-decimal floats with 17
significant digits (lossless for float64), and LF line endings, so
identical data always produces identical bytes. Trial logs and external
logs carry their scalar context in an INI sidecar next to the CSV.
"""

from __future__ import annotations

import csv
import math
import os
from configparser import ConfigParser

import numpy as np

from ..crossover_analysis import CROSSINGS, CrossoverResult
from ..energetics import LEG_ORDER, TrialLog
from ..sweep_harness import CoTCurve

_JOINTS = ("haa", "hfe", "kfe")
_AXES = ("x", "y", "z")

TRIAL_COLUMNS = (
    ["t"]
    + [f"q_{leg}_{j}" for leg in LEG_ORDER for j in _JOINTS]
    + [f"qd_{leg}_{j}" for leg in LEG_ORDER for j in _JOINTS]
    + [f"tau_{leg}_{j}" for leg in LEG_ORDER for j in _JOINTS]
    + [f"ff_{leg}_{a}" for leg in LEG_ORDER for a in _AXES]
    + [f"fv_{leg}_{a}" for leg in LEG_ORDER for a in _AXES]
    + [f"contact_{leg}" for leg in LEG_ORDER]
    + ["base_x", "cmd_speed", "saturated"]
)

EXTERNAL_COLUMNS = (
    ["t"]
    + [
        f"{leg}_{name}"
        for leg in ("lf", "rf")
        for name in (
            "fx", "fy", "fz", "vx", "vy", "vz", "q_haa", "q_hfe", "q_kfe",
        )
    ]
    + ["base_x", "base_y", "base_z"]
)

CURVES_COLUMNS = ("mode", "speed", "mu_s", "alpha_deg", "cot_mean", "cot_std", "n_ok", "n_fail")

CROSSOVERS_COLUMNS = (
    "walk_speed", "mu_s", "classification", "alpha_star_list", "bracket_lo", "bracket_hi",
)

COT_RESULT_COLUMNS = (
    "mode", "alpha_deg", "mu_s", "speed", "energy_j", "distance_m", "cot",
    "signal_path", "provenance",
)

#: Forces beyond this multiple of robot weight fail the unit sanity check.
UNIT_SANITY_WEIGHT_FACTOR = 100.0


class SchemaError(ValueError):
    """File header or sidecar does not match the published schema."""


class NonMonotoneTime(ValueError):
    """Timestamps are not strictly increasing."""


class UnitSanity(ValueError):
    """Values are implausible for the declared units (e.g. F >> m g)."""


def _g17(x) -> str:
    return format(float(x), ".17g")


def _write_rows(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _write_sidecar(path, mapping):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("[meta]\n")
        for key in sorted(mapping):
            value = mapping[key]
            text = _g17(value) if isinstance(value, float) else str(value)
            fh.write(f"{key} = {text}\n")


def _read_sidecar(path) -> dict:
    parser = ConfigParser(interpolation=None)
    read = parser.read(path)
    if not read or not parser.has_section("meta"):
        raise SchemaError(f"sidecar {path} missing or lacks a [meta] section")
    out = {}
    for key, value in parser.items("meta"):
        try:
            out[key] = float(value)
        except ValueError:
            out[key] = value
    return out


def sidecar_path(csv_path) -> str:
    root, _ = os.path.splitext(str(csv_path))
    return root + ".meta.cfg"


# ---------------------------------------------------------------------------
# trial logs
# ---------------------------------------------------------------------------


def write_trial_csv(path, log: TrialLog):
    """Write one trial log plus its metadata sidecar."""
    n = len(log)
    rows = []
    for i in range(n):
        row = [_g17(log.t[i])]
        row += [_g17(v) for v in log.q[i]]
        row += [_g17(v) for v in log.qd[i]]
        row += [_g17(v) for v in log.tau[i]]
        row += [_g17(v) for v in log.foot_force[i]]
        row += [_g17(v) for v in log.foot_vel[i]]
        row += [str(int(v)) for v in log.contact[i]]
        row += [_g17(log.base_x[i]), _g17(log.cmd_speed[i]), str(int(log.saturated[i]))]
        rows.append(row)
    _write_rows(path, TRIAL_COLUMNS, rows)
    _write_sidecar(sidecar_path(path), log.metadata)


def read_trial_csv(path) -> TrialLog:
    """Read a trial log written by write_trial_csv."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != list(TRIAL_COLUMNS):
            raise SchemaError(f"unexpected trial log header in {path}")
        data = np.array([[float(v) for v in row] for row in reader])
    if data.size == 0:
        raise SchemaError(f"trial log {path} is empty")
    meta = _read_sidecar(sidecar_path(path))
    i = 1
    q = data[:, i : i + 12]; i += 12
    qd = data[:, i : i + 12]; i += 12
    tau = data[:, i : i + 12]; i += 12
    ff = data[:, i : i + 12]; i += 12
    fv = data[:, i : i + 12]; i += 12
    contact = data[:, i : i + 4].astype(np.int8); i += 4
    return TrialLog(
        t=data[:, 0], q=q, qd=qd, tau=tau, foot_force=ff, foot_vel=fv,
        contact=contact, base_x=data[:, i], cmd_speed=data[:, i + 1],
        saturated=data[:, i + 2].astype(np.int8), metadata=meta,
    )


def make_trial_log_writer(directory):
    """Picklable per-trial writer for sweep workers (disjoint file paths)."""
    return _TrialLogWriter(str(directory))


class _TrialLogWriter:
    def __init__(self, directory):
        self.directory = directory

    def __call__(self, trial_id, log):
        write_trial_csv(os.path.join(self.directory, f"trial_{trial_id}.csv"), log)


# ---------------------------------------------------------------------------
# external Cartesian logs (granular replay path)
# ---------------------------------------------------------------------------


def write_external_log(path, log: TrialLog, sidecar=None):
    """Export an internal log to the external front-feet Cartesian format."""
    rows = []
    for i in range(len(log)):
        row = [_g17(log.t[i])]
        for li in (0, 1):  # lf, rf
            sl = slice(3 * li, 3 * li + 3)
            row += [_g17(v) for v in log.foot_force[i, sl]]
            row += [_g17(v) for v in log.foot_vel[i, sl]]
            row += [_g17(v) for v in log.q[i, sl]]
        row += [_g17(log.base_x[i]), _g17(0.0), _g17(0.0)]
        rows.append(row)
    _write_rows(path, EXTERNAL_COLUMNS, rows)
    meta = {
        "mass": float(log.metadata.get("mass", 24.0)),
        "gravity": float(log.metadata.get("g", 1.625)),
        "alpha_deg": float(log.metadata.get("alpha_deg", 0.0)),
        "mu_s": float(log.metadata.get("mu_s", 0.6)),
    }
    _write_sidecar(sidecar or sidecar_path(path), meta)


def ingest_external_log(path, sidecar) -> TrialLog:
    """Ingest an external Cartesian log for Jacobian-based CoT recomputation.

    The produced TrialLog has empty joint torque/rate columns (they are
    reconstructed, never trusted from outside), hind-leg channels zeroed,
    provenance 'external', and an always-active command window spanning
    the whole file.
    """
    meta = _read_sidecar(sidecar)
    for key in ("mass", "gravity", "alpha_deg", "mu_s"):
        if key not in meta:
            raise SchemaError(f"sidecar missing required key {key!r}")

    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != list(EXTERNAL_COLUMNS):
            raise SchemaError(
                f"external log header mismatch: expected {len(EXTERNAL_COLUMNS)} "
                f"columns starting with 't,lf_fx,...'"
            )
        try:
            data = np.array([[float(v) for v in row] for row in reader])
        except ValueError as exc:
            raise SchemaError(f"non-numeric value in external log: {exc}") from exc
    if data.ndim != 2 or data.shape[0] < 2 or data.shape[1] != len(EXTERNAL_COLUMNS):
        raise SchemaError("external log needs >= 2 complete rows")
    if not np.isfinite(data).all():
        raise SchemaError("external log contains non-finite values")

    t = data[:, 0]
    if not (np.diff(t) > 0).all():
        raise NonMonotoneTime("external log timestamps are not strictly increasing")

    n = data.shape[0]
    ff = np.zeros((n, 12))
    fv = np.zeros((n, 12))
    q = np.zeros((n, 12))
    for li in (0, 1):
        base = 1 + 9 * li
        ff[:, 3 * li : 3 * li + 3] = data[:, base : base + 3]
        fv[:, 3 * li : 3 * li + 3] = data[:, base + 3 : base + 6]
        q[:, 3 * li : 3 * li + 3] = data[:, base + 6 : base + 9]

    weight = meta["mass"] * meta["gravity"]
    f_max = np.abs(ff).max()
    if f_max > UNIT_SANITY_WEIGHT_FACTOR * weight:
        raise UnitSanity(
            f"foot force {f_max:.3g} N exceeds {UNIT_SANITY_WEIGHT_FACTOR:g}x "
            f"robot weight ({weight:.3g} N); check units"
        )

    try:
        return TrialLog(
            t=t,
            q=q,
            qd=np.zeros((n, 12)),
            tau=np.zeros((n, 12)),
            foot_force=ff,
            foot_vel=fv,
            contact=(np.abs(ff).sum(axis=1) > 0)[:, None] * np.array([[1, 1, 0, 0]], dtype=np.int8),
            base_x=data[:, -3],
            cmd_speed=np.ones(n),
            saturated=np.zeros(n, dtype=np.int8),
            metadata={
                "mode": "slide",
                "alpha_deg": meta["alpha_deg"],
                "mu_s": meta["mu_s"],
                "g": meta["gravity"],
                "mass": meta["mass"],
                "provenance": "external",
                "cmd_speed": float("nan"),
            },
        )
    except ValueError as exc:
        raise SchemaError(f"external log rejected: {exc}") from exc


# ---------------------------------------------------------------------------
# curves / crossovers / results
# ---------------------------------------------------------------------------


def write_curves_csv(path, curves):
    """curves.csv: one row per (condition, slope) in fixed grid order."""
    rows = []
    for curve in curves:
        for si in range(len(curve.slopes)):
            rows.append(
                [
                    curve.mode,
                    _g17(curve.speed),
                    _g17(curve.mu_s),
                    _g17(curve.slopes[si]),
                    _g17(curve.cot_mean[si]),
                    _g17(curve.cot_std[si]),
                    str(int(curve.n_ok[si])),
                    str(int(curve.n_fail[si])),
                ]
            )
    _write_rows(path, CURVES_COLUMNS, rows)


def read_curves_csv(path):
    """Rebuild CoTCurve objects from curves.csv."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != list(CURVES_COLUMNS):
            raise SchemaError(f"unexpected curves.csv header in {path}")
        rows = list(reader)
    groups = {}
    order = []
    for row in rows:
        mode, speed, mu_s = row[0], float(row[1]), float(row[2])
        key = (mode, speed, mu_s)
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(
            (float(row[3]), float(row[4]), float(row[5]), int(row[6]), int(row[7]))
        )
    curves = []
    for key in order:
        mode, speed, mu_s = key
        pts = sorted(groups[key])
        slopes, means, stds, oks, fails = zip(*pts)
        curves.append(
            CoTCurve(
                mode=mode, speed=speed, mu_s=mu_s,
                slopes=np.array(slopes), cot_mean=np.array(means),
                cot_std=np.array(stds), n_ok=np.array(oks, dtype=int),
                n_fail=np.array(fails, dtype=int),
            )
        )
    return curves


def write_crossovers_csv(path, results):
    """crossovers.csv: one row per (walk speed, sliding friction) pair."""
    rows = []
    for res in results:
        if res.classification == CROSSINGS:
            alphas = ";".join(_g17(c.alpha_star) for c in res.crossings)
            lo = _g17(res.crossings[0].bracket[0])
            hi = _g17(res.crossings[0].bracket[1])
        else:
            alphas, lo, hi = "", "", ""
        rows.append(
            [_g17(res.walk_speed), _g17(res.mu_s), res.classification, alphas, lo, hi]
        )
    _write_rows(path, CROSSOVERS_COLUMNS, rows)


def write_cot_results_csv(path, results):
    """Per-trial (or per-replay) CoT result rows."""
    rows = []
    for res, provenance in results:
        rows.append(
            [
                res.mode,
                _g17(res.alpha_deg),
                _g17(res.mu_s),
                _g17(res.speed) if math.isfinite(res.speed) else "nan",
                _g17(res.energy),
                _g17(res.distance),
                _g17(res.cot),
                res.signal_path,
                provenance,
            ]
        )
    _write_rows(path, COT_RESULT_COLUMNS, rows)
