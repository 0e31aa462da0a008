"""Command-line surface.

Subcommands: simulate (one trial), sweep (full grid -> curves.csv),
replay (external Cartesian log -> CoT), crossover (curves.csv ->
crossovers.csv), plot-data (tidy per-figure CSVs), validate-config.
Exit codes: 0 success, 1 usage/config error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

from .. import __version__
from ..crossover_analysis import (
    InsufficientOverlap,
    crossover_ordering_report,
    delta_cot,
    find_crossovers,
)
from ..energetics import cot_for_trial
from ..sweep_harness import run_sweep
from ..terrain_dynamics import simulate_trial
from . import logs as log_io
from .config import (
    InvariantViolation,
    ParseError,
    RunConfig,
    UnknownKey,
    load_config,
    manifest_text,
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="cot-atlas",
        description="Walking vs. torso-sliding locomotion energetics workbench",
    )
    parser.add_argument("--version", action="version", version=f"cot-atlas {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="run configuration file (INI)")
        p.add_argument("--mode", choices=("walk", "slide"), help="locomotion mode")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--out", help="output directory")
        p.add_argument(
            "--allow-extended-ranges",
            action="store_true",
            help="accept parameters outside the published grid ranges",
        )

    p_sim = sub.add_parser("simulate", help="run a single trial")
    common(p_sim)
    p_sim.add_argument("--alpha", type=float, help="slope (deg)")
    p_sim.add_argument("--mu-s", type=float, help="surface static friction")
    p_sim.add_argument("--speed", type=float, help="walking speed (m/s)")
    p_sim.add_argument("--no-jitter", action="store_true", help="disable start jitter")

    p_sweep = sub.add_parser("sweep", help="run an evaluation grid")
    common(p_sweep)
    p_sweep.add_argument("--workers", type=int, help="worker pool size")
    p_sweep.add_argument(
        "--save-logs", action="store_true", help="write one trial CSV per trial"
    )

    p_replay = sub.add_parser("replay", help="recompute CoT from an external log")
    common(p_replay)
    p_replay.add_argument("--log", required=True, help="external Cartesian CSV")
    p_replay.add_argument("--sidecar", required=True, help="metadata sidecar (INI)")

    p_cross = sub.add_parser("crossover", help="compute transition angles")
    common(p_cross)
    p_cross.add_argument("--curves", required=True, help="curves.csv from sweeps")

    p_plot = sub.add_parser("plot-data", help="emit tidy per-figure CSVs")
    common(p_plot)
    p_plot.add_argument("--run", required=True, help="run directory with curves.csv")

    p_val = sub.add_parser("validate-config", help="check a config file")
    p_val.add_argument("--config", required=True)
    p_val.add_argument("--allow-extended-ranges", action="store_true")

    return parser


def _load_run_config(args) -> RunConfig:
    allow = getattr(args, "allow_extended_ranges", False)
    if getattr(args, "config", None):
        cfg = load_config(args.config, allow_extended=allow)
    else:
        cfg = RunConfig(allow_extended=allow)
    if getattr(args, "mode", None):
        cfg.mode = args.mode
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
        cfg.grid = replace(cfg.grid, master_seed=args.seed)
    if getattr(args, "out", None):
        cfg.out_dir = args.out
    if getattr(args, "workers", None) is not None:
        cfg.workers = args.workers
    if getattr(args, "save_logs", False):
        cfg.save_trial_logs = True
    if getattr(args, "no_jitter", False):
        cfg.jitter = False
    if getattr(args, "alpha", None) is not None:
        cfg.terrain = replace(cfg.terrain, alpha_deg=args.alpha, allow_extended=cfg.allow_extended)
    if getattr(args, "mu_s", None) is not None:
        cfg.terrain = replace(cfg.terrain, mu_s=args.mu_s, mu_d=None, allow_extended=cfg.allow_extended)
    if getattr(args, "speed", None) is not None:
        cfg.walk_speed = args.speed
    return cfg


def _prepare_out_dir(cfg: RunConfig) -> str:
    os.makedirs(cfg.out_dir, exist_ok=True)
    with open(
        os.path.join(cfg.out_dir, "manifest.cfg"), "w", encoding="utf-8", newline="\n"
    ) as fh:
        fh.write(manifest_text(cfg))
    return cfg.out_dir

def _cmd_simulate(args) -> int:
    cfg = _load_run_config(args)
    out_dir = _prepare_out_dir(cfg)
    trial = cfg.trial_config()
    log = simulate_trial(trial)
    log_io.write_trial_csv(os.path.join(out_dir, "trial_single.csv"), log)
    res = cot_for_trial(log, cfg.robot, cfg.terrain, joints=cfg.joints)
    log_io.write_cot_results_csv(
        os.path.join(out_dir, "cot_results.csv"), [(res, "internal")]
    )
    print(
        f"{cfg.mode} trial: alpha={cfg.terrain.alpha_deg:g} deg "
        f"mu_s={cfg.terrain.mu_s:g} -> CoT={res.cot:.4f} "
        f"(E={res.energy:.2f} J over d={res.distance:.3f} m)"
    )
    return 0


def _cmd_sweep(args) -> int:
    cfg = _load_run_config(args)
    out_dir = _prepare_out_dir(cfg)
    writer = None
    if cfg.save_trial_logs:
        logs_dir = os.path.join(out_dir, "trials")
        os.makedirs(logs_dir, exist_ok=True)
        writer = log_io.make_trial_log_writer(logs_dir)
    curves, outcomes = run_sweep(
        cfg.grid, cfg.mode, cfg.trial_config(), workers=cfg.workers, log_writer=writer
    )
    log_io.write_curves_csv(os.path.join(out_dir, "curves.csv"), curves)
    n_ok = sum(1 for o in outcomes if o.ok)
    print(
        f"{cfg.mode} sweep: {len(outcomes)} trials ({n_ok} ok, "
        f"{len(outcomes) - n_ok} failed) -> {out_dir}/curves.csv"
    )
    return 0


def _cmd_replay(args) -> int:
    cfg = _load_run_config(args)
    out_dir = _prepare_out_dir(cfg)
    log = log_io.ingest_external_log(args.log, args.sidecar)
    terrain = replace(
        cfg.terrain,
        alpha_deg=float(log.metadata["alpha_deg"]),
        mu_s=float(log.metadata["mu_s"]),
        mu_d=None,
        g=float(log.metadata["g"]),
        allow_extended=True,
    )
    robot = replace(cfg.robot, mass=float(log.metadata["mass"]))
    res = cot_for_trial(log, robot, terrain, joints=cfg.joints)
    log_io.write_cot_results_csv(
        os.path.join(out_dir, "replay_results.csv"), [(res, "external")]
    )
    print(
        f"replayed {args.log}: CoT={res.cot:.4f} via {res.signal_path} path "
        f"({res.excluded_rows} singular rows excluded)"
    )
    return 0


def _pair_crossovers(curves):
    walk_curves = [c for c in curves if c.mode == "walk"]
    slide_curves = [c for c in curves if c.mode == "slide"]
    results = []
    skipped = []
    for w in walk_curves:
        for s in slide_curves:
            try:
                results.append(find_crossovers(delta_cot(w, s)))
            except InsufficientOverlap as exc:
                skipped.append(str(exc))
    return results, skipped


def _cmd_crossover(args) -> int:
    cfg = _load_run_config(args)
    out_dir = _prepare_out_dir(cfg)
    curves = log_io.read_curves_csv(args.curves)
    results, skipped = _pair_crossovers(curves)
    if not results:
        print("no (walk, slide) curve pairs with usable overlap", file=sys.stderr)
        return 2
    log_io.write_crossovers_csv(os.path.join(out_dir, "crossovers.csv"), results)
    report = crossover_ordering_report(results)
    print(
        f"crossovers for {len(results)} condition pairs -> {out_dir}/crossovers.csv"
    )
    print(f"friction monotonicity (alpha* non-decreasing in mu_s): {report.friction_monotone}")
    print(f"speed anticipation (alpha* non-increasing in v): {report.speed_monotone}")
    for msg in skipped:
        print(f"skipped pair: {msg}", file=sys.stderr)
    return 0


def _cmd_plot_data(args) -> int:
    cfg = _load_run_config(args)
    out_dir = _prepare_out_dir(cfg)
    curves = log_io.read_curves_csv(os.path.join(args.run, "curves.csv"))

    walk = [c for c in curves if c.mode == "walk"]
    slide = [c for c in curves if c.mode == "slide"]
    if walk:
        rows = [
            [log_io._g17(c.slopes[i]), log_io._g17(c.speed),
             log_io._g17(c.cot_mean[i]), log_io._g17(c.cot_std[i])]
            for c in walk
            for i in range(len(c.slopes))
        ]
        log_io._write_rows(
            os.path.join(out_dir, "fig3_walking_cot.csv"),
            ("alpha_deg", "walk_speed", "cot_mean", "cot_std"), rows,
        )
    if slide:
        rows = [
            [log_io._g17(c.slopes[i]), log_io._g17(c.mu_s),
             log_io._g17(c.cot_mean[i]), log_io._g17(c.cot_std[i])]
            for c in slide
            for i in range(len(c.slopes))
        ]
        log_io._write_rows(
            os.path.join(out_dir, "fig4_sliding_cot.csv"),
            ("alpha_deg", "mu_s", "cot_mean", "cot_std"), rows,
        )
    if walk and slide:
        rows = []
        for w in walk:
            for s in slide:
                try:
                    d = delta_cot(w, s)
                except InsufficientOverlap:
                    continue
                rows += [
                    [log_io._g17(d.slopes[i]), log_io._g17(d.walk_speed),
                     log_io._g17(d.mu_s), log_io._g17(d.delta[i]),
                     log_io._g17(d.std[i])]
                    for i in range(len(d.slopes))
                ]
        log_io._write_rows(
            os.path.join(out_dir, "fig5_delta_cot.csv"),
            ("alpha_deg", "walk_speed", "mu_s", "delta_mean", "delta_std"), rows,
        )
    replay_path = os.path.join(args.run, "replay_results.csv")
    if os.path.exists(replay_path) and slide:
        rows = []
        with open(replay_path, "r", encoding="utf-8", newline="") as fh:
            import csv as _csv

            reader = _csv.DictReader(fh)
            for rec in reader:
                rows.append(
                    [rec["alpha_deg"], rec["mu_s"], "external", rec["cot"]]
                )
        for c in slide:
            rows += [
                [log_io._g17(c.slopes[i]), log_io._g17(c.mu_s), "internal",
                 log_io._g17(c.cot_mean[i])]
                for i in range(len(c.slopes))
            ]
        log_io._write_rows(
            os.path.join(out_dir, "fig6_granular_compare.csv"),
            ("alpha_deg", "mu_s", "source", "cot"), rows,
        )
    print(f"figure data written to {out_dir}")
    return 0


def _cmd_validate_config(args) -> int:
    load_config(args.config, allow_extended=args.allow_extended_ranges)
    print(f"{args.config}: valid")
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "sweep": _cmd_sweep,
    "replay": _cmd_replay,
    "crossover": _cmd_crossover,
    "plot-data": _cmd_plot_data,
    "validate-config": _cmd_validate_config,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --version / --help
        return 0 if exc.code in (0, None) else 1
    try:
        return _COMMANDS[args.command](args)
    except (ParseError, UnknownKey, InvariantViolation, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
