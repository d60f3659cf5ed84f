"""``morphquad`` command-line entry point.

Exit codes: 0 success, 2 input error, 3 fit failure, 4 simulation fault.
"""
from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import curvature_map as cm
from .config import (DEFAULT_SEED, GEOM_KEYS, load_scenario, parse_config_text,
                     resolve_config_path)
from .dynamics import ConfigError
from .morphology import wrench_matrix
from .scenario_runner import ScenarioFault, run, run_batch
from .telemetry import (TelemetryError, compute_metrics, read_telemetry, write_metrics,
                        write_plot_series, write_telemetry)

EXIT_OK, EXIT_INPUT, EXIT_FIT, EXIT_FAULT = 0, 2, 3, 4


def _err(msg: str) -> None:
    print(f"morphquad: error: {msg}", file=sys.stderr)


def _geometry(config: str | None) -> cm.ArmGeometry:
    if config is None:
        return cm.ArmGeometry()
    path = resolve_config_path(config)
    kv = parse_config_text(path.read_text(encoding="utf-8"), str(path))
    kw = {}
    for key, attr in GEOM_KEYS.items():
        if key in kv:
            try:
                kw[attr] = float(kv[key])
            except ValueError:
                raise ConfigError(f"{key}: expected a number, got {kv[key]!r}") from None
    return cm.ArmGeometry(**kw)


def cmd_calibrate(args) -> int:
    try:
        sample_sets = [cm.read_samples(p) for p in args.samples]
    except (OSError, cm.CalibrationFormatError) as exc:
        _err(str(exc))
        return EXIT_INPUT
    ids = args.arm_ids.split(",") if args.arm_ids else [str(i + 1) for i in range(len(sample_sets))]
    if len(ids) != len(sample_sets):
        _err(f"{len(ids)} arm ids given for {len(sample_sets)} sample files")
        return EXIT_INPUT
    calibs = []
    for arm_id, path, samples in zip(ids, args.samples, sample_sets):
        try:
            cal = cm.fit_cubic(samples, args.alpha_ref)
        except cm.FitError as exc:
            _err(f"{path}: {exc}")
            return EXIT_FIT
        if args.max_residual is not None and cal.max_residual > args.max_residual:
            _err(f"{path}: max residual {cal.max_residual:.4f} deg exceeds {args.max_residual} deg")
            return EXIT_FIT
        calibs.append((arm_id, cal))
        print(f"arm {arm_id}: n={len(samples)} max_residual={cal.max_residual:.6f} deg "
              f"rms_residual={cal.rms_residual:.6f} deg")
    try:
        cm.write_calibrations(calibs, args.out)
    except OSError as exc:
        _err(str(exc))
        return EXIT_INPUT
    return EXIT_OK


def cmd_map(args) -> int:
    try:
        geom = _geometry(args.config)
    except (OSError, ConfigError, cm.GeometryError) as exc:
        _err(str(exc))
        return EXIT_INPUT
    try:
        if args.alpha is not None:
            beta, clamped = cm.alpha_to_beta(args.alpha, geom)
            print(f"beta={beta:.3f} deg")
            print(f"clamped={'yes' if clamped else 'no'}")
        else:
            alpha = cm.beta_to_alpha(args.beta, geom)
            print(f"alpha={alpha:.9f} deg")
            print("clamped=no")
    except cm.DomainError as exc:
        _err(str(exc))
        return EXIT_INPUT
    print(f"geometry: L1={geom.L1:g} mm L2={geom.L2:g} mm r={geom.r:g} mm K={geom.K:g} "
          f"La={geom.La:g} mm alpha_max={geom.alpha_max:g} deg "
          f"beta_limit={geom.beta_physical_limit:g} deg")
    return EXIT_OK


def _dump_wrench(config, out_dir: Path) -> None:
    veh = config.vehicle
    for name, betas in (("wrench_beta0.csv", np.zeros(4)), ("wrench_target.csv", config.morph.targets)):
        W = wrench_matrix(betas, veh.layouts, veh)
        with open(out_dir / name, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["row", "T1", "T2", "T3", "T4"])
            for label, row in zip(("Fx", "Fy", "Fz", "Mx", "My", "Mz"), W):
                writer.writerow([label] + [repr(float(v)) for v in row])


def _write_outputs(out_dir: Path, log, report) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    write_telemetry(log, out_dir / "telemetry.csv")
    write_metrics(report, out_dir / "metrics.csv")
    write_plot_series(log, out_dir / "plots")


def cmd_simulate(args) -> int:
    try:
        config = load_scenario(args.config, seed=args.seed)
    except (OSError, ConfigError, ValueError) as exc:
        _err(str(exc))
        return EXIT_INPUT
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.dump_wrench:
        _dump_wrench(config, out_dir)

    if args.seeds:
        try:
            seeds = [int(s) for s in args.seeds.split(",")]
        except ValueError:
            _err(f"--seeds expects comma-separated integers, got {args.seeds!r}")
            return EXIT_INPUT
        try:
            results = run_batch(config, seeds, workers=args.workers)
        except ScenarioFault as exc:
            _err(f"simulation fault: {exc}")
            return EXIT_FAULT
        for seed, (log, report) in results.items():
            _write_outputs(out_dir / f"seed_{seed}", log, report)
            print(f"[seed {seed}]")
            print(report.format_text())
        return EXIT_OK

    try:
        log, report = run(config)
    except ScenarioFault as exc:
        out_dir.mkdir(parents=True, exist_ok=True)
        write_telemetry(exc.log, out_dir / "telemetry.csv")
        _err(f"simulation fault: {exc}; partial telemetry in {out_dir / 'telemetry.csv'}")
        return EXIT_FAULT
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_INPUT
    _write_outputs(out_dir, log, report)
    print(f"scenario={config.name} seed={config.seed} records={len(log)}")
    print(report.format_text())
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        log = read_telemetry(args.telemetry)
        report = compute_metrics(log)
    except (OSError, TelemetryError) as exc:
        _err(str(exc))
        return EXIT_INPUT
    out = Path(args.out) if args.out else Path(args.telemetry).with_suffix(".metrics.csv")
    write_metrics(report, out)
    print(report.format_text())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="morphquad", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="fit per-arm cubic alpha-beta calibrations")
    p.add_argument("samples", nargs="+", help="alpha_deg,beta_deg CSV, one file per arm")
    p.add_argument("--out", required=True, help="calibration CSV to write")
    p.add_argument("--arm-ids", help="comma-separated arm ids (default 1..n)")
    p.add_argument("--alpha-ref", type=float, default=None,
                   help="centering angle in deg (default: midpoint of sampled range)")
    p.add_argument("--max-residual", type=float, default=None,
                   help="fail (exit 3) if any fit exceeds this max residual in deg")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("map", help="servo angle <-> arm curvature")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--alpha", type=float, help="servo angle in deg")
    g.add_argument("--beta", type=float, help="arm curvature in deg")
    p.add_argument("--config", help="config file with geom.* keys")
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("simulate", help="run a scenario config")
    p.add_argument("config", help="scenario config path or bundled name (hover.cfg, translation.cfg)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None,
                   help=f"random seed (default: config seed, else {DEFAULT_SEED})")
    p.add_argument("--seeds", help="comma-separated seeds for a batch run")
    p.add_argument("--workers", type=int, default=4, help="batch worker threads")
    p.add_argument("--dump-wrench", action="store_true",
                   help="also write the straight-arm and target wrench matrices as CSV")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="metrics from a telemetry CSV")
    p.add_argument("telemetry")
    p.add_argument("--out", help="metrics CSV (default: <telemetry>.metrics.csv)")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
