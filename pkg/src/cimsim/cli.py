"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data/file error, 3 invariant
violation detected during simulation.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .adc import AdcParams
from .calibration import CalibrationError, calibrate
from .config import (ConfigError, default_analog_params, default_geometry,
                     load_config)
from .inference import InvariantViolation, run_inference
from .mapping import MappingError, map_network, mapping_manifest
from .model import (IdxFormatError, ModelFormatError, load_idx_images,
                    load_idx_labels, load_model)
from .reports import (error_histogram_report, mapping_report, rms_report,
                      run_report, sweep_linearity_report, write_json_doc)
from .variation import (VariationSpec, ideal_profile, sample_profile,
                        spec_from_overrides)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    p = _Parser(prog="cimsim", description=__doc__)
    p.add_argument("--config", help="JSON overrides for geometry/analog/variation")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--format", choices=("csv", "json"), default="csv",
                   dest="fmt", help="delimited-report format")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("map", help="compile a model into a mapping manifest")
    s.add_argument("manifest", help="model manifest path")

    s = sub.add_parser("run", help="run inference")
    s.add_argument("manifest", help="model manifest path")
    s.add_argument("--images", required=True, help="IDX image file")
    s.add_argument("--labels", help="IDX label file")
    s.add_argument("--mode", choices=("ideal", "pass_through", "variation"),
                   default="ideal")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--calib", choices=("none", "linear", "two-step"),
                   default="none")
    s.add_argument("--limit", type=int, default=0,
                   help="evaluate only the first N images")

    s = sub.add_parser("sweep-linearity", help="transfer sweep + INL report")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--repeats", type=int, default=16)
    s.add_argument("--ideal", action="store_true",
                   help="use the mismatch-free profile")

    s = sub.add_parser("error-hist", help="MAC error-histogram protocol")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--scale", type=int, default=4,
                   help="repeats per pattern (16 = full protocol)")

    s = sub.add_parser("rms", help="repeated-conversion rms noise protocol")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--runs", type=int, default=128)
    s.add_argument("--adc", type=int, default=0, help="swept ADC index")

    s = sub.add_parser("calibrate", help="fit and save a calibration table")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--method", choices=("linear", "two-step"),
                   default="two-step")
    s.add_argument("--repeats", type=int, default=16)

    s = sub.add_parser("report", help="cycle and storage tables for a model")
    s.add_argument("manifest", help="model manifest path")
    return p


def _environment(args):
    if args.config:
        geometry, analog, var_overrides = load_config(args.config)
        variation = spec_from_overrides(var_overrides)
    else:
        geometry, analog = default_geometry(), default_analog_params()
        variation = VariationSpec()
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    return geometry, analog, variation, outdir


def _cmd_map(args, env) -> int:
    geometry, _, _, outdir = env
    net = load_model(args.manifest)
    manifest = mapping_manifest(map_network([l.spec for l in net.layers],
                                            geometry), geometry)
    write_json_doc(outdir / "mapping.json", manifest)
    print(f"mapped {net.name}: {manifest['total_rows']} rows, "
          f"{manifest['macros_needed']} macro(s), "
          f"utilization {100 * manifest['utilization']:.1f}%")
    return 0


def _cmd_report(args, env) -> int:
    geometry, _, _, outdir = env
    net = load_model(args.manifest)
    manifest = mapping_manifest(map_network([l.spec for l in net.layers],
                                            geometry), geometry)
    summary = mapping_report(outdir, manifest, args.fmt)
    print(f"report for {net.name}: {summary['total_rows']} rows, "
          f"{summary['macros_needed']} macro(s); wrote "
          + ", ".join(summary["files"]))
    return 0


def _cmd_run(args, env) -> int:
    geometry, analog, variation, outdir = env
    if args.mode != "variation" and args.calib != "none":
        raise UsageError("--calib applies to --mode variation only")
    net = load_model(args.manifest)
    images = load_idx_images(args.images)
    labels = load_idx_labels(args.labels) if args.labels else None
    if labels is not None and labels.size != images.shape[0]:
        raise IdxFormatError(
            f"{labels.size} labels for {images.shape[0]} images")
    if args.limit:
        images = images[:args.limit]
        labels = labels[:args.limit] if labels is not None else None
    report = run_inference(net, images, mode=args.mode, seed=args.seed,
                           calib=args.calib, labels=labels,
                           geometry=geometry, analog=analog,
                           variation=variation)
    doc = run_report(outdir, report, args.fmt)
    acc = "n/a" if doc["accuracy"] is None else f"{100 * doc['accuracy']:.2f}%"
    print(f"{report.mode} run on {report.images} images: accuracy {acc}, "
          f"{doc['total_cycles']} cycles, config {report.config_hash}")
    return 0


def _profile_for(args, geometry, analog, variation, ideal: bool):
    if ideal:
        return ideal_profile(geometry)
    return sample_profile(variation, geometry, seed=args.seed,
                          adc_params=AdcParams.from_analog(analog, geometry))


def _cmd_sweep(args, env) -> int:
    geometry, analog, variation, outdir = env
    profile = _profile_for(args, geometry, analog, variation, args.ideal)
    summary = sweep_linearity_report(outdir, args.fmt, profile=profile,
                                     analog=analog, geometry=geometry,
                                     repeats=args.repeats, seed=args.seed)
    print(f"sweep: voltage R2 {summary['r_squared_voltage']:.6f}, "
          f"max |INL| {summary['max_abs_inl_lsb']:.3f} LSB; wrote "
          + ", ".join(summary["files"]))
    return 0


def _cmd_error_hist(args, env) -> int:
    geometry, analog, variation, outdir = env
    if args.scale < 1:
        raise UsageError("--scale must be at least 1")
    profile = _profile_for(args, geometry, analog, variation, ideal=False)
    summary = error_histogram_report(outdir, args.fmt, profile=profile,
                                     analog=analog, geometry=geometry,
                                     scale=args.scale, seed=args.seed)
    print(f"error-hist: sigma {summary['sigma_uncalibrated']:.3f} -> "
          f"{summary['sigma_calibrated']:.3f} LSB "
          f"({summary['sigma_ratio']:.1f}x) over "
          f"{summary['total_samples']} samples; wrote "
          + ", ".join(summary["files"]))
    return 0


def _cmd_rms(args, env) -> int:
    geometry, analog, variation, outdir = env
    profile = _profile_for(args, geometry, analog, variation, ideal=False)
    summary = rms_report(outdir, args.fmt, profile=profile, analog=analog,
                         geometry=geometry, runs=args.runs, seed=args.seed,
                         adc_index=args.adc)
    print(f"rms: mean {summary['mean_rms_lsb']:.3f} LSB over the input "
          f"range ({summary['runs']} runs per point); wrote "
          + ", ".join(summary["files"]))
    return 0


def _cmd_calibrate(args, env) -> int:
    geometry, analog, variation, outdir = env
    profile = _profile_for(args, geometry, analog, variation, ideal=False)
    table = calibrate(profile, analog, geometry, method=args.method,
                      repeats=args.repeats, seed=args.seed)
    path = outdir / "calibration.json"
    path.write_text(table.to_json() + "\n")
    print(f"calibrated {geometry.slices} slices ({table.method}); "
          f"wrote {path.name}")
    return 0


_COMMANDS = {
    "map": _cmd_map,
    "run": _cmd_run,
    "sweep-linearity": _cmd_sweep,
    "error-hist": _cmd_error_hist,
    "rms": _cmd_rms,
    "calibrate": _cmd_calibrate,
    "report": _cmd_report,
}

_DATA_ERRORS = (ModelFormatError, IdxFormatError, CalibrationError,
                MappingError, ConfigError, FileNotFoundError, IsADirectoryError,
                PermissionError, json.JSONDecodeError)


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        env = _environment(args)
        return _COMMANDS[args.command](args, env)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except _DATA_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except InvariantViolation as e:
        print(f"invariant violation: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
