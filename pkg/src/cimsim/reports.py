"""Report writers: delimited output, JSON documents, and rendered figures.

Everything here is byte-reproducible for a fixed seed and config: stable
column order, fixed float formatting, no timestamps, and figure metadata
stripped of version strings.
"""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .adc import round_half_up  # noqa: E402
from .calibration import (CalibrationTable, affine_r_squared, calibrate,
                          error_histogram, inl_profile, sweep_codes)  # noqa: E402
from .adc import AdcParams, measure_rms  # noqa: E402
from .analog import slice_signal  # noqa: E402
from .config import default_analog_params, default_geometry  # noqa: E402

_PNG_METADATA = {"Software": None}


def fmt_num(x) -> str:
    """Canonical number rendering for delimited output."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".10g")


def write_rows(path, header, rows) -> Path:
    path = Path(path)
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(fmt_num(v) if not isinstance(v, str) else v
                              for v in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def write_json_doc(path, doc) -> Path:
    path = Path(path)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def _save_figure(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, metadata=_PNG_METADATA)
    plt.close(fig)
    return path


def write_table(outdir: Path, name: str, header, rows, fmt: str) -> Path:
    if fmt == "csv":
        return write_rows(outdir / f"{name}.csv", header, rows)
    doc = [dict(zip(header, row)) for row in rows]
    return write_json_doc(outdir / f"{name}.json", {name.replace("-", "_"): doc})


def sweep_linearity_report(outdir, fmt="csv", profile=None, table=None,
                           analog=None, geometry=None, repeats=16,
                           seed=0) -> dict:
    """Transfer sweep artifacts: voltage-domain linearity, code-domain
    transfer per slice, post-calibration INL, and their figures."""
    analog = analog or default_analog_params()
    geometry = geometry or default_geometry()
    outdir = Path(outdir)
    if profile is None:
        from .variation import ideal_profile
        profile = ideal_profile(geometry)
    x = np.arange(15 * geometry.clusters_per_slice + 1)
    ideal = round_half_up(x / analog.adc_lsb_pre)

    # voltage transfer of slice 0, no quantizer in the loop
    signal = slice_signal(x, analog, geometry, gain=profile.gain[0],
                          line_offset_v=profile.line_offset_v[0])
    v_out = analog.vdd - signal
    r2 = affine_r_squared(x, v_out)

    measured, _ = sweep_codes(profile, x, analog, geometry, repeats=repeats,
                              seed=seed)
    if table is None:
        table = calibrate(profile, analog, geometry, method="two-step",
                          repeats=repeats, seed=seed)
    inl = inl_profile(profile, table, analog, geometry, repeats=repeats,
                      seed=seed + 1)

    files = []
    rows = []
    for i in range(geometry.slices):
        calibrated = table.apply(measured[i], i)
        rows.extend((int(ideal[j]), measured[i][j], calibrated[j], i)
                    for j in range(x.size))
    files.append(write_table(outdir, "sweep",
                             ["ideal_code", "raw_code", "calibrated_code",
                              "slice_id"], rows, fmt))
    files.append(write_table(outdir, "transfer",
                             ["pre_adc", "v_out"],
                             list(zip(x.tolist(), v_out.tolist())), fmt))
    # codes a slice rails before reaching are NaN; they have no INL row
    inl_rows = [(i, c, inl["inl"][i, c]) for i in range(geometry.slices)
                for c in range(64) if np.isfinite(inl["inl"][i, c])]
    files.append(write_table(outdir, "inl", ["slice_id", "code", "inl_lsb"],
                             inl_rows, fmt))

    fig, axes = plt.subplots(1, 3, figsize=(13, 4))
    axes[0].plot(x, v_out, lw=0.8)
    axes[0].set(xlabel="pre-ADC value", ylabel="output line voltage (V)",
                title=f"analog transfer, R2={r2:.6f}")
    for i in range(0, geometry.slices, 8):
        axes[1].plot(ideal, measured[i], lw=0.6)
    axes[1].set(xlabel="ideal code", ylabel="measured code",
                title="code transfer (every 8th slice)")
    for i in range(geometry.slices):
        axes[2].plot(np.arange(64), inl["inl"][i], lw=0.4, alpha=0.6)
    axes[2].axhline(2, color="k", ls="--", lw=0.8)
    axes[2].axhline(-2, color="k", ls="--", lw=0.8)
    axes[2].set(xlabel="output code", ylabel="INL (LSB)",
                title=f"post-calibration INL, max {inl['max_abs']:.3f}")
    fig.tight_layout()
    files.append(_save_figure(fig, outdir / "sweep.png"))

    summary = {
        "r_squared_voltage": r2,
        "max_abs_inl_lsb": inl["max_abs"],
        "calibration": table.method,
        "repeats": repeats,
        "seed": seed,
        "files": sorted(p.name for p in files),
    }
    write_json_doc(outdir / "sweep_summary.json", summary)
    return summary


def error_histogram_report(outdir, fmt="csv", profile=None, analog=None,
                           geometry=None, scale=4, seed=0,
                           calib_repeats=8) -> dict:
    """Paired uncalibrated / linear-calibrated MAC-error histograms."""
    analog = analog or default_analog_params()
    geometry = geometry or default_geometry()
    outdir = Path(outdir)
    if profile is None:
        from .variation import VariationSpec, sample_profile
        profile = sample_profile(VariationSpec(), geometry, seed=seed,
                                 adc_params=AdcParams.from_analog(analog, geometry))
    table = calibrate(profile, analog, geometry, method="linear",
                      repeats=calib_repeats, seed=seed)
    raw = error_histogram(profile, None, analog, geometry, repeats=scale,
                          seed=seed + 1)
    cal = error_histogram(profile, table, analog, geometry, repeats=scale,
                          seed=seed + 1)

    lo = int(min(raw.errors.min(), cal.errors.min()))
    hi = int(max(raw.errors.max(), cal.errors.max()))
    edges = np.arange(lo, hi + 2)
    raw_counts, _ = np.histogram(raw.errors, bins=edges)
    cal_counts, _ = np.histogram(cal.errors, bins=edges)
    rows = list(zip(edges[:-1].tolist(), raw_counts.tolist(),
                    cal_counts.tolist()))
    files = [write_table(outdir, "error-hist",
                         ["error_lsb", "count_uncalibrated",
                          "count_calibrated"], rows, fmt)]

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(edges[:-1] - 0.2, raw_counts, width=0.4,
           label=f"uncalibrated, sigma={raw.sigma:.3f}")
    ax.bar(edges[:-1] + 0.2, cal_counts, width=0.4,
           label=f"linear calibrated, sigma={cal.sigma:.3f}")
    ax.set(xlabel="MAC code error (LSB)", ylabel="count")
    ax.legend()
    fig.tight_layout()
    files.append(_save_figure(fig, outdir / "error-hist.png"))

    summary = {
        "sigma_uncalibrated": raw.sigma,
        "sigma_calibrated": cal.sigma,
        "sigma_ratio": raw.sigma / cal.sigma if cal.sigma else float("inf"),
        "mean_uncalibrated": raw.mean,
        "mean_calibrated": cal.mean,
        "total_samples": raw.total_samples,
        "scale": scale,
        "seed": seed,
        "files": sorted(p.name for p in files),
    }
    write_json_doc(outdir / "error-hist_summary.json", summary)
    return summary


def rms_report(outdir, fmt="csv", profile=None, analog=None, geometry=None,
               runs=128, seed=0, adc_index=0,
               points=(0, 640, 1280, 1920)) -> dict:
    """rms noise protocol: one ADC over the full input range, then all ADCs
    at a few points; `runs` repeated conversions per point."""
    analog = analog or default_analog_params()
    geometry = geometry or default_geometry()
    outdir = Path(outdir)
    if profile is None:
        from .variation import VariationSpec, sample_profile
        profile = sample_profile(VariationSpec(), geometry, seed=seed,
                                 adc_params=AdcParams.from_analog(analog, geometry))
    adc = AdcParams.from_analog(analog, geometry)
    rng = np.random.default_rng(seed)
    x = np.arange(15 * geometry.clusters_per_slice + 1)

    def line_voltage(pre_adc, slice_id):
        s = slice_signal(np.asarray(pre_adc, dtype=float), analog, geometry,
                         gain=profile.gain[slice_id],
                         line_offset_v=profile.line_offset_v[slice_id])
        return analog.vdd - s

    v = line_voltage(x, 2 * adc_index)
    sweep_rms = np.array([measure_rms(vi, adc, profile, runs=runs, rng=rng,
                                      adc_index=adc_index) for vi in v])
    files = [write_table(outdir, "rms-sweep", ["pre_adc", "rms_lsb"],
                         list(zip(x.tolist(), sweep_rms.tolist())), fmt)]

    grid_rows = []
    grid = np.zeros((geometry.slice_pairs, len(points)))
    for a in range(geometry.slice_pairs):
        for j, p in enumerate(points):
            vi = line_voltage(p, 2 * a)
            grid[a, j] = measure_rms(float(vi), adc, profile, runs=runs,
                                     rng=rng, adc_index=a)
            grid_rows.append((a, p, grid[a, j]))
    files.append(write_table(outdir, "rms-adcs",
                             ["adc_id", "pre_adc", "rms_lsb"], grid_rows, fmt))

    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    axes[0].plot(x, sweep_rms, lw=0.7)
    axes[0].axhline(sweep_rms.mean(), color="r", ls="--",
                    label=f"mean {sweep_rms.mean():.3f} LSB")
    axes[0].set(xlabel="pre-ADC value", ylabel="rms (LSB)",
                title=f"ADC {adc_index} over the input range")
    axes[0].legend()
    for j, p in enumerate(points):
        axes[1].plot(np.arange(geometry.slice_pairs), grid[:, j],
                     marker=".", lw=0.7, label=f"pre-ADC {p}")
    axes[1].set(xlabel="ADC", ylabel="rms (LSB)", title="all ADCs")
    axes[1].legend(fontsize=7)
    fig.tight_layout()
    files.append(_save_figure(fig, outdir / "rms.png"))

    summary = {
        "mean_rms_lsb": float(sweep_rms.mean()),
        "max_rms_lsb": float(sweep_rms.max()),
        "runs": runs,
        "adc_index": adc_index,
        "seed": seed,
        "files": sorted(p.name for p in files),
    }
    write_json_doc(outdir / "rms_summary.json", summary)
    return summary


def mapping_report(outdir, manifest: dict, fmt="csv") -> dict:
    """Cycle and storage tables plus a utilization figure."""
    outdir = Path(outdir)
    header = ["name", "kind", "encoding", "adc_mode", "weight_bits",
              "input_bits", "splits", "occupied_rows",
              "occupied_rows_per_slice", "macros_needed", "slices_used",
              "mac_cycles", "nibble_passes", "total_cycles"]
    rows = [[entry[k] for k in header] for entry in manifest["layers"]]
    files = [write_table(outdir, "layers", header, rows, fmt)]
    write_json_doc(outdir / "mapping.json", manifest)

    names = [e["name"] for e in manifest["layers"]]
    cycles = [e["total_cycles"] for e in manifest["layers"]]
    rows_used = [e["occupied_rows"] for e in manifest["layers"]]
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    axes[0].bar(names, cycles)
    axes[0].set(ylabel="cycles per image", title="schedule")
    axes[1].bar(names, rows_used)
    axes[1].set(ylabel="row-groups", title=f"storage, "
                f"{100 * manifest['utilization']:.1f}% of "
                f"{manifest['macros_needed']} macro(s)")
    fig.tight_layout()
    files.append(_save_figure(fig, outdir / "mapping.png"))
    return {
        "total_rows": manifest["total_rows"],
        "macros_needed": manifest["macros_needed"],
        "utilization": manifest["utilization"],
        "files": sorted(p.name for p in files),
    }


def run_report(outdir, report, fmt="csv") -> dict:
    """Inference artifacts: prediction table plus the run summary."""
    outdir = Path(outdir)
    doc = report.to_dict()
    files = []
    if report.labels is not None:
        rows = list(zip(range(report.images), report.predictions.tolist(),
                        report.labels.tolist()))
        files.append(write_table(outdir, "predictions",
                                 ["index", "prediction", "label"], rows, fmt))
    else:
        rows = list(zip(range(report.images), report.predictions.tolist()))
        files.append(write_table(outdir, "predictions",
                                 ["index", "prediction"], rows, fmt))
    files.append(write_json_doc(outdir / "run.json", doc))
    doc["files"] = sorted(p.name for p in files)
    return doc
