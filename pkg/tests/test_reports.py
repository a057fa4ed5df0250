"""Report writer contracts: stable formatting, artifact sets, NaN handling."""

import dataclasses
import json

import numpy as np
import pytest

from cimsim.calibration import CalibrationTable
from cimsim.config import default_analog_params, default_geometry
from cimsim.inference import RunReport
from cimsim.mapping import LayerSpec, map_network, mapping_manifest
from cimsim.reports import (error_histogram_report, fmt_num, mapping_report,
                            rms_report, run_report, sweep_linearity_report,
                            write_json_doc, write_rows, write_table)
from cimsim.variation import ideal_profile


def test_fmt_num_integers_and_bools():
    assert fmt_num(7) == "7"
    assert fmt_num(np.int64(-3)) == "-3"
    assert fmt_num(True) == "1"
    assert fmt_num(np.bool_(False)) == "0"


def test_fmt_num_floats_ten_significant_digits():
    assert fmt_num(0.5) == "0.5"
    assert fmt_num(1 / 3) == "0.3333333333"
    assert fmt_num(np.float64(2.0)) == "2"
    # no exponent surprises in the plotting range
    assert fmt_num(1920.0) == "1920"


def test_write_rows_layout(tmp_path):
    path = write_rows(tmp_path / "t.csv", ["a", "b"], [[1, 0.25], ["x", 2]])
    assert path.read_text() == "a,b\n1,0.25\nx,2\n"


def test_write_table_csv_and_json(tmp_path):
    rows = [[0, 1.5], [1, -2.0]]
    p = write_table(tmp_path, "error-hist", ["idx", "v"], rows, "csv")
    assert p.name == "error-hist.csv"
    assert p.read_text().splitlines()[0] == "idx,v"

    p = write_table(tmp_path, "error-hist", ["idx", "v"], rows, "json")
    assert p.name == "error-hist.json"
    doc = json.loads(p.read_text())
    # hyphenated artifact names become snake_case JSON keys
    assert doc["error_hist"] == [{"idx": 0, "v": 1.5}, {"idx": 1, "v": -2.0}]


def test_write_json_doc_stable_bytes(tmp_path):
    doc = {"b": 1, "a": [1, 2]}
    p1 = write_json_doc(tmp_path / "x.json", doc)
    first = p1.read_bytes()
    p2 = write_json_doc(tmp_path / "y.json", {"a": [1, 2], "b": 1})
    assert p2.read_bytes() == first
    assert first.endswith(b"\n")
    assert json.loads(first) == doc


def _manifest():
    layers = [
        LayerSpec(name="c", kind="conv", kernel=3, in_channels=1,
                  out_channels=4, input_bits=4, weight_bits=2,
                  encoding="ternary", adc_mode="differential",
                  input_height=8, input_width=8),
        LayerSpec(name="f", kind="fc", in_channels=144, out_channels=10,
                  input_bits=4, weight_bits=2, encoding="ternary",
                  adc_mode="differential"),
    ]
    return mapping_manifest(map_network(layers))


def test_mapping_report_artifacts(tmp_path):
    manifest = _manifest()
    summary = mapping_report(tmp_path, manifest, fmt="csv")
    assert summary["files"] == ["layers.csv", "mapping.png"]
    assert (tmp_path / "mapping.png").stat().st_size > 0
    assert summary["total_rows"] == manifest["total_rows"]
    lines = (tmp_path / "layers.csv").read_text().splitlines()
    assert len(lines) == 1 + len(manifest["layers"])
    assert lines[0].startswith("name,kind,encoding")
    # mapping.json rides along for machine consumption
    assert json.loads((tmp_path / "mapping.json").read_text()) == manifest


def _report(labels):
    return RunReport(mode="ideal", seed=0, calib="none", config_hash="cafe",
                     predictions=np.array([1, 0, 2]),
                     logits=np.zeros((3, 3)),
                     labels=labels,
                     layer_cycles=({"layer": "c", "mac_cycles": 4,
                                    "nibble_passes": 1, "total_cycles": 4,
                                    "multi_pass_input": False},),
                     cycles_per_image=4, saturated_conversions=0)


def test_run_report_with_labels(tmp_path):
    doc = run_report(tmp_path, _report(np.array([1, 1, 2])), fmt="csv")
    assert doc["files"] == ["predictions.csv", "run.json"]
    body = (tmp_path / "predictions.csv").read_text()
    assert body == "index,prediction,label\n0,1,1\n1,0,1\n2,2,2\n"
    saved = json.loads((tmp_path / "run.json").read_text())
    assert saved["accuracy"] == pytest.approx(2 / 3)
    assert saved["config_hash"] == "cafe"


def test_run_report_without_labels(tmp_path):
    doc = run_report(tmp_path, _report(None), fmt="csv")
    assert doc["accuracy"] is None
    assert (tmp_path / "predictions.csv").read_text().splitlines()[0] == \
        "index,prediction"


def test_sweep_linearity_report_ideal(tmp_path):
    geometry = default_geometry()
    summary = sweep_linearity_report(tmp_path, profile=ideal_profile(geometry),
                                     repeats=2, seed=0)
    assert summary["r_squared_voltage"] > 0.9999
    assert summary["max_abs_inl_lsb"] < 0.75
    assert summary["files"] == ["inl.csv", "sweep.csv", "sweep.png",
                                "transfer.csv"]
    # mismatch-free slices reach every code, so the INL table is dense
    inl_lines = (tmp_path / "inl.csv").read_text().splitlines()
    assert len(inl_lines) == 1 + geometry.slices * 64
    assert "nan" not in (tmp_path / "inl.csv").read_text()


def test_sweep_report_drops_unreachable_codes(tmp_path):
    geometry = default_geometry()
    base = ideal_profile(geometry)
    gain = base.gain.copy()
    gain[:] = 1.2  # rails well before code 63 on every slice
    profile = dataclasses.replace(base, gain=gain)
    summary = sweep_linearity_report(tmp_path, profile=profile, repeats=2,
                                     seed=0)
    text = (tmp_path / "inl.csv").read_text()
    assert "nan" not in text
    assert len(text.splitlines()) < 1 + geometry.slices * 64
    assert summary["max_abs_inl_lsb"] < 10


def test_error_histogram_report(tmp_path):
    geometry = default_geometry()
    summary = error_histogram_report(tmp_path, scale=1, seed=0)
    assert summary["total_samples"] == 16 * 64 * geometry.slice_pairs
    assert summary["sigma_calibrated"] < summary["sigma_uncalibrated"]
    assert summary["sigma_ratio"] > 1
    assert summary["files"] == ["error-hist.csv", "error-hist.png"]
    lines = (tmp_path / "error-hist.csv").read_text().splitlines()
    counts = np.array([[int(v) for v in row.split(",")[1:]]
                       for row in lines[1:]])
    assert counts[:, 0].sum() == summary["total_samples"]
    assert counts[:, 1].sum() == summary["total_samples"]


def test_rms_report(tmp_path):
    geometry = default_geometry()
    summary = rms_report(tmp_path, runs=16, seed=0, adc_index=3)
    assert summary["files"] == ["rms-adcs.csv", "rms-sweep.csv", "rms.png"]
    assert 0 < summary["mean_rms_lsb"] < 1.0
    lines = (tmp_path / "rms-adcs.csv").read_text().splitlines()
    assert len(lines) == 1 + geometry.slice_pairs * 4


def test_reports_byte_reproducible(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir()
    b.mkdir()
    for d in (a, b):
        error_histogram_report(d, scale=1, seed=7)
    assert (a / "error-hist.csv").read_bytes() == \
        (b / "error-hist.csv").read_bytes()
    assert (a / "error-hist_summary.json").read_bytes() == \
        (b / "error-hist_summary.json").read_bytes()
