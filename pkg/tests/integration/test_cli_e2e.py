import json
import os

import pytest

from main import EXIT_CHECKS, EXIT_FAILED, EXIT_OK, main
from src.orchestrator import ToolkitOrchestrator
from src.report_generator import read_table

SAMPLES = os.path.join(os.path.dirname(__file__), "..", "..", "data", "samples")


@pytest.fixture
def small_config_file(tmp_path):
    """Coarse 2D slab with a flat interface so the DtN verb has an exact oracle."""
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"grid": {"d": 2, "Nh": 16, "Nv": 32}, "psi_amplitude": 0.0, "samples": 50}))
    return str(path)


def _manifest(out_dir):
    with open(os.path.join(out_dir, ToolkitOrchestrator.MANIFEST_FILE)) as f:
        return json.load(f)["runs"]


def test_stable_trace_passes(tmp_path):
    out = str(tmp_path / "out")
    code = main(["check-stability", "--trace", os.path.join(SAMPLES, "stable_3d.csv"), "--out", out])
    assert code == EXIT_OK
    table = read_table(os.path.join(out, "stability_points.csv"))
    assert len(table) == 6
    assert table["stable"].all()
    runs = _manifest(out)
    assert runs[-1]["verb"] == "check-stability"
    assert runs[-1]["all_passed"] is True


def test_shear_layer_reports_failing_checks(tmp_path):
    """Field-free shear violates the stability condition; the verb still succeeds."""
    out = str(tmp_path / "out")
    code = main(["check-stability", "--trace", os.path.join(SAMPLES, "kelvin_helmholtz.csv"), "--out", out])
    assert code == EXIT_CHECKS
    with open(os.path.join(out, "stability_report.json")) as f:
        report = json.load(f)
    assert not report["checks"]["stability_condition"]["passed"]
    assert report["unstable_direction"] is not None


def test_empty_trace_fails_at_ingestion(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    out = str(tmp_path / "out")
    assert main(["check-stability", "--trace", str(empty), "--out", out]) == EXIT_FAILED
    runs = _manifest(out)
    assert runs[-1]["status"] == "failed"
    assert "ingestion" in runs[-1]["error"]


def test_trace_verb_without_trace(tmp_path):
    assert main(["compute-mu", "--out", str(tmp_path)]) == EXIT_FAILED


def test_bad_config_file(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"grid": {"d": 4}}))
    assert main(["verify", "--config", str(path), "--out", str(tmp_path)]) == EXIT_FAILED


def test_flat_dtn_matches_oracle(tmp_path, small_config_file):
    out = str(tmp_path / "out")
    assert main(["dtn", "--config", small_config_file, "--out", out]) == EXIT_OK
    frame = read_table(os.path.join(out, "dtn_spectrum.csv"))
    assert "oracle" in frame.columns
    with open(os.path.join(out, "dtn_report.json")) as f:
        report = json.load(f)
    assert report["checks"]["flat_oracle"]["passed"]
    assert report["eigenvalue_plus"] == pytest.approx(report["flat_oracle"], abs=1e-6)
    assert report["toolkit_version"]


def test_verify_subset_appends_to_manifest(tmp_path, small_config_file):
    out = str(tmp_path / "out")
    assert main(["verify", "--config", small_config_file, "--out", out, "--checks", "cutoffs", "bony"]) == EXIT_OK
    assert main(["verify", "--config", small_config_file, "--out", out, "--checks", "eos_bounds"]) == EXIT_OK
    runs = _manifest(out)
    assert [r["verb"] for r in runs] == ["verify", "verify"]
    summary = read_table(os.path.join(out, "verify_summary.csv"))
    assert summary["check"].tolist() == ["eos_bounds"]


def test_verify_unknown_check(tmp_path, small_config_file):
    assert main(["verify", "--config", small_config_file, "--out", str(tmp_path), "--checks", "nope"]) == EXIT_FAILED
