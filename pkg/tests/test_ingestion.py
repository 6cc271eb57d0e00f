import json
import os

import numpy as np
import pytest

from src.errors import SchemaError
from src.ingestion import SCHEMA_TAG, TraceIngestion, TraceRowSchema, write_trace_csv

SAMPLES = os.path.join(os.path.dirname(__file__), "..", "data", "samples")
HEADER_2D = "rho_plus,rho_minus,v1_plus,v1_minus,b1_plus,b1_minus,cs_plus,cs_minus"


def _write(tmp_path, text, name="trace.csv"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_row_schema_blank_sound_speed_is_incompressible():
    row = TraceRowSchema(rho_plus=1, rho_minus=2, v1_plus=0.1, v1_minus=0, b1_plus=1, b1_minus=0,
                         cs_plus="", cs_minus="inf")
    assert row.cs_plus == float("inf")
    assert row.cs_minus == float("inf")
    assert row.v2_plus is None


def test_row_schema_rejects_non_positive_density():
    with pytest.raises(ValueError):
        TraceRowSchema(rho_plus=0, rho_minus=1, v1_plus=0, v1_minus=0, b1_plus=1, b1_minus=0)


def test_sample_3d_file():
    trace = TraceIngestion(require_schema_tag=True).process_csv(os.path.join(SAMPLES, "stable_3d.csv"))
    assert trace.dims == 2
    assert trace.rho_plus.size == 6
    assert np.isinf(trace.cs_plus[0])
    assert trace.cs_plus[2] == 2.0
    assert trace.b_minus[:, 0].tolist() == [0.0, 1.0]


def test_two_dimensional_file(tmp_path):
    path = _write(tmp_path, f"{SCHEMA_TAG}\n{HEADER_2D}\n1,1,0.25,-0.25,1,1,,\n2,1,0,0,1,0.5,3,\n")
    trace = TraceIngestion().process_csv(path)
    assert trace.dims == 1
    assert trace.v_plus.shape == (1, 2)
    assert trace.cs_plus[1] == 3.0


def test_missing_columns(tmp_path):
    path = _write(tmp_path, f"{SCHEMA_TAG}\nrho_plus,rho_minus,v1_plus\n1,1,0\n")
    with pytest.raises(SchemaError) as err:
        TraceIngestion().process_csv(path)
    assert err.value.lines == [2]
    assert err.value.stage == "ingestion"


def test_partial_planar_columns(tmp_path):
    path = _write(tmp_path, f"{HEADER_2D},v2_plus\n1,1,0,0,1,1,,,0.1\n")
    with pytest.raises(SchemaError):
        TraceIngestion().process_csv(path)


def test_empty_file(tmp_path):
    with pytest.raises(SchemaError) as err:
        TraceIngestion().process_csv(_write(tmp_path, ""))
    assert err.value.lines == [1]


def test_header_without_rows(tmp_path):
    with pytest.raises(SchemaError) as err:
        TraceIngestion().process_csv(_write(tmp_path, f"{SCHEMA_TAG}\n{HEADER_2D}\n"))
    assert err.value.lines == [3]


def test_bad_rows_report_their_lines(tmp_path):
    """Line numbers count the schema line and the header."""
    text = f"{SCHEMA_TAG}\n{HEADER_2D}\n1,1,0,0,1,1,,\n-1,1,0,0,1,1,,\n1,1,abc,0,1,1,,\n"
    with pytest.raises(SchemaError) as err:
        TraceIngestion().process_csv(_write(tmp_path, text))
    assert err.value.lines == [4, 5]
    assert "rho_plus" in str(err.value)


def test_blank_second_components(tmp_path):
    header = "rho_plus,rho_minus,v1_plus,v1_minus,b1_plus,b1_minus,v2_plus,v2_minus,b2_plus,b2_minus"
    path = _write(tmp_path, f"{header}\n1,1,0,0,1,0,0,0,0,1\n1,1,0,0,1,0,,0,0,1\n")
    with pytest.raises(SchemaError) as err:
        TraceIngestion().process_csv(path)
    assert err.value.lines == [3]


def test_unsupported_schema_version(tmp_path):
    path = _write(tmp_path, f"# schema: trace/2\n{HEADER_2D}\n1,1,0,0,1,1,,\n")
    with pytest.raises(SchemaError) as err:
        TraceIngestion().process_csv(path)
    assert err.value.lines == [1]


def test_schema_tag_required(tmp_path):
    path = _write(tmp_path, f"{HEADER_2D}\n1,1,0,0,1,1,,\n")
    with pytest.raises(SchemaError):
        TraceIngestion(require_schema_tag=True).process_csv(path)
    assert TraceIngestion().process_csv(path).dims == 1


def test_missing_file():
    with pytest.raises(SchemaError):
        TraceIngestion().process_csv("no/such/trace.csv")


def test_written_traces_read_back(tmp_path, stable_traces):
    path = str(tmp_path / "written.csv")
    subset = stable_traces.subset(slice(0, 5))
    write_trace_csv(subset, path)
    back = TraceIngestion(require_schema_tag=True).process_csv(path)
    assert np.allclose(back.v_plus, subset.v_plus, rtol=1e-10)
    assert np.array_equal(np.isinf(back.cs_minus), np.isinf(subset.cs_minus))


def test_save_to_json(tmp_path, kh_trace):
    out = tmp_path / "trace.json"
    TraceIngestion().save_to_json(kh_trace, str(out))
    payload = json.loads(out.read_text())
    assert payload["points"] == 1
    assert payload["dims"] == 1
