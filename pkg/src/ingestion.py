import json
import logging
import math
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, ValidationError, validator

from src.errors import SchemaError
from src.stability import TwoPhaseTrace

logger = logging.getLogger(__name__)

SCHEMA_TAG = "# schema: trace/1"
REQUIRED_COLUMNS = ["rho_plus", "rho_minus", "v1_plus", "v1_minus", "b1_plus", "b1_minus"]
PLANAR_COLUMNS = ["v2_plus", "v2_minus", "b2_plus", "b2_minus"]


class TraceRowSchema(BaseModel):
    rho_plus: float = Field(..., gt=0.0)
    rho_minus: float = Field(..., gt=0.0)
    v1_plus: float
    v1_minus: float
    b1_plus: float
    b1_minus: float
    v2_plus: Optional[float] = None
    v2_minus: Optional[float] = None
    b2_plus: Optional[float] = None
    b2_minus: Optional[float] = None
    cs_plus: float = Field(math.inf, gt=0.0)
    cs_minus: float = Field(math.inf, gt=0.0)

    @validator("*", pre=True)
    def blank_is_missing(cls, v):
        if v is None or (isinstance(v, float) and math.isnan(v)):
            return None
        if isinstance(v, str) and not v.strip():
            return None
        return v

    @validator("cs_plus", "cs_minus", pre=True)
    def incompressible_default(cls, v):
        # blank or "inf" sound speed is the incompressible limit
        if v is None or (isinstance(v, str) and v.strip().lower() in ("", "inf")):
            return math.inf
        return v

    @validator("v1_plus", "v1_minus", "b1_plus", "b1_minus", "v2_plus", "v2_minus", "b2_plus", "b2_minus")
    def finite(cls, v):
        if v is not None and not math.isfinite(v):
            raise ValueError("must be finite")
        return v


class TraceIngestion:
    """
    Reads interface trace tables: one row per sample point, a schema header line, columns
    rho±, v1±, b1± (and v2±, b2± for 3D), optional cs± (blank = incompressible).
    """

    def __init__(self, require_schema_tag: bool = False):
        self.require_schema_tag = require_schema_tag

    def _header_lines(self, file_path: str) -> int:
        comments = 0
        with open(file_path, mode="r", encoding="utf-8") as f:
            for line in f:
                if not line.startswith("#"):
                    break
                comments += 1
                if line.strip() != SCHEMA_TAG and line.strip().startswith("# schema:"):
                    raise SchemaError(f"unsupported schema line {line.strip()!r}; expected {SCHEMA_TAG!r}",
                                      [comments])
        return comments

    def read_frame(self, file_path: str) -> pd.DataFrame:
        logger.info(f"Starting ingestion for file: {file_path}")
        try:
            comments = self._header_lines(file_path)
        except FileNotFoundError:
            raise SchemaError(f"trace file not found: {file_path}")
        if self.require_schema_tag and comments == 0:
            raise SchemaError(f"missing schema line {SCHEMA_TAG!r}", [1])
        try:
            df = pd.read_csv(file_path, comment="#", skipinitialspace=True, dtype=str, keep_default_na=False)
        except pd.errors.EmptyDataError:
            raise SchemaError(f"trace file {file_path} is empty", [comments + 1])
        missing = [c for c in REQUIRED_COLUMNS if c not in df.columns]
        if missing:
            raise SchemaError(f"missing columns in CSV: {missing}", [comments + 1])
        planar = [c for c in PLANAR_COLUMNS if c in df.columns]
        if planar and len(planar) != len(PLANAR_COLUMNS):
            raise SchemaError(f"3D traces need all of {PLANAR_COLUMNS}, found {planar}", [comments + 1])
        if df.empty:
            raise SchemaError(f"trace file {file_path} holds no data rows", [comments + 2])
        df.attrs["first_data_line"] = comments + 2
        return df

    def process_csv(self, file_path: str) -> TwoPhaseTrace:
        df = self.read_frame(file_path)
        first = df.attrs["first_data_line"]
        rows: List[TraceRowSchema] = []
        bad_lines: List[int] = []
        problems: List[str] = []
        for i, record in enumerate(df.to_dict(orient="records")):
            try:
                rows.append(TraceRowSchema(**{k: v for k, v in record.items() if k in TraceRowSchema.model_fields}))
            except ValidationError as e:
                line = first + i
                bad_lines.append(line)
                problems.append(f"line {line}: {e.errors()[0]['loc'][0]}: {e.errors()[0]['msg']}")
        if bad_lines:
            logger.error(f"Schema violations in {file_path}: {problems[:5]}")
            raise SchemaError("; ".join(problems[:5]), bad_lines)

        planar = "v2_plus" in df.columns
        if planar and any(r.v2_plus is None or r.v2_minus is None or r.b2_plus is None or r.b2_minus is None
                          for r in rows):
            lines = [first + i for i, r in enumerate(rows) if None in (r.v2_plus, r.v2_minus, r.b2_plus, r.b2_minus)]
            raise SchemaError("3D rows with blank second components", lines)
        trace = self.to_trace(rows, planar)
        logger.info(f"Successfully ingested {len(rows)} trace points ({'3D' if planar else '2D'}).")
        return trace

    @staticmethod
    def to_trace(rows: List[TraceRowSchema], planar: bool) -> TwoPhaseTrace:
        col = lambda name: np.array([getattr(r, name) for r in rows], dtype=float)
        vec = lambda base, side: np.stack([col(f"{base}1_{side}")] + ([col(f"{base}2_{side}")] if planar else []))
        return TwoPhaseTrace.from_arrays(col("rho_plus"), col("rho_minus"), vec("v", "plus"), vec("v", "minus"),
                                         vec("b", "plus"), vec("b", "minus"), col("cs_plus"), col("cs_minus"))

    def save_to_json(self, trace: TwoPhaseTrace, output_path: str):
        payload: Dict[str, Any] = {
            "points": int(trace.rho_plus.size),
            "dims": trace.dims,
            "rho_plus": trace.rho_plus.tolist(),
            "rho_minus": trace.rho_minus.tolist(),
            "v_plus": trace.v_plus.tolist(),
            "v_minus": trace.v_minus.tolist(),
            "b_plus": trace.b_plus.tolist(),
            "b_minus": trace.b_minus.tolist(),
        }
        with open(output_path, "w", encoding="utf-8") as f:
            json.dump(payload, f, indent=2)
        logger.info(f"Output saved to {output_path}")


def write_trace_csv(trace: TwoPhaseTrace, path: str) -> None:
    """Inverse of `TraceIngestion.process_csv`, schema line included."""
    data = {"rho_plus": trace.rho_plus, "rho_minus": trace.rho_minus}
    for j in range(trace.dims):
        data[f"v{j + 1}_plus"] = trace.v_plus[j]
        data[f"v{j + 1}_minus"] = trace.v_minus[j]
        data[f"b{j + 1}_plus"] = trace.b_plus[j]
        data[f"b{j + 1}_minus"] = trace.b_minus[j]
    data["cs_plus"] = np.where(np.isinf(trace.cs_plus), np.nan, trace.cs_plus)
    data["cs_minus"] = np.where(np.isinf(trace.cs_minus), np.nan, trace.cs_minus)
    with open(path, "w", encoding="utf-8") as f:
        f.write(SCHEMA_TAG + "\n")
        pd.DataFrame(data).to_csv(f, index=False, float_format="%.12g", na_rep="")
