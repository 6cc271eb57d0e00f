import json
import logging
import math
import os
from typing import Any, Dict, Optional

import numpy as np
import pandas as pd

from src import __version__
from src.config import RunConfig, config_hash

logger = logging.getLogger(__name__)


def to_jsonable(obj: Any) -> Any:
    """numpy scalars and arrays, complex numbers and non-finite floats in plain JSON form."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": to_jsonable(float(obj.real)), "im": to_jsonable(float(obj.imag))}
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    return obj


class ReportWriter:
    """
    Writes JSON reports and CSV tables under one output directory. Every JSON report carries the
    toolkit version and the config hash; every CSV starts with a versioned schema line.
    """

    def __init__(self, output_dir: str, config: Optional[RunConfig] = None):
        self.output_dir = output_dir
        self.config = config
        self.config_hash = config_hash(config) if config is not None else None
        os.makedirs(output_dir, exist_ok=True)

    def header(self) -> Dict[str, Any]:
        return {"toolkit_version": __version__, "config_hash": self.config_hash}

    def write_json(self, name: str, payload: Dict[str, Any]) -> str:
        path = os.path.join(self.output_dir, name)
        document = {**self.header(), **to_jsonable(payload)}
        with open(path, "w", encoding="utf-8") as f:
            json.dump(document, f, indent=2)
        logger.info(f"Report saved to {path}")
        return path

    def write_csv(self, name: str, frame: pd.DataFrame, schema: str) -> str:
        path = os.path.join(self.output_dir, name)
        tag = f"# schema: {schema}/1 toolkit={__version__}"
        if self.config_hash:
            tag += f" config={self.config_hash[:16]}"
        with open(path, "w", encoding="utf-8") as f:
            f.write(tag + "\n")
            frame.to_csv(f, index=False, float_format="%.12g")
        logger.info(f"Table saved to {path} ({len(frame)} rows)")
        return path


def read_table(path: str) -> pd.DataFrame:
    """Reads a table written by `ReportWriter.write_csv`, skipping its schema line."""
    return pd.read_csv(path, comment="#")


def summarize_checks(checks: Dict[str, Dict[str, Any]]) -> Dict[str, Any]:
    passed = [name for name, c in checks.items() if c.get("passed")]
    failed = [name for name, c in checks.items() if not c.get("passed")]
    return {"total": len(checks), "passed": len(passed), "failed": failed, "all_passed": not failed}
