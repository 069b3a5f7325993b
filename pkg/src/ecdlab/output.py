"""Result files: results.csv (fixed columns), results.json (metadata), series/*.dat."""
from __future__ import annotations

import json
import math
import platform
from importlib import metadata
from pathlib import Path

import numpy as np

from .config import SCHEMA_VERSION, dump_config
from .engine import CERT_TOL
from .experiments import COLUMNS, ResultSet, Row

FLOAT_FMT = ".17g"


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "nan" if math.isnan(v) else format(float(v), FLOAT_FMT)
    return str(v)


def csv_text(rs: ResultSet) -> str:
    lines = [",".join(COLUMNS)]
    for row in rs.rows:
        lines.append(",".join(_fmt(getattr(row, c)) for c in COLUMNS))
    return "\n".join(lines) + "\n"


def read_csv(path: str | Path) -> list:
    """Parse a results.csv back into Row objects (certification flag not stored)."""
    lines = Path(path).read_text().strip().splitlines()
    if tuple(lines[0].split(",")) != COLUMNS:
        raise ValueError(f"unexpected header in {path}")
    rows = []
    for line in lines[1:]:
        f = line.split(",")
        rows.append(Row(f[0], float(f[1]), float(f[2]), float(f[3]), float(f[4]), float(f[5]),
                        int(f[6]), float(f[7])))
    return rows


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return None if not math.isfinite(obj) else float(obj)
    return obj


def _version(pkg: str) -> str:
    try:
        return metadata.version(pkg)
    except metadata.PackageNotFoundError:
        return "unknown"


def metadata_dict(rs: ResultSet) -> dict:
    return {
        "experiment": rs.experiment,
        "schema_version": SCHEMA_VERSION,
        "config": rs.config.as_dict(),
        "config_hash": rs.config.digest(),
        "columns": list(COLUMNS),
        "versions": {"ecdlab": _version("artifact"), "numpy": np.__version__,
                     "scipy": _version("scipy"), "python": platform.python_version()},
        "tolerances": {"certificate": CERT_TOL, "fit_r2_min": 0.99},
        "n_rows": len(rs.rows),
        "non_certified": [list(x) for x in rs.non_certified],
        "summary": rs.summary,
        "series": [s.name for s in rs.series],
    }


def dat_text(series) -> str:
    head = f"# {series.xlabel}\t{series.ylabel}\n"
    body = "".join(f"{_fmt(float(x))}\t{_fmt(float(y))}\n" for x, y in zip(series.x, series.y))
    return head + body


def write_results(rs: ResultSet, out_dir: str | Path) -> Path:
    """Write results.csv, results.json, config.ini and series/<name>.dat."""
    out = Path(out_dir)
    (out / "series").mkdir(parents=True, exist_ok=True)
    (out / "results.csv").write_text(csv_text(rs))
    (out / "results.json").write_text(json.dumps(_jsonable(metadata_dict(rs)), indent=2, sort_keys=True) + "\n")
    (out / "config.ini").write_text(dump_config(rs.config))
    for s in rs.series:
        (out / "series" / f"{s.name}.dat").write_text(dat_text(s))
    return out
