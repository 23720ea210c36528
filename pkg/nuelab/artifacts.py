"""Result bundles on disk: results.csv, summary.json, rate.svg, and the cross-bundle report."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .model import SchemaError
from .runner import Column, ExperimentResult

logger = logging.getLogger(__name__)

SCHEMA_VERSION = "nuelab.summary/1"
SCHEMA_PATH = Path(__file__).parent / "schema" / "summary.schema.json"
RESULTS_FILE = "results.csv"
SUMMARY_FILE = "summary.json"
CHART_FILE = "rate.svg"
REPORT_COLUMNS: list[Column] = [
    ("bundle", "path"),
    ("kind", "label"),
    ("family", "label"),
    ("params", "json"),
    ("c", "average"),
    ("xi", "1/iteration"),
    ("xi_ci_low", "1/iteration"),
    ("xi_ci_high", "1/iteration"),
    ("rate_bound", "1/iteration"),
    ("gap", "1/iteration"),
]

_JSON_TYPES = {
    "object": dict,
    "array": list,
    "string": str,
    "boolean": bool,
    "number": (int, float),
    "integer": int,
}


@dataclass(frozen=True)
class Bundle:
    directory: Path
    results: Path
    summary: Path
    chart: Path | None


# ---------------------------------------------------------------- hashing and serialisation
def git_blob_sha1(data: bytes) -> str:
    """The object id git assigns to a blob with this content."""

    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def header(columns: Sequence[Column]) -> list[str]:
    return [f"{name} [{unit}]" for name, unit in columns]


def render_csv(columns: Sequence[Column], rows: Iterable[Mapping[str, Any]]) -> bytes:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header(columns))
    for row in rows:
        writer.writerow([row.get(name, "") for name, _ in columns])
    return buffer.getvalue().encode("utf-8")


def jsonable(value: Any) -> Any:
    """Plain JSON values; non-finite floats become strings so the output stays valid JSON."""

    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return jsonable(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (np.floating, float)):
        f = float(value)
        return f if math.isfinite(f) else str(f)
    return value


# ---------------------------------------------------------------- schema
def load_schema() -> dict[str, Any]:
    return json.loads(SCHEMA_PATH.read_text(encoding="utf-8"))


def _check(node: Any, schema: Mapping[str, Any], path: str) -> None:
    expected = schema.get("type")
    if expected is not None:
        kind = _JSON_TYPES[expected]
        if not isinstance(node, kind) or (expected in ("integer", "number") and isinstance(node, bool)):
            raise SchemaError(f"{path or '<root>'}: expected {expected}, got {type(node).__name__}")
    if "enum" in schema and node not in schema["enum"]:
        raise SchemaError(f"{path}: {node!r} is not one of {schema['enum']}")
    if isinstance(node, dict):
        for key in schema.get("required", ()):
            if key not in node:
                raise SchemaError(f"{path or '<root>'}: missing required key '{key}'")
        for key, sub in schema.get("properties", {}).items():
            if key in node:
                _check(node[key], sub, f"{path}.{key}" if path else key)
    if isinstance(node, list) and "items" in schema:
        for i, item in enumerate(node):
            _check(item, schema["items"], f"{path}[{i}]")


def validate_summary(summary: Mapping[str, Any], schema: Mapping[str, Any] | None = None) -> None:
    """Structural check against the shipped schema: required keys, types and enums."""

    _check(summary, schema or load_schema(), "")


# ---------------------------------------------------------------- bundles
def build_summary(config: ExperimentConfig, result: ExperimentResult, csv_bytes: bytes) -> dict[str, Any]:
    sha = git_blob_sha1(csv_bytes)
    summary = {
        "schema_version": SCHEMA_VERSION,
        "tool": {"name": "nuelab", "version": __version__},
        "kind": result.kind,
        "config": config.to_payload(),
        "results": result.results,
        "artifacts": {
            RESULTS_FILE: {"sha1": sha, "rows": len(result.rows), "columns": header(result.columns)},
        },
        "content_hash": sha,
    }
    return jsonable(summary)


def write_bundle(config: ExperimentConfig, result: ExperimentResult, directory: str | Path | None = None) -> Bundle:
    """Write the bundle; the runner is the only writer to disk."""

    out = Path(directory or config.output_directory)
    out.mkdir(parents=True, exist_ok=True)
    csv_bytes = render_csv(result.columns, result.rows)
    results_path = out / RESULTS_FILE
    results_path.write_bytes(csv_bytes)
    summary = build_summary(config, result, csv_bytes)
    chart_path = None
    if "svg" in config.formats and result.chart is not None and result.chart.n_values:
        from .charts import render_rate_chart

        chart_path = out / CHART_FILE
        render_rate_chart(result.chart, chart_path)
        summary["artifacts"][CHART_FILE] = {"points": len(result.chart.n_values)}
    validate_summary(summary)
    summary_path = out / SUMMARY_FILE
    if "json" in config.formats:
        summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.info("[artifacts] complete")
    return Bundle(out, results_path, summary_path, chart_path)


def load_summary(directory: str | Path) -> dict[str, Any]:
    path = Path(directory)
    if path.is_dir():
        path = path / SUMMARY_FILE
    if not path.exists():
        raise SchemaError(f"no {SUMMARY_FILE} in '{directory}'")
    try:
        summary = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from exc
    if summary.get("schema_version") != SCHEMA_VERSION:
        raise SchemaError(f"{path}: incompatible schema version {summary.get('schema_version')!r}")
    validate_summary(summary)
    return summary


# ---------------------------------------------------------------- report
def _system_key(summary: Mapping[str, Any]) -> tuple[str, str]:
    system = summary["config"]["system"]
    return system["family"], json.dumps(system["params"], sort_keys=True)


def _bound_table(summaries: Sequence[tuple[str, Mapping[str, Any]]]) -> dict[tuple[str, str, float], float]:
    table = {}
    for _, summary in summaries:
        if summary["kind"] != "bound":
            continue
        family, params = _system_key(summary)
        for entry in summary["results"].get("bounds", []):
            if entry.get("regime") != "infeasible":
                table[(family, params, float(entry["c"]))] = float(entry["rate_bound"])
    return table


def report_rows(bundles: Sequence[str | Path]) -> list[dict[str, Any]]:
    """One row per deviate/escape/tail bundle and per bound value; gap = xi - (-rate_bound)."""

    if not bundles:
        raise SchemaError("report needs at least one bundle")
    summaries = [(str(b), load_summary(b)) for b in bundles]
    bounds = _bound_table(summaries)
    rows = []
    for name, summary in summaries:
        family, params = _system_key(summary)
        base = {"bundle": name, "kind": summary["kind"], "family": family, "params": params}
        results = summary["results"]
        if summary["kind"] == "bound":
            for entry in results.get("bounds", []):
                rows.append({**base, "c": entry["c"], "rate_bound": entry["rate_bound"]})
            continue
        fit = results.get("fit", {})
        row = dict(base)
        c = summary["config"]["experiment"].get("c")
        if c is not None:
            row["c"] = f"{float(c):.17g}"
        if fit.get("status") == "ok":
            row.update(xi=f"{fit['xi']:.17g}", xi_ci_low=f"{fit['xi_ci'][0]:.17g}", xi_ci_high=f"{fit['xi_ci'][1]:.17g}")
        bound = (results.get("rate_bound") or {}).get("value")
        if bound is None and c is not None:
            bound = bounds.get((family, params, float(c)))
        if bound is not None:
            row["rate_bound"] = f"{float(bound):.17g}"
            if "xi" in row:
                row["gap"] = f"{fit['xi'] + float(bound):.17g}"
        rows.append(row)
    return rows


def write_report(bundles: Sequence[str | Path], path: str | Path) -> Path:
    rows = report_rows(bundles)
    target = Path(path)
    if target.is_dir() or not target.suffix:
        target.mkdir(parents=True, exist_ok=True)
        target = target / "report.csv"
    target.write_bytes(render_csv(REPORT_COLUMNS, rows))
    logger.info("report of %d row(s) written to %s", len(rows), target)
    return target
