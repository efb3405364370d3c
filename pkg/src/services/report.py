"""
Run reports: building, writing, loading and comparing.

JSON is the stable format; the table format is for people.
"""
import json
import os
from typing import Dict, List, Sequence, Union

from src.constants import NOT_AVAILABLE, REPORT_COUNTERS, REPORT_SCHEMA, STRATEGY_TSUE
from src.errors import ReportMismatchError
from src.logger import get_logger

logger = get_logger(__name__)

Ratio = Union[float, str]


def build_report(input_info: dict, results: Dict[str, dict]) -> dict:
    """
    Args:
        input_info: config_fingerprint, trace_source, seed, ops (and clients)
        results: strategy name -> entry built by ``strategy_entry``
    """
    return {
        "schema": REPORT_SCHEMA,
        "input": dict(input_info),
        "strategies": dict(results),
    }


def strategy_entry(snapshot, verify, recoveries: Sequence[dict] = (), flags: Sequence[str] = ()) -> dict:
    data = snapshot.to_dict()
    return {
        "flags": sorted(flags),
        "counters": {name: int(data["counters"].get(name, 0)) for name in REPORT_COUNTERS},
        "network_by_kind": data["network_by_kind"],
        "residence_us": data["residence_us"],
        "sim_time_us": data["sim_time_us"],
        "recoveries": list(recoveries),
        "verify": verify.to_dict() if verify is not None else {"passed": None, "detail": None},
    }


def write_report(report: dict, path: str, fmt: str = "json") -> str:
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        if fmt == "json":
            json.dump(report, f, indent=2, sort_keys=True)
            f.write("\n")
        else:
            f.write(format_report(report))
    logger.info(f"report written to {path} ({fmt})")
    return path


def load_report(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        try:
            report = json.load(f)
        except json.JSONDecodeError as e:
            raise ReportMismatchError(f"{path}: not a JSON report ({e})") from e
    if report.get("schema") != REPORT_SCHEMA:
        raise ReportMismatchError(f"{path}: schema {report.get('schema')!r}, expected {REPORT_SCHEMA}")
    return report


def _cell(value) -> str:
    if isinstance(value, float):
        return f"{value:.4g}"
    return str(value)


def _table(header: List[str], rows: List[List[str]]) -> str:
    widths = [max(len(header[i]), *(len(r[i]) for r in rows)) if rows else len(header[i])
              for i in range(len(header))]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for row in rows:
        lines.append("  ".join(c.rjust(w) if i else c.ljust(w) for i, (c, w) in enumerate(zip(row, widths))))
    return "\n".join(lines) + "\n"


def format_report(report: dict) -> str:
    names = list(report["strategies"])
    header = ["counter"] + names
    rows = [
        [counter] + [_cell(report["strategies"][n]["counters"].get(counter, NOT_AVAILABLE)) for n in names]
        for counter in REPORT_COUNTERS
    ]
    out = [f"input: {json.dumps(report['input'], sort_keys=True)}", "", _table(header, rows)]

    layers = sorted({layer for n in names for layer in report["strategies"][n]["residence_us"]})
    if layers:
        res_rows = []
        for n in names:
            for layer in layers:
                stats = report["strategies"][n]["residence_us"].get(layer)
                if stats:
                    res_rows.append([f"{n}/{layer}"] + [_cell(stats[k]) for k in ("count", "mean", "p50", "p90", "p99", "max")])
        out += ["residence (us)", _table(["log", "count", "mean", "p50", "p90", "p99", "max"], res_rows)]

    for n in names:
        verify = report["strategies"][n]["verify"]
        if verify.get("passed") is not None:
            status = "passed" if verify["passed"] else f"FAILED: {verify['detail']}"
            out.append(f"verify {n}: {status}")
    return "\n".join(out) + "\n"


def ratio(value, base) -> Ratio:
    if value is None or base is None:
        return NOT_AVAILABLE
    if base == 0:
        return 1.0 if value == 0 else NOT_AVAILABLE
    return round(value / base, 4)


def compare_reports(reports: Sequence[dict], baseline: str = STRATEGY_TSUE) -> dict:
    """
    Per-counter ratios of every strategy entry against ``baseline``.

    Entries from later reports that reuse a strategy name get an ``@<n>``
    suffix, n being the report's position.
    """
    if not reports:
        raise ReportMismatchError("nothing to compare")
    inputs = [r["input"] for r in reports]
    fingerprint = inputs[0].get("config_fingerprint")
    for i, other in enumerate(inputs[1:], start=1):
        if other != inputs[0]:
            raise ReportMismatchError(
                f"report {i} ran on different input ({other.get('config_fingerprint')} vs {fingerprint})"
            )

    entries: Dict[str, dict] = {}
    for i, report in enumerate(reports):
        for name, entry in report["strategies"].items():
            key = name if name not in entries else f"{name}@{i}"
            entries[key] = entry
    if len(entries) < 2:
        raise ReportMismatchError("need at least two strategy entries to compare")
    if baseline not in entries:
        raise ReportMismatchError(f"baseline {baseline!r} not among {sorted(entries)}")

    base = entries[baseline]["counters"]
    ratios = {
        name: {c: ratio(entry["counters"].get(c), base.get(c)) for c in REPORT_COUNTERS}
        for name, entry in entries.items()
    }
    return {"baseline": baseline, "input": inputs[0], "ratios": ratios}


def format_comparison(comparison: dict) -> str:
    names = list(comparison["ratios"])
    header = ["counter"] + names
    rows = [
        [counter] + [_cell(comparison["ratios"][n][counter]) for n in names]
        for counter in REPORT_COUNTERS
    ]
    return f"ratios relative to {comparison['baseline']}\n" + _table(header, rows)
