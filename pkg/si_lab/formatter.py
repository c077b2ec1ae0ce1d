# si_lab/formatter.py
import json
import logging
import os
from typing import Any, Dict, List, Optional

import pandas as pd
from rich.console import Console
from rich.table import Table

from . import __version__
from .axioms import CheckReport
from .errors import ConfigError
from .parser import TOOL_NAME

logger = logging.getLogger(__name__)

TIMING_KEYS = ("elapsed_nanos", "axiom_nanos")

stdout_console = Console()


def report_dict(report: CheckReport, source: Optional[str] = None, include_timings: bool = False,
                extra: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """
    Structured form of a check report

    Args:
        report: Result of check_model / check_deployment
        source: History file the report is about
        include_timings: Keep elapsed times (they differ between runs)
        extra: Additional top-level fields (seed, oracle outcome, ...)

    Returns:
        JSON-serializable dictionary with stable key order
    """
    stats = {k: v for k, v in report.stats.items() if include_timings or k not in TIMING_KEYS}
    data: Dict[str, Any] = {
        "tool": TOOL_NAME,
        "version": __version__,
        "source": source,
        "model": report.model.display_name,
        "verdict": "pass" if report.verdict else "fail",
        "axioms": {axiom.value: ok for axiom, ok in report.axiom_verdicts.items()},
        "violations": [v.to_dict() for v in report.violations],
        "crossChecks": [v.to_dict() for v in report.cross_checks],
        "realTimeErrorNanos": report.real_time_error_nanos,
        "stats": stats,
    }
    if extra:
        data.update(extra)
    return data


def report_table(report: CheckReport) -> pd.DataFrame:
    """One row per checked axiom: verdict, violation count and the first witness"""
    rows: List[Dict[str, Any]] = []
    for axiom, ok in report.axiom_verdicts.items():
        found = [v for v in report.violations if v.axiom is axiom]
        rows.append({
            "axiom": axiom.value,
            "verdict": "ok" if ok else "FAILED",
            "violations": len(found),
            "witness": " ".join(f"T{t}" for t in found[0].witness) if found else "",
        })
    return pd.DataFrame(rows, columns=["axiom", "verdict", "violations", "witness"])


def render_text(report: CheckReport, source: Optional[str] = None,
                extra: Optional[Dict[str, Any]] = None) -> str:
    lines = [
        f"{TOOL_NAME} {__version__} check report",
        f"source: {source or '-'}",
    ]
    for key, value in (extra or {}).items():
        shown = json.dumps(value, sort_keys=True, separators=(",", ":")) if isinstance(value, dict) else value
        lines.append(f"{key}: {'-' if shown is None else shown}")
    lines.extend([
        f"model: {report.model.display_name}",
        f"verdict: {'PASS' if report.verdict else 'FAIL'}",
        f"committed: {report.stats.get('committed', 0)}  aborted: {report.stats.get('aborted', 0)}",
    ])
    if report.real_time_error_nanos is not None:
        lines.append(f"real-time error: {report.real_time_error_nanos} ns")
    lines.append("")
    lines.append(report_table(report).to_string(index=False))
    if report.violations:
        lines.append("")
        lines.append("violations:")
        lines.extend(f"  {v.axiom.value}: {v.message}" for v in report.violations)
    if report.cross_checks:
        lines.append("")
        lines.append("tid order cross-check:")
        lines.extend(f"  {v.message}" for v in report.cross_checks)
    return "\n".join(lines) + "\n"


def write_report(report: CheckReport, path: str, source: Optional[str] = None,
                 include_timings: bool = False, extra: Optional[Dict[str, Any]] = None) -> str:
    """
    Write the JSON report and the human-readable .txt next to it

    Returns:
        Path of the text report
    """
    data = report_dict(report, source, include_timings, extra)
    text_path = os.path.splitext(path)[0] + ".txt"
    try:
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(data, f, indent=2)
            f.write("\n")
        with open(text_path, 'w', encoding='utf-8') as f:
            f.write(render_text(report, source, extra))
    except OSError as e:
        raise ConfigError(f"cannot write report {path}: {e}") from e
    logger.info("report written to %s and %s", path, text_path)
    return text_path


def summary_line(command: str, deployment: Optional[str], txns: int, verdict: Optional[bool],
                 elapsed_seconds: float) -> str:
    if verdict is None:
        outcome = "-"
    else:
        outcome = "[green]pass[/green]" if verdict else "[red]FAIL[/red]"
    return (f"[bold]{command}[/bold] deployment={deployment or '-'} txns={txns} "
            f"verdict={outcome} elapsed={elapsed_seconds:.2f}s")


def print_summary(line: str, console: Optional[Console] = None) -> None:
    (console or stdout_console).print(line, highlight=False)


def stats_table(stats: Dict[str, Any], title: str = "history") -> Table:
    table = Table(title=title, show_header=True)
    table.add_column("statistic")
    table.add_column("value", justify="right")
    for key, value in stats.items():
        table.add_row(key.replace("_", " "), str(value))
    return table


def violations_table(report: CheckReport, limit: int = 10) -> Table:
    table = Table(title=f"{report.model.display_name} violations", show_header=True)
    table.add_column("axiom")
    table.add_column("witness")
    table.add_column("detail")
    for v in report.violations[:limit]:
        table.add_row(v.axiom.value, " ".join(f"T{t}" for t in v.witness), v.message)
    if len(report.violations) > limit:
        table.caption = f"{len(report.violations) - limit} more in the report file"
    return table
