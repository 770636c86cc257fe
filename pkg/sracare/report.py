"""
Property report emitters and the optional result history.

The text report is a table with one row per property. The sidecar holds one
``<id> <verdict>`` line per property so CI can diff runs. The history is a
SQLite table appended to with pandas.
"""
import logging
import sqlite3
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, Optional, Sequence, Union

import pandas as pd

from .properties.checks import PropertyResult

logger = logging.getLogger(__name__)

HISTORY_TABLE = "property_results"

REPORT_HEADER = (
    "Security properties verification results\n"
    "Checker column names the method that established each verdict: "
    "trace-ltl, snapshot-diff, crypto-vector, model-check."
)

COLUMNS = ["property", "name", "checker", "verdict", "witness", "detail"]


def results_frame(results: Sequence[PropertyResult]) -> pd.DataFrame:
    rows = [
        {
            "property": r.property_id,
            "name": r.name,
            "checker": r.checker.value,
            "verdict": r.verdict.value,
            "witness": "" if r.witness is None else f"{r.witness[0]}-{r.witness[1]}",
            "detail": r.detail,
        }
        for r in results
    ]
    return pd.DataFrame(rows, columns=COLUMNS)


def format_report(results: Sequence[PropertyResult], scenario: str) -> str:
    df = results_frame(results)
    passed = int((df["verdict"] == "pass").sum())
    lines = [
        REPORT_HEADER,
        f"Scenario: {scenario}",
        f"Passed: {passed}/{len(df)}",
        "",
        df[["property", "checker", "verdict", "witness"]].to_string(index=False),
        "",
    ]
    return "\n".join(lines)


def format_sidecar(results: Sequence[PropertyResult]) -> str:
    return "".join(f"{r.property_id} {r.verdict.value}\n" for r in results)


def write_report(
    out_dir: Union[str, Path],
    scenario: str,
    results: Sequence[PropertyResult],
    trace_text: Optional[str] = None,
) -> Dict[str, Path]:
    """Write report, sidecar and (optionally) the trace log; returns their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "report": out / f"{scenario}.report.txt",
        "verdicts": out / f"{scenario}.verdicts",
    }
    paths["report"].write_text(format_report(results, scenario))
    paths["verdicts"].write_text(format_sidecar(results))
    if trace_text is not None:
        paths["trace"] = out / f"{scenario}.trace.log"
        paths["trace"].write_text(trace_text)
    logger.info("report for %s written to %s", scenario, out)
    return paths


def record_results(
    db_path: Union[str, Path],
    scenario: str,
    results: Sequence[PropertyResult],
    run_time: Optional[datetime] = None,
) -> int:
    """Append verdicts to the history table; returns the number of rows written."""
    df = results_frame(results)
    df.insert(0, "scenario", scenario)
    df.insert(1, "run_time", (run_time or datetime.now(timezone.utc)).isoformat(timespec="seconds"))
    conn = sqlite3.connect(db_path)
    try:
        df.to_sql(HISTORY_TABLE, conn, if_exists="append", index=False)
    finally:
        conn.close()
    logger.info("recorded %d verdicts for %s in %s", len(df), scenario, db_path)
    return len(df)


def load_history(db_path: Union[str, Path], scenario: Optional[str] = None) -> pd.DataFrame:
    conn = sqlite3.connect(db_path)
    try:
        if scenario is None:
            return pd.read_sql_query(f"SELECT * FROM {HISTORY_TABLE}", conn)
        return pd.read_sql_query(f"SELECT * FROM {HISTORY_TABLE} WHERE scenario = ?", conn, params=(scenario,))
    finally:
        conn.close()
