import os
import sqlite3
import sys

import pandas as pd

DB_PATH = os.environ.get("SRACARE_RESULTS_DB", "results.db")
TABLE = "property_results"


def query_results(db_path=DB_PATH, scenario=None):
    """Print the latest verdict per scenario and property, plus pass rates."""
    conn = sqlite3.connect(db_path)
    try:
        query = f"SELECT * FROM {TABLE}"
        params = ()
        if scenario:
            query += " WHERE scenario = ?"
            params = (scenario,)
        df = pd.read_sql_query(query, conn, params=params)
    except (sqlite3.Error, pd.errors.DatabaseError) as e:
        print(f"SQLite error: {e}")
        return None
    finally:
        conn.close()

    if df.empty:
        print(f"No results recorded in {db_path}")
        return df

    print(f"History contains {len(df)} verdicts from {df['run_time'].nunique()} runs")

    latest = df.sort_values("run_time").groupby(["scenario", "property"]).tail(1)
    table = latest.pivot(index="scenario", columns="property", values="verdict")
    table = table.reindex(columns=sorted(table.columns, key=lambda p: int(p[1:])))
    pd.set_option("display.width", 1000)
    print("\nLatest verdicts:")
    print(table.fillna("-"))

    rates = df.assign(passed=df["verdict"] == "pass").groupby("property")["passed"].mean()
    print("\nPass rate per property over all runs:")
    for prop, rate in sorted(rates.items(), key=lambda item: int(item[0][1:])):
        print(f"{prop:<4} {rate:6.1%}")
    return latest


if __name__ == "__main__":
    query_results(scenario=sys.argv[1] if len(sys.argv) > 1 else None)
