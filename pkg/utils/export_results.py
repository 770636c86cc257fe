import os
import sqlite3
import sys

import pandas as pd

DB_PATH = os.environ.get("SRACARE_RESULTS_DB", "results.db")

output_file = sys.argv[1] if len(sys.argv) > 1 else "property_results.csv"

conn = sqlite3.connect(DB_PATH)
df = pd.read_sql_query("SELECT * FROM property_results ORDER BY run_time, scenario, property", conn)
conn.close()

# ISO strings -> readable timestamps
df["run_time"] = pd.to_datetime(df["run_time"]).dt.strftime("%Y-%m-%d %H:%M:%S")

df.to_csv(output_file, index=False)

print(f"Exported {len(df)} rows to {output_file}")
print(f"CSV file size: {round(os.path.getsize(output_file) / 1024, 2)} KB")

print("\nFailures in the export:")
failures = df[df["verdict"] == "fail"]
if failures.empty:
    print("none")
else:
    print(failures[["run_time", "scenario", "property", "checker", "witness"]].to_string(index=False))
