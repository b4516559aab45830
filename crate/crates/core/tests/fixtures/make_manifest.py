"""Writes pop_small.manifest.json from pop_small.csv using only the stdlib csv module."""
import csv
import json
import math
from pathlib import Path

here = Path(__file__).parent
with open(here / "pop_small.csv", newline="") as f:
    rows = list(csv.DictReader(f))

incomes = [float(r["income"]) for r in rows]
row7 = rows[6]
manifest = {
    "rows": len(rows),
    "income_sum": math.fsum(incomes),
    "income_sum_of_squares": math.fsum(v * v for v in incomes),
    "row7_id": int(row7["id"]),
    "row7_per_capita_income": float(row7["income"]) / int(row7["size"]),
}
(here / "pop_small.manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
