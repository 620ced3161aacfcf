"""
Sweep, grid and plots
=====================

Drive the command-line entry point from Python: a small aggregator x
adversary grid, then static SVG plots. Output goes to $DGMBENCH_OUT or a
temporary directory.
"""
import os
import tempfile
from pathlib import Path

from dgmbench.cli import main

here = Path(__file__).parent / "configs"
out = Path(os.environ.get("DGMBENCH_OUT") or tempfile.mkdtemp(prefix="dgm-sweep-"))

# trimmed so the demo finishes in about a minute
code = main([
    "sweep", str(here / "sweep.yaml"), "--out", str(out),
    "--set", "num_rounds=30", "--set", "repeats=2", "--set", "aggregator.mask_steps=5",
])
print("sweep exit code:", code)

main(["report", str(out / "grid.csv")])
for p in sorted((out / "plots").glob("*.svg")):
    print(p)
