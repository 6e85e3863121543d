"""Reproduce the drift-time study: accuracy of all-analog mappings trained
for different target times, read back over a time grid.

Usage: python scripts/drift_grid.py [output_dir]
"""

import sys
from pathlib import Path

from hybridmap.cli import main

if __name__ == "__main__":
    out = sys.argv[1] if len(sys.argv) > 1 else "runs/drift"
    config = Path(__file__).resolve().parent.parent / "configs" / "desk.json"
    sys.exit(main(["drift-study", "--config", str(config), "--out", out]))
