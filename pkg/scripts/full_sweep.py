"""Run the default threshold x seed sweep on the desk CNN.

Usage: python scripts/full_sweep.py [output_dir] [--jobs N]
"""

import sys
from pathlib import Path

from hybridmap.cli import main

if __name__ == "__main__":
    out = sys.argv[1] if len(sys.argv) > 1 else "runs/sweep"
    extra = sys.argv[2:]
    config = Path(__file__).resolve().parent.parent / "configs" / "desk.json"
    sys.exit(main(["sweep", "--config", str(config), "--out", out, *extra]))
