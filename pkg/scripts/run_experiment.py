#!/usr/bin/env python3
"""Run the 33-bus service-restoration comparison: plain PWL vs the
ordered-filling (SO-PWL) constraint set, at 50 segments per block.

Writes per-mode reports, filling-state dumps, and a side-by-side error
comparison under the output directory (default ``experiment_out``).
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from sopwl.cli import main

if __name__ == "__main__":
    out = sys.argv[1] if len(sys.argv) > 1 else "experiment_out"
    sys.exit(
        main(
            [
                "solve",
                "--case", "ieee33_4dg",
                "--mode", "both",
                "--segments", "50",
                "--out", out,
            ]
        )
    )
