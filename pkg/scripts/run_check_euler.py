#!/usr/bin/env python3
"""Run the full structure verification for 2D damped Euler.

Writes out/check.json and out/chart_report.json and prints the
per-condition verdict table.  Nonzero exit if any condition fails.
"""

import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from partdiss.cli import dispatch  # noqa: E402

OUT = os.path.join(os.path.dirname(__file__), "..", "out")


def main():
    os.makedirs(OUT, exist_ok=True)
    code = dispatch(["check", "--system", "damped_euler", "--d", "2",
                     "--gamma", "2", "--out", os.path.join(OUT, "check.json")])
    code |= dispatch(["coords", "--d", "2", "--samples", "200",
                      "--out", os.path.join(OUT, "chart_report.json")])
    return code


if __name__ == "__main__":
    sys.exit(main())
