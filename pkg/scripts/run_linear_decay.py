#!/usr/bin/env python3
"""Linear semigroup decay measurements for 2D damped Euler.

Runs the localized-data (p=1) and spread-data (p=2) experiments plus the
pointwise symbol bounds, writing out/linear_p1.csv and out/linear_p2.csv
with JSON sidecars.
"""

import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from partdiss.cli import dispatch  # noqa: E402

OUT = os.path.join(os.path.dirname(__file__), "..", "out")


def main():
    os.makedirs(OUT, exist_ok=True)
    code = dispatch(["lindecay", "--d", "2", "--p", "1",
                     "--out", os.path.join(OUT, "linear_p1.csv")])
    code |= dispatch(["lindecay", "--d", "2", "--p", "2",
                      "--out", os.path.join(OUT, "linear_p2.csv")])
    return code


if __name__ == "__main__":
    sys.exit(main())
