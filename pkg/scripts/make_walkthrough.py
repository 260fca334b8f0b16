#!/usr/bin/env python3
"""Generate the 16x16 pipeline walkthrough document and rasters."""

import sys

from fisheyestereo.walkthrough import generate_walkthrough

if __name__ == "__main__":
    out = sys.argv[1] if len(sys.argv) > 1 else "out/walkthrough"
    doc = generate_walkthrough(out)
    print(f"wrote {doc}")
