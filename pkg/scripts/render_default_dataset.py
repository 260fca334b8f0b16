#!/usr/bin/env python3
"""Render the default synthetic stereo dataset with ground truth."""

import sys

from fisheyestereo.cli import main

if __name__ == "__main__":
    out = sys.argv[1] if len(sys.argv) > 1 else "out/default_dataset"
    sys.exit(main(["render", "--rig", "default", "--scene", "default",
                   "--out", out]))
