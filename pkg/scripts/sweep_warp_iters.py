#!/usr/bin/env python3
"""Accuracy/runtime trade-off over warp iterations and increment clips.

Renders the default dataset if the work directory has none, then sweeps
N x du_max and writes a CSV table.
"""

import sys
from pathlib import Path

from fisheyestereo.cli import main

if __name__ == "__main__":
    work = Path(sys.argv[1] if len(sys.argv) > 1 else "out/sweep")
    data = work / "dataset"
    rc = 0
    if not (data / "manifest.json").exists():
        rc = main(["render", "--rig", "default", "--scene", "default",
                   "--out", str(data)])
    rc = rc or main(["sweep", "--dataset", str(data), "--out", str(work),
                     "--warp-iters-grid", "2,5,10,50",
                     "--du-max-grid", "0.1,0.2,1.0"])
    sys.exit(rc)
