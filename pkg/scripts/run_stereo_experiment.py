#!/usr/bin/env python3
"""End-to-end experiment: render, solve, and evaluate the default scene.

Usage: python scripts/run_stereo_experiment.py [workdir]
"""

import sys
from pathlib import Path

from fisheyestereo.cli import main

if __name__ == "__main__":
    work = Path(sys.argv[1] if len(sys.argv) > 1 else "out/experiment")
    data = work / "dataset"
    solve = work / "solve"
    report = work / "eval"
    rc = main(["render", "--rig", "default", "--scene", "default",
               "--out", str(data)])
    rc = rc or main(["stereo", "--left", str(data / "image0.pgm"),
                     "--right", str(data / "image1.pgm"),
                     "--rig", str(data / "rig.json"),
                     "--out", str(solve),
                     "--warp-iters", "50", "--du-max", "0.1"])
    rc = rc or main(["eval", "--estimate", str(solve / "warp.pfm"),
                     "--gt", str(data), "--out", str(report), "--error-png"])
    sys.exit(rc)
