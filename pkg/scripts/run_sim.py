#!/usr/bin/env python3
"""Quick recorded headless run followed by a replay self-check.

Usage: python scripts/run_sim.py [scene] [duration_s] [out.csv]
"""

import sys

from curbsim.cli import main

scene = sys.argv[1] if len(sys.argv) > 1 else "parking_school"
duration = sys.argv[2] if len(sys.argv) > 2 else "10"
out = sys.argv[3] if len(sys.argv) > 3 else "run.csv"

code = main(["run", "--scene", scene, "--headless", "--duration", duration,
             "--seed", "0", "--record", out])
if code == 0:
    code = main(["replay", out])
sys.exit(code)
