"""Population flip in a two-level system.

A weak resonant Gaussian pulse moves almost nothing to the upper level.
One Krotov iteration rescales it to the pulse area that completes the flip.

    python3 demos/two_level_flip.py
"""
from pathlib import Path

import numpy as np

from vibcontrol import ControlProblem, StopCriteria, optimize
from vibcontrol.cli import build_setup
from vibcontrol.config import load_config

cfg = load_config(Path(__file__).resolve().parents[1] / "configs" / "two_level.toml")
setup = build_setup(cfg)
problem = ControlProblem(setup.system, setup.initial, setup.target, setup.tgrid)
run = optimize(problem, setup.guess, StopCriteria(0.999, 20))

dt = setup.tgrid.dt
# envelope area; the resonant Fourier component is half of it
area = lambda f: 2 * abs(np.sum(f.values * np.exp(1j * cfg.centers[0] * f.tgrid.field_times))) * dt
print(f"guess:   F = {run.F[0]:.4f}, pulse area {area(setup.guess) / np.pi:.3f} pi")
print(f"optimum: F = {run.final_F:.6f} after {run.iterations} iteration(s), "
      f"pulse area {area(run.field) / np.pi:.3f} pi")
