"""Optimize a small Morse transfer, then look at what the field does.

Ground v=1 is moved to v=0 via the excited channel. The script prints:
  * the convergence history,
  * the strongest spectral components next to the Franck-Condon windows,
  * when each level carries population (threshold census).

Runs in well under a minute.

    python3 demos/morse_spectrum_populations.py
"""
from pathlib import Path

import numpy as np

from vibcontrol import ControlProblem, StopCriteria, optimize, propagate
from vibcontrol.analysis import population_trace, pulse_spectrum, spectral_peaks, threshold_census
from vibcontrol.cli import build_setup
from vibcontrol.config import load_config
from vibcontrol.propagator import MemorySink

cfg = load_config(Path(__file__).resolve().parents[1] / "configs" / "quick_morse.toml")
setup = build_setup(cfg)
print(f"{setup.ground.n_bound} ground / {setup.excited.n_bound} excited bound levels, "
      f"T = {setup.tgrid.t_final:.0f} au, T* = {setup.t_star:.0f} au")

problem = ControlProblem(setup.system, setup.initial, setup.target, setup.tgrid)
run = optimize(problem, setup.guess, StopCriteria(cfg.target_F, cfg.max_iterations))
for i in range(0, run.iterations + 1, 10):
    print(f"  iteration {i:3d}  F = {run.F[i]:.4f}")
print(f"stopped: {run.stop_reason}, F = {run.final_F:.4f}")

spec = pulse_spectrum(run.field)
print("strongest components (cm^-1):", np.round(spec.frequency_cm1[spectral_peaks(spec, 3)], 0))
for v in (cfg.initial_v, cfg.target_v):
    lo, hi = setup.fc.windows(v)
    print(f"  FC window of v={v}: {lo:.0f} - {hi:.0f} cm^-1")

sink = MemorySink(setup.system.n_points, setup.tgrid.n_steps, setup.tgrid.dt)
propagate(setup.initial, run.field.values, setup.system, setup.tgrid, store=sink)
trace = population_trace(sink, setup.ground, setup.excited)
print(f"max excited-channel population: {trace.totals[:, 1].max():.3f}")
print(threshold_census(trace, (0.05, 0.1)).table(), end="")
