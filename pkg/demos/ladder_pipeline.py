"""The full ladder study: v=8 -> v=0 on a 256-point grid.

Three stages:
  1. optimize from a two-colour Gaussian guess tuned to the FC windows,
  2. halve the optimal field and re-optimize it; a fresh guess with the same
     pulse energy gets nowhere at the same penalty,
  3. compress the optimum four-fold in time by deleting frequency bins and
     re-optimize on the short horizon.

Expect roughly half an hour on one core. The same run from the command line:

    vibcontrol run configs/morse_ladder.toml --output-dir runs/ladder
"""
import time
from pathlib import Path

import numpy as np

from vibcontrol import (ControlProblem, QuadraticPenalty, StopCriteria, compress_time, optimize,
                        reduce_intensity_restart)
from vibcontrol.analysis import pulse_spectrum, spectral_peaks
from vibcontrol.cli import build_setup
from vibcontrol.config import load_config


def log_every(n):
    t0 = time.perf_counter()
    def cb(it, field, rec):
        if it % n == 0:
            print(f"    {it:4d}  F = {rec.F:.4f}  ({time.perf_counter() - t0:.0f} s)", flush=True)
    return cb


cfg = load_config(Path(__file__).resolve().parents[1] / "configs" / "morse_ladder.toml")
setup = build_setup(cfg)
problem = ControlProblem(setup.system, setup.initial, setup.target, setup.tgrid)
print(f"stage 1: T = {setup.tgrid.t_final:.0f} au, T* = {setup.t_star:.0f} au")
run = optimize(problem, setup.guess, StopCriteria(cfg.target_F, cfg.max_iterations), callback=log_every(25))
spec = pulse_spectrum(run.field)
print(f"  F = {run.final_F:.4f}; peaks", np.round(spec.frequency_cm1[spectral_peaks(spec, 2)], 0), "cm^-1")

red, comp = cfg.pipeline
print(f"stage 2: amplitude / {red.factor:g}, alpha {red.alpha:g}")
half = reduce_intensity_restart(run.field, red.factor)
again = optimize(problem, half, StopCriteria(red.target_F, red.max_iterations),
                 penalty=QuadraticPenalty(red.alpha), callback=log_every(25))
fresh = setup.guess.with_values(setup.guess.values * np.sqrt(half.fluence() / setup.guess.fluence()))
cold = optimize(problem, fresh, StopCriteria(red.target_F, red.max_iterations), penalty=QuadraticPenalty(red.alpha))
print(f"  restart F = {again.final_F:.4f}; fresh guess F = {cold.final_F:.2e}")

print(f"stage 3: keep every {comp.keep_every}th bin")
short = compress_time(run.field, comp.keep_every, symmetric=comp.symmetric, alpha=comp.alpha)
sprob = ControlProblem(setup.system, setup.initial, setup.target, short.tgrid)
res = optimize(sprob, short, StopCriteria(comp.target_F, comp.max_iterations), callback=log_every(25))
print(f"  T = {short.tgrid.t_final:.0f} au: F {res.F[0]:.3f} -> {res.final_F:.4f}")
