"""Post-run diagnostics: spectra, pulse energy, level populations, census tables."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidInputError
from .hamiltonian import EigenBasis
from .units import AU_FIELD_V_PER_M, AU_TIME_S, EPSILON_0, HARTREE_TO_CM1, SPEED_OF_LIGHT

__all__ = [
    "Spectrum",
    "PopulationTrace",
    "Census",
    "pulse_spectrum",
    "pulse_energy",
    "population_trace",
    "threshold_census",
    "spectral_peaks",
    "write_table",
]


def _samples(field, dt=None):
    if dt is None:
        return np.asarray(field.values, dtype=float), field.tgrid.dt
    return np.asarray(field, dtype=float), float(dt)


@dataclass
class Spectrum:
    """One-sided amplitude spectrum ``|int eps(t) exp(i omega t) dt|``."""

    omega: np.ndarray
    magnitude: np.ndarray

    @property
    def frequency_cm1(self) -> np.ndarray:
        return self.omega * HARTREE_TO_CM1

    @property
    def bin_width(self) -> float:
        return float(self.omega[1] - self.omega[0])

    def energy(self, dt, n_samples) -> float:
        """``sum eps^2 dt`` recovered from the spectrum (Parseval)."""
        w = np.full(self.magnitude.size, 2.0)
        w[0] = 1.0
        if n_samples % 2 == 0:
            w[-1] = 1.0
        return float(np.sum(w * self.magnitude**2) / (n_samples * dt))


def pulse_spectrum(field, dt=None, window=None) -> Spectrum:
    """Rectangular-window spectrum; ``window="cosine"`` applies a raised cosine."""
    eps, dt = _samples(field, dt)
    if eps.size == 0:
        raise InvalidInputError("empty field")
    if window == "cosine":
        eps = eps * (0.5 - 0.5 * np.cos(2 * np.pi * (np.arange(eps.size) + 0.5) / eps.size))
    elif window is not None:
        raise InvalidInputError(f"unknown window {window!r}")
    mag = np.abs(np.fft.rfft(eps)) * dt
    omega = 2 * np.pi * np.fft.rfftfreq(eps.size, dt)
    return Spectrum(omega, mag)


def spectral_peaks(spec: Spectrum, n_peaks=2, min_separation_bins=3):
    """Indices of the strongest local maxima, separated by at least ``min_separation_bins``."""
    mag = spec.magnitude
    interior = np.nonzero((mag[1:-1] >= mag[:-2]) & (mag[1:-1] >= mag[2:]))[0] + 1
    order = interior[np.argsort(mag[interior])[::-1]]
    picked = []
    for i in order:
        if all(abs(i - j) >= min_separation_bins for j in picked):
            picked.append(int(i))
        if len(picked) == n_peaks:
            break
    return picked


def pulse_energy(field, beam_radius=300e-6, dt=None) -> float:
    """Pulse energy in joule, ``eps0 c pi r^2 int |E(t)|^2 dt``; ``beam_radius`` in metre."""
    if beam_radius <= 0:
        raise InvalidInputError("beam radius must be positive")
    eps, dt = _samples(field, dt)
    area = np.pi * beam_radius**2
    integral = np.sum((eps * AU_FIELD_V_PER_M) ** 2) * dt * AU_TIME_S
    return float(EPSILON_0 * SPEED_OF_LIGHT * area * integral)


@dataclass
class PopulationTrace:
    """Level populations ``|<v|phi_g(t)>|^2`` and ``|<v'|phi_e(t)>|^2`` over time."""

    times: np.ndarray
    ground: np.ndarray
    excited: np.ndarray
    totals: np.ndarray
    bound_sum: np.ndarray

    @property
    def continuum(self) -> np.ndarray:
        return self.totals - self.bound_sum

    def write(self, path, channel="g"):
        pops = self.ground if channel == "g" else self.excited
        idx = 0 if channel == "g" else 1
        cols = np.column_stack([self.times, self.totals[:, idx], self.bound_sum[:, idx], pops])
        head = "t_au total bound_sum " + " ".join(f"v{j}" for j in range(pops.shape[1]))
        np.savetxt(path, cols, fmt="%.12e", header=f"populations, channel {channel}\n{head}")


def population_trace(trajectory, ground: EigenBasis, excited: EigenBasis, times=None) -> PopulationTrace:
    """Project every stored state onto both eigenbases."""
    if not ground.grid.same_as(excited.grid):
        raise InvalidInputError("ground and excited bases live on different grids")
    grid = ground.grid
    data = np.asarray(trajectory.data if hasattr(trajectory, "data") else trajectory)
    if data.ndim != 3 or data.shape[1:] != (2, grid.n_points):
        raise InvalidInputError(f"trajectory shape {data.shape} does not match the grid")
    w = grid.weights
    pg = np.abs(data[:, 0, :] @ (ground.states * w).T) ** 2
    pe = np.abs(data[:, 1, :] @ (excited.states * w).T) ** 2
    totals = np.sum(np.abs(data) ** 2 * w, axis=2)
    nb_g = ground.n_bound if ground.asymptote is not None else len(ground)
    nb_e = excited.n_bound if excited.asymptote is not None else len(excited)
    bound = np.column_stack([pg[:, :nb_g].sum(axis=1), pe[:, :nb_e].sum(axis=1)])
    if times is None:
        dt = getattr(trajectory, "dt", 1.0) or 1.0
        times = np.arange(data.shape[0]) * dt
    return PopulationTrace(np.asarray(times), pg, pe, totals, bound)


@dataclass
class Census:
    """Per-threshold level counts and longest contiguous occupation times."""

    thresholds: list
    counts: dict
    occupation: dict

    def table(self) -> str:
        lines = ["# threshold N_ground N_excited"]
        for th in self.thresholds:
            c = self.counts[th]
            lines.append(f"{th:g} {c['ground']:d} {c['excited']:d}")
        return "\n".join(lines) + "\n"


def _longest_run(mask, times):
    """Longest contiguous stretch (in time units) where ``mask`` is true, per column."""
    dt = times[1] - times[0] if times.size > 1 else 0.0
    best = np.zeros(mask.shape[1])
    run = np.zeros(mask.shape[1])
    for row in mask:
        run = np.where(row, run + 1, 0)
        best = np.maximum(best, run)
    return best * dt


def threshold_census(trace: PopulationTrace, thresholds=(0.05, 0.10)) -> Census:
    """Count levels whose population exceeds each threshold at some stored time."""
    thresholds = [float(x) for x in thresholds]
    if any(not 0 < th < 1 for th in thresholds):
        raise InvalidInputError("thresholds must lie in (0, 1)")
    counts, occ = {}, {}
    for th in thresholds:
        mg, me = trace.ground > th, trace.excited > th
        counts[th] = {"ground": int(mg.any(axis=0).sum()), "excited": int(me.any(axis=0).sum())}
        occ[th] = {"ground": _longest_run(mg, trace.times), "excited": _longest_run(me, trace.times)}
    return Census(thresholds, counts, occ)


def write_table(path, columns, header):
    """Whitespace-delimited table with a ``#`` header line."""
    path = Path(path)
    np.savetxt(path, np.column_stack(columns), fmt="%.15e", header=header)
    return path
