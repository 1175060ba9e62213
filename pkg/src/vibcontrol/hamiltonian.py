"""Two-channel Hamiltonian, vibrational eigenstates and Franck-Condon data.

The coupled Hamiltonian acts on a pair of channel wavefunctions::

    H = [[T + V_g,   mu*eps],
         [mu*eps,    T + V_e]]

with a constant dipole ``mu`` and a real field ``eps``. Matrices live in the
weighted (symmetric) representation of :mod:`vibcontrol.grid`.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg

from .errors import InvalidInputError, NumericalFailure
from .grid import KineticOperator, SpatialGrid, kinetic_matrix
from .potentials import (  # noqa: F401  (re-exported)
    PotentialCurve,
    envelope_curve,
    flat_curve,
    harmonic_curve,
    load_potential,
    morse_curve,
)
from .units import HARTREE_TO_CM1

__all__ = [
    "ChannelSystem",
    "EigenBasis",
    "FCTable",
    "PotentialCurve",
    "morse_curve",
    "harmonic_curve",
    "flat_curve",
    "load_potential",
    "envelope_curve",
    "build_system",
    "two_level_system",
    "eigenstates",
    "franck_condon_map",
    "spectral_bounds",
    "morse_levels",
    "morse_level_count",
]

BOUND_MARGIN = 1e-12  # hartree

GROUND, EXCITED = 0, 1
_CHANNELS = {"g": GROUND, "ground": GROUND, 0: GROUND, "e": EXCITED, "excited": EXCITED, 1: EXCITED}


def _channel_index(channel) -> int:
    try:
        return _CHANNELS[channel]
    except (KeyError, TypeError):
        raise InvalidInputError(f"unknown channel {channel!r}; use 'g' or 'e'") from None


@dataclass(frozen=True, eq=False)
class ChannelSystem:
    """Two potentials on a shared grid, coupled by a constant dipole."""

    grid: SpatialGrid
    v_g: np.ndarray
    v_e: np.ndarray
    kinetic: KineticOperator
    dipole: float = 1.0
    asymptotes: tuple = (None, None)
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_points(self) -> int:
        return self.grid.n_points

    @property
    def mass(self) -> float:
        return self.kinetic.mass

    def potential(self, channel) -> np.ndarray:
        return (self.v_g, self.v_e)[_channel_index(channel)]

    def channel_matrix(self, channel) -> np.ndarray:
        """Dense ``T + V`` of one channel (weighted representation)."""
        idx = _channel_index(channel)
        key = ("h", idx)
        if key not in self._cache:
            h = self.kinetic.matrix.copy()
            h[np.diag_indices_from(h)] += (self.v_g, self.v_e)[idx]
            self._cache[key] = h
        return self._cache[key]

    def coupled_matrix(self, eps=0.0) -> np.ndarray:
        """Full ``2n x 2n`` Hamiltonian at field ``eps``; blocks ordered (g, e)."""
        n = self.n_points
        h = np.zeros((2 * n, 2 * n))
        h[:n, :n] = self.channel_matrix("g")
        h[n:, n:] = self.channel_matrix("e")
        idx = np.arange(n)
        h[idx, n + idx] = h[n + idx, idx] = self.dipole * eps
        return h

    def apply(self, c: np.ndarray, eps: float, out: np.ndarray = None) -> np.ndarray:
        """``H(eps) @ c`` for a weighted state ``c`` of shape ``(n, 2)``."""
        t = self.kinetic.matrix
        n = c.shape[0]
        if out is None:
            out = np.empty_like(c)
        np.matmul(t, c.view(np.float64).reshape(n, 4), out=out.view(np.float64).reshape(n, 4))
        out[:, 0] += self.v_g * c[:, 0]
        out[:, 1] += self.v_e * c[:, 1]
        if eps != 0.0:
            me = self.dipole * eps
            out[:, 0] += me * c[:, 1]
            out[:, 1] += me * c[:, 0]
        return out

    @property
    def potential_range(self) -> tuple:
        return (
            float(min(self.v_g.min(), self.v_e.min())),
            float(max(self.v_g.max(), self.v_e.max())),
        )


def build_system(
    g_curve: PotentialCurve,
    e_curve: PotentialCurve,
    grid: SpatialGrid,
    mass: float,
    dipole: float = 1.0,
) -> ChannelSystem:
    """Sample both curves on ``grid`` and attach the kinetic operator."""
    v_g = g_curve(grid.r)
    v_e = e_curve(grid.r)
    return ChannelSystem(
        grid, v_g, v_e, kinetic_matrix(grid, mass), float(dipole),
        (g_curve.asymptote, e_curve.asymptote),
    )


def two_level_system(e_g=0.0, e_e=1.0, dipole=1.0) -> ChannelSystem:
    """A one-point grid per channel: the field-driven two-level reduction."""
    grid = SpatialGrid(np.array([0.0]), np.array([1.0]), -1.0, 1.0)
    kin = KineticOperator(np.zeros((1, 1)), 1.0)
    return ChannelSystem(grid, np.array([float(e_g)]), np.array([float(e_e)]), kin, float(dipole))


@dataclass(frozen=True, eq=False)
class EigenBasis:
    """Lowest eigenpairs of one channel; ``states[v]`` holds psi_v(R_k)."""

    channel: str
    energies: np.ndarray
    states: np.ndarray
    n_bound: int
    grid: SpatialGrid
    asymptote: float = None

    def __len__(self):
        return self.energies.size

    def overlaps(self, phi: np.ndarray) -> np.ndarray:
        """Projections ``<v|phi>`` onto every basis state."""
        return self.states @ (phi * self.grid.weights)


def eigenstates(system: ChannelSystem, channel="g", n_requested: int = None) -> EigenBasis:
    """Diagonalize ``T + V`` of one channel and return the lowest eigenpairs.

    States are normalized under the grid quadrature; each starts with a
    positive lobe.
    """
    idx = _channel_index(channel)
    n = system.n_points
    n_requested = n if n_requested is None else int(n_requested)
    if not 1 <= n_requested <= n:
        raise InvalidInputError(f"n_requested must be in [1, {n}], got {n_requested}")
    h = system.channel_matrix(idx)
    try:
        e, c = scipy.linalg.eigh(h, subset_by_index=[0, n_requested - 1], driver="evr")
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalFailure(f"diagonalization of the {channel!r} channel (n={n}) failed: {exc}") from exc

    states = (c / system.grid.sqrt_weights[:, None]).T.copy()
    for s in states:
        big = np.abs(s) > 1e-3 * np.abs(s).max()
        if s[np.argmax(big)] < 0:
            s *= -1.0

    asym = system.asymptotes[idx]
    if asym is None:
        n_bound = n_requested
    else:
        below = scipy.linalg.eigh(h, eigvals_only=True, subset_by_value=(-np.inf, asym - BOUND_MARGIN))
        n_bound = int(below.size)
    return EigenBasis("ge"[idx], e, states, n_bound, system.grid, asym)


@dataclass(frozen=True)
class FCTable:
    """Franck-Condon factors ``factors[v, v']`` and transition energies (hartree)."""

    factors: np.ndarray
    transition_energies: np.ndarray

    def column_for(self, v: int):
        """``(frequency_cm1, FC)`` pairs from ground level ``v`` to every excited level."""
        return self.transition_energies[v] * HARTREE_TO_CM1, self.factors[v]

    def windows(self, v: int, fraction=0.1):
        """Frequency span (cm^-1) of transitions from ``v`` with FC >= fraction * max."""
        freq, fc = self.column_for(v)
        sel = fc >= fraction * fc.max()
        return float(freq[sel].min()), float(freq[sel].max())

    def write(self, path, columns_for=()):
        """Write the FC matrix with a v' header row, plus one two-column file per ``v``."""
        path = Path(path)
        nv, nvp = self.factors.shape
        with path.open("w") as fh:
            fh.write("# Franck-Condon factors |<v|v'>|^2; rows: ground v, columns: excited v'\n")
            fh.write("# v  " + " ".join(f"{j:>22d}" for j in range(nvp)) + "\n")
            for v in range(nv):
                fh.write(f"{v:4d} " + " ".join(f"{x:22.15e}" for x in self.factors[v]) + "\n")
        written = [path]
        for v in columns_for:
            freq, fc = self.column_for(v)
            p = path.with_name(f"{path.stem}_v{v}.dat")
            np.savetxt(p, np.column_stack([freq, fc]), fmt="%.15e",
                       header=f"transitions from ground v={v}\nfrequency_cm1 FC")
            written.append(p)
        return written


def franck_condon_map(ground: EigenBasis, excited: EigenBasis) -> FCTable:
    if not ground.grid.same_as(excited.grid):
        raise InvalidInputError("Franck-Condon map needs both bases on the same grid")
    w = ground.grid.weights
    overlap = (ground.states * w) @ excited.states.T
    return FCTable(overlap**2, excited.energies[None, :] - ground.energies[:, None])


def spectral_bounds(system: ChannelSystem, eps_max: float = 0.0) -> tuple:
    """Interval guaranteed to contain the spectrum of ``H(eps)`` for ``|eps| <= eps_max``."""
    if eps_max < 0:
        raise InvalidInputError("eps_max must be non-negative")
    key = ("bounds",)
    if key not in system._cache:
        system._cache[key] = (system.potential_range, system.kinetic.max_eigenvalue)
    (v_lo, v_hi), t_max = system._cache[key]
    couple = abs(system.dipole) * eps_max
    return v_lo - couple, t_max + v_hi + couple


def morse_levels(depth, a, mass, v):
    """Closed-form Morse energies above the well bottom."""
    x = np.sqrt(2.0 * mass * depth)
    v = np.asarray(v, dtype=float)
    return depth * (1.0 - (1.0 - a * (v + 0.5) / x) ** 2)


def morse_level_count(depth, a, mass) -> int:
    return int(np.floor(np.sqrt(2.0 * mass * depth) / a - 0.5)) + 1
